#pragma once

#include <array>
#include <cstdint>

#include <json.hpp>

#include "vp/voxel_world.hpp"

namespace vp {

// Parameters of the street-corridor generator. Lengths are in voxels.
struct MapSpec {
  Dims dims{52, 52, 18};
  double voxel_size = 6.0;
  double target_density = 0.127;
  int street_pitch_min = 8;   // distance between successive street lines
  int street_pitch_max = 11;
  int street_width = 2;
  int footprint_min = 2;
  int footprint_max = 5;
  // Heights mix low-rise blocks with towers; towers start at this fraction of nz.
  double tower_fraction = 0.45;
  double tower_min_height = 2.0 / 3.0;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const MapSpec& s);
void from_json(const nlohmann::json& j, MapSpec& s);

struct MapReport {
  double density = 0.0;
  double component_ratio = 1.0;
  std::array<double, 3> band_occupancy{};
  bool pass = true;
};

// Passes when the largest free component covers >= 90% of free space and band
// occupancy strictly decreases with altitude. An empty grid passes by convention.
MapReport validate_map(const VoxelGrid& grid);

// Throws GenerationFault when no attempt out of 20 meets the density tolerance and validation.
VoxelGrid generate_map(const MapSpec& spec);

inline constexpr double kDensityTolerance = 0.15;  // relative
inline constexpr int kGenerationAttempts = 20;

MapSpec canonical_map_spec();
VoxelGrid canonical_map();

// Street lines along one axis, as [start, end) voxel intervals; exposed for tests.
std::vector<std::array<int, 2>> street_intervals(int extent, const MapSpec& spec, Rng& rng);

}  // namespace vp
