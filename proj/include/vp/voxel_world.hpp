#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vp/common.hpp"

namespace vp {

struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  [[nodiscard]] constexpr std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  friend constexpr bool operator==(const Dims&, const Dims&) = default;
};

struct VoxelIndex {
  int x = 0;
  int y = 0;
  int z = 0;
  friend constexpr bool operator==(const VoxelIndex&, const VoxelIndex&) = default;
};

// Immutable occupancy grid. Cells are stored row-major with x fastest.
// Anything outside the grid counts as occupied.
class VoxelGrid {
 public:
  VoxelGrid(Dims dims, double voxel_size, Vec3 origin, std::vector<std::uint8_t> occupancy);

  static VoxelGrid empty(Dims dims, double voxel_size, Vec3 origin = {});

  [[nodiscard]] const Dims& dims() const { return dims_; }
  [[nodiscard]] double voxel_size() const { return voxel_size_; }
  [[nodiscard]] const Vec3& origin() const { return origin_; }
  [[nodiscard]] Vec3 extent() const;
  [[nodiscard]] std::span<const std::uint8_t> occupancy() const { return occupancy_; }
  [[nodiscard]] std::size_t cell_count() const { return occupancy_.size(); }
  [[nodiscard]] std::size_t free_count() const { return free_count_; }

  [[nodiscard]] bool in_bounds(const VoxelIndex& v) const {
    return v.x >= 0 && v.y >= 0 && v.z >= 0 && v.x < dims_.nx && v.y < dims_.ny && v.z < dims_.nz;
  }
  [[nodiscard]] std::size_t flat(const VoxelIndex& v) const {
    return static_cast<std::size_t>(v.x) +
           static_cast<std::size_t>(dims_.nx) *
               (static_cast<std::size_t>(v.y) + static_cast<std::size_t>(dims_.ny) * static_cast<std::size_t>(v.z));
  }
  [[nodiscard]] VoxelIndex unflat(std::size_t i) const {
    const auto nx = static_cast<std::size_t>(dims_.nx);
    const auto ny = static_cast<std::size_t>(dims_.ny);
    return {static_cast<int>(i % nx), static_cast<int>((i / nx) % ny), static_cast<int>(i / (nx * ny))};
  }
  [[nodiscard]] bool occupied(const VoxelIndex& v) const { return !in_bounds(v) || occupancy_[flat(v)] != 0; }
  [[nodiscard]] bool occupied_flat(std::size_t i) const { return occupancy_[i] != 0; }

  // Floor convention: a point on a face belongs to the upper cell.
  [[nodiscard]] std::optional<VoxelIndex> world_to_voxel(const Vec3& p) const;
  [[nodiscard]] Vec3 voxel_center(const VoxelIndex& v) const;
  [[nodiscard]] bool point_in_bounds(const Vec3& p) const { return world_to_voxel(p).has_value(); }
  // True when p is outside the grid or inside an occupied cell.
  [[nodiscard]] bool point_blocked(const Vec3& p) const;

  // Distance to the first occupied cell (or grid boundary) along a unit direction,
  // or nullopt if the ray stays free for max_range.
  [[nodiscard]] std::optional<double> raycast(const Vec3& from, const Vec3& direction, double max_range) const;

  [[nodiscard]] bool line_of_sight(const Vec3& a, const Vec3& b) const;

 private:
  Dims dims_;
  double voxel_size_;
  Vec3 origin_;
  std::vector<std::uint8_t> occupancy_;
  std::size_t free_count_ = 0;
};

struct WorldStats {
  double occupancy_ratio = 0.0;
  double largest_free_component_ratio = 1.0;
  std::array<double, 3> band_occupancy{};  // low, mid, high thirds of z
};

WorldStats compute_stats(const VoxelGrid& grid);

// 6-connected labelling of free cells. Occupied cells get label -1.
std::vector<std::int32_t> label_free_components_6(const VoxelGrid& grid);

// Stable content hash over dims, voxel size, origin and occupancy.
std::uint64_t grid_hash(const VoxelGrid& grid);

// --- .vmap.json ---------------------------------------------------------

struct MapFile {
  VoxelGrid grid;
  std::uint64_t seed = 0;
  nlohmann::json generator = nlohmann::json::object();
};

nlohmann::json encode_map(const VoxelGrid& grid, std::uint64_t seed, const nlohmann::json& generator);
// Throws ConfigError on malformed content, including an RLE total that differs from nx*ny*nz.
MapFile decode_map(const nlohmann::json& doc);

void save_map(const std::filesystem::path& path, const VoxelGrid& grid, std::uint64_t seed,
              const nlohmann::json& generator);
MapFile load_map(const std::filesystem::path& path);

}  // namespace vp
