#include "vp/mapgen_urban.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vp {

void MapSpec::validate() const {
  if (dims.nx < 1 || dims.ny < 1 || dims.nz < 3) throw ConfigError("map dims must be positive with nz >= 3");
  if (!(voxel_size > 0.0)) throw ConfigError("voxel size must be positive");
  if (!(target_density >= 0.05 && target_density <= 0.35)) throw ConfigError("target density must lie in [0.05, 0.35]");
  if (street_pitch_min < 2 || street_pitch_max < street_pitch_min) throw ConfigError("street pitch must be >= 2 voxels");
  if (street_width < 1 || street_width >= street_pitch_min) throw ConfigError("street width must be in [1, pitch)");
  if (footprint_min < 1 || footprint_max < footprint_min) throw ConfigError("bad footprint range");
  if (!(tower_fraction >= 0.0 && tower_fraction <= 1.0)) throw ConfigError("tower fraction must be in [0, 1]");
  if (!(tower_min_height > 0.0 && tower_min_height < 1.0)) throw ConfigError("tower height fraction must be in (0, 1)");
}

void to_json(nlohmann::json& j, const MapSpec& s) {
  j = {{"dims", {s.dims.nx, s.dims.ny, s.dims.nz}},
       {"voxel_size", s.voxel_size},
       {"target_density", s.target_density},
       {"street_pitch_min", s.street_pitch_min},
       {"street_pitch_max", s.street_pitch_max},
       {"street_width", s.street_width},
       {"footprint_min", s.footprint_min},
       {"footprint_max", s.footprint_max},
       {"tower_fraction", s.tower_fraction},
       {"tower_min_height", s.tower_min_height},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, MapSpec& s) {
  for (const auto& [key, v] : j.items()) {
    if (key == "dims") s.dims = {v.at(0).get<int>(), v.at(1).get<int>(), v.at(2).get<int>()};
    else if (key == "voxel_size") s.voxel_size = v.get<double>();
    else if (key == "target_density") s.target_density = v.get<double>();
    else if (key == "street_pitch_min") s.street_pitch_min = v.get<int>();
    else if (key == "street_pitch_max") s.street_pitch_max = v.get<int>();
    else if (key == "street_width") s.street_width = v.get<int>();
    else if (key == "footprint_min") s.footprint_min = v.get<int>();
    else if (key == "footprint_max") s.footprint_max = v.get<int>();
    else if (key == "tower_fraction") s.tower_fraction = v.get<double>();
    else if (key == "tower_min_height") s.tower_min_height = v.get<double>();
    else if (key == "seed") s.seed = v.get<std::uint64_t>();
    else throw ConfigError("unknown map spec key '" + key + "'");
  }
}

MapReport validate_map(const VoxelGrid& grid) {
  const WorldStats stats = compute_stats(grid);
  MapReport r;
  r.density = stats.occupancy_ratio;
  r.component_ratio = stats.largest_free_component_ratio;
  r.band_occupancy = stats.band_occupancy;
  const auto& b = r.band_occupancy;
  const bool bands_ok = (b[0] == 0.0 && b[1] == 0.0 && b[2] == 0.0) || (b[0] > b[1] && b[1] > b[2]);
  r.pass = r.component_ratio >= 0.90 && bands_ok;
  return r;
}

std::vector<std::array<int, 2>> street_intervals(int extent, const MapSpec& spec, Rng& rng) {
  std::uniform_int_distribution<int> pitch(spec.street_pitch_min, spec.street_pitch_max);
  std::uniform_int_distribution<int> jitter(0, spec.street_pitch_min - 1);
  std::vector<std::array<int, 2>> out;
  for (int at = jitter(rng); at < extent; at += pitch(rng)) {
    out.push_back({at, std::min(extent, at + spec.street_width)});
  }
  return out;
}

namespace {

struct Building {
  int x0, y0, x1, y1;  // footprint [x0, x1) x [y0, y1)
  int height;          // occupied layers [0, height)
};

// Splits [lo, hi) into consecutive pieces with lengths in the footprint range.
std::vector<std::array<int, 2>> split_span(int lo, int hi, const MapSpec& spec, Rng& rng) {
  std::vector<std::array<int, 2>> out;
  std::uniform_int_distribution<int> len(spec.footprint_min, spec.footprint_max);
  int at = lo;
  while (at < hi) {
    int end = std::min(hi, at + len(rng));
    if (hi - end < spec.footprint_min) end = hi;
    out.push_back({at, end});
    at = end;
  }
  return out;
}

std::vector<std::array<int, 2>> block_spans(int extent, const std::vector<std::array<int, 2>>& streets) {
  std::vector<std::array<int, 2>> out;
  int at = 0;
  for (const auto& s : streets) {
    if (s[0] > at) out.push_back({at, s[0]});
    at = std::max(at, s[1]);
  }
  if (at < extent) out.push_back({at, extent});
  return out;
}

class Builder {
 public:
  explicit Builder(const MapSpec& spec) : spec_(spec), heights_(static_cast<std::size_t>(spec.dims.nx * spec.dims.ny), 0) {}

  [[nodiscard]] double density() const {
    return static_cast<double>(filled_) / static_cast<double>(spec_.dims.count());
  }

  void set_height(Building& b, int h) {
    for (int y = b.y0; y < b.y1; ++y) {
      for (int x = b.x0; x < b.x1; ++x) {
        auto& col = heights_[static_cast<std::size_t>(x + spec_.dims.nx * y)];
        filled_ += h - col;
        col = h;
      }
    }
    b.height = h;
  }

  [[nodiscard]] VoxelGrid grid() const {
    const Dims& d = spec_.dims;
    std::vector<std::uint8_t> occ(d.count(), 0);
    for (int y = 0; y < d.ny; ++y) {
      for (int x = 0; x < d.nx; ++x) {
        const int h = heights_[static_cast<std::size_t>(x + d.nx * y)];
        for (int z = 0; z < h; ++z) {
          occ[static_cast<std::size_t>(x) + static_cast<std::size_t>(d.nx) *
                                                (static_cast<std::size_t>(y) + static_cast<std::size_t>(d.ny) * z)] = 1;
        }
      }
    }
    return VoxelGrid(d, spec_.voxel_size, {}, std::move(occ));
  }

 private:
  const MapSpec& spec_;
  std::vector<int> heights_;
  long filled_ = 0;
};

VoxelGrid attempt(const MapSpec& spec, Rng& rng) {
  const Dims& d = spec.dims;
  const auto xs = street_intervals(d.nx, spec, rng);
  const auto ys = street_intervals(d.ny, spec, rng);

  // Height law: the top layer always stays free so the open sky joins every canyon.
  const int max_h = d.nz - 1;
  const int tower_lo = std::clamp(static_cast<int>(std::ceil(spec.tower_min_height * d.nz)), 2, max_h);
  std::uniform_int_distribution<int> low_rise(1, tower_lo - 1);
  std::uniform_int_distribution<int> tower(tower_lo, max_h);
  std::bernoulli_distribution is_tower(spec.tower_fraction);

  std::vector<Building> lots;
  for (const auto& bx : block_spans(d.nx, xs)) {
    for (const auto& by : block_spans(d.ny, ys)) {
      for (const auto& fx : split_span(bx[0], bx[1], spec, rng)) {
        for (const auto& fy : split_span(by[0], by[1], spec, rng)) {
          lots.push_back({fx[0], fy[0], fx[1], fy[1], 0});
        }
      }
    }
  }
  std::shuffle(lots.begin(), lots.end(), rng);

  Builder builder(spec);
  std::vector<std::size_t> placed;
  for (std::size_t i = 0; i < lots.size() && builder.density() < spec.target_density; ++i) {
    builder.set_height(lots[i], is_tower(rng) ? tower(rng) : low_rise(rng));
    placed.push_back(i);
  }
  if (placed.empty()) return builder.grid();

  // Nudge single buildings one layer at a time until density is close to target.
  std::uniform_int_distribution<std::size_t> pick(0, placed.size() - 1);
  const double band = 0.05 * spec.target_density;
  for (int iter = 0; iter < 100000; ++iter) {
    const double err = builder.density() - spec.target_density;
    if (std::abs(err) <= band) break;
    Building& b = lots[placed[pick(rng)]];
    if (err > 0.0 && b.height > 1) builder.set_height(b, b.height - 1);
    if (err < 0.0 && b.height < max_h) builder.set_height(b, b.height + 1);
  }
  return builder.grid();
}

}  // namespace

VoxelGrid generate_map(const MapSpec& spec) {
  spec.validate();
  std::ostringstream why;
  for (int a = 0; a < kGenerationAttempts; ++a) {
    Rng rng(derive_seed(spec.seed, "mapgen", static_cast<std::uint64_t>(a)));
    VoxelGrid grid = attempt(spec, rng);
    const MapReport r = validate_map(grid);
    const bool density_ok = std::abs(r.density - spec.target_density) <= kDensityTolerance * spec.target_density;
    if (density_ok && r.pass) return grid;
    why << " [attempt " << a << ": density " << r.density << ", component " << r.component_ratio << ", bands "
        << r.band_occupancy[0] << '/' << r.band_occupancy[1] << '/' << r.band_occupancy[2] << ']';
  }
  throw GenerationFault("map generation failed for target " + std::to_string(spec.target_density) + why.str());
}

MapSpec canonical_map_spec() {
  MapSpec s;
  s.target_density = 0.127;
  s.seed = 0;
  return s;
}

VoxelGrid canonical_map() { return generate_map(canonical_map_spec()); }

}  // namespace vp
