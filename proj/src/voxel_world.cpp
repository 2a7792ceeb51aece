#include "vp/voxel_world.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <tuple>

namespace vp {

VoxelGrid::VoxelGrid(Dims dims, double voxel_size, Vec3 origin, std::vector<std::uint8_t> occupancy)
    : dims_(dims), voxel_size_(voxel_size), origin_(origin), occupancy_(std::move(occupancy)) {
  expect(dims_.nx > 0 && dims_.ny > 0 && dims_.nz > 0, "grid dims must be strictly positive");
  expect(voxel_size_ > 0.0 && std::isfinite(voxel_size_), "voxel size must be positive");
  expect(occupancy_.size() == dims_.count(), "occupancy length must equal nx*ny*nz");
  for (auto& c : occupancy_) c = c != 0 ? 1 : 0;
  free_count_ = static_cast<std::size_t>(std::count(occupancy_.begin(), occupancy_.end(), std::uint8_t{0}));
}

VoxelGrid VoxelGrid::empty(Dims dims, double voxel_size, Vec3 origin) {
  expect(dims.nx > 0 && dims.ny > 0 && dims.nz > 0, "grid dims must be strictly positive");
  return VoxelGrid(dims, voxel_size, origin, std::vector<std::uint8_t>(dims.count(), 0));
}

Vec3 VoxelGrid::extent() const {
  return {dims_.nx * voxel_size_, dims_.ny * voxel_size_, dims_.nz * voxel_size_};
}

std::optional<VoxelIndex> VoxelGrid::world_to_voxel(const Vec3& p) const {
  const Vec3 local = (p - origin_) / voxel_size_;
  if (!local.finite()) return std::nullopt;
  const VoxelIndex v{static_cast<int>(std::floor(local.x)), static_cast<int>(std::floor(local.y)),
                     static_cast<int>(std::floor(local.z))};
  if (!in_bounds(v)) return std::nullopt;
  return v;
}

Vec3 VoxelGrid::voxel_center(const VoxelIndex& v) const {
  return origin_ + Vec3{(v.x + 0.5) * voxel_size_, (v.y + 0.5) * voxel_size_, (v.z + 0.5) * voxel_size_};
}

bool VoxelGrid::point_blocked(const Vec3& p) const {
  const auto v = world_to_voxel(p);
  return !v || occupied_flat(flat(*v));
}

std::optional<double> VoxelGrid::raycast(const Vec3& from, const Vec3& direction, double max_range) const {
  expect(std::abs(direction.norm() - 1.0) <= 1e-6, "raycast direction must be a unit vector");
  expect(from.finite() && max_range >= 0.0, "raycast origin must be finite and range non-negative");

  const auto start = world_to_voxel(from);
  if (!start || occupied_flat(flat(*start))) return 0.0;

  // Amanatides-Woo traversal in voxel units.
  const Vec3 local = (from - origin_) / voxel_size_;
  const std::array<double, 3> pos{local.x, local.y, local.z};
  const std::array<double, 3> dir{direction.x, direction.y, direction.z};
  std::array<int, 3> cell{start->x, start->y, start->z};
  const std::array<int, 3> limit{dims_.nx, dims_.ny, dims_.nz};
  std::array<int, 3> step{};
  std::array<double, 3> t_max{};
  std::array<double, 3> t_delta{};
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 0.0) {
      step[a] = 1;
      t_max[a] = (cell[a] + 1 - pos[a]) / dir[a];
      t_delta[a] = 1.0 / dir[a];
    } else if (dir[a] < 0.0) {
      step[a] = -1;
      t_max[a] = (cell[a] - pos[a]) / dir[a];
      t_delta[a] = -1.0 / dir[a];
    } else {
      step[a] = 0;
      t_max[a] = kInf;
      t_delta[a] = kInf;
    }
  }

  const double range_cells = max_range / voxel_size_;
  const auto stride_y = static_cast<std::ptrdiff_t>(dims_.nx);
  const auto stride_z = static_cast<std::ptrdiff_t>(dims_.nx) * dims_.ny;
  const std::array<std::ptrdiff_t, 3> stride{1, stride_y, stride_z};
  auto index = static_cast<std::ptrdiff_t>(flat(*start));
  while (true) {
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    const double t = t_max[axis];
    if (t > range_cells) return std::nullopt;
    cell[axis] += step[axis];
    if (cell[axis] < 0 || cell[axis] >= limit[axis]) return t * voxel_size_;
    index += step[axis] * stride[axis];
    if (occupancy_[static_cast<std::size_t>(index)] != 0) return t * voxel_size_;
    t_max[axis] += t_delta[axis];
  }
}

bool VoxelGrid::line_of_sight(const Vec3& a, const Vec3& b) const {
  expect(point_in_bounds(a) && point_in_bounds(b), "line_of_sight endpoints must lie inside the grid");
  // Trace from the lexicographically smaller endpoint so LOS(a,b) == LOS(b,a) bit for bit.
  const bool swap = std::tie(b.x, b.y, b.z) < std::tie(a.x, a.y, a.z);
  const Vec3& from = swap ? b : a;
  const Vec3& to = swap ? a : b;
  const Vec3 delta = to - from;
  const double length = delta.norm();
  if (length == 0.0) return true;
  const auto hit = raycast(from, delta / length, length);
  return !hit || *hit >= length;
}

std::vector<std::int32_t> label_free_components_6(const VoxelGrid& grid) {
  const auto n = grid.cell_count();
  std::vector<std::int32_t> label(n, -1);
  const Dims& d = grid.dims();
  std::vector<std::size_t> stack;
  std::int32_t next = 0;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (grid.occupied_flat(seed) || label[seed] >= 0) continue;
    label[seed] = next;
    stack.push_back(seed);
    while (!stack.empty()) {
      const auto cur = stack.back();
      stack.pop_back();
      const VoxelIndex v = grid.unflat(cur);
      const std::array<VoxelIndex, 6> nbrs{{{v.x - 1, v.y, v.z},
                                            {v.x + 1, v.y, v.z},
                                            {v.x, v.y - 1, v.z},
                                            {v.x, v.y + 1, v.z},
                                            {v.x, v.y, v.z - 1},
                                            {v.x, v.y, v.z + 1}}};
      for (const auto& nb : nbrs) {
        if (nb.x < 0 || nb.y < 0 || nb.z < 0 || nb.x >= d.nx || nb.y >= d.ny || nb.z >= d.nz) continue;
        const auto j = grid.flat(nb);
        if (grid.occupied_flat(j) || label[j] >= 0) continue;
        label[j] = next;
        stack.push_back(j);
      }
    }
    ++next;
  }
  return label;
}

WorldStats compute_stats(const VoxelGrid& grid) {
  WorldStats stats;
  const auto total = grid.cell_count();
  const auto free = grid.free_count();
  stats.occupancy_ratio = static_cast<double>(total - free) / static_cast<double>(total);

  if (free > 0) {
    const auto labels = label_free_components_6(grid);
    std::vector<std::size_t> sizes;
    for (auto l : labels) {
      if (l < 0) continue;
      if (static_cast<std::size_t>(l) >= sizes.size()) sizes.resize(static_cast<std::size_t>(l) + 1, 0);
      ++sizes[static_cast<std::size_t>(l)];
    }
    const auto largest = *std::max_element(sizes.begin(), sizes.end());
    stats.largest_free_component_ratio = static_cast<double>(largest) / static_cast<double>(free);
  } else {
    stats.largest_free_component_ratio = 1.0;
  }

  // z-thirds; with nz not divisible by 3 the lower bands take the extra layers.
  const Dims& d = grid.dims();
  std::array<std::size_t, 3> occ{};
  std::array<std::size_t, 3> cells{};
  const std::size_t layer = static_cast<std::size_t>(d.nx) * static_cast<std::size_t>(d.ny);
  for (int z = 0; z < d.nz; ++z) {
    const int band = std::min(2, (3 * z) / d.nz);
    const auto begin = grid.occupancy().begin() + static_cast<std::ptrdiff_t>(layer * static_cast<std::size_t>(z));
    occ[static_cast<std::size_t>(band)] +=
        static_cast<std::size_t>(std::count(begin, begin + static_cast<std::ptrdiff_t>(layer), std::uint8_t{1}));
    cells[static_cast<std::size_t>(band)] += layer;
  }
  for (std::size_t b = 0; b < 3; ++b) {
    stats.band_occupancy[b] = cells[b] == 0 ? 0.0 : static_cast<double>(occ[b]) / static_cast<double>(cells[b]);
  }
  return stats;
}

std::uint64_t grid_hash(const VoxelGrid& grid) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  const Dims& d = grid.dims();
  const std::array<std::int64_t, 3> dims{d.nx, d.ny, d.nz};
  feed(dims.data(), sizeof(dims));
  const std::array<double, 4> geom{grid.voxel_size(), grid.origin().x, grid.origin().y, grid.origin().z};
  feed(geom.data(), sizeof(geom));
  feed(grid.occupancy().data(), grid.occupancy().size());
  return h;
}

nlohmann::json encode_map(const VoxelGrid& grid, std::uint64_t seed, const nlohmann::json& generator) {
  nlohmann::json rle = nlohmann::json::array();
  const auto occ = grid.occupancy();
  std::size_t i = 0;
  while (i < occ.size()) {
    std::size_t j = i;
    while (j < occ.size() && occ[j] == occ[i]) ++j;
    rle.push_back({static_cast<int>(occ[i]), j - i});
    i = j;
  }
  const Dims& d = grid.dims();
  return {
      {"format", "vmap"},
      {"version", 1},
      {"dims", {d.nx, d.ny, d.nz}},
      {"voxel_size", grid.voxel_size()},
      {"origin", {grid.origin().x, grid.origin().y, grid.origin().z}},
      {"seed", seed},
      {"generator", generator},
      {"occupancy_rle", std::move(rle)},
  };
}

MapFile decode_map(const nlohmann::json& doc) {
  try {
    const auto dims_arr = doc.at("dims");
    if (!dims_arr.is_array() || dims_arr.size() != 3) throw ConfigError("dims must be a 3-element array");
    const Dims dims{dims_arr[0].get<int>(), dims_arr[1].get<int>(), dims_arr[2].get<int>()};
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) throw ConfigError("dims must be strictly positive");
    const double voxel = doc.at("voxel_size").get<double>();
    if (!(voxel > 0.0)) throw ConfigError("voxel_size must be positive");
    Vec3 origin;
    if (doc.contains("origin")) {
      const auto& o = doc.at("origin");
      origin = {o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>()};
    }
    std::vector<std::uint8_t> occ;
    occ.reserve(dims.count());
    for (const auto& run : doc.at("occupancy_rle")) {
      if (!run.is_array() || run.size() != 2) throw ConfigError("RLE entries must be [value, run] pairs");
      const int value = run[0].get<int>();
      const auto length = run[1].get<std::int64_t>();
      if ((value != 0 && value != 1) || length <= 0) throw ConfigError("RLE entry has invalid value or run length");
      if (occ.size() + static_cast<std::size_t>(length) > dims.count()) {
        throw ConfigError("RLE total exceeds nx*ny*nz");
      }
      occ.insert(occ.end(), static_cast<std::size_t>(length), static_cast<std::uint8_t>(value));
    }
    if (occ.size() != dims.count()) {
      throw ConfigError("RLE total " + std::to_string(occ.size()) + " does not equal nx*ny*nz = " +
                        std::to_string(dims.count()));
    }
    MapFile out{VoxelGrid(dims, voxel, origin, std::move(occ)), doc.value("seed", std::uint64_t{0}),
                doc.value("generator", nlohmann::json::object())};
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed map file: ") + e.what());
  }
}

void save_map(const std::filesystem::path& path, const VoxelGrid& grid, std::uint64_t seed,
              const nlohmann::json& generator) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << encode_map(grid, seed, generator).dump() << '\n';
}

MapFile load_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open map file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("map file " + path.string() + " is not valid JSON: " + e.what());
  }
  return decode_map(doc);
}

}  // namespace vp
