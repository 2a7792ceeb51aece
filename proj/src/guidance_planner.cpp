#include "vp/guidance_planner.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <limits>

namespace vp {

namespace {

struct Offset {
  int dx, dy, dz;
  double unit_cost;
  // Cells swept by a diagonal move (its face and edge neighbours); all must be free.
  std::array<std::array<int, 3>, 6> swept;
  int n_swept;
};

const std::array<Offset, 26>& neighbour_offsets() {
  static const std::array<Offset, 26> offsets = [] {
    std::array<Offset, 26> o{};
    std::size_t i = 0;
    for (int dz = -1; dz <= 1; ++dz) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          Offset& off = o[i++];
          off = {dx, dy, dz, std::sqrt(static_cast<double>(dx * dx + dy * dy + dz * dz)), {}, 0};
          for (int m = 1; m < 7; ++m) {
            const std::array<int, 3> sub{(m & 1) ? dx : 0, (m & 2) ? dy : 0, (m & 4) ? dz : 0};
            if (sub == std::array<int, 3>{dx, dy, dz} || sub == std::array<int, 3>{0, 0, 0}) continue;
            if (std::find(off.swept.begin(), off.swept.begin() + off.n_swept, sub) != off.swept.begin() + off.n_swept) continue;
            off.swept[static_cast<std::size_t>(off.n_swept++)] = sub;
          }
        }
      }
    }
    return o;
  }();
  return offsets;
}

struct OpenEntry {
  double f;
  double g;
  std::size_t flat;
};

// Min-heap on f; ties go to the deeper node, then the lower flat index.
struct OpenOrder {
  bool operator()(const OpenEntry& a, const OpenEntry& b) const {
    if (a.f != b.f) return a.f > b.f;
    if (a.g != b.g) return a.g < b.g;
    return a.flat > b.flat;
  }
};

}  // namespace

AStarPlanner::AStarPlanner(const VoxelGrid& grid)
    : grid_(&grid),
      g_(grid.cell_count(), 0.0),
      parent_(grid.cell_count(), -1),
      seen_stamp_(grid.cell_count(), 0),
      closed_stamp_(grid.cell_count(), 0) {
  const auto& o = neighbour_offsets();
  const auto sx = static_cast<std::ptrdiff_t>(1);
  const auto sy = static_cast<std::ptrdiff_t>(grid.dims().nx);
  const auto sz = sy * grid.dims().ny;
  for (std::size_t i = 0; i < o.size(); ++i) {
    step_flat_[i] = o[i].dx * sx + o[i].dy * sy + o[i].dz * sz;
    for (int k = 0; k < o[i].n_swept; ++k) {
      const auto& c = o[i].swept[static_cast<std::size_t>(k)];
      swept_flat_[i][static_cast<std::size_t>(k)] = c[0] * sx + c[1] * sy + c[2] * sz;
    }
  }
}

std::optional<VoxelPath> AStarPlanner::plan(const VoxelIndex& start, const VoxelIndex& goal, AStarStats* stats) {
  const VoxelGrid& grid = *grid_;
  expect(grid.in_bounds(start) && grid.in_bounds(goal), "A* endpoints must be in bounds");
  expect(!grid.occupied(start) && !grid.occupied(goal), "A* endpoints must be free");

  if (++stamp_ == 0) {
    std::fill(seen_stamp_.begin(), seen_stamp_.end(), 0u);
    std::fill(closed_stamp_.begin(), closed_stamp_.end(), 0u);
    stamp_ = 1;
  }
  const double voxel = grid.voxel_size();
  // Octile distance in 3D: exact cost on an empty grid, so admissible and consistent.
  const double r2 = std::sqrt(2.0), r3 = std::sqrt(3.0);
  auto heuristic = [&](const VoxelIndex& v) {
    int a = std::abs(v.x - goal.x), b = std::abs(v.y - goal.y), c = std::abs(v.z - goal.z);
    if (a < b) std::swap(a, b);
    if (b < c) std::swap(b, c);
    if (a < b) std::swap(a, b);
    return voxel * (r3 * c + r2 * (b - c) + (a - b));
  };

  AStarStats local;
  // Heap storage is reused across calls on the same thread.
  thread_local std::vector<OpenEntry> open;
  open.clear();
  const OpenOrder order;
  auto push = [&](const OpenEntry& e) {
    open.push_back(e);
    std::push_heap(open.begin(), open.end(), order);
  };
  const auto s = grid.flat(start);
  const auto t = grid.flat(goal);
  g_[s] = 0.0;
  parent_[s] = -1;
  seen_stamp_[s] = stamp_;
  push({heuristic(start), 0.0, s});

  const Dims& d = grid.dims();
  bool found = false;
  while (!open.empty()) {
    std::pop_heap(open.begin(), open.end(), order);
    const OpenEntry top = open.back();
    open.pop_back();
    if (closed_stamp_[top.flat] == stamp_) continue;
    closed_stamp_[top.flat] = stamp_;
    ++local.expanded;
    local.max_expanded_f = std::max(local.max_expanded_f, top.f);
    if (top.flat == t) {
      found = true;
      break;
    }
    const VoxelIndex v = grid.unflat(top.flat);
    const double gv = g_[top.flat];
    // Interior cells index neighbours by flat offset; boundary cells take the checked path.
    const bool interior = v.x > 0 && v.y > 0 && v.z > 0 && v.x + 1 < d.nx && v.y + 1 < d.ny && v.z + 1 < d.nz;
    const auto& offsets = neighbour_offsets();
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      const Offset& off = offsets[i];
      std::size_t nf;
      bool squeezed = false;
      if (interior) {
        nf = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(top.flat) + step_flat_[i]);
        if (grid.occupied_flat(nf) || closed_stamp_[nf] == stamp_) continue;
        for (int k = 0; k < off.n_swept && !squeezed; ++k) {
          squeezed = grid.occupied_flat(
              static_cast<std::size_t>(static_cast<std::ptrdiff_t>(top.flat) + swept_flat_[i][static_cast<std::size_t>(k)]));
        }
      } else {
        const VoxelIndex n{v.x + off.dx, v.y + off.dy, v.z + off.dz};
        if (n.x < 0 || n.y < 0 || n.z < 0 || n.x >= d.nx || n.y >= d.ny || n.z >= d.nz) continue;
        nf = grid.flat(n);
        if (grid.occupied_flat(nf) || closed_stamp_[nf] == stamp_) continue;
        for (int k = 0; k < off.n_swept && !squeezed; ++k) {
          const auto& c = off.swept[static_cast<std::size_t>(k)];
          squeezed = grid.occupied({v.x + c[0], v.y + c[1], v.z + c[2]});
        }
      }
      if (squeezed) continue;
      const double cand = gv + off.unit_cost * voxel;
      if (seen_stamp_[nf] == stamp_ && cand >= g_[nf]) continue;
      seen_stamp_[nf] = stamp_;
      g_[nf] = cand;
      parent_[nf] = static_cast<std::int32_t>(top.flat);
      push({cand + heuristic({v.x + off.dx, v.y + off.dy, v.z + off.dz}), cand, nf});
    }
  }
  if (stats) *stats = local;
  if (!found) return std::nullopt;

  VoxelPath path;
  for (std::int64_t cur = static_cast<std::int64_t>(t); cur >= 0; cur = parent_[static_cast<std::size_t>(cur)]) {
    path.voxels.push_back(grid.unflat(static_cast<std::size_t>(cur)));
    if (static_cast<std::size_t>(cur) == s) break;
  }
  std::reverse(path.voxels.begin(), path.voxels.end());
  path.cost = path_cost(path.voxels, voxel);
  return path;
}

double path_cost(const std::vector<VoxelIndex>& voxels, double voxel_size) {
  // Summed per step class so equal-cost paths report bit-identical costs.
  std::array<long, 4> steps{};
  for (std::size_t i = 1; i < voxels.size(); ++i) {
    const auto& a = voxels[i - 1];
    const auto& b = voxels[i];
    ++steps[static_cast<std::size_t>(std::abs(a.x - b.x) + std::abs(a.y - b.y) + std::abs(a.z - b.z))];
  }
  return voxel_size * (static_cast<double>(steps[1]) + static_cast<double>(steps[2]) * std::sqrt(2.0) +
                       static_cast<double>(steps[3]) * std::sqrt(3.0));
}

std::optional<VoxelPath> plan_astar(const VoxelGrid& grid, const VoxelIndex& start, const VoxelIndex& goal,
                                    AStarStats* stats) {
  AStarPlanner planner(grid);
  return planner.plan(start, goal, stats);
}

Vec3 guidance_from_path(const VoxelGrid& grid, const VoxelPath& path, const Vec3& agent_pos, double lookahead) {
  expect(!path.voxels.empty(), "guidance needs a non-empty path");
  const auto& vox = path.voxels;
  const Vec3 last = grid.voxel_center(vox.back());
  if (distance(agent_pos, last) <= 0.5 * grid.voxel_size()) return {};
  if (vox.size() == 1) return (last - agent_pos).normalized_or_zero();

  std::vector<Vec3> pts(vox.size());
  std::vector<double> arc(vox.size(), 0.0);
  for (std::size_t i = 0; i < vox.size(); ++i) {
    pts[i] = grid.voxel_center(vox[i]);
    if (i > 0) arc[i] = arc[i - 1] + distance(pts[i - 1], pts[i]);
  }

  // Arc-length position of the closest point on the polyline.
  double best_d2 = std::numeric_limits<double>::infinity();
  double s0 = 0.0;
  std::size_t nearest = 0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const Vec3 seg = pts[k + 1] - pts[k];
    const double len2 = seg.norm_sq();
    const double u = len2 > 0.0 ? std::clamp((agent_pos - pts[k]).dot(seg) / len2, 0.0, 1.0) : 0.0;
    const Vec3 q = pts[k] + seg * u;
    const double d2 = (agent_pos - q).norm_sq();
    if (d2 < best_d2) {
      best_d2 = d2;
      s0 = arc[k] + u * std::sqrt(len2);
      nearest = k;
    }
  }

  std::size_t target = pts.size() - 1;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    if (arc[j] >= s0 + lookahead) {
      target = j;
      break;
    }
  }
  // Pull the target back along the path while the straight line to it would clip a wall.
  while (target > nearest + 1 && !grid.line_of_sight(agent_pos, pts[target])) --target;
  const Vec3 g = (pts[target] - agent_pos).normalized_or_zero();
  if (g == Vec3{}) return (last - agent_pos).normalized_or_zero();
  return g;
}

bool replan_policy(long step, long last_plan_step, double evader_moved, const ReplanRule& rule) {
  return (step - last_plan_step) >= rule.max_age_steps || evader_moved > rule.evader_shift;
}

}  // namespace vp
