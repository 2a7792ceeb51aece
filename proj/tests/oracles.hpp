#pragma once

// Slow, obviously-correct reference implementations used by the tests.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <vector>

#include "vp/guidance_planner.hpp"
#include "vp/voxel_world.hpp"

namespace oracle {

// Marches in 0.01 m steps; returns the first sample distance that is blocked.
inline std::optional<double> march(const vp::VoxelGrid& g, const vp::Vec3& from, const vp::Vec3& dir, double max_range,
                                   double step = 0.01) {
  const long n = static_cast<long>(std::ceil(max_range / step));
  for (long i = 0; i <= n; ++i) {
    const double t = std::min(max_range, static_cast<double>(i) * step);
    if (g.point_blocked(from + dir * t)) return t;
  }
  return std::nullopt;
}

// Plain Dijkstra over the 26-neighbour graph (no edge squeezing), no heuristic.
// Returns the cost of the recovered path in the same canonical form the planner reports.
inline std::optional<double> dijkstra(const vp::VoxelGrid& g, const vp::VoxelIndex& s, const vp::VoxelIndex& t) {
  const std::size_t n = g.cell_count();
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<std::int64_t> parent(n, -1);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[g.flat(s)] = 0.0;
  pq.push({0.0, g.flat(s)});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    const auto v = g.unflat(u);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dx && !dy && !dz) continue;
          const vp::VoxelIndex w{v.x + dx, v.y + dy, v.z + dz};
          if (g.occupied(w)) continue;
          // Diagonal moves must not cut past an occupied face or edge neighbour.
          bool blocked = false;
          for (int m = 1; m < 7; ++m) {
            const vp::VoxelIndex c{v.x + ((m & 1) ? dx : 0), v.y + ((m & 2) ? dy : 0), v.z + ((m & 4) ? dz : 0)};
            if (!(c == w) && !(c == v) && g.occupied(c)) blocked = true;
          }
          if (blocked) continue;
          const double nd = d + g.voxel_size() * std::sqrt(double(dx * dx + dy * dy + dz * dz));
          const auto wf = g.flat(w);
          if (nd < dist[wf]) {
            dist[wf] = nd;
            parent[wf] = static_cast<std::int64_t>(u);
            pq.push({nd, wf});
          }
        }
  }
  const auto tf = g.flat(t);
  if (!std::isfinite(dist[tf])) return std::nullopt;
  std::vector<vp::VoxelIndex> chain;
  for (std::int64_t c = static_cast<std::int64_t>(tf); c >= 0; c = parent[static_cast<std::size_t>(c)])
    chain.push_back(g.unflat(static_cast<std::size_t>(c)));
  return vp::path_cost(chain, g.voxel_size());
}

// Breadth-first 6-connected component sizes of free cells.
inline std::vector<std::size_t> component_sizes_6(const vp::VoxelGrid& g) {
  std::vector<char> seen(g.cell_count(), 0);
  std::vector<std::size_t> sizes;
  for (std::size_t i = 0; i < g.cell_count(); ++i) {
    if (g.occupied_flat(i) || seen[i]) continue;
    std::size_t count = 0;
    std::queue<std::size_t> q;
    q.push(i);
    seen[i] = 1;
    while (!q.empty()) {
      const auto v = g.unflat(q.front());
      q.pop();
      ++count;
      const int d[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
      for (auto& o : d) {
        const vp::VoxelIndex w{v.x + o[0], v.y + o[1], v.z + o[2]};
        if (g.occupied(w)) continue;
        const auto f = g.flat(w);
        if (!seen[f]) {
          seen[f] = 1;
          q.push(f);
        }
      }
    }
    sizes.push_back(count);
  }
  return sizes;
}

inline vp::VoxelGrid random_grid(vp::Dims d, double voxel, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution occ(density);
  std::vector<std::uint8_t> cells(d.count());
  for (auto& c : cells) c = occ(rng) ? 1 : 0;
  return vp::VoxelGrid(d, voxel, {}, std::move(cells));
}

inline double population_std(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace oracle
