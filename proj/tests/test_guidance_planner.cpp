#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "vp/guidance_planner.hpp"

using namespace vp;

namespace {

VoxelIndex random_free(const VoxelGrid& g, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, g.cell_count() - 1);
  while (true) {
    const auto i = pick(rng);
    if (!g.occupied_flat(i)) return g.unflat(i);
  }
}

}  // namespace

TEST_CASE("A* trivial and corner-to-corner cases") {
  const auto g = VoxelGrid::empty({10, 10, 1}, 6.0);
  const auto same = plan_astar(g, {3, 4, 0}, {3, 4, 0});
  REQUIRE(same);
  CHECK(same->voxels.size() == 1);
  CHECK(same->cost == 0.0);

  const auto diag = plan_astar(g, {0, 0, 0}, {9, 9, 0});
  REQUIRE(diag);
  CHECK(diag->cost == 9.0 * 6.0 * std::sqrt(2.0));
  CHECK(diag->cost == *oracle::dijkstra(g, {0, 0, 0}, {9, 9, 0}));
}

TEST_CASE("sealed goal is unreachable") {
  auto probe = VoxelGrid::empty({7, 7, 7}, 1.0);
  std::vector<std::uint8_t> occ(probe.cell_count(), 0);
  for (int z = 2; z <= 4; ++z)
    for (int y = 2; y <= 4; ++y)
      for (int x = 2; x <= 4; ++x)
        if (!(x == 3 && y == 3 && z == 3)) occ[probe.flat({x, y, z})] = 1;
  const VoxelGrid g({7, 7, 7}, 1.0, {}, occ);
  CHECK_FALSE(plan_astar(g, {0, 0, 0}, {3, 3, 3}).has_value());
  CHECK_FALSE(oracle::dijkstra(g, {0, 0, 0}, {3, 3, 3}).has_value());
  CHECK(oracle::component_sizes_6(g).size() == 2);
}

TEST_CASE("A* matches the Dijkstra oracle on random grids") {
  std::mt19937_64 rng(2024);
  for (const double density : {0.1, 0.2, 0.3}) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto g = oracle::random_grid({12, 12, 12}, 1.0, density, rng);
      const auto s = random_free(g, rng), t = random_free(g, rng);
      AStarStats stats;
      const auto path = plan_astar(g, s, t, &stats);
      const auto ref = oracle::dijkstra(g, s, t);
      REQUIRE(path.has_value() == ref.has_value());
      if (!path) continue;
      CHECK(path->cost == *ref);
      CHECK(stats.max_expanded_f <= path->cost + 1e-9);
      CHECK(path->voxels.front() == s);
      CHECK(path->voxels.back() == t);
      for (std::size_t i = 1; i < path->voxels.size(); ++i) {
        const auto& a = path->voxels[i - 1];
        const auto& b = path->voxels[i];
        CHECK(std::max({std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(a.z - b.z)}) == 1);
        CHECK_FALSE(g.occupied(b));
      }
      // Same inputs, same path.
      AStarPlanner planner(g);
      CHECK(planner.plan(s, t)->voxels == path->voxels);
    }
  }
}

TEST_CASE("guidance vector") {
  const auto g = VoxelGrid::empty({20, 5, 1}, 6.0);
  SUBCASE("at the final waypoint") {
    VoxelPath p{{{0, 0, 0}, {1, 0, 0}}, 6.0};
    CHECK(guidance_from_path(g, p, g.voxel_center({1, 0, 0}), 12.0) == Vec3{});
  }
  SUBCASE("straight line") {
    VoxelPath p;
    for (int x = 0; x < 10; ++x) p.voxels.push_back({x, 2, 0});
    const Vec3 v = guidance_from_path(g, p, g.voxel_center({0, 2, 0}), 12.0);
    CHECK(v.x == doctest::Approx(1.0));
    CHECK(std::abs(v.y) < 1e-12);
  }
  SUBCASE("L-shaped path picks the arc-length waypoint past the corner") {
    VoxelPath p{{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {1, 2, 0}, {1, 3, 0}}, 0.0};
    const Vec3 agent = g.voxel_center({0, 0, 0});
    const Vec3 v = guidance_from_path(g, p, agent, 12.0);
    const Vec3 expect = (g.voxel_center({1, 1, 0}) - agent).normalized_or_zero();
    CHECK(v.x == doctest::Approx(expect.x));
    CHECK(v.y == doctest::Approx(expect.y));
  }
}

TEST_CASE("guidance is unit or zero and leaves the agent cell cleanly") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = oracle::random_grid({12, 12, 6}, 6.0, 0.2, rng);
    const auto s = random_free(g, rng), t = random_free(g, rng);
    const auto path = plan_astar(g, s, t);
    if (!path) continue;
    const Vec3 agent = g.voxel_center(s);
    const Vec3 v = guidance_from_path(g, *path, agent);
    const double n = v.norm();
    CHECK((n == 0.0 || std::abs(n - 1.0) < 1e-12));
    if (n > 0.0) CHECK_FALSE(oracle::march(g, agent, v, 1.0).has_value());
  }
}

TEST_CASE("replan rule") {
  CHECK_FALSE(replan_policy(5, 0, 1.0));
  CHECK(replan_policy(10, 0, 0.0));
  CHECK(replan_policy(3, 0, 15.0));
}
