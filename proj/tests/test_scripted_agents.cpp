#include <doctest.h>

#include <random>

#include "vp/episode_engine.hpp"
#include "vp/mapgen_urban.hpp"
#include "vp/scripted_agents.hpp"

using namespace vp;

namespace {

std::array<double, 14> open_rays(double r = 60.0) {
  std::array<double, 14> a;
  a.fill(r);
  return a;
}

std::vector<double> clear_lidar() { return std::vector<double>(kLidarRays, 1.0); }

TargetTrack track(Vec3 rel, double los_rate = 0.0) { return {rel, los_rate, true}; }

}  // namespace

TEST_CASE("evader in open space follows the corridor bias at full speed") {
  AgentState self;
  self.role = Role::Evader;
  self.position = {100, 100, 50};
  const auto rays = open_rays();
  EvaderParams p;
  p.wander_weight = 0.0;
  EvaderMemory mem;
  mem.heading = {0, 1, 0};
  Rng rng(1);
  const auto lim = ControlLimits::evader();
  const auto cmd = evader_policy({&self, {}, rays}, lim, p, mem, rng);
  const Vec3 v = rotate_z(cmd.velocity(), self.yaw);
  CHECK(v.norm() == doctest::Approx(9.0));
  CHECK(v.y == doctest::Approx(9.0));
}

TEST_CASE("evader runs away from a pursuer behind it") {
  AgentState self;
  self.role = Role::Evader;
  self.position = {100, 100, 50};
  const std::vector<Vec3> pursuers{{80, 100, 50}};
  const auto rays = open_rays();
  EvaderMemory mem;
  mem.heading = {-1, 0, 0};  // currently heading toward the pursuer
  Rng rng(2);
  const auto cmd = evader_policy({&self, pursuers, rays}, ControlLimits::evader(), EvaderParams{}, mem, rng);
  const Vec3 v = rotate_z(cmd.velocity(), self.yaw);
  CHECK(v.x > 0.0);
  CHECK(std::abs(v.x) > std::abs(v.y));
  CHECK(std::abs(v.x) > std::abs(v.z));
}

TEST_CASE("evader in a dead end does not hit the walls") {
  // 10x3x3 block, free corridor along x at (y=1, z=1).
  auto probe = VoxelGrid::empty({10, 3, 3}, 6.0);
  std::vector<std::uint8_t> occ(probe.cell_count(), 1);
  for (int x = 0; x < 10; ++x) occ[probe.flat({x, 1, 1})] = 0;
  const VoxelGrid g({10, 3, 3}, 6.0, {}, occ);

  AgentState ev;
  ev.role = Role::Evader;
  ev.position = g.voxel_center({1, 1, 1});
  ev.yaw = kPi;
  const std::vector<Vec3> pursuers{g.voxel_center({6, 1, 1})};
  EvaderParams p;
  EvaderMemory mem;
  mem.heading = {-1, 0, 0};
  Rng rng(3);
  const auto lim = ControlLimits::evader();
  for (int step = 0; step < 50; ++step) {
    const auto rays = evader_raycasts(g, ev.position, p.sense_range);
    const auto cmd = evader_policy({&ev, pursuers, rays}, lim, p, mem, rng);
    ev = step_agent(ev, cmd, 0.1);
    REQUIRE_FALSE(g.point_blocked(ev.position));
  }
}

TEST_CASE("APF+PN controller") {
  const auto lim = ControlLimits::pursuer();
  SUBCASE("stationary target dead ahead") {
    const auto c = apf_pn_controller(track({40, 0, 0}), clear_lidar(), lim);
    CHECK(c.vx == 8.0);
    CHECK(c.yaw_rate == doctest::Approx(0.0));
  }
  SUBCASE("yaw rate follows the line-of-sight rate and saturates") {
    PnParams p;
    const auto slow = apf_pn_controller(track({40, 0, 0}, 0.1), clear_lidar(), lim, p);
    CHECK(slow.yaw_rate == doctest::Approx(p.nav_constant * 0.1));
    const auto fast = apf_pn_controller(track({40, 0, 0}, 1.0), clear_lidar(), lim, p);
    CHECK(fast.yaw_rate == lim.yaw_rate_max);
    const auto other = apf_pn_controller(track({40, 0, 0}, -0.1), clear_lidar(), lim, p);
    CHECK(other.yaw_rate == doctest::Approx(-p.nav_constant * 0.1));
  }
  SUBCASE("wall 6 m ahead slows the agent below half speed") {
    auto lidar = clear_lidar();
    lidar[0] = lidar[13] = 6.0 / 60.0;
    const auto c = apf_pn_controller(track({40, 0, 0}), lidar, lim);
    CHECK(c.vx < 0.5 * lim.vx_max);
  }
}

TEST_CASE("EUCLIDEAN controller") {
  const auto lim = ControlLimits::pursuer();
  const auto ahead = euclidean_controller(track({30, 0, 0}), lim);
  CHECK(ahead == ControlCommand{8, 0, 0, 0});
  const auto behind = euclidean_controller(track({-30, 0, 0}), lim);
  CHECK(behind.yaw_rate == lim.yaw_rate_max);
  const auto above = euclidean_controller(track({0, 0, 10}), lim);
  CHECK(above.vz == 3.0);
  CHECK(euclidean_controller(std::nullopt, lim) == ControlCommand{});
}

TEST_CASE("A*-guided blend") {
  const Vec3 g{0, 1, 0};
  const PnParams p;
  CHECK(guidance_blend_weight(100.0, p) == 1.0);
  CHECK(guidance_blend_weight(30.0, p) == 0.5);
  CHECK(guidance_blend_weight(10.0, p) == 0.0);

  const Vec3 far = astar_guided_direction(g, track({100, 0, 0}), p);
  CHECK(far == g);
  const Vec3 near = astar_guided_direction(g, track({10, 0, 0}), p);
  CHECK(near.x == doctest::Approx(1.0));
  CHECK(near.y == doctest::Approx(0.0));
  const Vec3 mid = astar_guided_direction(g, track({30, 0, 0}), p);
  const Vec3 half = (Vec3{0.5, 0.5, 0}).normalized_or_zero();
  CHECK(mid.x == doctest::Approx(half.x));
  CHECK(mid.y == doctest::Approx(half.y));
}

TEST_CASE("controllers are deterministic and emit clamped commands") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-80, 80), rate(-2, 2), l(0, 1);
  const auto lim = ControlLimits::pursuer(0.4);
  for (int i = 0; i < 2000; ++i) {
    const TargetTrack t = track({u(rng), u(rng), u(rng)}, rate(rng));
    std::vector<double> lidar(kLidarRays);
    for (auto& x : lidar) x = l(rng);
    const Vec3 guide = Vec3{u(rng), u(rng), u(rng)}.normalized_or_zero();
    const auto a = apf_pn_controller(t, lidar, lim);
    CHECK(a == apf_pn_controller(t, lidar, lim));
    CHECK(clamp_control(a, lim) == a);
    const auto h = apf_pn_controller(std::nullopt, lidar, lim);
    CHECK(clamp_control(h, lim) == h);
    const auto e = euclidean_controller(t, lim);
    CHECK(clamp_control(e, lim) == e);
    const auto s = astar_guided_pursuer(guide, t, lim);
    CHECK(s == astar_guided_pursuer(guide, t, lim));
    CHECK(clamp_control(s, lim) == s);
  }
}

TEST_CASE("target tracker forgets after the timeout") {
  TargetTracker tracker(50, 0.1);
  std::vector<double> obs(kFullObsDim, 0.0);
  obs[full_obs::kTargetPos] = 0.5;
  obs[full_obs::kMode] = 1.0;
  REQUIRE(tracker.update(obs));
  CHECK(tracker.current()->rel_position.x == doctest::Approx(30.0));
  std::vector<double> blind(kFullObsDim, 0.0);
  for (int i = 0; i < 50; ++i) CHECK(tracker.update(blind).has_value());
  CHECK_FALSE(tracker.update(blind).has_value());
}

TEST_CASE("policy registry") {
  auto& reg = PolicyRegistry::instance();
  for (const char* n : {"APF+PN", "EUCLIDEAN", "ASTAR-GUIDED", "HOVER"}) CHECK(reg.contains(n));
  CHECK_THROWS_AS((void)reg.create("NOPE", PolicyContext{}), ConfigError);
}

TEST_CASE("EUCLIDEAN trips over the clutter more often than the A*-guided pursuer") {
  const auto world = std::make_shared<WorldContext>(canonical_map());
  const auto stage = StageConfig::for_stage(5);
  const EngineOptions opt;
  auto events = [&](const char* method) {
    const auto policy = PolicyRegistry::instance().create(method, policy_context(stage, opt, {}));
    long total = 0;
    for (int ep = 0; ep < 50; ++ep) {
      const auto r = run_episode(world, stage, opt, derive_seed(7, "fixture", static_cast<std::uint64_t>(ep)), *policy);
      total += r.events.collision_events() + r.events.shield_triggers;
    }
    return total;
  };
  const long euclid = events("EUCLIDEAN");
  const long guided = events("ASTAR-GUIDED");
  MESSAGE("events: EUCLIDEAN " << euclid << ", ASTAR-GUIDED " << guided);
  CHECK(euclid > guided);
}
