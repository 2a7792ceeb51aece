#include <doctest.h>

#include <set>
#include <sstream>

#include "vp/episode_engine.hpp"
#include "vp/mapgen_urban.hpp"

using namespace vp;

namespace {

std::shared_ptr<const WorldContext> canonical_world() {
  static const auto w = std::make_shared<const WorldContext>(canonical_map());
  return w;
}

std::vector<ControlCommand> same_for_all(const Episode& ep, const ControlCommand& c) {
  return std::vector<ControlCommand>(ep.alive_pursuers().size(), c);
}

// Drives an episode with a registered policy and checks the per-step invariants.
EpisodeResult drive_checked(std::shared_ptr<const WorldContext> world, const StageConfig& stage,
                            const EngineOptions& opt, std::uint64_t seed, const std::string& method) {
  const auto policy = PolicyRegistry::instance().create(method, policy_context(stage, opt, {}));
  Episode ep(world, stage, opt, {}, seed, policy->uses_guidance());
  std::vector<std::unique_ptr<PolicyMemory>> mem;
  for (int i = 0; i < kNumPursuers; ++i) mem.push_back(policy->make_memory(i));
  Rng rng(derive_seed(seed, "policy"));
  double explored = ep.exploration_ratio();
  bool gate_seen = ep.gate_open();
  const VoxelGrid& grid = world->grid();
  while (!ep.done()) {
    std::vector<ControlCommand> cmds;
    for (const int id : ep.alive_pursuers())
      cmds.push_back(policy->act(ep.observation(id, policy->profile()), *mem[static_cast<std::size_t>(id)], rng));
    const auto r = ep.step(cmds);
    CHECK(r.rewards.agents.size() == r.acting.size());
    for (const auto& p : ep.pursuers())
      if (p.alive) REQUIRE_FALSE(grid.point_blocked(p.position));
    REQUIRE_FALSE(grid.point_blocked(ep.evader().position));
    CHECK(ep.exploration_ratio() >= explored);
    explored = ep.exploration_ratio();
    if (gate_seen) CHECK(ep.gate_open());
    gate_seen = gate_seen || ep.gate_open();
  }
  const int kinds = (ep.outcome() == Outcome::Capture) + (ep.outcome() == Outcome::Timeout) +
                    (ep.outcome() == Outcome::AllPursuersDead);
  CHECK(kinds == 1);
  return run_episode(world, stage, opt, seed, *policy);
}

}  // namespace

TEST_CASE("spawn layout is a function of the seed") {
  const auto world = canonical_world();
  const auto stage = StageConfig::for_stage(5);
  auto layout = [&](std::uint64_t seed) {
    Episode ep(world, stage, EngineOptions{}, {}, seed, false);
    std::vector<double> v;
    for (const auto& p : ep.pursuers()) v.insert(v.end(), {p.position.x, p.position.y, p.position.z, p.yaw});
    v.insert(v.end(), {ep.evader().position.x, ep.evader().position.y, ep.evader().position.z});
    return v;
  };
  CHECK(layout(4) == layout(4));
  std::set<std::vector<double>> distinct;
  for (std::uint64_t s = 0; s < 100; ++s) distinct.insert(layout(s));
  CHECK(distinct.size() >= 99);

  Episode ep(world, stage, EngineOptions{}, {}, 9, false);
  for (std::size_t i = 0; i < kNumPursuers; ++i) {
    for (std::size_t j = i + 1; j < kNumPursuers; ++j)
      CHECK(distance(ep.pursuers()[i].position, ep.pursuers()[j].position) >= 12.0);
    CHECK(distance(ep.pursuers()[i].position, ep.evader().position) >= 120.0);
  }
}

TEST_CASE("tiny maps cannot host an episode") {
  std::vector<std::uint8_t> occ(27, 1);
  occ[0] = occ[1] = occ[2] = 0;
  auto world = std::make_shared<WorldContext>(VoxelGrid({3, 3, 3}, 6.0, {}, occ));
  CHECK_THROWS_AS(Episode(world, StageConfig::for_stage(5), EngineOptions{}, {}, 1, false), MapUnusable);
}

TEST_CASE("zero commands in open space change nothing") {
  auto world = std::make_shared<WorldContext>(VoxelGrid::empty({52, 52, 18}, 6.0));
  Episode ep(world, StageConfig::for_stage(5), EngineOptions{}, {}, 3, true);
  const auto before = ep.pursuers();
  const auto r = ep.step(same_for_all(ep, {}));
  CHECK_FALSE(r.done);
  for (std::size_t i = 0; i < kNumPursuers; ++i) {
    CHECK(ep.pursuers()[i].position == before[i].position);
    CHECK_FALSE(r.events[i].obstacle_hit);
    CHECK_FALSE(r.events[i].team_hit);
    CHECK_FALSE(r.events[i].shield);
  }
  CHECK(ep.observation(0, ObservationProfile::Full).size() == kFullObsDim);
  CHECK(ep.observation(0, ObservationProfile::Lite).size() == kLiteObsDim);
}

TEST_CASE("diving into the floor: the shield stops it, without the shield it is a crash") {
  // One voxel layer: the floor is 3 m below every spawn point.
  auto world = std::make_shared<WorldContext>(VoxelGrid::empty({40, 40, 1}, 6.0));
  const auto stage = StageConfig::for_stage(5);
  const ControlCommand dive{0, 0, -3, 0};

  EngineOptions shielded;
  Episode a(world, stage, shielded, {}, 5, false);
  int shield_events = 0;
  for (int k = 0; k < 30; ++k) {
    const auto r = a.step(same_for_all(a, dive));
    for (const auto& e : r.events) {
      shield_events += e.shield;
      CHECK_FALSE(e.obstacle_hit);
    }
  }
  CHECK(shield_events > 0);
  CHECK(a.alive_pursuers().size() == kNumPursuers);

  EngineOptions bare;
  bare.shield_enabled = false;
  Episode b(world, stage, bare, {}, 5, false);
  int hits = 0;
  for (int k = 0; k < 30 && !b.done(); ++k) {
    const auto r = b.step(same_for_all(b, dive));
    for (const auto& e : r.events) hits += e.obstacle_hit;
  }
  CHECK(hits == kNumPursuers);
  CHECK(b.alive_pursuers().empty());
  CHECK(b.outcome() == Outcome::AllPursuersDead);
}

TEST_CASE("horizon ends the episode as a timeout") {
  auto stage = StageConfig::for_stage(5);
  stage.horizon = 300;
  stage.gate_timeout_steps = 100;
  const auto policy = PolicyRegistry::instance().create("HOVER", PolicyContext{});
  const auto r = run_episode(canonical_world(), stage, EngineOptions{}, 11, *policy);
  if (r.outcome == Outcome::Timeout) CHECK(r.steps == 300);
  CHECK(r.steps <= 300);
}

TEST_CASE("capture ends the episode within the capture radius") {
  const auto world = canonical_world();
  const auto stage = StageConfig::for_stage(5);
  const auto policy = PolicyRegistry::instance().create("ASTAR-GUIDED", policy_context(stage, EngineOptions{}, {}));
  int captures = 0;
  for (std::uint64_t s = 0; s < 40 && captures < 3; ++s) {
    const auto r = run_episode(world, stage, EngineOptions{}, s, *policy);
    if (r.outcome != Outcome::Capture) continue;
    ++captures;
    CHECK(r.success);
    // An evader that crashes into a wall while fleeing also counts as caught.
    if (r.events.evader_wall_hits == 0) CHECK(r.final_distance <= 8.0);
  }
  CHECK(captures > 0);
}

TEST_CASE("guided pursuers catch a slow evader in open space") {
  auto world = std::make_shared<WorldContext>(VoxelGrid::empty({20, 20, 6}, 6.0));
  auto stage = StageConfig::for_stage(5);
  stage.evader_speed_cap = 3.0;
  EngineOptions opt;
  // A 120 m box cannot keep the evader 120 m from every pursuer.
  opt.evader_min_distance = 60.0;
  const auto policy = PolicyRegistry::instance().create("ASTAR-GUIDED", policy_context(stage, opt, {}));
  int quick = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto r = run_episode(world, stage, opt, s, *policy);
    quick += (r.outcome == Outcome::Capture && r.steps <= 600);
  }
  CHECK(quick >= 95);
}

TEST_CASE("episodes are reproducible and respect the invariants") {
  const auto world = canonical_world();
  auto stage = StageConfig::for_stage(5);
  stage.horizon = 600;
  stage.gate_timeout_steps = 100;
  for (const char* method : {"APF+PN", "EUCLIDEAN", "ASTAR-GUIDED"}) {
    for (std::uint64_t s = 0; s < 3; ++s) {
      const auto r = drive_checked(world, stage, EngineOptions{}, s, method);
      const auto policy = PolicyRegistry::instance().create(method, policy_context(stage, EngineOptions{}, {}));
      CHECK(r == run_episode(world, stage, EngineOptions{}, s, *policy));
      CHECK((!r.clean || r.success));
    }
  }
}

TEST_CASE("training gate opens once and stays open") {
  const auto world = canonical_world();
  auto stage = StageConfig::for_stage(5);
  stage.horizon = 400;
  stage.gate_timeout_steps = 100;
  EngineOptions opt;
  opt.training_gate = true;
  drive_checked(world, stage, opt, 21, "ASTAR-GUIDED");
}

TEST_CASE("trajectory log replays byte for byte") {
  const auto world = canonical_world();
  auto stage = StageConfig::for_stage(5);
  stage.horizon = 200;
  stage.gate_timeout_steps = 100;
  const auto policy = PolicyRegistry::instance().create("APF+PN", policy_context(stage, EngineOptions{}, {}));
  std::ostringstream a, b;
  RunOptions ra, rb;
  ra.trajectory = &a;
  rb.trajectory = &b;
  run_episode(world, stage, EngineOptions{}, 8, *policy, {}, ra);
  run_episode(world, stage, EngineOptions{}, 8, *policy, {}, rb);
  CHECK(a.str() == b.str());
  CHECK(a.str().find("\"type\":\"header\"") != std::string::npos);
}

TEST_CASE("config validation") {
  EngineOptions o;
  CHECK_THROWS_AS(from_json(nlohmann::json{{"no_such_key", 1}}, o), ConfigError);
  CHECK_THROWS_AS(StageConfig::for_stage(9), ConfigError);
  const auto s = StageConfig::for_stage(1);
  CHECK(s.evader_speed_cap < StageConfig::for_stage(5).evader_speed_cap);
}
