#include "vp/episode_engine.hpp"

#include <algorithm>
#include <limits>
#include <ostream>

namespace vp {

// ---------------------------------------------------------------------------
// Configuration

StageConfig StageConfig::for_stage(int stage) {
  if (stage < 1 || stage > 5) throw ConfigError("stage must be in 1..5");
  static constexpr std::array<double, 5> kEvaderSpeed{5.0, 6.0, 7.0, 8.0, 9.0};
  StageConfig s;
  s.stage = stage;
  s.evader_speed_cap = kEvaderSpeed[static_cast<std::size_t>(stage - 1)];
  switch (stage) {
    case 1:
    case 2: s.gate_threshold.reset(); break;
    case 3: s.gate_threshold = 0.45; break;
    case 4: s.gate_threshold = 0.60; break;
    default: s.gate_threshold = 0.70; break;
  }
  return s;
}

void StageConfig::validate() const {
  if (stage < 1 || stage > 5) throw ConfigError("stage must be in 1..5");
  if (!(capture_radius > 0.0) || !(visibility_range > 0.0)) throw ConfigError("stage radii must be positive");
  if (gate_threshold && !(*gate_threshold > 0.0 && *gate_threshold <= 1.0)) {
    throw ConfigError("gate threshold must lie in (0, 1]");
  }
  if (horizon <= gate_timeout_steps) throw ConfigError("horizon must exceed the gate timeout");
  if (!(evader_speed_cap > 0.0) || !(evader_yaw_rate_max > 0.0)) throw ConfigError("evader limits must be positive");
  pursuer_limits.validate();
}

void to_json(nlohmann::json& j, const StageConfig& s) {
  j = {{"stage", s.stage},
       {"capture_radius", s.capture_radius},
       {"visibility_range", s.visibility_range},
       {"gate_threshold", s.gate_threshold ? nlohmann::json(*s.gate_threshold) : nlohmann::json(nullptr)},
       {"gate_timeout_steps", s.gate_timeout_steps},
       {"horizon", s.horizon},
       {"evader_speed_cap", s.evader_speed_cap},
       {"evader_yaw_rate_max", s.evader_yaw_rate_max},
       {"pursuer_vx_max", s.pursuer_limits.vx_max},
       {"pursuer_vy_max", s.pursuer_limits.vy_max},
       {"pursuer_vz_max", s.pursuer_limits.vz_max},
       {"pursuer_yaw_rate_max", s.pursuer_limits.yaw_rate_max}};
}

void from_json(const nlohmann::json& j, StageConfig& s) {
  if (j.contains("stage")) s = StageConfig::for_stage(j.at("stage").get<int>());
  for (const auto& [key, v] : j.items()) {
    if (key == "stage") continue;
    if (key == "capture_radius") s.capture_radius = v.get<double>();
    else if (key == "visibility_range") s.visibility_range = v.get<double>();
    else if (key == "gate_threshold") s.gate_threshold = v.is_null() ? std::nullopt : std::optional(v.get<double>());
    else if (key == "gate_timeout_steps") s.gate_timeout_steps = v.get<int>();
    else if (key == "horizon") s.horizon = v.get<int>();
    else if (key == "evader_speed_cap") s.evader_speed_cap = v.get<double>();
    else if (key == "evader_yaw_rate_max") s.evader_yaw_rate_max = v.get<double>();
    else if (key == "pursuer_vx_max") s.pursuer_limits.vx_max = v.get<double>();
    else if (key == "pursuer_vy_max") s.pursuer_limits.vy_max = v.get<double>();
    else if (key == "pursuer_vz_max") s.pursuer_limits.vz_max = v.get<double>();
    else if (key == "pursuer_yaw_rate_max") s.pursuer_limits.yaw_rate_max = v.get<double>();
    else throw ConfigError("unknown stage key '" + key + "'");
  }
}

void EngineOptions::validate() const {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(team_hit_radius >= 0.0) || !(shield_clearance >= 0.0)) throw ConfigError("radii must be non-negative");
  if (shield_lookahead_steps < 1) throw ConfigError("shield lookahead must be >= 1 step");
  if (spawn_attempts < 1) throw ConfigError("spawn attempts must be >= 1");
  if (estimate_timeout_steps < 0) throw ConfigError("estimate timeout must be >= 0");
  evader.validate();
  cgca.validate();
}

void to_json(nlohmann::json& j, const EngineOptions& o) {
  j = {{"dt", o.dt},
       {"team_hit_radius", o.team_hit_radius},
       {"team_hit_deactivates", o.team_hit_deactivates},
       {"shield_enabled", o.shield_enabled},
       {"shield_clearance", o.shield_clearance},
       {"shield_lookahead_steps", o.shield_lookahead_steps},
       {"spawn_cluster_radius", o.spawn_cluster_radius},
       {"spawn_min_separation", o.spawn_min_separation},
       {"spawn_planar", o.spawn_planar},
       {"evader_min_distance", o.evader_min_distance},
       {"spawn_attempts", o.spawn_attempts},
       {"training_gate", o.training_gate},
       {"estimate_timeout_steps", o.estimate_timeout_steps},
       {"lookahead", o.lookahead},
       {"replan_max_age_steps", o.replan.max_age_steps},
       {"replan_evader_shift", o.replan.evader_shift},
       {"evader", o.evader},
       {"controller", o.controller},
       {"cgca", o.cgca}};
}

void from_json(const nlohmann::json& j, EngineOptions& o) {
  for (const auto& [key, v] : j.items()) {
    if (key == "dt") o.dt = v.get<double>();
    else if (key == "team_hit_radius") o.team_hit_radius = v.get<double>();
    else if (key == "team_hit_deactivates") o.team_hit_deactivates = v.get<bool>();
    else if (key == "shield_enabled") o.shield_enabled = v.get<bool>();
    else if (key == "shield_clearance") o.shield_clearance = v.get<double>();
    else if (key == "shield_lookahead_steps") o.shield_lookahead_steps = v.get<int>();
    else if (key == "spawn_cluster_radius") o.spawn_cluster_radius = v.get<double>();
    else if (key == "spawn_min_separation") o.spawn_min_separation = v.get<double>();
    else if (key == "spawn_planar") o.spawn_planar = v.get<bool>();
    else if (key == "evader_min_distance") o.evader_min_distance = v.get<double>();
    else if (key == "spawn_attempts") o.spawn_attempts = v.get<int>();
    else if (key == "training_gate") o.training_gate = v.get<bool>();
    else if (key == "estimate_timeout_steps") o.estimate_timeout_steps = v.get<int>();
    else if (key == "lookahead") o.lookahead = v.get<double>();
    else if (key == "replan_max_age_steps") o.replan.max_age_steps = v.get<int>();
    else if (key == "replan_evader_shift") o.replan.evader_shift = v.get<double>();
    else if (key == "evader") v.get_to(o.evader);
    else if (key == "controller") v.get_to(o.controller);
    else if (key == "cgca") v.get_to(o.cgca);
    else throw ConfigError("unknown engine key '" + key + "'");
  }
}

PolicyContext policy_context(const StageConfig& stage, const EngineOptions& options, const Perturbations& p) {
  PolicyContext ctx;
  ctx.limits = stage.pursuer_limits;
  if (p.yaw_cap_override) ctx.limits.yaw_rate_max = *p.yaw_cap_override;
  ctx.dt = options.dt;
  ctx.controller = options.controller;
  return ctx;
}

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Running: return "running";
    case Outcome::Capture: return "capture";
    case Outcome::Timeout: return "timeout";
    case Outcome::AllPursuersDead: return "all_pursuers_dead";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// WorldContext

WorldContext::WorldContext(VoxelGrid grid, double visibility_range)
    : grid_(std::move(grid)), sensor_range_(visibility_range), map_hash_(grid_hash(grid_)) {
  const std::size_t n = grid_.cell_count();
  const Dims& d = grid_.dims();
  std::vector<std::int32_t> label(n, -1);
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (grid_.occupied_flat(seed) || label[seed] >= 0) continue;
    const auto id = static_cast<std::int32_t>(sizes.size());
    sizes.push_back(0);
    label[seed] = id;
    stack.push_back(seed);
    while (!stack.empty()) {
      const auto cur = stack.back();
      stack.pop_back();
      ++sizes.back();
      const VoxelIndex v = grid_.unflat(cur);
      for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const VoxelIndex nb{v.x + dx, v.y + dy, v.z + dz};
            if (nb.x < 0 || nb.y < 0 || nb.z < 0 || nb.x >= d.nx || nb.y >= d.ny || nb.z >= d.nz) continue;
            const auto j = grid_.flat(nb);
            if (grid_.occupied_flat(j) || label[j] >= 0) continue;
            label[j] = id;
            stack.push_back(j);
          }
        }
      }
    }
  }
  navigable_mask_.assign(n, 0);
  if (!sizes.empty()) {
    const auto best = static_cast<std::int32_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    for (std::size_t i = 0; i < n; ++i) {
      if (label[i] == best) {
        navigable_.push_back(static_cast<std::uint32_t>(i));
        navigable_mask_[i] = 1;
      }
    }
  }

  const double voxel = grid_.voxel_size();
  const int r = static_cast<int>(std::floor(visibility_range / voxel));
  for (int dz = -r; dz <= r; ++dz) {
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        const double dist = voxel * std::sqrt(static_cast<double>(dx * dx + dy * dy + dz * dz));
        if (dist <= visibility_range) sensor_ball_.push_back({dx, dy, dz});
      }
    }
  }
  std::stable_sort(sensor_ball_.begin(), sensor_ball_.end(), [](const auto& a, const auto& b) {
    return a[0] * a[0] + a[1] * a[1] + a[2] * a[2] < b[0] * b[0] + b[1] * b[1] + b[2] * b[2];
  });
}

// ---------------------------------------------------------------------------
// Episode

Episode::Episode(std::shared_ptr<const WorldContext> world, StageConfig stage, EngineOptions options,
                 Perturbations perturbations, std::uint64_t seed, bool compute_guidance)
    : world_(std::move(world)),
      stage_(std::move(stage)),
      options_(std::move(options)),
      perturbations_(perturbations),
      compute_guidance_(compute_guidance),
      env_rng_(derive_seed(seed, "env")),
      evader_rng_(derive_seed(seed, "evader")) {
  expect(world_ != nullptr, "episode needs a world");
  stage_.validate();
  options_.validate();
  if (!(perturbations_.sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
  if (perturbations_.delay_k < 0 || perturbations_.delay_k > 3) throw ConfigError("delay must be in 0..3");

  pursuer_limits_ = policy_context(stage_, options_, perturbations_).limits;
  pursuer_limits_.validate();
  evader_limits_ = ControlLimits::evader(perturbations_.speed_override.value_or(stage_.evader_speed_cap),
                                         stage_.evader_yaw_rate_max);
  evader_limits_.validate();
  options_.cgca.capture_radius = stage_.capture_radius;

  for (auto& d : delay_) d = DelayBuffer(perturbations_.delay_k);
  const std::size_t n = world_->grid().cell_count();
  visited_.assign(n, 0);
  origin_done_.assign(n, 0);
  gate_open_ = !(options_.training_gate && stage_.gate_threshold.has_value());
  last_seen_step_.fill(-1);

  spawn();
  if (compute_guidance_) {
    planner_ = std::make_unique<AStarPlanner>(world_->grid());
    for (const auto f : world_->navigable()) {
      const VoxelIndex v = world_->grid().unflat(f);
      frontier_pool_[static_cast<std::size_t>(frontier_quadrant(v))].push_back(
          {f, static_cast<std::int16_t>(v.x), static_cast<std::int16_t>(v.y), static_cast<std::int16_t>(v.z)});
    }
  }
  update_exploration();
  if (!gate_open_ && static_cast<double>(visited_count_) >= *stage_.gate_threshold *
                                                                 static_cast<double>(world_->grid().free_count())) {
    gate_open_ = true;
  }
  update_visibility();
  update_guidance();
  assemble_observations();
}

void Episode::spawn() {
  const VoxelGrid& grid = world_->grid();
  const auto nav = world_->navigable();
  if (nav.size() < static_cast<std::size_t>(kNumPursuers + 1)) {
    throw MapUnusable("map has fewer than 5 navigable free voxels");
  }
  std::uniform_int_distribution<std::size_t> pick(0, nav.size() - 1);
  std::uniform_real_distribution<double> yaw_dist(-kPi, kPi);

  // Cluster offsets around an anchor, in voxels.
  const int r = static_cast<int>(std::floor(options_.spawn_cluster_radius / grid.voxel_size()));
  std::vector<std::array<int, 3>> cluster;
  const int rz = options_.spawn_planar ? 0 : r;
  for (int dz = -rz; dz <= rz; ++dz) {
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        if (grid.voxel_size() * std::sqrt(static_cast<double>(dx * dx + dy * dy + dz * dz)) <=
            options_.spawn_cluster_radius) {
          cluster.push_back({dx, dy, dz});
        }
      }
    }
  }
  std::uniform_int_distribution<std::size_t> pick_offset(0, cluster.size() - 1);

  int budget = options_.spawn_attempts;
  while (budget > 0) {
    const VoxelIndex anchor = grid.unflat(nav[pick(env_rng_)]);
    --budget;
    std::array<Vec3, kNumPursuers> chosen{};
    int placed = 0;
    for (int tries = 0; tries < 200 && placed < kNumPursuers && budget > 0; ++tries, --budget) {
      const auto& off = cluster[pick_offset(env_rng_)];
      const VoxelIndex v{anchor.x + off[0], anchor.y + off[1], anchor.z + off[2]};
      if (!grid.in_bounds(v) || !world_->is_navigable(grid.flat(v))) continue;
      const Vec3 c = grid.voxel_center(v);
      bool ok = true;
      for (int k = 0; k < placed; ++k) ok = ok && distance(chosen[static_cast<std::size_t>(k)], c) >= options_.spawn_min_separation;
      if (ok) chosen[static_cast<std::size_t>(placed++)] = c;
    }
    if (placed < kNumPursuers) continue;

    for (int tries = 0; tries < 200 && budget > 0; ++tries, --budget) {
      const Vec3 c = grid.voxel_center(grid.unflat(nav[pick(env_rng_)]));
      double nearest = std::numeric_limits<double>::infinity();
      for (const auto& p : chosen) nearest = std::min(nearest, distance(p, c));
      if (nearest < options_.evader_min_distance) continue;
      // The team launches facing the middle of the arena.
      const Vec3 mid = grid.origin() + 0.5 * grid.extent();
      const Vec3 a = grid.voxel_center(anchor);
      const double launch_yaw = (std::abs(mid.x - a.x) + std::abs(mid.y - a.y) < 1e-9)
                                    ? yaw_dist(env_rng_)
                                    : std::atan2(mid.y - a.y, mid.x - a.x);
      for (std::size_t i = 0; i < kNumPursuers; ++i) {
        pursuers_[i] = AgentState{chosen[i], wrap_angle(launch_yaw), {}, 0.0, true, Role::Pursuer};
      }
      evader_ = AgentState{c, yaw_dist(env_rng_), {}, 0.0, true, Role::Evader};
      evader_memory_.heading = rotate_z({1.0, 0.0, 0.0}, evader_.yaw);
      return;
    }
  }
  throw MapUnusable("no valid spawn layout after " + std::to_string(options_.spawn_attempts) + " samples");
}

std::vector<int> Episode::alive_pursuers() const {
  std::vector<int> ids;
  for (int i = 0; i < kNumPursuers; ++i) {
    if (pursuers_[static_cast<std::size_t>(i)].alive) ids.push_back(i);
  }
  return ids;
}

double Episode::exploration_ratio() const {
  const auto free = world_->grid().free_count();
  return free == 0 ? 0.0 : static_cast<double>(visited_count_) / static_cast<double>(free);
}

void Episode::update_visibility() {
  const VoxelGrid& grid = world_->grid();
  for (std::size_t i = 0; i < kNumPursuers; ++i) {
    visible_[i] = false;
    const AgentState& p = pursuers_[i];
    if (!p.alive || !gate_open_) continue;
    if (distance(p.position, evader_.position) > stage_.visibility_range) continue;
    if (!grid.line_of_sight(p.position, evader_.position)) continue;
    visible_[i] = true;
    last_seen_[i] = evader_.position;
    last_seen_step_[i] = step_;
  }
}

// Coarse sensor sweep from the centre of each pursuer's voxel. Visibility between
// voxel centres never changes, so each origin voxel only needs one sweep per episode.
void Episode::update_exploration() {
  const VoxelGrid& grid = world_->grid();
  for (const auto& p : pursuers_) {
    if (!p.alive) continue;
    const auto v = grid.world_to_voxel(p.position);
    if (!v) continue;
    const auto origin_flat = grid.flat(*v);
    if (origin_done_[origin_flat]) continue;
    origin_done_[origin_flat] = 1;
    const Vec3 origin = grid.voxel_center(*v);
    for (const auto& off : world_->sensor_ball()) {
      const VoxelIndex t{v->x + off[0], v->y + off[1], v->z + off[2]};
      if (!grid.in_bounds(t)) continue;
      const auto tf = grid.flat(t);
      if (visited_[tf] || grid.occupied_flat(tf)) continue;
      if (off[0] != 0 || off[1] != 0 || off[2] != 0) {
        const Vec3 target = grid.voxel_center(t);
        const Vec3 delta = target - origin;
        const double len = delta.norm();
        const auto hit = grid.raycast(origin, delta / len, len);
        if (hit && *hit < len) continue;
      }
      visited_[tf] = 1;
      ++visited_count_;
    }
  }
}

int Episode::frontier_quadrant(const VoxelIndex& v) const {
  const VoxelGrid& grid = world_->grid();
  const bool east = v.x + 0.5 >= grid.dims().nx / 2.0;
  const bool north = v.y + 0.5 >= grid.dims().ny / 2.0;
  if (north) return east ? 0 : 1;
  return east ? 3 : 2;
}

// Nearest unvisited navigable cell in the pursuer's own quadrant, else anywhere.
// Ties go to the lower flat index.
std::optional<std::size_t> Episode::frontier_target(int id) {
  const auto here = world_->grid().world_to_voxel(pursuers_[static_cast<std::size_t>(id)].position);
  if (!here) return std::nullopt;
  auto nearest = [&](std::vector<FrontierCell>& pool, long& best_d, std::optional<std::size_t>& best) {
    std::erase_if(pool, [&](const FrontierCell& c) { return visited_[c.flat] != 0; });
    for (const auto& c : pool) {
      const long dx = c.x - here->x;
      const long dy = c.y - here->y;
      const long dz = c.z - here->z;
      const long d2 = dx * dx + dy * dy + dz * dz;
      if (d2 < best_d || (d2 == best_d && c.flat < *best)) {
        best_d = d2;
        best = c.flat;
      }
    }
  };
  long best_d = std::numeric_limits<long>::max();
  std::optional<std::size_t> best;
  nearest(frontier_pool_[static_cast<std::size_t>(id & 3)], best_d, best);
  if (best) return best;
  for (auto& pool : frontier_pool_) nearest(pool, best_d, best);
  return best;
}

void Episode::update_guidance() {
  if (!compute_guidance_) return;
  const VoxelGrid& grid = world_->grid();
  for (std::size_t i = 0; i < kNumPursuers; ++i) {
    guidance_[i] = {};
    const AgentState& p = pursuers_[i];
    if (!p.alive) continue;
    PlanCache& cache = plans_[i];
    const bool tracking =
        last_seen_[i].has_value() && (step_ - last_seen_step_[i]) <= options_.estimate_timeout_steps;

    // A failed attempt is retried on the same schedule as a stale plan.
    bool replan = cache.last_plan_step < 0 || tracking != cache.tracking;
    if (!replan) {
      const double moved = tracking ? distance(*last_seen_[i], cache.target_at_plan) : 0.0;
      replan = replan_policy(step_, cache.last_plan_step, moved, options_.replan);
    }
    if (replan) {
      std::optional<std::size_t> goal;
      if (tracking) {
        const auto v = grid.world_to_voxel(*last_seen_[i]);
        if (v && !grid.occupied(*v)) goal = grid.flat(*v);
      } else {
        goal = frontier_target(static_cast<int>(i));
      }
      cache.tracking = tracking;
      cache.last_plan_step = step_;
      cache.target_at_plan = tracking ? *last_seen_[i] : Vec3{};
      cache.path.reset();
      const auto start = grid.world_to_voxel(p.position);
      if (goal && start && !grid.occupied(*start)) {
        cache.goal_flat = *goal;
        cache.path = planner_->plan(*start, grid.unflat(*goal));
      }
    }
    if (cache.path) guidance_[i] = guidance_from_path(grid, *cache.path, p.position, options_.lookahead);
  }
}

std::optional<VoxelPath> Episode::current_path(int id) const { return plans_[static_cast<std::size_t>(id)].path; }

void Episode::assemble_observations() {
  std::array<TeammateView, kNumPursuers> views{};
  std::vector<Vec3> alive_positions;
  for (std::size_t i = 0; i < kNumPursuers; ++i) {
    views[i] = {pursuers_[i].position, pursuers_[i].world_velocity(), pursuers_[i].alive};
    if (pursuers_[i].alive) alive_positions.push_back(pursuers_[i].position);
  }
  const auto encirclement = compute_encirclement(alive_positions, evader_.position, stage_.visibility_range);
  const EvaderEstimate estimate{evader_.position, evader_.world_velocity()};

  for (std::size_t i = 0; i < kNumPursuers; ++i) {
    if (!pursuers_[i].alive) {
      observations_[i] = ObservationFull{};
      continue;
    }
    std::array<TeammateView, kNumPursuers - 1> mates{};
    std::size_t m = 0;
    for (std::size_t j = 0; j < kNumPursuers; ++j) {
      if (j != i) mates[m++] = views[j];
    }
    ObservationInputs in;
    in.self = &pursuers_[i];
    in.self_acceleration = accel_[i];
    in.teammates = mates;
    if (visible_[i]) in.evader = estimate;
    in.guidance = guidance_[i];
    in.agent_id = static_cast<int>(i);
    in.delay_k = perturbations_.delay_k;
    in.slot = compute_slot(pursuers_[i].position, evader_.position, static_cast<int>(i), stage_.visibility_range);
    in.encirclement = encirclement;
    observations_[i] = assemble_full(world_->grid(), in);
  }
}

std::vector<double> Episode::observation(int id, ObservationProfile profile) const {
  const auto& full = observations_[static_cast<std::size_t>(id)];
  if (profile == ObservationProfile::Full) return {full.values.begin(), full.values.end()};
  const auto lite = mask_observation(full);
  return {lite.values.begin(), lite.values.end()};
}

namespace {

// Distance the agent may travel along `dir` (unit) before violating the clearance,
// looking `horizon` metres ahead; nullopt when nothing is in reach.
std::optional<double> allowed_travel(const VoxelGrid& grid, const Vec3& from, const Vec3& dir, double horizon,
                                     double clearance) {
  const auto hit = grid.raycast(from, dir, horizon);
  if (!hit) return std::nullopt;
  return std::max(0.0, *hit - clearance);
}

}  // namespace

// Clamps a pursuer's commanded displacement so it stops short of obstacles. Blocked
// world-axis components are removed first, so an agent pressed against a wall still
// slides along it instead of freezing in place.
bool Episode::shield(AgentState& agent, ControlCommand& cmd) const {
  const VoxelGrid& grid = world_->grid();
  const double lookahead = options_.shield_lookahead_steps;
  const double clearance = options_.shield_clearance;
  const Vec3 step = options_.dt * rotate_z(cmd.velocity(), agent.yaw);
  const double len = step.norm();
  if (len <= 0.0) return false;
  const auto full = allowed_travel(grid, agent.position, step / len, len * lookahead, clearance);
  if (!full || *full >= len * lookahead) return false;

  Vec3 slide;
  const std::array<double, 3> comp{step.x, step.y, step.z};
  for (int axis = 0; axis < 3; ++axis) {
    const double c = comp[static_cast<std::size_t>(axis)];
    if (std::abs(c) < 1e-12) continue;
    Vec3 dir;
    (axis == 0 ? dir.x : axis == 1 ? dir.y : dir.z) = c > 0.0 ? 1.0 : -1.0;
    const auto room = allowed_travel(grid, agent.position, dir, std::abs(c) * lookahead, clearance);
    const double keep = room ? std::min(std::abs(c), *room / lookahead) : std::abs(c);
    (axis == 0 ? slide.x : axis == 1 ? slide.y : slide.z) = c > 0.0 ? keep : -keep;
  }
  // The axis components can each be clear while their sum clips an edge or corner;
  // keep the longest clear combination of them.
  auto clear = [&](const Vec3& d) {
    const double l = d.norm();
    if (l <= 0.0) return true;
    const auto room = allowed_travel(grid, agent.position, d / l, l * lookahead, clearance);
    return !room || *room >= l * lookahead;
  };
  Vec3 best;
  for (int mask = 7; mask > 0; --mask) {
    const Vec3 cand{(mask & 1) ? slide.x : 0.0, (mask & 2) ? slide.y : 0.0, (mask & 4) ? slide.z : 0.0};
    if (cand.norm() > best.norm() && clear(cand)) best = cand;
  }
  const Vec3 body = rotate_z(best / options_.dt, -agent.yaw);
  ControlCommand out = clamp_control({body.x, body.y, body.z, cmd.yaw_rate}, pursuer_limits_);
  // Per-axis clamping in the body frame can bend the displacement; re-check it.
  const Vec3 s2 = options_.dt * rotate_z(out.velocity(), agent.yaw);
  if (!clear(s2)) out = {0.0, 0.0, 0.0, cmd.yaw_rate};
  cmd = out;
  return true;
}

StepResult Episode::step(std::span<const ControlCommand> commands) {
  expect(!done(), "step called on a finished episode");
  const auto acting = alive_pursuers();
  expect(commands.size() == acting.size(), "one command per alive pursuer is required");
  const VoxelGrid& grid = world_->grid();

  StepResult out;
  out.acting = acting;
  std::array<double, kNumPursuers> d_prev{};
  for (const int id : acting) d_prev[static_cast<std::size_t>(id)] = distance(pursuers_[static_cast<std::size_t>(id)].position, evader_.position);

  // (1)-(2) delay then clamp.
  for (std::size_t k = 0; k < acting.size(); ++k) {
    const auto i = static_cast<std::size_t>(acting[k]);
    out.applied[i] = clamp_control(delay_[i].push_pop(commands[k]), pursuer_limits_);
  }

  // (3) evader acts on ground truth.
  std::vector<Vec3> pursuer_positions;
  for (const int id : acting) {
    const Vec3& p = pursuers_[static_cast<std::size_t>(id)].position;
    if (options_.evader.pursuers_need_los && !grid.line_of_sight(evader_.position, p)) continue;
    pursuer_positions.push_back(p);
  }
  const auto rays = evader_raycasts(grid, evader_.position, options_.evader.sense_range);
  EvaderContext ectx{&evader_, pursuer_positions, rays};
  const ControlCommand evader_cmd = evader_policy(ectx, evader_limits_, options_.evader, evader_memory_, evader_rng_);

  // Safety shield on pursuer commands, ahead of integration.
  if (options_.shield_enabled) {
    for (const int id : acting) {
      const auto i = static_cast<std::size_t>(id);
      out.events[i].shield = shield(pursuers_[i], out.applied[i]);
    }
  }

  // (4) integrate.
  std::array<AgentState, kNumPursuers> before = pursuers_;
  for (const int id : acting) {
    const auto i = static_cast<std::size_t>(id);
    pursuers_[i] = step_agent(pursuers_[i], out.applied[i], options_.dt);
  }
  const AgentState evader_before = evader_;
  evader_ = step_agent(evader_, evader_cmd, options_.dt);

  // (5) collisions.
  for (const int id : acting) {
    const auto i = static_cast<std::size_t>(id);
    if (grid.point_blocked(pursuers_[i].position)) {
      out.events[i].obstacle_hit = true;
      out.events[i].impact_speed = out.applied[i].velocity().norm();
    }
  }
  for (std::size_t a = 0; a < acting.size(); ++a) {
    for (std::size_t b = a + 1; b < acting.size(); ++b) {
      const auto i = static_cast<std::size_t>(acting[a]);
      const auto j = static_cast<std::size_t>(acting[b]);
      if (distance(pursuers_[i].position, pursuers_[j].position) > options_.team_hit_radius) continue;
      const double rel = (pursuers_[i].world_velocity() - pursuers_[j].world_velocity()).norm();
      for (const auto k : {i, j}) {
        out.events[k].team_hit = true;
        out.events[k].impact_speed = std::max(out.events[k].impact_speed, rel);
      }
    }
  }
  out.evader_wall_hit = grid.point_blocked(evader_.position);

  // (7) deactivation; crashed agents stay at their last free position.
  for (const int id : acting) {
    const auto i = static_cast<std::size_t>(id);
    const AgentEvents& ev = out.events[i];
    if (ev.obstacle_hit) {
      pursuers_[i].position = before[i].position;
      pursuers_[i].alive = false;
    } else if (ev.team_hit && options_.team_hit_deactivates) {
      pursuers_[i].alive = false;
    }
    counts_.obstacle_hits += ev.obstacle_hit ? 1 : 0;
    counts_.team_hits += ev.team_hit ? 1 : 0;
    counts_.shield_triggers += ev.shield ? 1 : 0;
  }
  if (out.evader_wall_hit) {
    evader_.position = evader_before.position;
    ++counts_.evader_wall_hits;
  }

  for (const int id : acting) {
    const auto i = static_cast<std::size_t>(id);
    const Vec3 v = out.applied[i].velocity();
    accel_[i] = (v - prev_velocity_[i]) / options_.dt;
    prev_velocity_[i] = v;
  }
  ++step_;

  // (8)-(9) exploration and gate.
  update_exploration();
  if (!gate_open_ && (static_cast<double>(visited_count_) >=
                          *stage_.gate_threshold * static_cast<double>(grid.free_count()) ||
                      step_ > stage_.gate_timeout_steps)) {
    gate_open_ = true;
  }

  // (10) capture.
  const auto alive_now = alive_pursuers();
  std::vector<Vec3> acting_positions;
  for (const int id : acting) acting_positions.push_back(pursuers_[static_cast<std::size_t>(id)].position);
  out.min_distance = capture_check(acting_positions, evader_.position, stage_.capture_radius).min_distance;
  if (out.evader_wall_hit) {
    out.captured = true;
  } else if (!alive_now.empty()) {
    std::vector<Vec3> alive_positions;
    for (const int id : alive_now) alive_positions.push_back(pursuers_[static_cast<std::size_t>(id)].position);
    out.captured = capture_check(alive_positions, evader_.position, stage_.capture_radius).captured;
  }

  // (11) CGCA over the pursuers that acted this step.
  TeamRewardInput team;
  team.dt = options_.dt;
  team.captured = out.captured;
  const auto quality = out.captured ? capture_quality(acting_positions, evader_.position, options_.cgca)
                                    : std::vector<double>(acting.size(), 0.0);
  for (std::size_t k = 0; k < acting.size(); ++k) {
    const auto i = static_cast<std::size_t>(acting[k]);
    AgentRewardInput a;
    a.d_prev = d_prev[i];
    a.d_curr = distance(pursuers_[i].position, evader_.position);
    a.obstacle_hit = out.events[i].obstacle_hit;
    a.team_hit = out.events[i].team_hit;
    a.shield = out.events[i].shield;
    a.impact_speed = (a.obstacle_hit || a.team_hit) ? out.events[i].impact_speed : 0.0;
    a.capture_quality = quality[k];
    team.agents.push_back(a);
  }
  out.rewards = compute_team_rewards(team, options_.cgca);

  // (12) termination.
  if (out.captured) {
    outcome_ = Outcome::Capture;
  } else if (alive_now.empty()) {
    outcome_ = Outcome::AllPursuersDead;
  } else if (step_ >= stage_.horizon) {
    outcome_ = Outcome::Timeout;
  }
  out.outcome = outcome_;
  out.done = done();

  if (!out.done) {
    update_visibility();
    update_guidance();
    assemble_observations();
  }
  return out;
}

// ---------------------------------------------------------------------------
// run_episode

namespace {

nlohmann::json vec_json(const Vec3& v) { return {v.x, v.y, v.z}; }

nlohmann::json step_record(const Episode& ep, const StepResult& r, const std::vector<ControlCommand>& requested) {
  nlohmann::json pursuers = nlohmann::json::array();
  for (int i = 0; i < kNumPursuers; ++i) {
    const auto& p = ep.pursuers()[static_cast<std::size_t>(i)];
    const auto& ev = r.events[static_cast<std::size_t>(i)];
    const auto& c = r.applied[static_cast<std::size_t>(i)];
    pursuers.push_back({{"id", i},
                        {"pos", vec_json(p.position)},
                        {"yaw", p.yaw},
                        {"alive", p.alive},
                        {"applied", {c.vx, c.vy, c.vz, c.yaw_rate}},
                        {"obstacle_hit", ev.obstacle_hit},
                        {"team_hit", ev.team_hit},
                        {"shield", ev.shield}});
  }
  nlohmann::json commands = nlohmann::json::array();
  for (const auto& c : requested) commands.push_back({c.vx, c.vy, c.vz, c.yaw_rate});
  nlohmann::json rewards = nlohmann::json::array();
  for (std::size_t k = 0; k < r.acting.size(); ++k) {
    const auto& b = r.rewards.agents[k];
    rewards.push_back({{"id", r.acting[k]},
                       {"dir", b.dir_term},
                       {"cap", b.cap_term},
                       {"qual", b.qual_term},
                       {"col", b.col_term},
                       {"imp", b.imp_term},
                       {"lazy", b.lazy_term},
                       {"total", b.total},
                       {"share", b.share}});
  }
  return {{"type", "step"},
          {"step", ep.step_index()},
          {"pursuers", pursuers},
          {"evader", {{"pos", vec_json(ep.evader().position)}, {"yaw", ep.evader().yaw}}},
          {"commands", commands},
          {"evader_wall_hit", r.evader_wall_hit},
          {"rewards", rewards},
          {"rho", r.rewards.rho},
          {"team_reward", r.rewards.team_mean},
          {"min_distance", r.min_distance},
          {"gate_open", ep.gate_open()},
          {"outcome", outcome_name(r.outcome)}};
}

}  // namespace

nlohmann::json episode_result_json(const EpisodeResult& r) {
  return {{"seed", r.seed},
          {"outcome", outcome_name(r.outcome)},
          {"steps", r.steps},
          {"success", r.success},
          {"clean", r.clean},
          {"collision", r.collision},
          {"obstacle_hits", r.events.obstacle_hits},
          {"team_hits", r.events.team_hits},
          {"shield_triggers", r.events.shield_triggers},
          {"evader_wall_hits", r.events.evader_wall_hits},
          {"returns", r.returns},
          {"team_return", r.team_return},
          {"final_distance", r.final_distance},
          {"min_distance", r.min_distance}};
}

EpisodeResult run_episode(std::shared_ptr<const WorldContext> world, const StageConfig& stage,
                          const EngineOptions& options, std::uint64_t seed, const PursuerPolicy& policy,
                          const Perturbations& perturbations, const RunOptions& run) {
  Episode ep(std::move(world), stage, options, perturbations, seed, policy.uses_guidance());
  std::array<std::unique_ptr<PolicyMemory>, kNumPursuers> memory;
  std::vector<Rng> policy_rng;
  for (int i = 0; i < kNumPursuers; ++i) {
    memory[static_cast<std::size_t>(i)] = policy.make_memory(i);
    policy_rng.emplace_back(derive_seed(seed, "policy", static_cast<std::uint64_t>(i)));
  }
  Rng noise_rng(derive_seed(seed, "noise"));

  if (run.trajectory) {
    nlohmann::json perturb = {{"sigma", perturbations.sigma}, {"delay_k", perturbations.delay_k}};
    if (perturbations.speed_override) perturb["speed_override"] = *perturbations.speed_override;
    if (perturbations.yaw_cap_override) perturb["yaw_cap_override"] = *perturbations.yaw_cap_override;
    *run.trajectory << nlohmann::json{{"type", "header"},
                                      {"engine_version", kEngineVersion},
                                      {"seed", seed},
                                      {"map_hash", ep.world().map_hash()},
                                      {"policy", policy.name()},
                                      {"stage", stage},
                                      {"options", options},
                                      {"perturbations", perturb}}
                           .dump()
                    << '\n';
  }

  EpisodeResult result;
  result.seed = seed;
  result.min_distance = std::numeric_limits<double>::infinity();
  std::vector<ControlCommand> commands;
  while (!ep.done()) {
    const auto alive = ep.alive_pursuers();
    commands.clear();
    for (const int id : alive) {
      auto obs = ep.observation(id, policy.profile());
      if (perturbations.sigma > 0.0) obs = apply_noise(obs, perturbations.sigma, noise_rng);
      const auto i = static_cast<std::size_t>(id);
      commands.push_back(policy.act(obs, *memory[i], policy_rng[i]));
    }
    const StepResult r = ep.step(commands);
    for (std::size_t k = 0; k < r.acting.size(); ++k) {
      result.returns[static_cast<std::size_t>(r.acting[k])] += r.rewards.agents[k].total;
    }
    result.team_return += r.rewards.team_mean;
    result.min_distance = std::min(result.min_distance, r.min_distance);
    result.final_distance = r.min_distance;
    if (ep.step_index() % 10 == 0 || r.done) result.distance_profile.push_back(r.min_distance);
    if (run.trajectory) *run.trajectory << step_record(ep, r, commands).dump() << '\n';
  }
  result.outcome = ep.outcome();
  result.steps = ep.step_index();
  result.events = ep.event_counts();
  result.success = result.outcome == Outcome::Capture;
  result.collision = result.events.collision_events() > 0;
  result.clean = result.success && !result.collision;
  if (run.trajectory) {
    *run.trajectory << nlohmann::json{{"type", "result"}, {"result", episode_result_json(result)}}.dump() << '\n';
  }
  return result;
}

}  // namespace vp
