#include "vp/scripted_agents.hpp"

#include <algorithm>
#include <limits>

namespace vp {

// ---------------------------------------------------------------------------
// Observation decoding

DecodedObservation decode_observation(std::span<const double> obs) {
  const bool full = obs.size() == kFullObsDim;
  expect(full || obs.size() == kLiteObsDim, "observation must be 83-D or 50-D");
  DecodedObservation out;
  std::copy_n(obs.begin(), kLidarRays, out.lidar.begin());
  const std::size_t mode_at = full ? full_obs::kMode : lite_obs::kMode;
  const std::size_t guide_at = full ? full_obs::kGuidance : lite_obs::kGuidance;
  out.target_visible = obs[mode_at] > 0.5;
  if (out.target_visible) {
    out.target_rel_position = Vec3{obs[26], obs[27], obs[28]} * norm::kRange;
    out.target_rel_velocity = Vec3{obs[29], obs[30], obs[31]} * norm::kRelVelocity;
  }
  out.self_velocity = {obs[32] * 8.0, obs[33] * 4.0, obs[34] * 3.0};
  out.yaw_rate = obs[40] * norm::kRate;
  out.guidance = {obs[guide_at], obs[guide_at + 1], obs[guide_at + 2]};
  if (full) {
    for (std::size_t k = 0; k < 3; ++k) {
      const std::size_t at = full_obs::kTeammates + k * full_obs::kTeammateStride;
      if (obs[at + 7] > 0.5) out.teammates_rel.push_back(Vec3{obs[at], obs[at + 1], obs[at + 2]} * norm::kRange);
    }
  }
  return out;
}

namespace {

double horizontal_los_rate(const Vec3& r, const Vec3& v) {
  const double r2 = r.x * r.x + r.y * r.y;
  if (r2 < 1e-6) return 0.0;
  return (r.x * v.y - r.y * v.x) / r2;
}

}  // namespace

std::optional<TargetTrack> TargetTracker::update(std::span<const double> obs) {
  const DecodedObservation o = decode_observation(obs);
  if (o.target_visible) {
    track_ = TargetTrack{o.target_rel_position, horizontal_los_rate(o.target_rel_position, o.target_rel_velocity),
                         true};
    age_ = 0;
    return track_;
  }
  if (!track_) return std::nullopt;
  if (++age_ > timeout_) {
    track_.reset();
    return std::nullopt;
  }
  // Remembered target is assumed stationary; shift by our own last step.
  const Vec3 moved = track_->rel_position - o.self_velocity * dt_;
  track_->rel_position = rotate_z(moved, -o.yaw_rate * dt_);
  track_->los_rate = horizontal_los_rate(track_->rel_position, -o.self_velocity);
  track_->fresh = false;
  return track_;
}

// ---------------------------------------------------------------------------
// Controllers

Vec3 max_feasible_velocity(const Vec3& direction, const ControlLimits& limits) {
  const Vec3 u = direction.normalized_or_zero();
  if (u == Vec3{}) return {};
  if (limits.mode == LimitMode::SpeedCap) return u * limits.speed_cap;
  double scale = std::numeric_limits<double>::infinity();
  if (std::abs(u.x) > 1e-12) scale = std::min(scale, limits.vx_max / std::abs(u.x));
  if (std::abs(u.y) > 1e-12) scale = std::min(scale, limits.vy_max / std::abs(u.y));
  if (std::abs(u.z) > 1e-12) scale = std::min(scale, limits.vz_max / std::abs(u.z));
  return u * scale;
}

void to_json(nlohmann::json& j, const PnParams& p) {
  j = nlohmann::json::object();
  j["nav_constant"] = p.nav_constant;
  j["heading_gain"] = p.heading_gain;
  j["vz_gain"] = p.vz_gain;
  j["apf_stop"] = p.apf_stop;
  j["apf_slow"] = p.apf_slow;
  j["apf_side"] = p.apf_side;
  j["lead_time"] = p.lead_time;
  j["blend_outer"] = p.blend_outer;
  j["blend_inner"] = p.blend_inner;
  j["separation_range"] = p.separation_range;
  j["separation_weight"] = p.separation_weight;
  j["hold_speed"] = p.hold_speed;
  j["hold_yaw_rate"] = p.hold_yaw_rate;
}

void from_json(const nlohmann::json& j, PnParams& p) {
  for (const auto& [key, value] : j.items()) {
    if (key == "nav_constant") p.nav_constant = value.get<double>();
    else if (key == "heading_gain") p.heading_gain = value.get<double>();
    else if (key == "vz_gain") p.vz_gain = value.get<double>();
    else if (key == "apf_stop") p.apf_stop = value.get<double>();
    else if (key == "apf_slow") p.apf_slow = value.get<double>();
    else if (key == "apf_side") p.apf_side = value.get<double>();
    else if (key == "lead_time") p.lead_time = value.get<double>();
    else if (key == "blend_outer") p.blend_outer = value.get<double>();
    else if (key == "blend_inner") p.blend_inner = value.get<double>();
    else if (key == "separation_range") p.separation_range = value.get<double>();
    else if (key == "separation_weight") p.separation_weight = value.get<double>();
    else if (key == "hold_speed") p.hold_speed = value.get<double>();
    else if (key == "hold_yaw_rate") p.hold_yaw_rate = value.get<double>();
    else throw ConfigError("unknown controller parameter '" + key + "'");
  }
}

ControlCommand apf_pn_controller(const std::optional<TargetTrack>& target, std::span<const double> lidar,
                                 const ControlLimits& limits, const PnParams& params) {
  expect(lidar.size() >= kLidarRays, "APF+PN needs the 26 LiDAR channels");
  const auto& dirs = lidar_directions();

  // Forward sector: azimuth bins 0 and +-1 on both rings.
  double forward = std::numeric_limits<double>::infinity();
  for (const std::size_t ring : {std::size_t{0}, std::size_t{13}}) {
    for (const std::size_t a : {std::size_t{0}, std::size_t{1}, std::size_t{12}}) {
      forward = std::min(forward, lidar[ring + a] * norm::kRange);
    }
  }
  const double speed_scale = std::clamp((forward - params.apf_stop) / (params.apf_slow - params.apf_stop), 0.0, 1.0);

  double lateral = 0.0;
  for (std::size_t r = 0; r < kLidarRays; ++r) {
    const double range = lidar[r] * norm::kRange;
    if (range >= params.apf_side) continue;
    lateral -= dirs[r].y * (params.apf_side - range) / params.apf_side;
  }

  ControlCommand cmd;
  cmd.vy = limits.vy_max * std::clamp(lateral, -1.0, 1.0);
  if (!target) {
    // Hold: keep heading and altitude at cruise speed; the field turns the agent off walls.
    double left = 0.0;
    double right = 0.0;
    for (const std::size_t ring : {std::size_t{0}, std::size_t{13}}) {
      for (const std::size_t a : {std::size_t{1}, std::size_t{2}, std::size_t{3}}) {
        left += lidar[ring + a];
        right += lidar[ring + static_cast<std::size_t>(kLidarAzimuths) - a];
      }
    }
    double turn = std::clamp(2.0 * lateral, -1.0, 1.0);
    if (speed_scale < 1.0) turn = left >= right ? 1.0 : -1.0;
    cmd.vx = std::min(params.hold_speed, limits.vx_max) * speed_scale;
    cmd.yaw_rate = std::clamp(params.hold_yaw_rate + limits.yaw_rate_max * turn, -limits.yaw_rate_max, limits.yaw_rate_max);
    return clamp_control(cmd, limits);
  }
  cmd.vx = limits.vx_max * speed_scale;
  cmd.vz = params.vz_gain * target->rel_position.z;
  cmd.yaw_rate = params.nav_constant * target->los_rate;
  return clamp_control(cmd, limits);
}

ControlCommand euclidean_controller(const std::optional<TargetTrack>& target, const ControlLimits& limits,
                                    const PnParams& params, double dt) {
  if (!target) return {};
  const Vec3& r = target->rel_position;
  // wrap_angle maps -pi to +pi, so a target dead astern turns positive.
  const double bearing = (r.x == 0.0 && r.y == 0.0) ? 0.0 : wrap_angle(std::atan2(r.y, r.x));
  ControlCommand cmd;
  cmd.vx = limits.vx_max;
  cmd.vy = 0.0;
  cmd.vz = params.vz_gain * r.z;
  cmd.yaw_rate = bearing / dt;
  return clamp_control(cmd, limits);
}

double guidance_blend_weight(double distance, const PnParams& params) {
  if (distance >= params.blend_outer) return 1.0;
  if (distance <= params.blend_inner) return 0.0;
  return (distance - params.blend_inner) / (params.blend_outer - params.blend_inner);
}

namespace {

Vec3 pn_heading(const TargetTrack& target, const PnParams& params) {
  const Vec3 los = target.rel_position.normalized_or_zero();
  const double lead = std::clamp(params.nav_constant * target.los_rate * params.lead_time, -kPi / 4.0, kPi / 4.0);
  return rotate_z(los, lead);
}

}  // namespace

Vec3 astar_guided_direction(const Vec3& guidance, const std::optional<TargetTrack>& target, const PnParams& params) {
  if (!target) return guidance.normalized_or_zero();
  const double w = guidance_blend_weight(target->rel_position.norm(), params);
  const Vec3 g = guidance.normalized_or_zero();
  // Without a path the guidance channel is zero; fall back to homing.
  if (g == Vec3{}) return pn_heading(*target, params);
  return (w * g + (1.0 - w) * pn_heading(*target, params)).normalized_or_zero();
}

ControlCommand astar_guided_pursuer(const Vec3& guidance, const std::optional<TargetTrack>& target,
                                    const ControlLimits& limits, const PnParams& params, const Vec3& separation) {
  const Vec3 u = (astar_guided_direction(guidance, target, params) + separation).normalized_or_zero();
  if (u == Vec3{}) return {};
  const Vec3 v = max_feasible_velocity(u, limits);
  const double w = target ? guidance_blend_weight(target->rel_position.norm(), params) : 1.0;
  const double heading_error = (u.x == 0.0 && u.y == 0.0) ? 0.0 : std::atan2(u.y, u.x);
  double yaw_rate = params.heading_gain * heading_error;
  if (target) yaw_rate += (1.0 - w) * params.nav_constant * target->los_rate;
  return clamp_control({v.x, v.y, v.z, yaw_rate}, limits);
}

// ---------------------------------------------------------------------------
// Evader

void EvaderParams::validate() const {
  if (!(pursuer_range > 0.0 && obstacle_range > 0.0 && sense_range > 0.0 && pursuer_ref > 0.0)) {
    throw ConfigError("evader ranges must be positive");
  }
  if (wander_period < 1) throw ConfigError("evader wander period must be >= 1");
}

void to_json(nlohmann::json& j, const EvaderParams& p) {
  j = {{"pursuer_range", p.pursuer_range},   {"obstacle_range", p.obstacle_range},
       {"sense_range", p.sense_range},       {"pursuer_weight", p.pursuer_weight},
       {"pursuer_ref", p.pursuer_ref},       {"obstacle_weight", p.obstacle_weight},
       {"corridor_weight", p.corridor_weight}, {"heading_bias", p.heading_bias},
       {"wander_weight", p.wander_weight},   {"wander_period", p.wander_period},
       {"pursuers_need_los", p.pursuers_need_los}};
}

void from_json(const nlohmann::json& j, EvaderParams& p) {
  for (const auto& [key, value] : j.items()) {
    if (key == "pursuer_range") p.pursuer_range = value.get<double>();
    else if (key == "obstacle_range") p.obstacle_range = value.get<double>();
    else if (key == "sense_range") p.sense_range = value.get<double>();
    else if (key == "pursuer_weight") p.pursuer_weight = value.get<double>();
    else if (key == "pursuer_ref") p.pursuer_ref = value.get<double>();
    else if (key == "obstacle_weight") p.obstacle_weight = value.get<double>();
    else if (key == "corridor_weight") p.corridor_weight = value.get<double>();
    else if (key == "heading_bias") p.heading_bias = value.get<double>();
    else if (key == "wander_weight") p.wander_weight = value.get<double>();
    else if (key == "wander_period") p.wander_period = value.get<int>();
    else if (key == "pursuers_need_los") p.pursuers_need_los = value.get<bool>();
    else throw ConfigError("unknown evader parameter '" + key + "'");
  }
}

const std::array<Vec3, 14>& evader_ray_directions() {
  static const std::array<Vec3, 14> dirs = [] {
    std::array<Vec3, 14> d{{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
    const double c = 1.0 / std::sqrt(3.0);
    std::size_t i = 6;
    for (const double sx : {1.0, -1.0}) {
      for (const double sy : {1.0, -1.0}) {
        for (const double sz : {1.0, -1.0}) d[i++] = {sx * c, sy * c, sz * c};
      }
    }
    return d;
  }();
  return dirs;
}

std::array<double, 14> evader_raycasts(const VoxelGrid& grid, const Vec3& position, double sense_range) {
  std::array<double, 14> out{};
  const auto& dirs = evader_ray_directions();
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    const auto hit = grid.raycast(position, dirs[k], sense_range);
    out[k] = hit ? *hit : sense_range;
  }
  return out;
}

ControlCommand evader_policy(const EvaderContext& ctx, const ControlLimits& limits, const EvaderParams& params,
                             EvaderMemory& memory, Rng& rng) {
  expect(ctx.self != nullptr && ctx.self->alive, "evader policy needs an alive evader");
  expect(ctx.ray_ranges.size() == 14, "evader policy expects 14 raycasts");
  const AgentState& self = *ctx.self;
  const auto& dirs = evader_ray_directions();

  if (memory.steps % params.wander_period == 0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double gx = gauss(rng);
    const double gy = gauss(rng);
    const double gz = gauss(rng);
    memory.wander = Vec3{gx, gy, 0.3 * gz}.normalized_or_zero();
  }
  ++memory.steps;

  Vec3 repel_pursuers;
  for (const auto& p : ctx.pursuers) {
    const Vec3 rel = self.position - p;
    const double d = rel.norm();
    if (d > params.pursuer_range || d < 1e-6) continue;
    const double k = params.pursuer_ref / d;
    repel_pursuers += rel / d * (k * k);
  }

  Vec3 repel_obstacles;
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    const double range = ctx.ray_ranges[k];
    if (range < params.obstacle_range) {
      const double w = (params.obstacle_range - range) / params.obstacle_range;
      repel_obstacles -= dirs[k] * (w * (1.0 + 2.0 * w));
    }
    const double score = range + params.heading_bias * dirs[k].dot(memory.heading);
    if (score > best_score) {
      best_score = score;
      best = k;
    }
  }

  Vec3 desired = params.pursuer_weight * repel_pursuers + params.obstacle_weight * repel_obstacles +
                 params.corridor_weight * dirs[best] + params.wander_weight * memory.wander;
  desired = desired.normalized_or_zero();
  if (desired == Vec3{}) desired = memory.heading;
  memory.heading = desired;

  const Vec3 v_world = desired * limits.speed_cap;
  const Vec3 v_body = rotate_z(v_world, -self.yaw);
  double yaw_rate = 0.0;
  if (std::hypot(v_world.x, v_world.y) > 0.1) {
    yaw_rate = wrap_angle(std::atan2(v_world.y, v_world.x) - self.yaw) / 0.1;
  }
  return clamp_control({v_body.x, v_body.y, v_body.z, yaw_rate}, limits);
}

// ---------------------------------------------------------------------------
// Built-in policies

namespace {

class TrackerMemory : public PolicyMemory {
 public:
  explicit TrackerMemory(double dt) : tracker(50, dt) {}
  TargetTracker tracker;
};

class ApfPnPolicy final : public PursuerPolicy {
 public:
  explicit ApfPnPolicy(const PolicyContext& ctx) : ctx_(ctx) {}
  std::string name() const override { return "APF+PN"; }
  bool uses_guidance() const override { return false; }
  std::unique_ptr<PolicyMemory> make_memory(int) const override { return std::make_unique<TrackerMemory>(ctx_.dt); }
  ControlCommand act(std::span<const double> obs, PolicyMemory& memory, Rng&) const override {
    auto& m = static_cast<TrackerMemory&>(memory);
    const auto track = m.tracker.update(obs);
    return apf_pn_controller(track, obs.first(kLidarRays), ctx_.limits, ctx_.controller);
  }

 private:
  PolicyContext ctx_;
};

class EuclideanPolicy final : public PursuerPolicy {
 public:
  explicit EuclideanPolicy(const PolicyContext& ctx) : ctx_(ctx) {}
  std::string name() const override { return "EUCLIDEAN"; }
  bool uses_guidance() const override { return false; }
  std::unique_ptr<PolicyMemory> make_memory(int) const override { return std::make_unique<TrackerMemory>(ctx_.dt); }
  ControlCommand act(std::span<const double> obs, PolicyMemory& memory, Rng&) const override {
    auto& m = static_cast<TrackerMemory&>(memory);
    return euclidean_controller(m.tracker.update(obs), ctx_.limits, ctx_.controller, ctx_.dt);
  }

 private:
  PolicyContext ctx_;
};

class AstarGuidedPolicy final : public PursuerPolicy {
 public:
  explicit AstarGuidedPolicy(const PolicyContext& ctx) : ctx_(ctx), params_(ctx.controller) {}
  std::string name() const override { return "ASTAR-GUIDED"; }
  std::unique_ptr<PolicyMemory> make_memory(int) const override { return std::make_unique<TrackerMemory>(ctx_.dt); }
  ControlCommand act(std::span<const double> obs, PolicyMemory& memory, Rng&) const override {
    auto& m = static_cast<TrackerMemory&>(memory);
    const auto track = m.tracker.update(obs);
    const DecodedObservation o = decode_observation(obs);
    Vec3 separation;
    for (const auto& rel : o.teammates_rel) {
      const double d = rel.norm();
      if (d >= params_.separation_range || d < 1e-9) continue;
      separation -= rel / d * (params_.separation_weight * (params_.separation_range - d) / params_.separation_range);
    }
    return astar_guided_pursuer(o.guidance, track, ctx_.limits, params_, separation);
  }

 private:
  PolicyContext ctx_;
  PnParams params_;
};

class HoverPolicy final : public PursuerPolicy {
 public:
  std::string name() const override { return "HOVER"; }
  bool uses_guidance() const override { return false; }
  std::unique_ptr<PolicyMemory> make_memory(int) const override { return std::make_unique<PolicyMemory>(); }
  ControlCommand act(std::span<const double>, PolicyMemory&, Rng&) const override { return {}; }
};

}  // namespace

PolicyRegistry::PolicyRegistry() {
  add("APF+PN", [](const PolicyContext& c) { return std::make_unique<ApfPnPolicy>(c); });
  add("EUCLIDEAN", [](const PolicyContext& c) { return std::make_unique<EuclideanPolicy>(c); });
  add("ASTAR-GUIDED", [](const PolicyContext& c) { return std::make_unique<AstarGuidedPolicy>(c); });
  add("HOVER", [](const PolicyContext&) { return std::make_unique<HoverPolicy>(); });
}

PolicyRegistry& PolicyRegistry::instance() {
  static PolicyRegistry registry;
  return registry;
}

void PolicyRegistry::add(std::string name, PolicyFactory factory) {
  for (auto& [n, f] : entries_) {
    if (n == name) {
      f = std::move(factory);
      return;
    }
  }
  entries_.emplace_back(std::move(name), std::move(factory));
}

bool PolicyRegistry::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

std::unique_ptr<PursuerPolicy> PolicyRegistry::create(std::string_view name, const PolicyContext& ctx) const {
  for (const auto& [n, f] : entries_) {
    if (n == name) return f(ctx);
  }
  throw ConfigError("unknown pursuer method '" + std::string(name) + "'");
}

std::vector<std::string> PolicyRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

}  // namespace vp
