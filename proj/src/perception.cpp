#include "vp/perception.hpp"

#include <algorithm>
#include <numeric>

namespace vp {

namespace {

constexpr std::array<ChannelBlock, 13> kFullChannels{{
    {"lidar", 1, 26, "range / 60 m, no-hit = 1", "13 azimuths x elevations (-15 deg, +15 deg), body frame"},
    {"target_rel_pos", 27, 29, "/ 60 m", "evader minus self, body frame; zero when not observable"},
    {"target_rel_vel", 30, 32, "/ 10 m/s", "evader minus self velocity, body frame; zero when not observable"},
    {"self_vel", 33, 35, "/ (8, 4, 3) m/s", "applied body-frame velocity"},
    {"self_accel", 36, 38, "/ 5 m/s^2", "finite difference of applied body velocity"},
    {"self_rates", 39, 41, "/ 0.8 rad/s", "roll, pitch (always 0), yaw rate"},
    {"teammates", 42, 65, "pos / 60 m, vel / 10 m/s, dist / 60 m, flag", "top-3 nearest alive teammates x 8, body frame"},
    {"guidance", 66, 68, "unit", "A* guidance direction, body frame; zero when no path"},
    {"agent_id", 69, 72, "one-hot", "pursuer index"},
    {"mode", 73, 73, "flag", "0 search, 1 track"},
    {"delay", 74, 74, "k / 3", "action delay in steps"},
    {"slot", 75, 81, "one-hot 4, bearing / pi, radial / 60 m, flag", "tactical slot around the evader"},
    {"encirclement", 82, 83, "coverage / 2pi, spread / 60 m", "angular coverage and vertical spread of the team"},
}};

constexpr std::array<double, 3> kSelfVelNorm{8.0, 4.0, 3.0};

Vec3 to_body(const Vec3& world, double yaw) { return rotate_z(world, -yaw); }

void put3(std::array<double, kFullObsDim>& out, std::size_t at, const Vec3& v, double scale) {
  out[at] = v.x / scale;
  out[at + 1] = v.y / scale;
  out[at + 2] = v.z / scale;
}

}  // namespace

std::span<const ChannelBlock> full_channel_map() { return kFullChannels; }

nlohmann::json channel_map_json() {
  nlohmann::json full = nlohmann::json::array();
  nlohmann::json lite = nlohmann::json::array();
  std::size_t lite_cursor = 1;
  for (const auto& b : full_channel_map()) {
    full.push_back({{"name", b.name},
                    {"first", b.first},
                    {"last", b.last},
                    {"normalizer", b.normalizer},
                    {"description", b.description}});
    const bool kept = b.last <= 41 || (b.first >= 66 && b.last <= 74);
    if (kept) {
      const std::size_t width = b.last - b.first + 1;
      lite.push_back({{"name", b.name},
                      {"first", lite_cursor},
                      {"last", lite_cursor + width - 1},
                      {"source_first", b.first},
                      {"source_last", b.last},
                      {"normalizer", b.normalizer}});
      lite_cursor += width;
    }
  }
  return {{"indexing", "1-based, inclusive"},
          {"full", {{"dim", kFullObsDim}, {"blocks", full}}},
          {"lite", {{"dim", kLiteObsDim}, {"blocks", lite}, {"mask", "full[1..41] ++ full[66..74]"}}}};
}

const std::array<Vec3, kLidarRays>& lidar_directions() {
  static const std::array<Vec3, kLidarRays> dirs = [] {
    std::array<Vec3, kLidarRays> d{};
    const double el = kLidarElevationDeg * kPi / 180.0;
    std::size_t i = 0;
    for (const double e : {-el, el}) {
      for (int a = 0; a < kLidarAzimuths; ++a) {
        const double az = kTwoPi * a / kLidarAzimuths;
        d[i++] = {std::cos(e) * std::cos(az), std::cos(e) * std::sin(az), std::sin(e)};
      }
    }
    return d;
  }();
  return dirs;
}

ObservationFull assemble_full(const VoxelGrid& world, const ObservationInputs& in) {
  expect(in.self != nullptr, "assemble_full needs the agent's own state");
  const AgentState& self = *in.self;
  expect(self.alive, "assemble_full requires an alive agent");
  expect(in.agent_id >= 0 && in.agent_id < 4, "agent id must be in [0, 4)");
  expect(in.delay_k >= 0 && in.delay_k <= 3, "delay must be in [0, 3]");

  ObservationFull obs;
  auto& o = obs.values;

  const auto& dirs = lidar_directions();
  for (std::size_t r = 0; r < kLidarRays; ++r) {
    const auto hit = world.raycast(self.position, rotate_z(dirs[r], self.yaw), norm::kRange);
    o[full_obs::kLidar + r] = hit ? std::clamp(*hit / norm::kRange, 0.0, 1.0) : 1.0;
  }

  if (in.evader) {
    put3(o, full_obs::kTargetPos, to_body(in.evader->position - self.position, self.yaw), norm::kRange);
    put3(o, full_obs::kTargetVel, to_body(in.evader->velocity - self.world_velocity(), self.yaw),
         norm::kRelVelocity);
    o[full_obs::kMode] = 1.0;
  }

  o[full_obs::kSelfVel] = self.body_velocity.x / kSelfVelNorm[0];
  o[full_obs::kSelfVel + 1] = self.body_velocity.y / kSelfVelNorm[1];
  o[full_obs::kSelfVel + 2] = self.body_velocity.z / kSelfVelNorm[2];
  put3(o, full_obs::kSelfAccel, in.self_acceleration, norm::kAccel);
  o[full_obs::kSelfRates + 2] = self.yaw_rate / norm::kRate;

  // Nearest alive teammates first; stable on ties.
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < in.teammates.size(); ++i) {
    if (in.teammates[i].alive) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return (in.teammates[a].position - self.position).norm_sq() <
           (in.teammates[b].position - self.position).norm_sq();
  });
  for (std::size_t k = 0; k < std::min<std::size_t>(3, order.size()); ++k) {
    const auto& mate = in.teammates[order[k]];
    const std::size_t at = full_obs::kTeammates + k * full_obs::kTeammateStride;
    const Vec3 rel = mate.position - self.position;
    put3(o, at, to_body(rel, self.yaw), norm::kRange);
    put3(o, at + 3, to_body(mate.velocity - self.world_velocity(), self.yaw), norm::kRelVelocity);
    o[at + 6] = rel.norm() / norm::kRange;
    o[at + 7] = 1.0;
  }

  const Vec3 g = to_body(in.guidance, self.yaw);
  o[full_obs::kGuidance] = g.x;
  o[full_obs::kGuidance + 1] = g.y;
  o[full_obs::kGuidance + 2] = g.z;
  o[full_obs::kAgentId + static_cast<std::size_t>(in.agent_id)] = 1.0;
  o[full_obs::kDelay] = in.delay_k / 3.0;

  if (in.evader && in.slot) {
    const SlotInfo& s = *in.slot;
    o[full_obs::kSlot + static_cast<std::size_t>(s.slot)] = 1.0;
    o[full_obs::kSlot + 4] = s.bearing_error / kPi;
    o[full_obs::kSlot + 5] = s.radial_error / norm::kRange;
    o[full_obs::kSlot + 6] = s.filled ? 1.0 : 0.0;
  }
  if (in.evader) {
    o[full_obs::kEncirclement] = in.encirclement[0];
    o[full_obs::kEncirclement + 1] = in.encirclement[1];
  }
  return obs;
}

ObservationLite mask_observation(const ObservationFull& full) {
  ObservationLite lite;
  std::copy_n(full.values.begin(), 41, lite.values.begin());
  std::copy_n(full.values.begin() + 65, 9, lite.values.begin() + 41);
  return lite;
}

ObservationLite mask_observation(std::span<const double> full) {
  expect(full.size() == kFullObsDim, "mask_observation expects an 83-D vector");
  ObservationLite lite;
  std::copy_n(full.begin(), 41, lite.values.begin());
  std::copy_n(full.begin() + 65, 9, lite.values.begin() + 41);
  return lite;
}

std::vector<double> apply_noise(std::span<const double> obs, double sigma, Rng& rng) {
  expect(sigma >= 0.0 && std::isfinite(sigma), "noise sigma must be non-negative");
  std::vector<double> out(obs.begin(), obs.end());
  if (sigma == 0.0) return out;
  std::normal_distribution<double> gauss(0.0, sigma);
  for (auto& v : out) v += gauss(rng);
  const std::size_t lidar = std::min(out.size(), kLidarRays);
  for (std::size_t i = 0; i < lidar; ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
  return out;
}

SlotInfo compute_slot(const Vec3& self, const Vec3& evader, int agent_id, double visibility_range) {
  SlotInfo s;
  s.slot = agent_id & 3;
  const Vec3 rel = self - evader;
  const double slot_azimuth = s.slot * (kPi / 2.0);
  const double bearing = std::atan2(rel.y, rel.x);
  s.bearing_error = wrap_angle(bearing - slot_azimuth);
  const double d = rel.norm();
  s.radial_error = d - kSlotRadius;
  s.filled = std::abs(s.bearing_error) <= kPi / 4.0 && d <= visibility_range;
  return s;
}

double angular_coverage(std::vector<double> azimuths) {
  if (azimuths.size() < 2) return 0.0;
  for (auto& a : azimuths) {
    a = std::fmod(a, kTwoPi);
    if (a < 0.0) a += kTwoPi;
  }
  std::sort(azimuths.begin(), azimuths.end());
  double largest_gap = azimuths.front() + kTwoPi - azimuths.back();
  for (std::size_t i = 1; i < azimuths.size(); ++i) {
    largest_gap = std::max(largest_gap, azimuths[i] - azimuths[i - 1]);
  }
  return std::clamp(1.0 - largest_gap / kTwoPi, 0.0, 1.0);
}

std::array<double, 2> compute_encirclement(std::span<const Vec3> pursuers, const Vec3& evader, double range) {
  std::vector<double> azimuths;
  double zmin = std::numeric_limits<double>::infinity();
  double zmax = -std::numeric_limits<double>::infinity();
  for (const auto& p : pursuers) {
    const Vec3 rel = p - evader;
    if (rel.norm() > range) continue;
    azimuths.push_back(std::atan2(rel.y, rel.x));
    zmin = std::min(zmin, p.z);
    zmax = std::max(zmax, p.z);
  }
  const double spread = azimuths.size() < 2 ? 0.0 : std::clamp((zmax - zmin) / norm::kRange, 0.0, 1.0);
  return {angular_coverage(std::move(azimuths)), spread};
}

DelayBuffer::DelayBuffer(int k, ControlCommand prime) : k_(k) {
  expect(k >= 0 && k <= 3, "action delay must be in [0, 3]");
  fifo_.assign(static_cast<std::size_t>(k), prime);
}

ControlCommand DelayBuffer::push_pop(const ControlCommand& cmd) {
  if (k_ == 0) return cmd;
  fifo_.push_back(cmd);
  const ControlCommand out = fifo_.front();
  fifo_.pop_front();
  return out;
}

}  // namespace vp
