#include "vp/kinematics.hpp"

#include <algorithm>
#include <limits>

namespace vp {

void ControlLimits::validate() const {
  expect(vx_max > 0.0 && vy_max > 0.0 && vz_max > 0.0 && yaw_rate_max > 0.0 && speed_cap > 0.0,
         "control limits must be strictly positive");
}

ControlCommand clamp_control(const ControlCommand& cmd, const ControlLimits& limits) {
  expect(cmd.finite(), "control command must be finite");
  ControlCommand out;
  out.yaw_rate = std::clamp(cmd.yaw_rate, -limits.yaw_rate_max, limits.yaw_rate_max);
  if (limits.mode == LimitMode::PerAxis) {
    out.vx = std::clamp(cmd.vx, -limits.vx_max, limits.vx_max);
    out.vy = std::clamp(cmd.vy, -limits.vy_max, limits.vy_max);
    out.vz = std::clamp(cmd.vz, -limits.vz_max, limits.vz_max);
    return out;
  }
  const Vec3 v = cmd.velocity();
  const double speed = v.norm();
  const Vec3 capped = speed > limits.speed_cap ? v * (limits.speed_cap / speed) : v;
  out.vx = capped.x;
  out.vy = capped.y;
  out.vz = capped.z;
  return out;
}

AgentState step_agent(const AgentState& state, const ControlCommand& cmd, double dt) {
  expect(dt > 0.0, "dt must be positive");
  AgentState next = state;
  next.position = state.position + dt * rotate_z(cmd.velocity(), state.yaw);
  next.yaw = wrap_angle(state.yaw + dt * cmd.yaw_rate);
  next.body_velocity = cmd.velocity();
  next.yaw_rate = cmd.yaw_rate;
  return next;
}

CaptureResult capture_check(std::span<const Vec3> pursuer_positions, const Vec3& evader_position,
                            double capture_radius) {
  expect(!pursuer_positions.empty(), "capture_check needs at least one pursuer");
  CaptureResult result;
  result.min_distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pursuer_positions.size(); ++i) {
    const double d = distance(pursuer_positions[i], evader_position);
    if (d < result.min_distance) {
      result.min_distance = d;
      result.nearest_index = i;
    }
  }
  if (result.min_distance <= capture_radius) {
    result.captured = true;
    result.capturing_index = result.nearest_index;
  }
  return result;
}

double closing_speed(double d_prev, double d_curr, double dt) {
  expect(dt > 0.0, "dt must be positive");
  return (d_prev - d_curr) / dt;
}

}  // namespace vp
