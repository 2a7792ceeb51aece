#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "vp/common.hpp"

namespace vp {

enum class Role { Pursuer, Evader };

// Body-frame command (v_x, v_y, v_z, yaw rate).
struct ControlCommand {
  double vx = 0.0;
  double vy = 0.0;
  double vz = 0.0;
  double yaw_rate = 0.0;

  [[nodiscard]] Vec3 velocity() const { return {vx, vy, vz}; }
  [[nodiscard]] bool finite() const {
    return std::isfinite(vx) && std::isfinite(vy) && std::isfinite(vz) && std::isfinite(yaw_rate);
  }
  friend constexpr bool operator==(const ControlCommand&, const ControlCommand&) = default;
};

enum class LimitMode {
  PerAxis,   // independent |v_x|, |v_y|, |v_z| bounds (pursuers)
  SpeedCap,  // ||v|| <= speed_cap (evader)
};

struct ControlLimits {
  double vx_max = 8.0;
  double vy_max = 4.0;
  double vz_max = 3.0;
  double yaw_rate_max = 0.8;
  double speed_cap = 9.0;
  LimitMode mode = LimitMode::PerAxis;

  static ControlLimits pursuer(double yaw_rate_max = 0.8) {
    return {8.0, 4.0, 3.0, yaw_rate_max, std::sqrt(8.0 * 8.0 + 4.0 * 4.0 + 3.0 * 3.0), LimitMode::PerAxis};
  }
  static ControlLimits evader(double speed_cap = 9.0, double yaw_rate_max = 1.0) {
    return {speed_cap, speed_cap, speed_cap, yaw_rate_max, speed_cap, LimitMode::SpeedCap};
  }
  void validate() const;
};

struct AgentState {
  Vec3 position;
  double yaw = 0.0;  // (-pi, pi]
  Vec3 body_velocity;
  double yaw_rate = 0.0;
  bool alive = true;
  Role role = Role::Pursuer;

  [[nodiscard]] Vec3 world_velocity() const { return rotate_z(body_velocity, yaw); }
};

ControlCommand clamp_control(const ControlCommand& cmd, const ControlLimits& limits);

// One explicit Euler step: p' = p + dt * Rz(yaw) * v, yaw' = wrap(yaw + dt * yaw_rate).
AgentState step_agent(const AgentState& state, const ControlCommand& cmd, double dt);

struct CaptureResult {
  bool captured = false;
  std::optional<std::size_t> capturing_index;
  double min_distance = 0.0;
  std::size_t nearest_index = 0;
};

// Boundary inclusive (distance <= capture_radius); ties go to the lowest index.
CaptureResult capture_check(std::span<const Vec3> pursuer_positions, const Vec3& evader_position,
                            double capture_radius);

// Positive while the range shrinks.
double closing_speed(double d_prev, double d_curr, double dt);

}  // namespace vp
