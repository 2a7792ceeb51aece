#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vp/kinematics.hpp"
#include "vp/perception.hpp"
#include "vp/voxel_world.hpp"

namespace vp {

// ---------------------------------------------------------------------------
// Policy plug-in interface. One policy object is shared by all pursuers of a team
// (parameter sharing); everything agent-specific lives in PolicyMemory.

class PolicyMemory {
 public:
  virtual ~PolicyMemory() = default;
};

class PursuerPolicy {
 public:
  virtual ~PursuerPolicy() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual ObservationProfile profile() const { return ObservationProfile::Full; }
  // When false the engine skips A* planning and leaves the guidance channels at zero.
  [[nodiscard]] virtual bool uses_guidance() const { return true; }
  [[nodiscard]] virtual std::unique_ptr<PolicyMemory> make_memory(int agent_id) const = 0;
  // Deterministic given (observation, memory, rng state).
  virtual ControlCommand act(std::span<const double> observation, PolicyMemory& memory, Rng& rng) const = 0;
};

struct PnParams {
  double nav_constant = 3.0;
  double heading_gain = 1.5;   // 1/s
  double vz_gain = 0.5;        // 1/s
  double apf_stop = 3.0;       // m, forward speed reaches zero
  double apf_slow = 12.0;      // m, forward speed starts dropping
  double apf_side = 12.0;      // m, side repulsion range
  double lead_time = 1.0;      // s, PN lead-angle horizon
  double blend_outer = 40.0;   // m
  double blend_inner = 20.0;   // m
  double separation_range = 10.0;  // m
  double separation_weight = 1.5;
  double hold_speed = 6.0;     // m/s, APF+PN hold cruise
  double hold_yaw_rate = 0.5;  // rad/s; loiter orbit while no target is known (0 holds heading)
};

void to_json(nlohmann::json& j, const PnParams& p);
void from_json(const nlohmann::json& j, PnParams& p);

struct PolicyContext {
  ControlLimits limits = ControlLimits::pursuer();
  double dt = 0.1;
  PnParams controller;
};

using PolicyFactory = std::function<std::unique_ptr<PursuerPolicy>(const PolicyContext&)>;

// Name -> factory. Built-ins: "APF+PN", "EUCLIDEAN", "ASTAR-GUIDED", "HOVER".
class PolicyRegistry {
 public:
  static PolicyRegistry& instance();
  void add(std::string name, PolicyFactory factory);
  [[nodiscard]] bool contains(std::string_view name) const;
  [[nodiscard]] std::unique_ptr<PursuerPolicy> create(std::string_view name, const PolicyContext& ctx) const;
  [[nodiscard]] std::vector<std::string> names() const;

 private:
  PolicyRegistry();
  std::vector<std::pair<std::string, PolicyFactory>> entries_;
};

// ---------------------------------------------------------------------------
// Evader

struct EvaderParams {
  double pursuer_range = 80.0;    // m
  double obstacle_range = 12.0;   // m
  double sense_range = 60.0;      // corridor raycast range, m
  double pursuer_weight = 3.0;
  double pursuer_ref = 20.0;      // m; repulsion magnitude is (ref / d)^2
  double obstacle_weight = 2.5;
  double corridor_weight = 1.0;
  double heading_bias = 15.0;     // m of corridor score per unit cosine to current heading
  double wander_weight = 0.3;
  int wander_period = 40;         // steps between wander resamples
  bool pursuers_need_los = true;  // only pursuers in line of sight repel the evader

  void validate() const;
};

void to_json(nlohmann::json& j, const EvaderParams& p);
void from_json(const nlohmann::json& j, EvaderParams& p);

// 6 face + 8 corner directions, world frame.
const std::array<Vec3, 14>& evader_ray_directions();

struct EvaderMemory {
  Vec3 heading{1.0, 0.0, 0.0};
  Vec3 wander;
  long steps = 0;
};

struct EvaderContext {
  const AgentState* self = nullptr;
  std::span<const Vec3> pursuers;              // alive pursuer positions (filtered by range inside)
  std::span<const double> ray_ranges;          // 14 ranges, capped at sense_range
};

std::array<double, 14> evader_raycasts(const VoxelGrid& grid, const Vec3& position, double sense_range);

ControlCommand evader_policy(const EvaderContext& ctx, const ControlLimits& limits, const EvaderParams& params,
                             EvaderMemory& memory, Rng& rng);

// ---------------------------------------------------------------------------
// Pursuer controllers. All vectors are in the pursuer's body frame.

struct TargetTrack {
  Vec3 rel_position;    // evader minus self
  double los_rate = 0;  // rad/s, rate of the horizontal line-of-sight azimuth
  bool fresh = false;   // observed this step (vs. remembered)
};


ControlCommand apf_pn_controller(const std::optional<TargetTrack>& target, std::span<const double> lidar,
                                 const ControlLimits& limits, const PnParams& params = {});

ControlCommand euclidean_controller(const std::optional<TargetTrack>& target, const ControlLimits& limits,
                                    const PnParams& params = {}, double dt = 0.1);

// Weight on the guidance heading: 1 beyond blend_outer, 0 inside blend_inner, linear between.
double guidance_blend_weight(double distance, const PnParams& params = {});

// Direction actually flown by the A*-guided pursuer (unit, body frame).
Vec3 astar_guided_direction(const Vec3& guidance, const std::optional<TargetTrack>& target,
                            const PnParams& params = {});

ControlCommand astar_guided_pursuer(const Vec3& guidance, const std::optional<TargetTrack>& target,
                                    const ControlLimits& limits, const PnParams& params = {},
                                    const Vec3& separation = {});

// Largest body-frame velocity along `direction` that respects the per-axis limits.
Vec3 max_feasible_velocity(const Vec3& direction, const ControlLimits& limits);

// Keeps the last evader estimate alive by dead reckoning on the pursuer's own motion.
class TargetTracker {
 public:
  explicit TargetTracker(int timeout_steps = 50, double dt = 0.1) : timeout_(timeout_steps), dt_(dt) {}
  // Consumes one observation (either profile); returns the current estimate.
  std::optional<TargetTrack> update(std::span<const double> obs);
  [[nodiscard]] const std::optional<TargetTrack>& current() const { return track_; }

 private:
  int timeout_;
  double dt_;
  std::optional<TargetTrack> track_;
  int age_ = 0;
};

// Decoded view of the channels the scripted pursuers read.
struct DecodedObservation {
  std::array<double, kLidarRays> lidar{};
  bool target_visible = false;
  Vec3 target_rel_position;
  Vec3 target_rel_velocity;
  Vec3 self_velocity;
  double yaw_rate = 0.0;
  Vec3 guidance;
  std::vector<Vec3> teammates_rel;  // alive ones, full profile only
};

DecodedObservation decode_observation(std::span<const double> obs);

}  // namespace vp
