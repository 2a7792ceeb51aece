#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vp/guidance_planner.hpp"
#include "vp/kinematics.hpp"
#include "vp/perception.hpp"
#include "vp/reward_cgca.hpp"
#include "vp/scripted_agents.hpp"
#include "vp/voxel_world.hpp"

namespace vp {

inline constexpr int kNumPursuers = 4;
inline constexpr const char* kEngineVersion = "vpsim-1.0.0";

struct StageConfig {
  int stage = 5;
  double capture_radius = 8.0;
  double visibility_range = 60.0;
  std::optional<double> gate_threshold = 0.70;
  int gate_timeout_steps = 1500;
  int horizon = 3000;
  double evader_speed_cap = 9.0;
  double evader_yaw_rate_max = 1.0;
  ControlLimits pursuer_limits = ControlLimits::pursuer();

  static StageConfig for_stage(int stage);
  void validate() const;
};

void to_json(nlohmann::json& j, const StageConfig& s);
void from_json(const nlohmann::json& j, StageConfig& s);

struct EngineOptions {
  double dt = 0.1;
  double team_hit_radius = 3.0;
  bool team_hit_deactivates = true;
  bool shield_enabled = true;
  double shield_clearance = 1.0;
  int shield_lookahead_steps = 2;
  double spawn_cluster_radius = 36.0;
  double spawn_min_separation = 12.0;
  bool spawn_planar = true;  // pursuers launch from one altitude layer
  double evader_min_distance = 120.0;
  int spawn_attempts = 10000;
  bool training_gate = false;  // evaluation runs with the gate open from step 0
  int estimate_timeout_steps = 50;
  double lookahead = kDefaultLookahead;
  ReplanRule replan;
  EvaderParams evader;
  PnParams controller;  // scripted pursuer gains
  CgcaParams cgca;

  void validate() const;
};

void to_json(nlohmann::json& j, const EngineOptions& o);
void from_json(const nlohmann::json& j, EngineOptions& o);

struct Perturbations {
  double sigma = 0.0;
  int delay_k = 0;
  std::optional<double> speed_override;    // evader speed cap
  std::optional<double> yaw_cap_override;  // pursuer yaw-rate cap
};

// Read-only data shared by every episode on one map.
class WorldContext {
 public:
  explicit WorldContext(VoxelGrid grid, double visibility_range = 60.0);

  [[nodiscard]] const VoxelGrid& grid() const { return grid_; }
  // Free cells of the largest 26-connected free component (spawn and frontier candidates).
  [[nodiscard]] std::span<const std::uint32_t> navigable() const { return navigable_; }
  [[nodiscard]] bool is_navigable(std::size_t flat) const { return navigable_mask_[flat] != 0; }
  // Voxel offsets whose centres lie within the sensor range, nearest first.
  [[nodiscard]] std::span<const std::array<int, 3>> sensor_ball() const { return sensor_ball_; }
  [[nodiscard]] double sensor_range() const { return sensor_range_; }
  [[nodiscard]] std::uint64_t map_hash() const { return map_hash_; }

 private:
  VoxelGrid grid_;
  std::vector<std::uint32_t> navigable_;
  std::vector<std::uint8_t> navigable_mask_;
  std::vector<std::array<int, 3>> sensor_ball_;
  double sensor_range_;
  std::uint64_t map_hash_;
};

enum class Outcome { Running, Capture, Timeout, AllPursuersDead };
const char* outcome_name(Outcome o);

struct AgentEvents {
  bool obstacle_hit = false;
  bool team_hit = false;
  bool shield = false;
  double impact_speed = 0.0;
};

struct EventCounts {
  int obstacle_hits = 0;
  int team_hits = 0;
  int shield_triggers = 0;
  int evader_wall_hits = 0;

  [[nodiscard]] int collision_events() const { return obstacle_hits + team_hits + evader_wall_hits; }
  friend bool operator==(const EventCounts&, const EventCounts&) = default;
};

struct StepResult {
  std::array<AgentEvents, kNumPursuers> events{};
  bool evader_wall_hit = false;
  std::vector<int> acting;                 // pursuer ids that acted this step
  TeamRewards rewards;                     // indexed like `acting`
  std::array<ControlCommand, kNumPursuers> applied{};
  bool captured = false;
  bool done = false;
  Outcome outcome = Outcome::Running;
  double min_distance = 0.0;
};

class Episode {
 public:
  Episode(std::shared_ptr<const WorldContext> world, StageConfig stage, EngineOptions options,
          Perturbations perturbations, std::uint64_t seed, bool compute_guidance = true);

  // Ids of alive pursuers in ascending order; step() expects one command per entry.
  [[nodiscard]] std::vector<int> alive_pursuers() const;
  [[nodiscard]] const std::array<AgentState, kNumPursuers>& pursuers() const { return pursuers_; }
  [[nodiscard]] const AgentState& evader() const { return evader_; }
  [[nodiscard]] const ObservationFull& full_observation(int id) const { return observations_[static_cast<std::size_t>(id)]; }
  // Observation for the given profile (83-D or 50-D).
  [[nodiscard]] std::vector<double> observation(int id, ObservationProfile profile) const;
  [[nodiscard]] const Vec3& guidance(int id) const { return guidance_[static_cast<std::size_t>(id)]; }

  StepResult step(std::span<const ControlCommand> commands);

  [[nodiscard]] long step_index() const { return step_; }
  [[nodiscard]] bool done() const { return outcome_ != Outcome::Running; }
  [[nodiscard]] Outcome outcome() const { return outcome_; }
  [[nodiscard]] bool gate_open() const { return gate_open_; }
  [[nodiscard]] double exploration_ratio() const;
  [[nodiscard]] std::size_t visited_count() const { return visited_count_; }
  [[nodiscard]] const EventCounts& event_counts() const { return counts_; }
  [[nodiscard]] bool evader_visible(int id) const { return visible_[static_cast<std::size_t>(id)]; }
  [[nodiscard]] const StageConfig& stage() const { return stage_; }
  [[nodiscard]] const EngineOptions& options() const { return options_; }
  [[nodiscard]] const WorldContext& world() const { return *world_; }
  [[nodiscard]] std::optional<VoxelPath> current_path(int id) const;
  [[nodiscard]] int delay_k() const { return perturbations_.delay_k; }

 private:
  struct PlanCache {
    std::optional<VoxelPath> path;
    long last_plan_step = -1000000;
    bool tracking = false;
    std::size_t goal_flat = 0;
    Vec3 target_at_plan;
  };
  struct FrontierCell {
    std::uint32_t flat;
    std::int16_t x, y, z;
  };

  void spawn();
  void update_visibility();
  void update_exploration();
  void update_guidance();
  void assemble_observations();
  int frontier_quadrant(const VoxelIndex& v) const;
  std::optional<std::size_t> frontier_target(int id);
  bool shield(AgentState& agent, ControlCommand& cmd) const;

  std::shared_ptr<const WorldContext> world_;
  StageConfig stage_;
  EngineOptions options_;
  Perturbations perturbations_;
  ControlLimits pursuer_limits_;
  ControlLimits evader_limits_;
  bool compute_guidance_;

  Rng env_rng_;
  Rng evader_rng_;
  long step_ = 0;
  Outcome outcome_ = Outcome::Running;
  std::array<AgentState, kNumPursuers> pursuers_{};
  AgentState evader_;
  EvaderMemory evader_memory_;
  std::array<DelayBuffer, kNumPursuers> delay_;
  std::array<Vec3, kNumPursuers> prev_velocity_{};
  std::array<Vec3, kNumPursuers> accel_{};
  std::array<bool, kNumPursuers> visible_{};
  std::array<std::optional<Vec3>, kNumPursuers> last_seen_{};
  std::array<long, kNumPursuers> last_seen_step_{};
  std::array<Vec3, kNumPursuers> guidance_{};
  std::array<PlanCache, kNumPursuers> plans_{};
  std::array<ObservationFull, kNumPursuers> observations_{};
  std::vector<std::uint8_t> visited_;
  std::vector<std::uint8_t> origin_done_;
  // Unvisited navigable cells per quadrant, compacted lazily.
  std::array<std::vector<FrontierCell>, kNumPursuers> frontier_pool_;
  std::size_t visited_count_ = 0;
  bool gate_open_ = true;
  EventCounts counts_;
  std::unique_ptr<AStarPlanner> planner_;
};

struct EpisodeResult {
  Outcome outcome = Outcome::Running;
  long steps = 0;
  EventCounts events;
  bool success = false;
  bool clean = false;
  bool collision = false;  // at least one obstacle/team/evader-wall event
  std::array<double, kNumPursuers> returns{};  // undiscounted, per pursuer
  double team_return = 0.0;                     // sum over steps of (1/N_t) sum_i r_i
  double final_distance = 0.0;
  double min_distance = 0.0;
  std::vector<double> distance_profile;  // min pursuer-evader distance every 10 steps
  std::uint64_t seed = 0;

  friend bool operator==(const EpisodeResult&, const EpisodeResult&) = default;
};

nlohmann::json episode_result_json(const EpisodeResult& r);

struct RunOptions {
  std::ostream* trajectory = nullptr;  // JSON-lines per step when set
};

EpisodeResult run_episode(std::shared_ptr<const WorldContext> world, const StageConfig& stage,
                          const EngineOptions& options, std::uint64_t seed, const PursuerPolicy& policy,
                          const Perturbations& perturbations = {}, const RunOptions& run = {});

// Policy context (limits, dt) matching a stage after perturbation overrides.
PolicyContext policy_context(const StageConfig& stage, const EngineOptions& options, const Perturbations& p);

}  // namespace vp
