#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "vp/common.hpp"

namespace vp {

struct CgcaParams {
  double lambda_dir = 0.1;  // per metre of closure
  double lambda_cap = 10.0;
  double lambda_qual = 1.0;
  double lambda_col = 1.0;
  double lambda_imp = 0.5;
  double lambda_lazy = 0.05;
  double alpha_p = 1.0;
  double alpha_v = 0.5;
  double alpha_r = 2.0;
  double d0 = 20.0;
  double epsilon = 1e-8;
  double gate_inner = 40.0;
  double gate_hard = 60.0;
  double gate_outer = 80.0;
  double participation_speed = 0.5;     // m/s
  double participation_fraction = 0.5;
  double capture_radius = 8.0;
  double impact_speed_scale = 8.0;      // m/s, kappa = min(1, v_rel / scale)

  void validate() const;
};

void to_json(nlohmann::json& j, const CgcaParams& p);
// Missing keys keep their defaults; unknown keys raise ConfigError.
void from_json(const nlohmann::json& j, CgcaParams& p);

struct RewardBreakdown {
  double dir_term = 0.0;
  double cap_term = 0.0;
  double qual_term = 0.0;
  double col_term = 0.0;
  double imp_term = 0.0;
  double lazy_term = 0.0;
  double total = 0.0;  // dir + cap + qual - col - imp - lazy
  // Intermediates.
  double gate = 0.0;
  double raw_contribution = 0.0;
  double share = 0.0;
  double rho = 0.0;
};

double directional_gate(double d, const CgcaParams& p = {});
double raw_contribution(double d, double v_closing, const CgcaParams& p = {});
std::vector<double> normalized_shares(std::span<const double> raw, double epsilon);
double participation_ratio(std::span<const double> distances, std::span<const double> closing, std::size_t n_alive,
                           const CgcaParams& p = {});
int collision_indicator(bool obstacle_hit, bool team_hit, bool shield);

// Per-pursuer inputs for one step. Only pursuers that acted this step are listed.
struct AgentRewardInput {
  double d_prev = 0.0;  // m, previous-step distance to the evader
  double d_curr = 0.0;
  bool obstacle_hit = false;
  bool team_hit = false;
  bool shield = false;
  double impact_speed = 0.0;  // m/s, zero without a contact
  double capture_quality = 0.0;  // q_i, non-zero only on the capture step
};

struct TeamRewardInput {
  std::vector<AgentRewardInput> agents;
  bool captured = false;
  double dt = 0.1;
};

struct TeamRewards {
  std::vector<RewardBreakdown> agents;
  double rho = 0.0;
  double team_mean = 0.0;  // (1/N_t) sum r_i
};

RewardBreakdown per_agent_reward(std::size_t agent, const TeamRewardInput& team, std::span<const double> shares,
                                 double rho, const CgcaParams& p);
TeamRewards compute_team_rewards(const TeamRewardInput& team, const CgcaParams& p);

// Coverage-based capture quality: each pursuer within the hard gate receives coverage / count.
std::vector<double> capture_quality(std::span<const Vec3> pursuers, const Vec3& evader, const CgcaParams& p);

}  // namespace vp
