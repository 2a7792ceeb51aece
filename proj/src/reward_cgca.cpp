#include "vp/reward_cgca.hpp"

#include <algorithm>
#include <numeric>

#include "vp/perception.hpp"

namespace vp {

void CgcaParams::validate() const {
  for (const double w : {lambda_dir, lambda_cap, lambda_qual, lambda_col, lambda_imp, lambda_lazy, alpha_p, alpha_v,
                         alpha_r}) {
    if (!(w >= 0.0)) throw ConfigError("CGCA weights must be non-negative");
  }
  if (!(epsilon > 0.0)) throw ConfigError("CGCA epsilon must be positive");
  if (!(d0 > 0.0)) throw ConfigError("CGCA d0 must be positive");
  if (!(gate_inner < gate_hard && gate_hard < gate_outer)) {
    throw ConfigError("CGCA gate knots must satisfy inner < hard < outer");
  }
  if (!(participation_fraction > 0.0)) throw ConfigError("participation fraction must be positive");
  if (!(impact_speed_scale > 0.0)) throw ConfigError("impact speed scale must be positive");
}

#define VP_CGCA_FIELDS(X)                                                                                       \
  X(lambda_dir) X(lambda_cap) X(lambda_qual) X(lambda_col) X(lambda_imp) X(lambda_lazy) X(alpha_p) X(alpha_v) \
      X(alpha_r) X(d0) X(epsilon) X(gate_inner) X(gate_hard) X(gate_outer) X(participation_speed)            \
          X(participation_fraction) X(capture_radius) X(impact_speed_scale)

void to_json(nlohmann::json& j, const CgcaParams& p) {
  j = nlohmann::json::object();
#define VP_PUT(name) j[#name] = p.name;
  VP_CGCA_FIELDS(VP_PUT)
#undef VP_PUT
}

void from_json(const nlohmann::json& j, CgcaParams& p) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
#define VP_GET(name)                  \
  if (key == #name) {                 \
    p.name = value.get<double>();     \
    known = true;                     \
  }
    VP_CGCA_FIELDS(VP_GET)
#undef VP_GET
    if (!known) throw ConfigError("unknown CGCA parameter '" + key + "'");
  }
}

#undef VP_CGCA_FIELDS

double directional_gate(double d, const CgcaParams& p) {
  expect(d >= 0.0, "gate distance must be non-negative");
  if (d <= p.gate_inner) return 1.0;
  if (d <= p.gate_outer) return (p.gate_outer - d) / (p.gate_outer - p.gate_inner);
  return 0.0;
}

double raw_contribution(double d, double v_closing, const CgcaParams& p) {
  expect(d >= 0.0, "contribution distance must be non-negative");
  if (d > p.gate_hard) return 0.0;
  return p.alpha_p * std::exp(-d / p.d0) + p.alpha_v * std::max(v_closing, 0.0) +
         p.alpha_r * (d <= p.capture_radius ? 1.0 : 0.0);
}

std::vector<double> normalized_shares(std::span<const double> raw, double epsilon) {
  double sum = 0.0;
  for (const double c : raw) {
    expect(c >= 0.0, "raw contributions must be non-negative");
    sum += c;
  }
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / (sum + epsilon);
  return out;
}

double participation_ratio(std::span<const double> distances, std::span<const double> closing, std::size_t n_alive,
                           const CgcaParams& p) {
  expect(n_alive >= 1, "participation ratio needs at least one alive pursuer");
  expect(distances.size() == n_alive && closing.size() == n_alive, "participation inputs must match N_alive");
  std::size_t active = 0;
  for (std::size_t i = 0; i < n_alive; ++i) {
    if (distances[i] <= p.gate_hard && closing[i] > p.participation_speed) ++active;
  }
  return std::min(1.0, static_cast<double>(active) / (p.participation_fraction * static_cast<double>(n_alive)));
}

int collision_indicator(bool obstacle_hit, bool team_hit, bool shield) {
  return static_cast<int>(obstacle_hit) + static_cast<int>(team_hit) + static_cast<int>(shield);
}

RewardBreakdown per_agent_reward(std::size_t agent, const TeamRewardInput& team, std::span<const double> shares,
                                 double rho, const CgcaParams& p) {
  expect(agent < team.agents.size(), "agent index out of range");
  expect(shares.size() == team.agents.size(), "share vector must match team size");
  const AgentRewardInput& a = team.agents[agent];
  const double v_clo = closing_speed(a.d_prev, a.d_curr, team.dt);

  RewardBreakdown r;
  r.gate = directional_gate(a.d_curr, p);
  r.raw_contribution = raw_contribution(a.d_curr, v_clo, p);
  r.share = shares[agent];
  r.rho = rho;
  r.dir_term = p.lambda_dir * r.gate * (a.d_prev - a.d_curr);
  if (team.captured) {
    r.cap_term = p.lambda_cap * rho * r.share;
    r.qual_term = p.lambda_qual * a.capture_quality;
  }
  r.col_term = p.lambda_col * collision_indicator(a.obstacle_hit, a.team_hit, a.shield);
  const double kappa = std::min(1.0, std::max(a.impact_speed, 0.0) / p.impact_speed_scale);
  r.imp_term = p.lambda_imp * kappa;
  const bool lazy = a.d_curr > p.gate_outer && v_clo <= 0.0;
  r.lazy_term = lazy ? p.lambda_lazy : 0.0;
  r.total = r.dir_term + r.cap_term + r.qual_term - r.col_term - r.imp_term - r.lazy_term;
  return r;
}

TeamRewards compute_team_rewards(const TeamRewardInput& team, const CgcaParams& p) {
  expect(!team.agents.empty(), "team reward needs at least one pursuer");
  expect(team.dt > 0.0, "dt must be positive");
  const std::size_t n = team.agents.size();
  std::vector<double> dist(n);
  std::vector<double> clo(n);
  std::vector<double> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = team.agents[i];
    dist[i] = a.d_curr;
    clo[i] = closing_speed(a.d_prev, a.d_curr, team.dt);
    raw[i] = raw_contribution(a.d_curr, clo[i], p);
  }
  TeamRewards out;
  out.rho = participation_ratio(dist, clo, n, p);
  const auto shares = normalized_shares(raw, p.epsilon);
  out.agents.reserve(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.agents.push_back(per_agent_reward(i, team, shares, out.rho, p));
    sum += out.agents.back().total;
  }
  out.team_mean = sum / static_cast<double>(n);
  return out;
}

std::vector<double> capture_quality(std::span<const Vec3> pursuers, const Vec3& evader, const CgcaParams& p) {
  std::vector<double> q(pursuers.size(), 0.0);
  std::vector<double> azimuths;
  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < pursuers.size(); ++i) {
    const Vec3 rel = pursuers[i] - evader;
    if (rel.norm() > p.gate_hard) continue;
    azimuths.push_back(std::atan2(rel.y, rel.x));
    inside.push_back(i);
  }
  if (inside.empty()) return q;
  const double coverage = angular_coverage(std::move(azimuths));
  for (const auto i : inside) q[i] = coverage / static_cast<double>(inside.size());
  return q;
}

}  // namespace vp
