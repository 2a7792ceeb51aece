#include <doctest.h>

#include <random>

#include "vp/reward_cgca.hpp"

using namespace vp;

TEST_CASE("directional gate") {
  CHECK(directional_gate(20.0) == 1.0);
  CHECK(directional_gate(60.0) == 0.5);
  CHECK(directional_gate(100.0) == 0.0);
  for (const double knot : {40.0, 80.0}) {
    CHECK(std::abs(directional_gate(knot) - directional_gate(std::nextafter(knot, 1e9))) <= 1e-12);
    CHECK(std::abs(directional_gate(knot) - directional_gate(std::nextafter(knot, 0.0))) <= 1e-12);
  }
  double prev = 1.0;
  for (double d = 0.0; d < 120.0; d += 0.25) {
    CHECK(directional_gate(d) <= prev);
    prev = directional_gate(d);
  }
}

TEST_CASE("raw contribution") {
  CHECK(raw_contribution(70.0, 5.0) == 0.0);
  CHECK(raw_contribution(70.0, -5.0) == 0.0);
  CHECK(raw_contribution(0.0, 0.0) == 3.0);
  CHECK(raw_contribution(30.0, -5.0) == std::exp(-30.0 / 20.0));
}

TEST_CASE("normalized shares") {
  std::vector<double> zero{0, 0, 0, 0};
  for (double s : normalized_shares(zero, 1e-8)) CHECK(s == 0.0);
  std::vector<double> r{3, 1, 0, 0};
  const auto s = normalized_shares(r, 0.0);
  CHECK(s == std::vector<double>{0.75, 0.25, 0.0, 0.0});
  std::vector<double> eq{2, 2, 2, 2};
  for (double v : normalized_shares(eq, 1e-8)) CHECK(v == doctest::Approx(0.25));

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> d(0.0, 120.0), v(-10.0, 10.0);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> raw;
    for (int k = 0; k < 4; ++k) raw.push_back(raw_contribution(d(rng), v(rng)));
    const auto sh = normalized_shares(raw, 1e-8);
    double sum = 0.0;
    for (double x : sh) sum += x;
    double any = 0.0;
    for (double x : raw) any += x;
    if (any > 0.0) {
      CHECK(sum >= 1.0 - 1e-6);
      CHECK(sum < 1.0);
    }
    // Scaling keeps the ranking.
    std::vector<double> scaled = raw;
    for (auto& x : scaled) x *= 7.5;
    const auto sh2 = normalized_shares(scaled, 1e-8);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        if (sh[static_cast<std::size_t>(a)] < sh[static_cast<std::size_t>(b)])
          CHECK(sh2[static_cast<std::size_t>(a)] <= sh2[static_cast<std::size_t>(b)]);
  }
}

TEST_CASE("participation ratio") {
  const std::vector<double> near{10, 10, 10, 10};
  CHECK(participation_ratio(near, std::vector<double>{1, 1, 0, 0}, 4) == 1.0);
  CHECK(participation_ratio(near, std::vector<double>{1, 0, 0, 0}, 4) == 0.5);
  CHECK(participation_ratio(near, std::vector<double>{0, 0, 0, 0}, 4) == 0.0);
  // Beyond the hard gate nobody counts.
  CHECK(participation_ratio(std::vector<double>{70, 70, 70, 70}, std::vector<double>{5, 5, 5, 5}, 4) == 0.0);

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> d(0.0, 100.0), v(-3.0, 3.0);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> dist, clo;
    for (int k = 0; k < 4; ++k) {
      dist.push_back(d(rng));
      clo.push_back(v(rng));
    }
    const double rho = participation_ratio(dist, clo, 4);
    CHECK(rho >= 0.0);
    CHECK(rho <= 1.0);
    auto more = clo;
    more[0] += 2.0;
    CHECK(participation_ratio(dist, more, 4) >= rho);
  }
}

TEST_CASE("collision indicator") {
  CHECK(collision_indicator(false, false, false) == 0);
  CHECK(collision_indicator(true, false, false) == 1);
  CHECK(collision_indicator(true, false, true) == 2);
}

TEST_CASE("per-agent reward examples") {
  const CgcaParams p;
  SUBCASE("far stationary agent") {
    TeamRewardInput t{{{100.0, 100.0}}, false, 0.1};
    const auto r = per_agent_reward(0, t, std::vector<double>{0.0}, 0.0, p);
    CHECK(r.dir_term == 0.0);
    CHECK(r.cap_term == 0.0);
    CHECK(r.col_term == 0.0);
    CHECK(r.imp_term == 0.0);
    // Far and not closing: the loiter penalty is the only non-zero term.
    CHECK(r.total == -p.lambda_lazy);
    CgcaParams quiet = p;
    quiet.lambda_lazy = 0.0;
    CHECK(per_agent_reward(0, t, std::vector<double>{0.0}, 0.0, quiet).total == 0.0);
  }
  SUBCASE("capture step cap terms") {
    TeamRewardInput t{{{10, 9}, {10, 9}, {10, 9}, {10, 9}}, true, 0.1};
    const std::vector<double> shares{0.75, 0.25, 0.0, 0.0};
    const double expect[] = {7.5, 2.5, 0.0, 0.0};
    for (std::size_t i = 0; i < 4; ++i) CHECK(per_agent_reward(i, t, shares, 1.0, p).cap_term == expect[i]);
  }
  SUBCASE("obstacle hit with half impact") {
    AgentRewardInput a{50.0, 50.0};
    a.obstacle_hit = true;
    a.impact_speed = 4.0;
    TeamRewardInput t{{a}, false, 0.1};
    const auto r = per_agent_reward(0, t, std::vector<double>{0.0}, 0.0, p);
    CHECK(-r.col_term - r.imp_term == -1.25);
  }
}

TEST_CASE("free riders get no capture share and the bonus scales with participation") {
  const CgcaParams p;
  // Three closing pursuers near the evader, one loitering at 70 m.
  TeamRewardInput t{{{12.0, 11.0}, {15.0, 14.0}, {9.0, 7.5}, {70.0, 70.0}}, true, 0.1};
  const auto team = compute_team_rewards(t, p);
  CHECK(team.agents[3].share == 0.0);
  CHECK(team.agents[3].cap_term == 0.0);

  // Identical shares, rho halved -> every cap term halves exactly.
  std::vector<double> shares;
  for (const auto& a : team.agents) shares.push_back(a.share);
  for (std::size_t i = 0; i < 4; ++i) {
    const double full = per_agent_reward(i, t, shares, 1.0, p).cap_term;
    const double half = per_agent_reward(i, t, shares, 0.5, p).cap_term;
    CHECK(half == 0.5 * full);
  }
}

TEST_CASE("total is the exact signed sum and team mean averages over acting agents") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> d(0.0, 120.0), dd(-1.0, 1.0), imp(0.0, 12.0);
  std::bernoulli_distribution coin(0.3);
  for (int i = 0; i < 1000; ++i) {
    TeamRewardInput t;
    t.captured = coin(rng);
    const int n = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < n; ++k) {
      AgentRewardInput a;
      a.d_prev = d(rng);
      a.d_curr = std::max(0.0, a.d_prev + dd(rng));
      a.obstacle_hit = coin(rng);
      a.team_hit = coin(rng);
      a.shield = coin(rng);
      a.impact_speed = imp(rng);
      t.agents.push_back(a);
    }
    const auto out = compute_team_rewards(t, CgcaParams{});
    double sum = 0.0;
    for (const auto& r : out.agents) {
      CHECK(r.total == r.dir_term + r.cap_term + r.qual_term - r.col_term - r.imp_term - r.lazy_term);
      sum += r.total;
    }
    CHECK(out.team_mean == sum / n);
    CHECK(out.rho >= 0.0);
    CHECK(out.rho <= 1.0);
  }
}

TEST_CASE("unknown reward keys are rejected") {
  CgcaParams p;
  CHECK_THROWS_AS(from_json(nlohmann::json{{"lambda_cap", 5.0}, {"lambda_typo", 1.0}}, p), ConfigError);
  from_json(nlohmann::json{{"lambda_cap", 5.0}}, p);
  CHECK(p.lambda_cap == 5.0);
  CHECK(p.lambda_dir == 0.1);
}
