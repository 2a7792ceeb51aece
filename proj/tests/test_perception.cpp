#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "vp/perception.hpp"

using namespace vp;

namespace {

bool masked_channel(std::size_t one_based) {
  return (one_based >= 42 && one_based <= 65) || (one_based >= 75 && one_based <= 83);
}

}  // namespace

TEST_CASE("assemble_full padding and no-hit conventions") {
  const auto g = VoxelGrid::empty({52, 52, 18}, 6.0);
  AgentState self;
  self.position = {156, 156, 54};
  std::vector<TeammateView> mates{{{170, 156, 54}, {}, true}, {{0, 0, 0}, {}, false}, {{0, 0, 0}, {}, false}};
  ObservationInputs in;
  in.self = &self;
  in.teammates = mates;
  in.agent_id = 2;
  const auto obs = assemble_full(g, in);
  for (std::size_t r = 0; r < kLidarRays; ++r) CHECK(obs.values[r] == 1.0);
  for (std::size_t i = 26; i < 32; ++i) CHECK(obs.values[i] == 0.0);
  CHECK(obs.values[full_obs::kMode] == 0.0);
  CHECK(obs.values[full_obs::kTeammates + 7] == 1.0);
  for (std::size_t k = 1; k < 3; ++k)
    for (std::size_t j = 0; j < 8; ++j)
      CHECK(obs.values[full_obs::kTeammates + k * full_obs::kTeammateStride + j] == 0.0);
  CHECK(obs.values[full_obs::kAgentId + 2] == 1.0);
}

TEST_CASE("lidar channels stay in [0, 1]") {
  std::mt19937_64 rng(4);
  const auto g = oracle::random_grid({12, 12, 6}, 6.0, 0.2, rng);
  std::uniform_real_distribution<double> u(0.0, 72.0), uz(0.0, 36.0), yaw(-kPi, kPi);
  for (int i = 0; i < 200; ++i) {
    AgentState self;
    self.position = {u(rng), u(rng), uz(rng)};
    self.yaw = yaw(rng);
    if (g.point_blocked(self.position)) continue;
    ObservationInputs in;
    in.self = &self;
    const auto obs = assemble_full(g, in);
    for (std::size_t r = 0; r < kLidarRays; ++r) {
      CHECK(obs.values[r] >= 0.0);
      CHECK(obs.values[r] <= 1.0);
    }
  }
}

TEST_CASE("mask examples") {
  ObservationFull ones;
  ones.values.fill(1.0);
  for (double v : mask_observation(ones).values) CHECK(v == 1.0);

  ObservationFull f;
  f.values[65] = 0.0;
  f.values[66] = 1.0;
  f.values[67] = 0.0;
  const auto lite = mask_observation(f);
  CHECK(lite.values[41] == 0.0);
  CHECK(lite.values[42] == 1.0);
  CHECK(lite.values[43] == 0.0);
}

TEST_CASE("mask is a projection that ignores teammate and slot channels") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    ObservationFull x, y;
    for (auto& v : x.values) v = u(rng);
    for (auto& v : y.values) v = u(rng);
    const auto mx = mask_observation(x), my = mask_observation(y);

    // Linearity.
    const double a = u(rng), b = u(rng);
    ObservationFull comb;
    for (std::size_t i = 0; i < kFullObsDim; ++i) comb.values[i] = a * x.values[i] + b * y.values[i];
    const auto mc = mask_observation(comb);
    for (std::size_t i = 0; i < kLiteObsDim; ++i) CHECK(mc.values[i] == a * mx.values[i] + b * my.values[i]);

    // Zero influence.
    ObservationFull z = x;
    for (std::size_t i = 1; i <= kFullObsDim; ++i)
      if (masked_channel(i)) z.values[i - 1] = u(rng) * 100.0;
    CHECK(mask_observation(z).values == mx.values);
  }
}

TEST_CASE("noise") {
  std::vector<double> obs(kFullObsDim, 0.5);
  obs[0] = 1.0;
  Rng rng(1);
  CHECK(apply_noise(obs, 0.0, rng) == obs);

  Rng a(7), b(7);
  CHECK(apply_noise(obs, 0.2, a) == apply_noise(obs, 0.2, b));

  // Sample std over 1e5 draws of a non-LiDAR channel.
  Rng r(99);
  const std::vector<double> one(27, 0.0);
  std::vector<double> draws;
  draws.reserve(100000);
  for (int i = 0; i < 100000; ++i) draws.push_back(apply_noise(one, 0.2, r)[26]);
  const double sd = oracle::population_std(draws);
  CHECK(std::abs(sd - 0.2) <= 0.02 * 0.2);

  // LiDAR stays clipped.
  Rng c(3);
  for (int i = 0; i < 1000; ++i) {
    const auto n = apply_noise(obs, 0.2, c);
    CHECK(n[0] <= 1.0);
    CHECK(n[0] >= 0.0);
  }
}

TEST_CASE("delay buffer FIFO") {
  const ControlCommand prime{0, 0, 0, 0};
  const ControlCommand a{1, 0, 0, 0}, b{2, 0, 0, 0}, c{3, 0, 0, 0};
  DelayBuffer k0(0);
  CHECK(k0.push_pop(a) == a);

  DelayBuffer k2(2, prime);
  CHECK(k2.push_pop(a) == prime);
  CHECK(k2.push_pop(b) == prime);
  CHECK(k2.push_pop(c) == a);

  for (int k = 0; k <= 3; ++k) {
    DelayBuffer buf(k, prime);
    std::vector<ControlCommand> pushed;
    for (int step = 0; step < 20; ++step) {
      const ControlCommand cmd{static_cast<double>(step + 1), 0, 0, 0};
      pushed.push_back(cmd);
      const auto out = buf.push_pop(cmd);
      if (step >= k) CHECK(out == pushed[static_cast<std::size_t>(step - k)]);
      else CHECK(out == prime);
    }
  }
  CHECK_THROWS_AS(DelayBuffer(4), ContractViolation);
}

TEST_CASE("angular coverage") {
  CHECK(angular_coverage({}) == 0.0);
  CHECK(angular_coverage({1.0}) == 0.0);
  CHECK(angular_coverage({0.0, kPi}) == doctest::Approx(0.5));
  CHECK(angular_coverage({0.0, kPi / 2, kPi, -kPi / 2}) == doctest::Approx(0.75));
}

TEST_CASE("channel map covers all 83 channels once") {
  std::vector<int> hits(kFullObsDim + 1, 0);
  for (const auto& b : full_channel_map())
    for (std::size_t i = b.first; i <= b.last; ++i) ++hits[i];
  for (std::size_t i = 1; i <= kFullObsDim; ++i) CHECK(hits[i] == 1);
}
