#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "vp/eval_harness.hpp"

using namespace vp;

namespace {

EpisodeRecord record(const std::string& method, std::uint64_t seed, int episode, bool success, long steps) {
  EpisodeRecord r;
  r.method = method;
  r.base_seed = seed;
  r.episode = episode;
  r.result.success = success;
  r.result.clean = success;
  r.result.steps = steps;
  r.result.outcome = success ? Outcome::Capture : Outcome::Timeout;
  return r;
}

// Small, fast configuration: short horizon, few episodes.
HarnessConfig quick_config() {
  HarnessConfig c;
  c.stage_overrides = {{"horizon", 200}, {"gate_timeout_steps", 100}};
  c.seeds = {0, 1};
  c.episodes = 3;
  return c;
}

bool same_stats(const MetricRow& a, const MetricRow& b) {
  auto eq = [](const Stat& x, const Stat& y) { return x.mean == y.mean && x.std == y.std; };
  return eq(a.success, b.success) && eq(a.clean, b.clean) && eq(a.collision, b.collision) &&
         eq(a.avg_steps, b.avg_steps) && eq(a.mean_return, b.mean_return);
}

}  // namespace

TEST_CASE("aggregate: per-seed means then population std") {
  std::vector<EpisodeRecord> recs;
  // Per-seed success 0.7, 0.8, 0.75 over 20 episodes each.
  const int wins[] = {14, 16, 15};
  for (std::uint64_t s = 0; s < 3; ++s)
    for (int e = 0; e < 20; ++e) recs.push_back(record("M", s, e, e < wins[s], 100));
  const auto rows = aggregate(recs);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].success.mean == doctest::Approx(0.75));
  CHECK(rows[0].success.std == doctest::Approx(oracle::population_std({0.7, 0.8, 0.75})));
  CHECK(rows[0].success.std == doctest::Approx(0.0408).epsilon(1e-3));
  CHECK(rows[0].avg_steps.mean == 100.0);
  CHECK(rows[0].avg_steps.std == 0.0);
  CHECK(rows[0].seeds == 3);
  CHECK(rows[0].episodes_per_seed == 20);

  std::vector<EpisodeRecord> one(recs.begin(), recs.begin() + 20);
  CHECK(aggregate(one)[0].success.std == 0.0);

  // Order of episodes and seeds does not matter.
  auto shuffled = recs;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(same_stats(aggregate(shuffled)[0], rows[0]));
  }
}

TEST_CASE("unknown methods are rejected before anything runs") {
  auto c = quick_config();
  c.methods = {"APF+PN", "NOT-A-METHOD"};
  CHECK_THROWS_AS(run_benchmark(c), ConfigError);
}

TEST_CASE("config parsing") {
  const auto c = nlohmann::json{{"episodes", 7}, {"methods", {"EUCLIDEAN"}}}.get<HarnessConfig>();
  CHECK(c.episodes == 7);
  CHECK(c.methods == std::vector<std::string>{"EUCLIDEAN"});
  CHECK_THROWS_AS(nlohmann::json({{"episodez", 7}}).get<HarnessConfig>(), ConfigError);
  CHECK_THROWS_AS(parse_axis("wind"), ConfigError);
}

TEST_CASE("benchmark rows are well formed and reproducible") {
  const auto c = quick_config();
  const auto a = run_benchmark(c);
  const auto b = run_benchmark(c);
  CHECK(summary_csv(a) == summary_csv(b));
  CHECK(episodes_jsonl(a) == episodes_jsonl(b));
  REQUIRE(a.rows.size() == c.methods.size());
  for (const auto& r : a.rows) {
    CHECK(r.clean.mean <= r.success.mean);
    for (const Stat* s : {&r.success, &r.clean, &r.collision}) {
      CHECK(s->mean >= 0.0);
      CHECK(s->mean <= 1.0);
      CHECK(s->std >= 0.0);
    }
    CHECK(r.episodes_per_seed == 3);
  }
  const auto csv = summary_csv(a);
  CHECK(csv.find("map_hash") != std::string::npos);
  CHECK(csv.find("config_hash") != std::string::npos);
  CHECK(csv.find(kEngineVersion) != std::string::npos);
  CHECK(csv.find(",0;1,") != std::string::npos);

  // One cell re-run on its own reproduces its row.
  auto single = c;
  single.methods = {"EUCLIDEAN"};
  const auto solo = run_benchmark(single);
  CHECK(same_stats(solo.rows[0], a.rows[1]));
}

TEST_CASE("identity settings reproduce the benchmark rows") {
  auto c = quick_config();
  c.methods = {"APF+PN", "EUCLIDEAN"};
  const auto bench = run_benchmark(c);
  for (const auto axis : {SweepAxis::Noise, SweepAxis::Delay}) {
    SweepSpec spec;
    spec.axis = axis;
    spec.values = {0.0, axis == SweepAxis::Noise ? 0.1 : 2.0};
    spec.episodes = 3;
    spec.seeds = c.seeds;
    const auto sweep = run_sweep(spec, c);
    REQUIRE(sweep.rows.size() == 4);
    for (const auto& row : sweep.rows) {
      if (row.setting.value != 0.0) continue;
      const auto it = std::find_if(bench.rows.begin(), bench.rows.end(),
                                   [&](const MetricRow& b) { return b.method == row.method; });
      REQUIRE(it != bench.rows.end());
      CHECK(same_stats(row, *it));
    }
  }
}

TEST_CASE("sweeps emit exactly their grid") {
  auto c = quick_config();
  c.methods = {"EUCLIDEAN"};
  SweepSpec spec;
  spec.axis = SweepAxis::Delay;
  spec.episodes = 1;
  const auto out = run_sweep(spec, c);
  CHECK(out.rows.size() == 4);
  CHECK(out.provenance.seeds == std::vector<std::uint64_t>{0, 1, 2, 3});
  for (const auto& r : out.rows) CHECK(r.seeds == 4);

  for (const auto axis : {SweepAxis::Speed, SweepAxis::YawCap, SweepAxis::Noise, SweepAxis::Density}) {
    SweepSpec s;
    s.axis = axis;
    s.episodes = 1;
    s.seeds = {0};
    const auto o = run_sweep(s, c);
    REQUIRE(o.rows.size() == default_grid(axis).size());
    for (std::size_t i = 0; i < o.rows.size(); ++i) CHECK(o.rows[i].setting.value == default_grid(axis)[i]);
  }
}

TEST_CASE("plot data reshapes a summary") {
  auto c = quick_config();
  c.methods = {"EUCLIDEAN", "APF+PN"};
  SweepSpec spec;
  spec.axis = SweepAxis::Speed;
  spec.values = {7.0, 9.0};
  spec.episodes = 1;
  spec.seeds = {0};
  const auto out = run_sweep(spec, c);
  const auto dir = std::filesystem::temp_directory_path() / "vp_plot_test";
  std::filesystem::remove_all(dir);
  write_outputs(out, dir);
  const auto files = write_plot_data(dir / "summary.csv", dir / "plot");
  CHECK(files.size() == 5);
  std::ifstream in(dir / "plot" / "speed_success.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "value,EUCLIDEAN_mean,EUCLIDEAN_std,APF+PN_mean,APF+PN_std");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == 2);
  std::filesystem::remove_all(dir);
}
