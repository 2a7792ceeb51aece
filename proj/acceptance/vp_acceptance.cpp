// vp_acceptance: one PASS/FAIL line per acceptance criterion.
//
//   vp_acceptance --vpsim PATH [--only NAME] [--work DIR]
//
// Tolerances and sizes are fixed here; nothing is read from the environment except
// VP_WORKERS (worker count, via the harness).

#include <algorithm>
#include <chrono>
#include <cstring>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../tests/oracles.hpp"
#include "vp/eval_harness.hpp"

using namespace vp;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmtd(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

fs::path g_work;
std::string g_vpsim;

// ---------------------------------------------------------------------------

Verdict mask_correctness() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> pick_masked(0, 32);
  for (int trial = 0; trial < 10000; ++trial) {
    std::array<double, kFullObsDim> x{};
    for (auto& v : x) v = u(rng);
    const auto lite = mask_observation(std::span<const double>(x));
    std::vector<double> expect(x.begin(), x.begin() + 41);
    expect.insert(expect.end(), x.begin() + 65, x.begin() + 74);
    if (!std::equal(expect.begin(), expect.end(), lite.values.begin())) {
      return {false, "trial " + std::to_string(trial) + ": projection differs"};
    }
    // Perturb one masked channel (1-based 42..65 or 75..83) and all of them.
    auto y = x;
    const int k = pick_masked(rng);
    const std::size_t idx = k < 24 ? 41 + static_cast<std::size_t>(k) : 74 + static_cast<std::size_t>(k - 24);
    y[idx] += 1e3 * u(rng) + 1.0;
    auto z = x;
    for (std::size_t i = 41; i < 65; ++i) z[i] = u(rng);
    for (std::size_t i = 74; i < 83; ++i) z[i] = u(rng);
    const auto ly = mask_observation(std::span<const double>(y));
    const auto lz = mask_observation(std::span<const double>(z));
    if (std::memcmp(ly.values.data(), lite.values.data(), sizeof(double) * kLiteObsDim) != 0 ||
        std::memcmp(lz.values.data(), lite.values.data(), sizeof(double) * kLiteObsDim) != 0) {
      return {false, "trial " + std::to_string(trial) + ": masked channel leaked"};
    }
  }
  return {true, "10000 vectors"};
}

Verdict cgca_algebra() {
  const CgcaParams p;
  if (directional_gate(20.0, p) != 1.0 || directional_gate(60.0, p) != 0.5 || directional_gate(100.0, p) != 0.0) {
    return {false, "gate knots"};
  }
  for (const double knot : {40.0, 80.0}) {
    const double l = directional_gate(std::nextafter(knot, 0.0), p), r = directional_gate(std::nextafter(knot, 1e9), p);
    const double m = directional_gate(knot, p);
    if (std::abs(l - m) > 1e-12 || std::abs(r - m) > 1e-12) return {false, "gate discontinuous at " + fmtd("%g", knot)};
  }
  const std::vector<double> d{10, 10, 10, 10};
  const double rho0 = participation_ratio(d, std::vector<double>{0, 0, 0, 0}, 4, p);
  const double rho1 = participation_ratio(d, std::vector<double>{1, 0, 0, 0}, 4, p);
  const double rho2 = participation_ratio(d, std::vector<double>{1, 1, 0, 0}, 4, p);
  if (rho0 != 0.0 || rho1 != 0.5 || rho2 != 1.0) return {false, "rho examples"};

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> dist(0.0, 120.0), vel(-10.0, 10.0);
  double worst = 1.0;
  for (int i = 0; i < 100000; ++i) {
    std::vector<double> raw;
    for (int k = 0; k < 4; ++k) raw.push_back(raw_contribution(dist(rng), vel(rng), p));
    if (std::all_of(raw.begin(), raw.end(), [](double c) { return c == 0.0; })) continue;
    double sum = 0.0;
    for (const double s : normalized_shares(raw, 1e-8)) sum += s;
    if (sum < 1.0 - 1e-6 || sum >= 1.0) return {false, "share sum " + fmtd("%.17g", sum)};
    worst = std::min(worst, sum);
  }
  return {true, "min share sum " + fmtd("%.9f", worst)};
}

Verdict free_rider() {
  const CgcaParams p;
  TeamRewardInput t{{{12.0, 11.0}, {15.0, 14.0}, {9.0, 7.5}, {70.0, 70.0}}, true, 0.1};
  const auto team = compute_team_rewards(t, p);
  if (team.agents[3].cap_term != 0.0 || team.agents[3].share != 0.0) return {false, "far pursuer got a capture share"};
  std::vector<double> shares;
  for (const auto& a : team.agents) shares.push_back(a.share);
  double full = 0.0, half = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    full += per_agent_reward(i, t, shares, 1.0, p).cap_term;
    half += per_agent_reward(i, t, shares, 0.5, p).cap_term;
    if (per_agent_reward(i, t, shares, 0.5, p).cap_term != 0.5 * per_agent_reward(i, t, shares, 1.0, p).cap_term) {
      return {false, "cap term does not scale with rho"};
    }
  }
  // And the rho the engine computes for this step scales the team bonus.
  double actual = 0.0;
  for (const auto& a : team.agents) actual += a.cap_term;
  if (std::abs(actual - team.rho * full) > 1e-12) return {false, "team cap sum is not rho * full"};
  return {true, "rho " + fmtd("%g", team.rho) + ", team cap " + fmtd("%.6f", actual)};
}

Verdict astar_optimality() {
  std::mt19937_64 rng(2024);
  int grids = 0, reachable = 0;
  for (const double density : {0.1, 0.2, 0.3}) {
    const int n = density == 0.1 ? 67 : (density == 0.2 ? 67 : 66);
    for (int i = 0; i < n; ++i, ++grids) {
      const auto g = oracle::random_grid({12, 12, 12}, 1.0, density, rng);
      std::uniform_int_distribution<std::size_t> pick(0, g.cell_count() - 1);
      auto free_cell = [&] {
        while (true) {
          const auto c = pick(rng);
          if (!g.occupied_flat(c)) return g.unflat(c);
        }
      };
      const auto s = free_cell(), t = free_cell();
      const auto path = plan_astar(g, s, t);
      const auto ref = oracle::dijkstra(g, s, t);
      if (path.has_value() != ref.has_value()) return {false, "reachability differs on grid " + std::to_string(grids)};
      if (path && path->cost != *ref) {
        return {false, "grid " + std::to_string(grids) + ": " + fmtd("%.17g", path->cost) + " vs " + fmtd("%.17g", *ref)};
      }
      reachable += path.has_value();
    }
  }
  return {true, std::to_string(grids) + " grids, " + std::to_string(reachable) + " reachable pairs"};
}

Verdict dynamics() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> big(-30.0, 30.0), yawcap(0.2, 0.8), ang(-10.0, 10.0);
  AgentState s;
  for (int i = 0; i < 100000; ++i) {
    const auto lim = ControlLimits::pursuer(yawcap(rng));
    const auto c = clamp_control({big(rng), big(rng), big(rng), big(rng)}, lim);
    if (std::abs(c.vx) > 8.0 || std::abs(c.vy) > 4.0 || std::abs(c.vz) > 3.0 || std::abs(c.yaw_rate) > lim.yaw_rate_max) {
      return {false, "limit violated at op " + std::to_string(i)};
    }
    s = step_agent(s, c, 0.1);
    if (!(s.yaw > -kPi && s.yaw <= kPi)) return {false, "yaw left (-pi, pi]"};
    const Vec3 v{big(rng), big(rng), big(rng)};
    if (std::abs(rotate_z(v, ang(rng)).norm() - v.norm()) > 1e-9) return {false, "rotation changed a norm"};
  }
  return {true, "100000 operations"};
}

int run_cli(const std::string& args) {
  const std::string cmd = "\"" + g_vpsim + "\" " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict determinism() {
  const auto a = g_work / "det_a", b = g_work / "det_b";
  const std::string common = "bench run --seeds 0,1,2 --episodes 50 --map canonical --out ";
  if (run_cli(common + a.string()) != 0 || run_cli(common + b.string()) != 0) return {false, "bench run failed"};
  const auto ca = slurp(a / "summary.csv"), cb = slurp(b / "summary.csv");
  if (ca.empty()) return {false, "no summary written"};
  if (ca != cb) return {false, "summary.csv differs"};
  if (slurp(a / "episodes.jsonl") != slurp(b / "episodes.jsonl")) return {false, "episodes.jsonl differs"};
  return {true, std::to_string(ca.size()) + " CSV bytes identical"};
}

Verdict mapgen() {
  std::string worst;
  double worst_err = 0.0;
  for (const double d : {0.08, 0.12, 0.16, 0.20, 0.24}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      MapSpec spec = canonical_map_spec();
      spec.target_density = d;
      spec.seed = seed;
      VoxelGrid g = VoxelGrid::empty({1, 1, 1}, 1.0);
      try {
        g = generate_map(spec);
      } catch (const GenerationFault& e) {
        return {false, e.what()};
      }
      const auto r = validate_map(g);
      const double err = std::abs(r.density - d) / d;
      const auto& b = r.band_occupancy;
      if (err > 0.15 || r.component_ratio < 0.90 || !(b[0] > b[1] && b[1] > b[2])) {
        return {false, "density " + fmtd("%g", d) + " seed " + std::to_string(seed) + ": achieved " +
                           fmtd("%.4f", r.density) + ", component " + fmtd("%.4f", r.component_ratio)};
      }
      if (err > worst_err) {
        worst_err = err;
        worst = fmtd("%g", d);
      }
    }
  }
  return {true, "worst relative density error " + fmtd("%.3f", worst_err) + " at " + worst};
}

const MetricRow& row_for(const RunOutput& out, const std::string& method) {
  for (const auto& r : out.rows)
    if (r.method == method) return r;
  throw ConfigError("missing row " + method);
}

Verdict baseline_signature() {
  HarnessConfig c;
  c.seeds = {0, 1, 2};
  c.episodes = 100;
  const auto out = run_benchmark(c);
  write_outputs(out, g_work / "baseline");
  const auto& apf = row_for(out, "APF+PN");
  const auto& euc = row_for(out, "EUCLIDEAN");
  const auto& ast = row_for(out, "ASTAR-GUIDED");
  const bool c1 = apf.collision.mean > 0.5;
  const bool c2 = apf.avg_steps.mean < 0.4 * ast.avg_steps.mean;
  const bool c3 = ast.success.mean > apf.success.mean && ast.success.mean > euc.success.mean;
  const bool c4 = euc.avg_steps.mean > ast.avg_steps.mean;
  std::string d = "APF+PN collision " + fmtd("%.3f", apf.collision.mean) + (c1 ? " ok" : " NO") + "; APF+PN steps " +
                  fmtd("%.1f", apf.avg_steps.mean) + " vs 0.4*A* " + fmtd("%.1f", 0.4 * ast.avg_steps.mean) +
                  (c2 ? " ok" : " NO") + "; success A* " + fmtd("%.3f", ast.success.mean) + " / APF+PN " +
                  fmtd("%.3f", apf.success.mean) + " / EUCLIDEAN " + fmtd("%.3f", euc.success.mean) +
                  (c3 ? " ok" : " NO") + "; EUCLIDEAN steps " + fmtd("%.1f", euc.avg_steps.mean) + " vs A* " +
                  fmtd("%.1f", ast.avg_steps.mean) + (c4 ? " ok" : " NO");
  return {c1 && c2 && c3 && c4, d};
}

bool same_stats(const MetricRow& a, const MetricRow& b) {
  auto eq = [](const Stat& x, const Stat& y) { return x.mean == y.mean && x.std == y.std; };
  return eq(a.success, b.success) && eq(a.clean, b.clean) && eq(a.collision, b.collision) &&
         eq(a.avg_steps, b.avg_steps) && eq(a.mean_return, b.mean_return);
}

Verdict sweep_completeness() {
  // Structure check at the full episode count; a short horizon keeps the run small.
  HarnessConfig c;
  c.stage_overrides = {{"horizon", 60}, {"gate_timeout_steps", 30}};
  std::ostringstream d;
  // Benchmark references for the zero-perturbation rows; the delay axis uses four seeds.
  HarnessConfig b = c;
  b.episodes = 200;
  const RunOutput bench = run_benchmark(b);
  b.seeds = {0, 1, 2, 3};
  const RunOutput bench_delay_seeds = run_benchmark(b);
  for (const auto axis : {SweepAxis::Speed, SweepAxis::YawCap, SweepAxis::Noise, SweepAxis::Delay, SweepAxis::Density}) {
    SweepSpec spec;
    spec.axis = axis;
    const auto out = run_sweep(spec, c);
    const auto grid = default_grid(axis);
    const std::size_t n_seeds = axis == SweepAxis::Delay ? 4 : c.seeds.size();
    if (out.rows.size() != grid.size() * c.methods.size()) {
      return {false, std::string(axis_name(axis)) + ": " + std::to_string(out.rows.size()) + " rows"};
    }
    for (std::size_t m = 0; m < c.methods.size(); ++m) {
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& r = out.rows[m * grid.size() + i];
        if (r.method != c.methods[m] || r.setting.value != grid[i] || r.seeds != n_seeds || r.episodes_per_seed != 200) {
          return {false, std::string(axis_name(axis)) + ": bad row " + r.method + " " + r.setting.label()};
        }
      }
    }
    if (out.episodes.size() != grid.size() * c.methods.size() * n_seeds * 200) {
      return {false, std::string(axis_name(axis)) + ": episode count"};
    }
    if (axis == SweepAxis::Noise || axis == SweepAxis::Delay) {
      const RunOutput& ref = axis == SweepAxis::Delay ? bench_delay_seeds : bench;
      for (const auto& r : out.rows) {
        if (r.setting.value != 0.0) continue;
        if (!same_stats(r, row_for(ref, r.method))) {
          return {false, std::string(axis_name(axis)) + "=0 row differs from the benchmark for " + r.method};
        }
      }
    }
    d << axis_name(axis) << ' ' << grid.size() << 'x' << n_seeds << "x200 ";
  }
  d << "(horizon 60); zero-perturbation rows match";
  return {true, d.str()};
}

Verdict throughput() {
  const auto world = std::make_shared<WorldContext>(canonical_map());
  const auto stage = StageConfig::for_stage(5);
  const EngineOptions opt;
  // Guidance planning and full 83-D assembly for all four pursuers every step.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  long steps = 0;
  double seconds = 0.0;
  for (std::uint64_t seed = 0; seconds < 3.0; ++seed) {
    Episode ep(world, stage, opt, {}, seed, true);
    std::vector<ControlCommand> cmds;
    const auto t0 = std::chrono::steady_clock::now();
    while (!ep.done() && ep.step_index() < 1000) {
      cmds.assign(ep.alive_pursuers().size(), ControlCommand{4.0 + 4.0 * u(rng), 2.0 * u(rng), u(rng), 0.4 * u(rng)});
      ep.step(cmds);
      ++steps;
    }
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  const double rate = static_cast<double>(steps) / seconds;
  return {rate >= 20000.0, fmtd("%.0f", rate) + " steps/s over " + std::to_string(steps) + " steps"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vp_acceptance"};
  std::string only;
  std::string work = (fs::temp_directory_path() / "vp_acceptance").string();
  app.add_option("--vpsim", g_vpsim, "path to the vpsim binary")->required();
  app.add_option("--only", only, "run a single criterion");
  app.add_option("--work", work, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  fs::create_directories(g_work);

  struct Criterion {
    std::string name;
    std::function<Verdict()> fn;
    double time_limit_s;  // 0 = unbounded
  };
  const std::vector<Criterion> criteria{
      {"mask_correctness", mask_correctness, 1.0},
      {"cgca_algebra", cgca_algebra, 0.0},
      {"free_rider_suppression", free_rider, 0.0},
      {"astar_optimality", astar_optimality, 30.0},
      {"dynamics_invariants", dynamics, 5.0},
      {"determinism", determinism, 0.0},
      {"mapgen", mapgen, 0.0},
      {"baseline_signature", baseline_signature, 0.0},
      {"sweep_completeness", sweep_completeness, 0.0},
      {"throughput", throughput, 0.0},
  };
  int failed = 0;
  for (const auto& [name, fn, limit] : criteria) {
    if (!only.empty() && only != name) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (v.pass && limit > 0.0 && s > limit) v = {false, v.detail + "; over the " + fmtd("%g", limit) + " s limit"};
    std::printf("%s %s (%s; %.1f s)\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str(), s);
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
