// vpsim: command-line front end for benchmarks, sweeps, maps and trajectory logs.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vp/eval_harness.hpp"

namespace {

using namespace vp;

struct CommonFlags {
  std::string config;
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
  int episodes = 0;
  std::string map;
  int stage = 0;
  std::string out;
  bool log_trajectories = false;
  bool training_gate = false;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "JSON config file");
  app->add_option("--methods", f.methods, "pursuer methods")->delimiter(',');
  app->add_option("--seeds", f.seeds, "base seeds")->delimiter(',');
  app->add_option("--episodes", f.episodes, "episodes per seed (per setting for sweeps)");
  app->add_option("--map", f.map, "'canonical' or a .vmap.json file");
  app->add_option("--stage", f.stage, "curriculum stage 1..5");
  app->add_option("--out", f.out, "output directory");
  app->add_flag("--log-trajectories", f.log_trajectories, "write per-step JSON-lines under <out>/traj");
  app->add_flag("--training-gate", f.training_gate, "enable the visibility gate (training mode)");
}

HarnessConfig resolve(const CommonFlags& f) {
  HarnessConfig c = f.config.empty() ? HarnessConfig{} : load_config(f.config);
  if (!f.methods.empty()) c.methods = f.methods;
  if (!f.seeds.empty()) c.seeds = f.seeds;
  if (f.episodes > 0) c.episodes = f.episodes;
  if (!f.map.empty()) c.map = f.map;
  if (f.stage > 0) c.stage = f.stage;
  if (!f.out.empty()) c.out_dir = f.out;
  if (f.log_trajectories) c.log_trajectories = true;
  if (f.training_gate) c.engine.training_gate = true;
  return c;
}

void print_rows(const RunOutput& out) {
  std::printf("%-14s %-14s %-15s %-15s %-15s %-17s\n", "method", "setting", "success", "clean", "collision",
              "avg_steps");
  for (const auto& r : out.rows) {
    std::printf("%-14s %-14s %.3f +- %.3f  %.3f +- %.3f  %.3f +- %.3f  %7.1f +- %6.1f\n", r.method.c_str(),
                r.setting.label().c_str(), r.success.mean, r.success.std, r.clean.mean, r.clean.std,
                r.collision.mean, r.collision.std, r.avg_steps.mean, r.avg_steps.std);
  }
}

int replay(const std::string& path, const std::string& map_path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  nlohmann::json header;
  nlohmann::json result;
  std::vector<nlohmann::json> steps;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    const auto type = j.value("type", "");
    if (type == "header") header = std::move(j);
    else if (type == "step") steps.push_back(std::move(j));
    else if (type == "result") result = std::move(j);
  }
  if (header.is_null()) throw ConfigError("trajectory has no header line");
  std::cout << "policy " << header["policy"].get<std::string>() << ", seed " << header["seed"] << ", map "
            << header["map_hash"] << ", " << steps.size() << " steps\n";
  for (const auto& s : steps) {
    const long k = s["step"];
    int alive = 0;
    std::string events;
    for (const auto& p : s["pursuers"]) {
      alive += p["alive"].get<bool>() ? 1 : 0;
      if (p["obstacle_hit"].get<bool>()) events += " obstacle_hit:" + std::to_string(p["id"].get<int>());
      if (p["team_hit"].get<bool>()) events += " team_hit:" + std::to_string(p["id"].get<int>());
    }
    if (s["evader_wall_hit"].get<bool>()) events += " evader_wall_hit";
    if (k % 100 == 0 || !events.empty() || s["outcome"] != "running") {
      std::printf("step %5ld  min_dist %7.2f  alive %d  team_reward %+.4f%s\n", k, s["min_distance"].get<double>(),
                  alive, s["team_reward"].get<double>(), events.c_str());
    }
  }
  if (!result.is_null()) std::cout << "result " << result["result"].dump() << '\n';

  if (map_path.empty()) return 0;
  // Re-simulate from the header and compare the final result.
  const auto world_grid = map_path == "canonical" ? canonical_map() : load_map(map_path).grid;
  const StageConfig stage = header["stage"].get<StageConfig>();
  auto world = std::make_shared<WorldContext>(world_grid, stage.visibility_range);
  if (world->map_hash() != header["map_hash"].get<std::uint64_t>()) {
    std::cerr << "map hash does not match the trajectory\n";
    return 2;
  }
  const EngineOptions options = header["options"].get<EngineOptions>();
  Perturbations p;
  const auto& pj = header["perturbations"];
  p.sigma = pj.value("sigma", 0.0);
  p.delay_k = pj.value("delay_k", 0);
  if (pj.contains("speed_override")) p.speed_override = pj["speed_override"].get<double>();
  if (pj.contains("yaw_cap_override")) p.yaw_cap_override = pj["yaw_cap_override"].get<double>();
  const auto policy = PolicyRegistry::instance().create(header["policy"].get<std::string>(), policy_context(stage, options, p));
  std::ostringstream again;
  RunOptions run;
  run.trajectory = &again;
  run_episode(world, stage, options, header["seed"].get<std::uint64_t>(), *policy, p, run);
  std::ifstream original(path);
  std::stringstream buf;
  buf << original.rdbuf();
  const bool same = buf.str() == again.str();
  std::cout << (same ? "replay matches the recorded trajectory\n" : "replay DIFFERS from the recorded trajectory\n");
  return same ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vpsim: voxel pursuit-evasion simulator and evaluation harness"};
  app.require_subcommand(1);

  auto* bench = app.add_subcommand("bench", "benchmarks and stress sweeps");
  bench->require_subcommand(1);
  CommonFlags run_flags;
  auto* run = bench->add_subcommand("run", "benchmark every method on one map");
  add_common(run, run_flags);

  CommonFlags sweep_flags;
  std::string axis;
  std::vector<double> values;
  auto* sweep = bench->add_subcommand("sweep", "stress sweep along one axis");
  add_common(sweep, sweep_flags);
  sweep->add_option("--axis", axis, "speed | yaw | noise | delay | density")->required();
  sweep->add_option("--values", values, "override the default grid")->delimiter(',');

  double density = 0.127;
  std::uint64_t map_seed = 0;
  std::string map_out;
  std::string spec_file;
  auto* mapgen = app.add_subcommand("mapgen", "generate an urban-canyon map");
  mapgen->add_option("--density", density, "target obstacle density");
  mapgen->add_option("--seed", map_seed, "generator seed");
  mapgen->add_option("--spec", spec_file, "JSON generator spec (density/seed flags override it)");
  mapgen->add_option("--out", map_out, "output .vmap.json")->required();

  std::string validate_map_path;
  auto* validate = app.add_subcommand("validate", "check a map's connectivity and altitude profile");
  validate->add_option("--map", validate_map_path, "'canonical' or a .vmap.json file")->required();

  std::string inspect_map;
  bool channels = false;
  auto* inspect = app.add_subcommand("inspect", "print map statistics or the observation channel map");
  inspect->add_option("--map", inspect_map, "'canonical' or a .vmap.json file");
  inspect->add_flag("--channels", channels, "emit the observation channel map as JSON");

  std::string traj;
  std::string replay_map;
  auto* replay_cmd = app.add_subcommand("replay", "summarise (and optionally re-simulate) a trajectory log");
  replay_cmd->add_option("--traj", traj, "trajectory .jsonl")->required();
  replay_cmd->add_option("--verify-map", replay_map, "re-run on this map and compare byte for byte");

  std::string plot_summary;
  std::string plot_out = "plot-data";
  auto* plot = app.add_subcommand("plot-data", "reshape a summary.csv into per-axis series");
  plot->add_option("--summary", plot_summary, "summary.csv")->required();
  plot->add_option("--out", plot_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const HarnessConfig c = resolve(run_flags);
      const auto t0 = std::chrono::steady_clock::now();
      const RunOutput out = run_benchmark(c);
      write_outputs(out, c.out_dir);
      print_rows(out);
      std::cerr << "wrote " << (c.out_dir / "summary.csv").string() << " in "
                << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
    } else if (*sweep) {
      HarnessConfig c = resolve(sweep_flags);
      SweepSpec spec;
      spec.axis = parse_axis(axis);
      spec.values = values;
      if (sweep_flags.episodes > 0) spec.episodes = sweep_flags.episodes;
      if (!sweep_flags.seeds.empty()) spec.seeds = sweep_flags.seeds;
      const RunOutput out = run_sweep(spec, c);
      write_outputs(out, c.out_dir);
      print_rows(out);
    } else if (*mapgen) {
      MapSpec spec = canonical_map_spec();
      if (!spec_file.empty()) {
        std::ifstream in(spec_file);
        if (!in) throw ConfigError("cannot open " + spec_file);
        spec = nlohmann::json::parse(in).get<MapSpec>();
      }
      if (mapgen->count("--density") || spec_file.empty()) spec.target_density = density;
      if (mapgen->count("--seed") || spec_file.empty()) spec.seed = map_seed;
      const VoxelGrid grid = generate_map(spec);
      save_map(map_out, grid, spec.seed, {{"name", "urban_canyon"}, {"spec", spec}});
      const MapReport r = validate_map(grid);
      std::printf("density %.4f  component %.4f  bands %.4f/%.4f/%.4f  %s\n", r.density, r.component_ratio,
                  r.band_occupancy[0], r.band_occupancy[1], r.band_occupancy[2], r.pass ? "pass" : "FAIL");
    } else if (*validate) {
      const VoxelGrid grid = validate_map_path == "canonical" ? canonical_map() : load_map(validate_map_path).grid;
      const MapReport r = validate_map(grid);
      std::printf("density %.4f  component %.4f  bands %.4f/%.4f/%.4f  %s\n", r.density, r.component_ratio,
                  r.band_occupancy[0], r.band_occupancy[1], r.band_occupancy[2], r.pass ? "pass" : "FAIL");
      return r.pass ? 0 : 1;
    } else if (*inspect) {
      if (channels) {
        std::cout << channel_map_json().dump(2) << '\n';
      } else if (!inspect_map.empty()) {
        const VoxelGrid grid = inspect_map == "canonical" ? canonical_map() : load_map(inspect_map).grid;
        const WorldStats s = compute_stats(grid);
        const Vec3 e = grid.extent();
        nlohmann::json j = {{"dims", {grid.dims().nx, grid.dims().ny, grid.dims().nz}},
                            {"voxel_size", grid.voxel_size()},
                            {"extent", {e.x, e.y, e.z}},
                            {"occupancy_ratio", s.occupancy_ratio},
                            {"largest_free_component_ratio", s.largest_free_component_ratio},
                            {"band_occupancy", s.band_occupancy},
                            {"map_hash", grid_hash(grid)}};
        std::cout << j.dump(2) << '\n';
      } else {
        std::cerr << "inspect needs --map or --channels\n";
        return 1;
      }
    } else if (*replay_cmd) {
      return replay(traj, replay_map);
    } else if (*plot) {
      for (const auto& p : write_plot_data(plot_summary, plot_out)) std::cout << p.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
