#include "vp/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace vp {

// ---------------------------------------------------------------------------
// Config

void HarnessConfig::validate() const {
  if (methods.empty()) throw ConfigError("at least one method is required");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  for (const auto& m : methods) {
    if (!PolicyRegistry::instance().contains(m)) throw ConfigError("unknown pursuer method '" + m + "'");
  }
  stage_config().validate();
  engine.validate();
}

StageConfig HarnessConfig::stage_config() const {
  nlohmann::json j = stage_overrides;
  j["stage"] = stage;
  return j.get<StageConfig>();
}

void to_json(nlohmann::json& j, const HarnessConfig& c) {
  j = {{"map", c.map},
       {"map_seed", c.map_seed},
       {"stage", c.stage},
       {"stage_overrides", c.stage_overrides},
       {"methods", c.methods},
       {"seeds", c.seeds},
       {"episodes", c.episodes},
       {"engine", c.engine},
       {"out_dir", c.out_dir.string()},
       {"log_trajectories", c.log_trajectories}};
}

void from_json(const nlohmann::json& j, HarnessConfig& c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "map") c.map = v.get<std::string>();
    else if (key == "map_seed") c.map_seed = v.get<std::uint64_t>();
    else if (key == "stage") c.stage = v.get<int>();
    else if (key == "stage_overrides") c.stage_overrides = v;
    else if (key == "methods") c.methods = v.get<std::vector<std::string>>();
    else if (key == "seeds") c.seeds = v.get<std::vector<std::uint64_t>>();
    else if (key == "episodes") c.episodes = v.get<int>();
    else if (key == "engine") v.get_to(c.engine);
    else if (key == "out_dir") c.out_dir = v.get<std::string>();
    else if (key == "log_trajectories") c.log_trajectories = v.get<bool>();
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

HarnessConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in).get<HarnessConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad config " + path.string() + ": " + e.what());
  }
}

SweepAxis parse_axis(std::string_view name) {
  if (name == "speed") return SweepAxis::Speed;
  if (name == "yaw" || name == "yaw_cap") return SweepAxis::YawCap;
  if (name == "noise") return SweepAxis::Noise;
  if (name == "delay") return SweepAxis::Delay;
  if (name == "density") return SweepAxis::Density;
  throw ConfigError("unknown sweep axis '" + std::string(name) + "'");
}

const char* axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::None: return "none";
    case SweepAxis::Speed: return "speed";
    case SweepAxis::YawCap: return "yaw_cap";
    case SweepAxis::Noise: return "noise";
    case SweepAxis::Delay: return "delay";
    case SweepAxis::Density: return "density";
  }
  return "none";
}

std::vector<double> default_grid(SweepAxis a) {
  switch (a) {
    case SweepAxis::Speed: return {7.0, 8.0, 9.0, 10.0};
    case SweepAxis::YawCap: return {0.8, 0.6, 0.4, 0.2};
    case SweepAxis::Noise: return {0.0, 0.05, 0.10, 0.15, 0.20};
    case SweepAxis::Delay: return {0, 1, 2, 3};
    case SweepAxis::Density: return {0.08, 0.12, 0.16, 0.20, 0.24};
    case SweepAxis::None: break;
  }
  return {};
}

void SweepSpec::validate() const {
  if (axis == SweepAxis::None) throw ConfigError("sweep needs an axis");
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  const auto grid = values.empty() ? default_grid(axis) : values;
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  for (const double v : grid) {
    if (axis == SweepAxis::Delay && (v != std::floor(v) || v < 0 || v > 3)) throw ConfigError("delay values must be 0..3");
    if (axis == SweepAxis::Noise && v < 0) throw ConfigError("noise values must be >= 0");
    if ((axis == SweepAxis::Speed || axis == SweepAxis::YawCap) && !(v > 0)) throw ConfigError("limits must be > 0");
  }
}

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string Setting::label() const {
  if (axis == SweepAxis::None) return "base";
  return std::string(axis_name(axis)) + "=" + fmt("%g", value);
}

// ---------------------------------------------------------------------------
// Aggregation

Stat mean_std(const std::vector<double>& values) {
  expect(!values.empty(), "mean_std needs at least one value");
  double sum = 0.0;
  for (const double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (const double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

std::vector<MetricRow> aggregate(const std::vector<EpisodeRecord>& records) {
  expect(!records.empty(), "aggregate needs at least one episode");
  struct SeedAcc {
    double success = 0, clean = 0, collision = 0, steps = 0, ret = 0;
    std::size_t n = 0;
  };
  struct Cell {
    MetricRow row;
    std::map<std::uint64_t, SeedAcc> seeds;  // ordered, so the result is independent of record order
  };
  std::vector<Cell> cells;
  std::map<std::pair<std::string, std::size_t>, std::size_t> index;
  for (const auto& r : records) {
    const auto key = std::make_pair(r.method, r.setting_index);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, cells.size()).first;
      Cell c;
      c.row.method = r.method;
      c.row.setting = r.setting;
      c.row.map_hash = r.map_hash;
      cells.push_back(std::move(c));
    }
    SeedAcc& acc = cells[it->second].seeds[r.base_seed];
    acc.success += r.result.success ? 1.0 : 0.0;
    acc.clean += r.result.clean ? 1.0 : 0.0;
    acc.collision += r.result.collision ? 1.0 : 0.0;
    acc.steps += static_cast<double>(r.result.steps);
    acc.ret += r.result.team_return;
    ++acc.n;
  }
  std::vector<MetricRow> rows;
  for (auto& c : cells) {
    std::vector<double> s, cl, co, st, re;
    std::size_t per_seed = 0;
    for (const auto& [seed, a] : c.seeds) {
      const double n = static_cast<double>(a.n);
      s.push_back(a.success / n);
      cl.push_back(a.clean / n);
      co.push_back(a.collision / n);
      st.push_back(a.steps / n);
      re.push_back(a.ret / n);
      per_seed = std::max(per_seed, a.n);
    }
    c.row.success = mean_std(s);
    c.row.clean = mean_std(cl);
    c.row.collision = mean_std(co);
    c.row.avg_steps = mean_std(st);
    c.row.mean_return = mean_std(re);
    c.row.seeds = c.seeds.size();
    c.row.episodes_per_seed = per_seed;
    rows.push_back(c.row);
  }
  return rows;
}

std::uint64_t episode_seed(std::uint64_t base_seed, std::string_view method, int episode) {
  return derive_seed(base_seed, method, static_cast<std::uint64_t>(episode));
}

int worker_count() {
  if (const char* env = std::getenv("VP_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

// ---------------------------------------------------------------------------
// Execution

std::shared_ptr<const WorldContext> load_world(const HarnessConfig& config) {
  const double vis = config.stage_config().visibility_range;
  if (config.map == "canonical") return std::make_shared<WorldContext>(canonical_map(), vis);
  return std::make_shared<WorldContext>(load_map(config.map).grid, vis);
}

namespace {

struct CellJob {
  std::string method;
  Setting setting;
  std::size_t setting_index = 0;
  std::shared_ptr<const WorldContext> world;
  StageConfig stage;
  Perturbations perturbations;
  std::vector<std::uint64_t> seeds;
  int episodes = 0;
};

std::string file_safe(std::string s) {
  for (auto& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  }
  return s;
}

std::vector<EpisodeRecord> run_cells(const std::vector<CellJob>& cells, const HarnessConfig& config) {
  struct Task {
    std::size_t cell;
    std::uint64_t seed;
    int episode;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (const auto seed : cells[c].seeds) {
      for (int e = 0; e < cells[c].episodes; ++e) tasks.push_back({c, seed, e});
    }
  }
  std::vector<std::unique_ptr<PursuerPolicy>> policies;
  for (const auto& c : cells) {
    policies.push_back(PolicyRegistry::instance().create(c.method, policy_context(c.stage, config.engine, c.perturbations)));
  }
  if (config.log_trajectories) std::filesystem::create_directories(config.out_dir / "traj");

  std::vector<EpisodeRecord> out(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      try {
        const Task& task = tasks[t];
        const CellJob& cell = cells[task.cell];
        const auto seed = episode_seed(task.seed, cell.method, task.episode);
        RunOptions run;
        std::ofstream traj;
        if (config.log_trajectories) {
          traj.open(config.out_dir / "traj" /
                    file_safe(cell.method + "_" + cell.setting.label() + "_s" + std::to_string(task.seed) + "_e" +
                              std::to_string(task.episode) + ".jsonl"));
          run.trajectory = &traj;
        }
        EpisodeRecord& r = out[t];
        r.method = cell.method;
        r.setting = cell.setting;
        r.setting_index = cell.setting_index;
        r.base_seed = task.seed;
        r.episode = task.episode;
        r.map_hash = cell.world->map_hash();
        r.result = run_episode(cell.world, cell.stage, config.engine, seed, *policies[task.cell], cell.perturbations, run);
      } catch (...) {
        const std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = tasks.size();
      }
    }
  };
  const int n = std::min<int>(worker_count(), static_cast<int>(std::max<std::size_t>(1, tasks.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return out;
}

std::uint64_t config_hash(const HarnessConfig& config, const nlohmann::json& extra) {
  nlohmann::json j = config;
  j.erase("out_dir");
  j.erase("log_trajectories");
  j["extra"] = extra;
  return fnv1a64(j.dump());
}

}  // namespace

RunOutput run_benchmark(const HarnessConfig& config) {
  config.validate();
  const auto world = load_world(config);
  const StageConfig stage = config.stage_config();
  std::vector<CellJob> cells;
  for (const auto& m : config.methods) {
    cells.push_back({m, {}, 0, world, stage, {}, config.seeds, config.episodes});
  }
  RunOutput out;
  out.episodes = run_cells(cells, config);
  out.rows = aggregate(out.episodes);
  out.provenance = {config_hash(config, {{"kind", "benchmark"}}), config.seeds, kEngineVersion};
  return out;
}

RunOutput run_sweep(const SweepSpec& spec, const HarnessConfig& config) {
  config.validate();
  spec.validate();
  const auto grid = spec.values.empty() ? default_grid(spec.axis) : spec.values;
  std::vector<std::uint64_t> seeds = spec.seeds;
  if (seeds.empty()) seeds = spec.axis == SweepAxis::Delay ? std::vector<std::uint64_t>{0, 1, 2, 3} : config.seeds;
  const StageConfig stage = config.stage_config();

  std::vector<std::shared_ptr<const WorldContext>> worlds;
  if (spec.axis == SweepAxis::Density) {
    // Maps for the density grid are independent; build them in parallel.
    worlds.resize(grid.size());
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex m;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      pool.emplace_back([&, i] {
        try {
          MapSpec ms = canonical_map_spec();
          ms.target_density = grid[i];
          ms.seed = config.map_seed;
          worlds[i] = std::make_shared<WorldContext>(generate_map(ms), stage.visibility_range);
        } catch (...) {
          const std::lock_guard lock(m);
          if (!error) error = std::current_exception();
        }
      });
      if (pool.size() >= static_cast<std::size_t>(worker_count())) {
        for (auto& th : pool) th.join();
        pool.clear();
      }
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  } else {
    worlds.assign(grid.size(), load_world(config));
  }

  std::vector<CellJob> cells;
  for (const auto& method : config.methods) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      Perturbations p;
      const double v = grid[i];
      switch (spec.axis) {
        case SweepAxis::Speed: p.speed_override = v; break;
        case SweepAxis::YawCap: p.yaw_cap_override = v; break;
        case SweepAxis::Noise: p.sigma = v; break;
        case SweepAxis::Delay: p.delay_k = static_cast<int>(v); break;
        default: break;
      }
      cells.push_back({method, {spec.axis, v}, i, worlds[i], stage, p, seeds, spec.episodes});
    }
  }
  RunOutput out;
  out.episodes = run_cells(cells, config);
  out.rows = aggregate(out.episodes);
  nlohmann::json extra = {{"kind", "sweep"}, {"axis", axis_name(spec.axis)}, {"values", grid}, {"episodes", spec.episodes}};
  out.provenance = {config_hash(config, extra), seeds, kEngineVersion};
  return out;
}

// ---------------------------------------------------------------------------
// Output

std::string summary_csv(const RunOutput& out) {
  std::ostringstream s;
  s << "method,axis,setting,success_mean,success_std,clean_mean,clean_std,collision_mean,collision_std,"
       "avg_steps_mean,avg_steps_std,return_mean,return_std,seeds,episodes_per_seed,map_hash,config_hash,"
       "seed_list,engine_version\n";
  std::string seed_list;
  for (std::size_t i = 0; i < out.provenance.seeds.size(); ++i) {
    seed_list += (i ? ";" : "") + std::to_string(out.provenance.seeds[i]);
  }
  for (const auto& r : out.rows) {
    s << r.method << ',' << axis_name(r.setting.axis) << ',' << (r.setting.axis == SweepAxis::None ? "" : fmt("%g", r.setting.value));
    for (const Stat* st : {&r.success, &r.clean, &r.collision, &r.avg_steps, &r.mean_return}) {
      s << ',' << fmt("%.6f", st->mean) << ',' << fmt("%.6f", st->std);
    }
    s << ',' << r.seeds << ',' << r.episodes_per_seed << ',' << hex64(r.map_hash) << ','
      << hex64(out.provenance.config_hash) << ',' << seed_list << ',' << out.provenance.engine_version << '\n';
  }
  return s.str();
}

std::string episodes_jsonl(const RunOutput& out) {
  std::vector<const EpisodeRecord*> sorted;
  for (const auto& r : out.episodes) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const EpisodeRecord* a, const EpisodeRecord* b) {
    return std::tie(a->method, a->setting_index, a->base_seed, a->episode) <
           std::tie(b->method, b->setting_index, b->base_seed, b->episode);
  });
  std::ostringstream s;
  for (const auto* r : sorted) {
    nlohmann::json j = episode_result_json(r->result);
    j["method"] = r->method;
    j["axis"] = axis_name(r->setting.axis);
    j["setting"] = r->setting.value;
    j["base_seed"] = r->base_seed;
    j["episode"] = r->episode;
    j["map_hash"] = hex64(r->map_hash);
    s << j.dump() << '\n';
  }
  return s.str();
}

void write_outputs(const RunOutput& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "summary.csv") << summary_csv(out);
  std::ofstream(dir / "episodes.jsonl") << episodes_jsonl(out);
}

std::vector<std::filesystem::path> write_plot_data(const std::filesystem::path& summary,
                                                   const std::filesystem::path& dir) {
  std::ifstream in(summary);
  if (!in) throw ConfigError("cannot open " + summary.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream hs(line);
    for (std::string f; std::getline(hs, f, ',');) header.push_back(f);
  }
  auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("summary is missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_method = col("method"), c_axis = col("axis"), c_setting = col("setting");
  static const std::vector<std::string> metrics{"success", "clean", "collision", "avg_steps", "return"};

  // axis -> metric -> setting -> method -> (mean, std)
  std::map<std::string, std::map<std::string, std::map<std::string, std::map<std::string, std::pair<std::string, std::string>>>>> data;
  std::map<std::string, std::vector<std::string>> methods_per_axis;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
    if (f.size() < header.size()) f.resize(header.size());
    const std::string axis = f[c_axis];
    const std::string setting = f[c_setting].empty() ? "0" : f[c_setting];
    auto& ms = methods_per_axis[axis];
    if (std::find(ms.begin(), ms.end(), f[c_method]) == ms.end()) ms.push_back(f[c_method]);
    for (const auto& m : metrics) {
      data[axis][m][setting][f[c_method]] = {f[col(m + "_mean")], f[col(m + "_std")]};
    }
  }
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [axis, by_metric] : data) {
    for (const auto& [metric, by_setting] : by_metric) {
      const auto path = dir / (axis + "_" + metric + ".csv");
      std::ofstream o(path);
      o << "value";
      for (const auto& m : methods_per_axis[axis]) o << ',' << m << "_mean," << m << "_std";
      o << '\n';
      std::vector<std::pair<double, std::string>> order;
      for (const auto& [setting, _] : by_setting) order.emplace_back(std::stod(setting), setting);
      std::sort(order.begin(), order.end());
      for (const auto& [_, setting] : order) {
        o << setting;
        for (const auto& m : methods_per_axis[axis]) {
          const auto it = by_setting.at(setting).find(m);
          if (it == by_setting.at(setting).end()) o << ",,";
          else o << ',' << it->second.first << ',' << it->second.second;
        }
        o << '\n';
      }
      written.push_back(path);
    }
  }
  return written;
}

}  // namespace vp
