#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vp/episode_engine.hpp"
#include "vp/mapgen_urban.hpp"

namespace vp {

// Everything a benchmark or sweep needs. Every key is optional in the JSON form;
// see README for the documented key set.
struct HarnessConfig {
  std::string map = "canonical";  // "canonical" or a .vmap.json path
  std::uint64_t map_seed = 0;     // used by generated maps (canonical, density sweep)
  int stage = 5;
  nlohmann::json stage_overrides = nlohmann::json::object();
  std::vector<std::string> methods{"APF+PN", "EUCLIDEAN", "ASTAR-GUIDED"};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int episodes = 500;  // per seed (per setting, for sweeps)
  EngineOptions engine;
  std::filesystem::path out_dir = "out";
  bool log_trajectories = false;

  void validate() const;
  [[nodiscard]] StageConfig stage_config() const;
};

void to_json(nlohmann::json& j, const HarnessConfig& c);
void from_json(const nlohmann::json& j, HarnessConfig& c);
HarnessConfig load_config(const std::filesystem::path& path);

enum class SweepAxis { None, Speed, YawCap, Noise, Delay, Density };
SweepAxis parse_axis(std::string_view name);
const char* axis_name(SweepAxis a);
std::vector<double> default_grid(SweepAxis a);

struct SweepSpec {
  SweepAxis axis = SweepAxis::Speed;
  std::vector<double> values;  // empty -> default grid
  int episodes = 200;
  std::vector<std::uint64_t> seeds;  // empty -> config seeds (delay: 0..3)

  void validate() const;
};

struct Setting {
  SweepAxis axis = SweepAxis::None;
  double value = 0.0;
  [[nodiscard]] std::string label() const;
};

struct EpisodeRecord {
  std::string method;
  Setting setting;
  std::size_t setting_index = 0;
  std::uint64_t base_seed = 0;
  int episode = 0;
  std::uint64_t map_hash = 0;
  EpisodeResult result;
};

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // population
};

struct MetricRow {
  std::string method;
  Setting setting;
  Stat success, clean, collision, avg_steps, mean_return;
  std::size_t seeds = 0;
  std::size_t episodes_per_seed = 0;
  std::uint64_t map_hash = 0;
};

// Per-seed means first, then mean and population std across seeds. Rows are
// ordered by first appearance of (method, setting) in `records`, episodes within a
// cell in any order.
std::vector<MetricRow> aggregate(const std::vector<EpisodeRecord>& records);

// Population mean/std of a list of values.
Stat mean_std(const std::vector<double>& values);

std::uint64_t episode_seed(std::uint64_t base_seed, std::string_view method, int episode);

struct Provenance {
  std::uint64_t config_hash = 0;
  std::vector<std::uint64_t> seeds;
  std::string engine_version = kEngineVersion;
};

struct RunOutput {
  std::vector<EpisodeRecord> episodes;
  std::vector<MetricRow> rows;
  Provenance provenance;
};

// Worker count: VP_WORKERS when set, else hardware concurrency (at least 1).
int worker_count();

RunOutput run_benchmark(const HarnessConfig& config);
RunOutput run_sweep(const SweepSpec& spec, const HarnessConfig& config);

// Files written under config.out_dir: summary.csv and episodes.jsonl.
void write_outputs(const RunOutput& out, const std::filesystem::path& dir);
std::string summary_csv(const RunOutput& out);
std::string episodes_jsonl(const RunOutput& out);

// Reshapes a summary.csv into one series file per (axis, metric) under `dir`.
std::vector<std::filesystem::path> write_plot_data(const std::filesystem::path& summary,
                                                   const std::filesystem::path& dir);

std::shared_ptr<const WorldContext> load_world(const HarnessConfig& config);

}  // namespace vp
