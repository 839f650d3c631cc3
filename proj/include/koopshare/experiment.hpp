#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "koopshare/controller.hpp"
#include "koopshare/io.hpp"
#include "koopshare/koopman.hpp"
#include "koopshare/lander.hpp"
#include "koopshare/metrics.hpp"
#include "koopshare/pilots.hpp"
#include "koopshare/trial.hpp"

namespace koopshare {

inline constexpr int kExpertPilotId = -1;

struct ExperimentConfig {
  WorldParams world;
  CostSpec cost = CostSpec::defaults(WorldParams{});
  ErgodicSpec ergodic = ErgodicSpec::defaults(WorldParams{});
  std::vector<PilotSpec> pilots;   // evaluated cohort plus the general pool
  std::vector<int> general_pool;   // indices into pilots, excluded from evaluation
  PilotSpec expert;
  int trials_train = 10;
  int trials_eval = 10;
  std::uint64_t master_seed = 1;
  std::string output_dir = "experiment_out";
  double ridge = kDefaultRidge;
  int heatmap_nx = 60;
  int heatmap_ny = 40;
  double alpha = 0.05;

  // 16 evaluated novices plus a 3-novice general pool, skills drawn uniformly
  // from [0.2, 0.6] with a generator seeded from master_seed.
  static ExperimentConfig defaults(std::uint64_t master_seed = 1);
  static std::vector<PilotSpec> default_pilots(std::uint64_t master_seed, int count);
  static PilotSpec default_expert(std::uint64_t master_seed);

  std::vector<int> cohort() const;
  void validate() const;
};

io::json to_json(const ExperimentConfig& config);
// Missing fields take defaults (pilots are generated from master_seed);
// unknown fields are rejected.
ExperimentConfig experiment_config_from_json(const io::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Seeds for unassisted demonstration trials, disjoint from the evaluation seeds.
std::uint64_t demo_seed(std::uint64_t master_seed, int pilot_id, int trial_index);
// Seed of a pilot's noise generator within one trial.
std::uint64_t pilot_trial_seed(std::uint64_t trial_seed, const PilotSpec& pilot);

TrialLog run_pilot_trial(Paradigm paradigm, int pilot_id, std::uint64_t trial_seed, const PilotSpec& pilot,
                         const WorldParams& world, const CostSpec& cost, const std::optional<LqrSolution>& solution);

std::vector<TrialLog> collect_demonstrations(const PilotSpec& pilot, int pilot_id, int trials,
                                             std::uint64_t master_seed, const WorldParams& world,
                                             const CostSpec& cost);

KoopmanModel fit_from_logs(const std::vector<const TrialLog*>& logs, double ridge);

struct MetricsSettings {
  WorldParams world;
  CostSpec cost;
  ErgodicSpec ergodic;
  int heatmap_nx = 60;
  int heatmap_ny = 40;
  double alpha = 0.05;
};

struct MetricsOutput {
  io::json report;
  std::string trials_csv;
  std::vector<std::pair<std::string, std::string>> heatmap_csvs;  // (file name, contents)
};

// Aggregates and statistics from trial logs alone. Logs are processed in the
// canonical order (paradigm, pilot_id, trial_index) regardless of input order.
MetricsOutput compute_metrics(std::vector<io::LogFile> logs, const MetricsSettings& settings);

void write_metrics_files(const std::filesystem::path& dir, const MetricsOutput& metrics);

struct ExperimentOptions {
  int jobs = 1;
  std::function<void(const std::string&)> progress;
};

// Runs the whole protocol and writes logs, models, report.json and CSVs under
// config.output_dir. Returns the report.
io::json run_experiment(const ExperimentConfig& config, const ExperimentOptions& options = {});

// Runs fn(i) for i in [0, count) on up to `jobs` threads. Rethrows the first failure.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace koopshare
