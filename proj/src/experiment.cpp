#include "koopshare/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "koopshare/error.hpp"
#include "koopshare/stats.hpp"

namespace koopshare {

namespace fs = std::filesystem;
using io::json;

namespace {
constexpr int kDefaultCohort = 16;
constexpr int kDefaultPool = 3;
constexpr double kSkillLow = 0.2;
constexpr double kSkillHigh = 0.6;
}  // namespace

std::vector<PilotSpec> ExperimentConfig::default_pilots(std::uint64_t master_seed, int count) {
  std::mt19937_64 rng(mix_seed(master_seed, 0x70696c6f74ULL));
  std::uniform_real_distribution<double> skill(kSkillLow, kSkillHigh);
  std::vector<PilotSpec> pilots;
  for (int i = 0; i < count; ++i) {
    PilotSpec p;
    p.kind = PilotKind::novice;
    p.skill = skill(rng);
    p.seed = mix_seed(master_seed, 0x1000ULL + static_cast<std::uint64_t>(i));
    pilots.push_back(p);
  }
  return pilots;
}

PilotSpec ExperimentConfig::default_expert(std::uint64_t master_seed) {
  PilotSpec p;
  p.kind = PilotKind::expert;
  p.skill = 1.0;
  p.seed = mix_seed(master_seed, 0xe4e4ULL);
  return p;
}

ExperimentConfig ExperimentConfig::defaults(std::uint64_t master_seed) {
  ExperimentConfig c;
  c.master_seed = master_seed;
  c.pilots = default_pilots(master_seed, kDefaultCohort + kDefaultPool);
  for (int i = 0; i < kDefaultPool; ++i) c.general_pool.push_back(kDefaultCohort + i);
  c.expert = default_expert(master_seed);
  return c;
}

std::vector<int> ExperimentConfig::cohort() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(pilots.size()); ++i) {
    if (std::find(general_pool.begin(), general_pool.end(), i) == general_pool.end()) out.push_back(i);
  }
  return out;
}

void ExperimentConfig::validate() const {
  world.validate();
  cost.validate();
  ergodic.validate();
  expert.validate();
  for (const auto& p : pilots) p.validate();
  if (trials_train < 1) throw ConfigError("trials_train must be >= 1");
  if (trials_eval < 0) throw ConfigError("trials_eval must be >= 0");
  if (general_pool.empty()) throw ConfigError("general_pool must name at least one pilot");
  std::set<int> distinct(general_pool.begin(), general_pool.end());
  if (distinct.size() != general_pool.size()) throw ConfigError("general_pool indices must be distinct");
  for (int i : general_pool) {
    if (i < 0 || i >= static_cast<int>(pilots.size())) throw ConfigError("general_pool index out of range");
  }
  if (cohort().empty()) throw ConfigError("no pilots left to evaluate outside the general pool");
  if (!(ridge >= 0.0)) throw ConfigError("ridge must be >= 0");
  if (heatmap_nx < 1 || heatmap_ny < 1) throw ConfigError("heatmap grid must be at least 1x1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
}

json to_json(const ExperimentConfig& c) {
  json pilots = json::array();
  for (const auto& p : c.pilots) pilots.push_back(io::to_json(p));
  return json{{"world", io::to_json(c.world)},
              {"cost", io::to_json(c.cost)},
              {"ergodic", io::to_json(c.ergodic)},
              {"pilots", std::move(pilots)},
              {"general_pool", c.general_pool},
              {"expert", io::to_json(c.expert)},
              {"trials_train", c.trials_train},
              {"trials_eval", c.trials_eval},
              {"master_seed", c.master_seed},
              {"output_dir", c.output_dir},
              {"ridge", c.ridge},
              {"heatmap_grid", {c.heatmap_nx, c.heatmap_ny}},
              {"alpha", c.alpha}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  io::ObjectReader r(j, "config");
  std::uint64_t master_seed = 1;
  r.optional("master_seed", master_seed);
  ExperimentConfig c = ExperimentConfig::defaults(master_seed);
  if (r.has("world")) c.world = io::world_from_json(r.at("world"));
  c.cost = r.has("cost") ? io::cost_from_json(r.at("cost"), c.world) : CostSpec::defaults(c.world);
  c.ergodic = r.has("ergodic") ? io::ergodic_from_json(r.at("ergodic"), c.world) : ErgodicSpec::defaults(c.world);
  if (r.has("pilots")) {
    const json& arr = r.at("pilots");
    if (!arr.is_array()) throw ParseError("config: pilots must be an array");
    c.pilots.clear();
    for (const auto& pj : arr) c.pilots.push_back(io::pilot_from_json(pj));
  }
  r.optional("general_pool", c.general_pool);
  if (r.has("expert")) c.expert = io::pilot_from_json(r.at("expert"));
  r.optional("trials_train", c.trials_train);
  r.optional("trials_eval", c.trials_eval);
  r.optional("output_dir", c.output_dir);
  r.optional("ridge", c.ridge);
  if (r.has("heatmap_grid")) {
    const auto grid = r.required<std::vector<int>>("heatmap_grid");
    if (grid.size() != 2) throw ParseError("config: heatmap_grid must be [nx, ny]");
    c.heatmap_nx = grid[0];
    c.heatmap_ny = grid[1];
  }
  r.optional("alpha", c.alpha);
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  return experiment_config_from_json(io::read_json_file(path));
}

std::uint64_t demo_seed(std::uint64_t master_seed, int pilot_id, int trial_index) {
  return mix_seed(derive_seed(master_seed, pilot_id, Paradigm::user_only, trial_index), 0x64656d6fULL);
}

std::uint64_t pilot_trial_seed(std::uint64_t trial_seed, const PilotSpec& pilot) {
  return mix_seed(trial_seed, pilot.seed);
}

TrialLog run_pilot_trial(Paradigm paradigm, int pilot_id, std::uint64_t trial_seed, const PilotSpec& pilot_spec,
                         const WorldParams& world, const CostSpec& cost, const std::optional<LqrSolution>& solution) {
  PilotSpec spec = pilot_spec;
  spec.seed = pilot_trial_seed(trial_seed, pilot_spec);
  Pilot pilot(spec, world);
  return run_trial(paradigm, pilot_id, trial_seed, world, cost, solution,
                   [&pilot](const LanderState& s, int) { return pilot.input(s); });
}

std::vector<TrialLog> collect_demonstrations(const PilotSpec& pilot, int pilot_id, int trials,
                                             std::uint64_t master_seed, const WorldParams& world,
                                             const CostSpec& cost) {
  std::vector<TrialLog> logs;
  logs.reserve(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t) {
    logs.push_back(run_pilot_trial(Paradigm::user_only, pilot_id, demo_seed(master_seed, pilot_id, t), pilot, world,
                                   cost, std::nullopt));
  }
  return logs;
}

KoopmanModel fit_from_logs(const std::vector<const TrialLog*>& logs, double ridge) {
  std::vector<Trajectory> trajectories;
  for (const TrialLog* log : logs) {
    // A trial that ended on its first sample contributes no pairs.
    if (log->samples.size() >= 2) trajectories.push_back(log->as_trajectory());
  }
  return fit_koopman(trajectories, BasisSpec{}, ridge);
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  threads.clear();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Metrics report

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json number_or_null(const std::vector<double>& v) {
  if (v.empty()) return nullptr;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

json stats_block(const std::vector<stats::GroupData>& groups, double alpha) {
  json out;
  std::vector<stats::GroupData> usable;
  for (const auto& g : groups) {
    if (g.values.size() >= 2) usable.push_back(g);
  }
  json group_sizes = json::object();
  for (const auto& g : groups) group_sizes[g.label] = g.values.size();
  out["n"] = group_sizes;
  if (usable.size() < 2) {
    out["anova"] = nullptr;
    out["pairwise"] = json::array();
    out["note"] = "fewer than two groups with at least two observations";
    return out;
  }
  try {
    const auto a = stats::anova_oneway(usable);
    out["anova"] = {{"F", a.F}, {"df_between", a.df_between}, {"df_within", a.df_within}, {"p", a.p}};
  } catch (const DataError& e) {
    out["anova"] = {{"error", e.what()}};
  }
  json pairs = json::array();
  std::vector<double> pvals;
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    for (std::size_t k = i + 1; k < usable.size(); ++k) {
      json row{{"a", usable[i].label}, {"b", usable[k].label}};
      try {
        const auto t = stats::t_test_two_sample(usable[i], usable[k]);
        row["t"] = t.t;
        row["df"] = t.df;
        row["p"] = t.p;
        slots.push_back(pairs.size());
        pvals.push_back(t.p);
      } catch (const DataError& e) {
        row["error"] = e.what();
      }
      pairs.push_back(std::move(row));
    }
  }
  const auto decisions = stats::holm_bonferroni(pvals, alpha);
  for (std::size_t i = 0; i < slots.size(); ++i) pairs[slots[i]]["holm_reject"] = static_cast<bool>(decisions[i]);
  out["pairwise"] = std::move(pairs);
  return out;
}

}  // namespace

MetricsOutput compute_metrics(std::vector<io::LogFile> logs, const MetricsSettings& settings) {
  std::stable_sort(logs.begin(), logs.end(), [](const io::LogFile& a, const io::LogFile& b) {
    return std::tuple(static_cast<int>(a.log.paradigm), a.log.pilot_id, a.trial_index) <
           std::tuple(static_cast<int>(b.log.paradigm), b.log.pilot_id, b.trial_index);
  });
  const ErgodicMetric ergodic(settings.ergodic);

  struct Row {
    const io::LogFile* file;
    TrialMetrics m;
    double ergodicity;
    std::optional<double> agreement;
  };
  std::vector<Row> rows;
  rows.reserve(logs.size());
  for (const auto& f : logs) {
    Row row{&f, trial_metrics(f.log, settings.cost), 0.0, std::nullopt};
    row.ergodicity = f.log.samples.empty() ? 0.0 : ergodic(f.log);
    if (is_shared(f.log.paradigm) && !f.log.samples.empty()) row.agreement = agreement(f.log);
    rows.push_back(row);
  }

  MetricsOutput out;
  json paradigms = json::object();
  std::map<std::string, std::vector<stats::GroupData>> groups;  // metric -> per-paradigm data
  for (Paradigm p : kAllParadigms) {
    const std::string name(to_string(p));
    std::vector<double> time, path, cost, ergo, agree;
    std::map<int, std::pair<int, int>> per_pilot;  // pilot -> (successes, trials)
    int trials = 0, successes = 0;
    for (const auto& row : rows) {
      if (row.file->log.paradigm != p) continue;
      ++trials;
      auto& pp = per_pilot[row.file->log.pilot_id];
      ++pp.second;
      ergo.push_back(row.ergodicity);
      if (row.agreement) agree.push_back(*row.agreement);
      if (row.m.success) {
        ++successes;
        ++pp.first;
        time.push_back(row.m.time_s);
        path.push_back(row.m.path_length);
        cost.push_back(row.m.total_cost);
      }
    }
    if (trials == 0) continue;
    std::vector<double> rate;
    for (const auto& [pilot, counts] : per_pilot) rate.push_back(static_cast<double>(counts.first) / counts.second);
    paradigms[name] = {{"trials", trials},
                       {"successes", successes},
                       {"success_rate", static_cast<double>(successes) / trials},
                       {"mean_pilot_success_rate", number_or_null(rate)},
                       {"mean_time_s", number_or_null(time)},
                       {"mean_path_length", number_or_null(path)},
                       {"mean_total_cost", number_or_null(cost)},
                       {"mean_ergodicity", number_or_null(ergo)},
                       {"mean_agreement", number_or_null(agree)}};
    groups["success_rate"].push_back({name, rate});
    groups["time_s"].push_back({name, time});
    groups["path_length"].push_back({name, path});
    groups["total_cost"].push_back({name, cost});
    groups["ergodicity"].push_back({name, ergo});
    if (is_shared(p)) groups["agreement"].push_back({name, agree});
  }

  json stats_json = json::object();
  for (const auto& [metric, g] : groups) stats_json[metric] = stats_block(g, settings.alpha);

  out.report = json{{"ergodic_spec", io::to_json(settings.ergodic)},
                    {"trial_count", rows.size()},
                    {"paradigms", std::move(paradigms)},
                    {"stats", std::move(stats_json)},
                    {"alpha", settings.alpha}};

  std::ostringstream csv;
  csv << "pilot_id,paradigm,trial,seed,status,steps,time_s,path_length,total_cost,ergodicity,agreement\n";
  for (const auto& row : rows) {
    const auto& log = row.file->log;
    csv << log.pilot_id << ',' << to_string(log.paradigm) << ',' << row.file->trial_index << ',' << log.seed << ','
        << to_string(log.outcome.status) << ',' << log.outcome.steps << ',' << fmt_double(row.m.time_s) << ','
        << fmt_double(row.m.path_length) << ',' << fmt_double(row.m.total_cost) << ','
        << fmt_double(row.ergodicity) << ',' << (row.agreement ? fmt_double(*row.agreement) : "") << '\n';
  }
  out.trials_csv = csv.str();

  for (Paradigm p : kAllParadigms) {
    std::vector<TrialLog> subset;
    for (const auto& row : rows) {
      if (row.file->log.paradigm == p && !row.file->log.samples.empty()) subset.push_back(row.file->log);
    }
    if (subset.empty()) continue;
    const Heatmap h = heatmap(subset, settings.heatmap_nx, settings.heatmap_ny, settings.world);
    std::ostringstream hc;
    hc << "ix,iy,x_center,y_center,occupancy\n";
    const double cw = settings.world.width / h.nx, ch = settings.world.height / h.ny;
    for (int ix = 0; ix < h.nx; ++ix) {
      for (int iy = 0; iy < h.ny; ++iy) {
        hc << ix << ',' << iy << ',' << fmt_double((ix + 0.5) * cw) << ',' << fmt_double((iy + 0.5) * ch) << ','
           << fmt_double(h.at(ix, iy)) << '\n';
      }
    }
    out.heatmap_csvs.emplace_back("heatmap_" + std::string(to_string(p)) + ".csv", hc.str());
  }
  return out;
}

void write_metrics_files(const fs::path& dir, const MetricsOutput& metrics) {
  io::write_text_file(dir / "trials.csv", metrics.trials_csv);
  for (const auto& [name, text] : metrics.heatmap_csvs) io::write_text_file(dir / name, text);
}

// ---------------------------------------------------------------------------
// Protocol

namespace {

std::string two_digits(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", i);
  return buf;
}

fs::path pilot_dir(const fs::path& root, int pilot_id) {
  return pilot_id == kExpertPilotId ? root / "expert" : root / ("pilot_" + two_digits(pilot_id));
}

struct FittedModel {
  std::optional<KoopmanModel> model;
  std::optional<LqrSolution> lqr;
  std::string failure;
};

FittedModel fit_and_solve(const std::vector<const TrialLog*>& logs, const ExperimentConfig& config) {
  FittedModel out;
  try {
    out.model = fit_from_logs(logs, config.ridge);
    out.lqr = solve_dare(extract_linear(*out.model), config.cost);
  } catch (const DataError& e) {
    out.failure = e.what();
  }
  return out;
}

json model_summary(const FittedModel& f) {
  json j;
  if (!f.model) {
    j["status"] = "failed";
    j["reason"] = f.failure;
    return j;
  }
  j["n_samples"] = f.model->n_samples;
  j["linear"] = io::to_json(extract_linear(*f.model));
  if (f.lqr) {
    j["status"] = "ok";
    j["dare_residual"] = f.lqr->dare_residual;
    j["spectral_radius"] = f.lqr->spectral_radius;
    j["u_ff"] = {f.lqr->u_ff[0], f.lqr->u_ff[1]};
  } else {
    j["status"] = "failed";
    j["reason"] = f.failure;
  }
  return j;
}

}  // namespace

json run_experiment(const ExperimentConfig& config, const ExperimentOptions& options) {
  config.validate();
  const fs::path root(config.output_dir);
  {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec || !fs::is_directory(root)) throw Error("output directory is not writable: " + root.string());
  }
  auto progress = [&](const std::string& msg) {
    if (options.progress) options.progress(msg);
  };

  // 1. Unassisted demonstrations for every pilot and the expert.
  const int n_pilots = static_cast<int>(config.pilots.size());
  std::vector<std::vector<TrialLog>> demos(static_cast<std::size_t>(n_pilots + 1));
  progress("collecting demonstrations");
  parallel_for(demos.size(), options.jobs, [&](std::size_t i) {
    const int id = static_cast<int>(i) < n_pilots ? static_cast<int>(i) : kExpertPilotId;
    const PilotSpec& spec = id == kExpertPilotId ? config.expert : config.pilots[i];
    demos[i] = collect_demonstrations(spec, id, config.trials_train, config.master_seed, config.world, config.cost);
    for (std::size_t t = 0; t < demos[i].size(); ++t) {
      io::write_trial_log(pilot_dir(root, id) / "train" / ("trial_" + two_digits(static_cast<int>(t)) + ".json"),
                          demos[i][t]);
    }
  });

  auto pointers = [](const std::vector<TrialLog>& logs) {
    std::vector<const TrialLog*> out;
    for (const auto& l : logs) out.push_back(&l);
    return out;
  };

  // 2. Models.
  progress("fitting models");
  const std::vector<int> cohort = config.cohort();
  std::vector<FittedModel> individual(cohort.size());
  parallel_for(cohort.size(), options.jobs, [&](std::size_t i) {
    individual[i] = fit_and_solve(pointers(demos[static_cast<std::size_t>(cohort[i])]), config);
  });
  std::vector<const TrialLog*> pool_logs;
  for (int idx : config.general_pool) {
    for (const auto& l : demos[static_cast<std::size_t>(idx)]) pool_logs.push_back(&l);
  }
  const FittedModel general = fit_and_solve(pool_logs, config);
  const FittedModel expert = fit_and_solve(pointers(demos.back()), config);
  if (!general.lqr) throw DataError("general model unusable: " + general.failure);
  if (!expert.lqr) throw DataError("expert model unusable: " + expert.failure);

  const fs::path models_dir = root / "models";
  io::write_model(models_dir / "general.json", *general.model, general.lqr);
  io::write_model(models_dir / "expert.json", *expert.model, expert.lqr);

  json skipped = json::array();
  json individual_json = json::array();
  std::vector<AffineLinearModel> linear_models;
  std::vector<std::size_t> evaluated;  // positions in cohort
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    json summary = model_summary(individual[i]);
    summary["pilot_id"] = cohort[i];
    individual_json.push_back(summary);
    if (individual[i].model) {
      io::write_model(models_dir / ("individual_pilot_" + two_digits(cohort[i]) + ".json"), *individual[i].model,
                      individual[i].lqr);
    }
    if (individual[i].lqr) {
      linear_models.push_back(extract_linear(*individual[i].model));
      evaluated.push_back(i);
    } else {
      skipped.push_back({{"pilot_id", cohort[i]}, {"reason", individual[i].failure}});
    }
  }

  json similarity = nullptr;
  if (linear_models.size() >= 2) {
    const ModelSimilarity s = model_similarity(linear_models);
    similarity = {{"std_pct_A", s.std_pct_A},
                  {"std_pct_B", s.std_pct_B},
                  {"reference_std_pct_A", 2.5},
                  {"reference_std_pct_B", 1.6}};
  }

  // 3. Evaluation trials; seeds depend only on (master_seed, pilot, paradigm, trial).
  struct Task {
    std::size_t cohort_pos;
    Paradigm paradigm;
    int trial;
  };
  std::vector<Task> tasks;
  for (std::size_t pos : evaluated) {
    for (Paradigm p : kAllParadigms) {
      for (int t = 0; t < config.trials_eval; ++t) tasks.push_back({pos, p, t});
    }
  }
  progress("running " + std::to_string(tasks.size()) + " evaluation trials");
  std::vector<io::LogFile> eval_logs(tasks.size());
  parallel_for(tasks.size(), options.jobs, [&](std::size_t i) {
    const Task& task = tasks[i];
    const int pilot_id = cohort[task.cohort_pos];
    std::optional<LqrSolution> lqr;
    switch (task.paradigm) {
      case Paradigm::user_only: break;
      case Paradigm::shared_individual: lqr = individual[task.cohort_pos].lqr; break;
      case Paradigm::shared_general: lqr = general.lqr; break;
      case Paradigm::shared_expert: lqr = expert.lqr; break;
    }
    const std::uint64_t seed = derive_seed(config.master_seed, pilot_id, task.paradigm, task.trial);
    io::LogFile& f = eval_logs[i];
    f.trial_index = task.trial;
    f.log = run_pilot_trial(task.paradigm, pilot_id, seed, config.pilots[static_cast<std::size_t>(pilot_id)],
                            config.world, config.cost, lqr);
    f.path = pilot_dir(root, pilot_id) / std::string(to_string(task.paradigm)) /
             ("trial_" + two_digits(task.trial) + ".json");
    io::write_trial_log(f.path, f.log);
  });

  // 4. Metrics and statistics.
  progress("computing metrics");
  MetricsSettings settings{config.world, config.cost, config.ergodic, config.heatmap_nx, config.heatmap_ny,
                           config.alpha};
  MetricsOutput metrics = compute_metrics(eval_logs, settings);
  write_metrics_files(root, metrics);

  json report{{"version", 1},
              {"config", to_json(config)},
              {"counts",
               {{"trial_logs", eval_logs.size()},
                {"training_logs", config.trials_train * (n_pilots + 1)},
                {"individual_models", linear_models.size()},
                {"general_models", 1},
                {"expert_models", 1}}},
              {"models",
               {{"individual", std::move(individual_json)},
                {"general", model_summary(general)},
                {"expert", model_summary(expert)},
                {"similarity", std::move(similarity)}}},
              {"skipped_pilots", std::move(skipped)},
              {"metrics", std::move(metrics.report)}};
  io::write_json_file(root / "report.json", report);
  return report;
}

}  // namespace koopshare
