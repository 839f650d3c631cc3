// koopshare command line: demo, train, run, eval, serve, experiment.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "koopshare/error.hpp"
#include "koopshare/experiment.hpp"
#include "koopshare/io.hpp"
#include "koopshare/server.hpp"

namespace fs = std::filesystem;
using namespace koopshare;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string model;
  std::string paradigm;
};

ExperimentConfig load_config(const Common& c) {
  io::json j = c.config.empty() ? io::json::object() : io::read_json_file(c.config);
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  if (c.seed) j["master_seed"] = *c.seed;
  return experiment_config_from_json(j);
}

std::string two_digits(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", i);
  return buf;
}

// pilot index, or kExpertPilotId for "expert"
int parse_pilot(const std::string& s, const ExperimentConfig& config) {
  if (s == "expert") return kExpertPilotId;
  int id = -1;
  try {
    std::size_t used = 0;
    id = std::stoi(s, &used);
    if (used != s.size()) id = -1;
  } catch (...) {
  }
  if (id < 0 || id >= static_cast<int>(config.pilots.size()))
    throw UsageError("--pilot must be 'expert' or an index below " + std::to_string(config.pilots.size()));
  return id;
}

int cmd_demo(const Common& c, const std::string& pilot, int trials) {
  const ExperimentConfig config = load_config(c);
  config.validate();
  if (trials < 1) throw UsageError("--trials must be >= 1");
  const fs::path root = c.out.empty() ? fs::path("demos") : fs::path(c.out);
  std::vector<int> ids;
  if (pilot.empty()) {
    for (int i = 0; i < static_cast<int>(config.pilots.size()); ++i) ids.push_back(i);
    ids.push_back(kExpertPilotId);
  } else {
    ids.push_back(parse_pilot(pilot, config));
  }
  int written = 0;
  for (int id : ids) {
    const PilotSpec& spec = id == kExpertPilotId ? config.expert : config.pilots[static_cast<std::size_t>(id)];
    const fs::path dir = (id == kExpertPilotId ? root / "expert" : root / ("pilot_" + two_digits(id))) / "train";
    const auto logs = collect_demonstrations(spec, id, trials, config.master_seed, config.world, config.cost);
    for (std::size_t t = 0; t < logs.size(); ++t) {
      io::write_trial_log(dir / ("trial_" + two_digits(static_cast<int>(t)) + ".json"), logs[t]);
      ++written;
    }
  }
  std::cout << "wrote " << written << " demonstration logs under " << root.string() << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::vector<std::string>& inputs, std::optional<double> ridge) {
  const ExperimentConfig config = load_config(c);
  if (inputs.empty()) throw UsageError("train: name at least one log file or directory");
  std::vector<io::LogFile> files;
  for (const auto& in : inputs) {
    if (!fs::exists(in)) throw InvalidInput("train: no such file or directory: " + in);
    for (auto& f : io::load_trial_logs(in, true)) files.push_back(std::move(f));
  }
  if (files.empty()) throw InsufficientData("train: no trial logs found");
  std::vector<const TrialLog*> logs;
  for (const auto& f : files) logs.push_back(&f.log);
  const KoopmanModel model = fit_from_logs(logs, ridge.value_or(config.ridge));

  std::optional<LqrSolution> lqr;
  std::string failure;
  try {
    lqr = solve_dare(extract_linear(model), config.cost);
  } catch (const NotStabilizable& e) {
    failure = e.what();
  }
  const fs::path out = c.out.empty() ? fs::path("model.json") : fs::path(c.out);
  io::write_model(out, model, lqr);
  std::cout << "fitted " << model.n_samples << " snapshot pairs from " << files.size() << " logs -> " << out.string()
            << "\n";
  if (!lqr) {
    std::cerr << "warning: " << failure << "\n";
  } else {
    std::cout << "dare residual " << lqr->dare_residual << ", spectral radius " << lqr->spectral_radius << "\n";
  }
  return 0;
}

// Per-tick inputs: [[u_main, u_rot], ...] or [{"u_main":..,"u_rot":..}, ...].
std::vector<ControlInput> read_inputs(const std::string& path) {
  const io::json j = io::read_json_file(path);
  if (!j.is_array()) throw ParseError(path + ": expected an array of inputs");
  std::vector<ControlInput> out;
  for (const auto& e : j) {
    ControlInput u;
    if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number()) {
      u = {e[0].get<double>(), e[1].get<double>()};
    } else if (e.is_object() && e.contains("u_main") && e.contains("u_rot") && e["u_main"].is_number() &&
               e["u_rot"].is_number()) {
      u = {e["u_main"].get<double>(), e["u_rot"].get<double>()};
    } else {
      throw ParseError(path + ": input " + std::to_string(out.size()) + " is not [u_main, u_rot]");
    }
    if (!std::isfinite(u.main) || !std::isfinite(u.rot))
      throw ParseError(path + ": input " + std::to_string(out.size()) + " is not finite");
    out.push_back(u);
  }
  return out;
}

int cmd_run(const Common& c, const std::string& inputs_path, const std::string& pilot) {
  const ExperimentConfig config = load_config(c);
  config.validate();
  const Paradigm paradigm = c.paradigm.empty() ? Paradigm::user_only : paradigm_from_string(c.paradigm);
  std::optional<LqrSolution> lqr;
  if (is_shared(paradigm)) {
    if (c.model.empty()) throw UsageError("run: shared paradigms need --model");
    lqr = solve_dare(extract_linear(io::read_model(c.model)), config.cost);
  } else if (!c.model.empty()) {
    std::cerr << "note: --model is ignored for user_only\n";
  }
  if (!inputs_path.empty() && !pilot.empty()) throw UsageError("run: --inputs and --pilot are exclusive");
  const std::uint64_t seed = c.seed.value_or(config.master_seed);

  TrialLog log;
  if (!inputs_path.empty()) {
    const auto inputs = read_inputs(inputs_path);
    // Past the end of the recording the pilot is silent, as with a stale live input.
    log = run_trial(paradigm, 0, seed, config.world, config.cost, lqr, [&](const LanderState&, int step) {
      return static_cast<std::size_t>(step) < inputs.size() ? inputs[static_cast<std::size_t>(step)] : ControlInput{};
    });
  } else {
    const int id = pilot.empty() ? kExpertPilotId : parse_pilot(pilot, config);
    const PilotSpec& spec = id == kExpertPilotId ? config.expert : config.pilots[static_cast<std::size_t>(id)];
    log = run_pilot_trial(paradigm, id, seed, spec, config.world, config.cost, lqr);
  }
  const fs::path out = c.out.empty() ? fs::path("trial.json") : fs::path(c.out);
  io::write_trial_log(out, log);
  const TrialMetrics m = trial_metrics(log, config.cost);
  std::cout << to_string(log.outcome.status) << " after " << log.outcome.steps << " steps; time " << m.time_s
            << " s, path " << m.path_length << " m, cost " << m.total_cost << " -> " << out.string() << "\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& dir) {
  const ExperimentConfig config = load_config(c);
  if (dir.empty()) throw UsageError("eval: name a log directory");
  if (!fs::exists(dir)) throw InvalidInput("eval: no such directory: " + dir);
  auto logs = io::load_trial_logs(dir, false);
  if (logs.empty()) throw InsufficientData("no trial logs found under " + dir);
  MetricsSettings settings{config.world, config.cost, config.ergodic, config.heatmap_nx, config.heatmap_ny,
                           config.alpha};
  const std::size_t n = logs.size();
  const MetricsOutput metrics = compute_metrics(std::move(logs), settings);
  const fs::path out = c.out.empty() ? fs::path(dir) : fs::path(c.out);
  write_metrics_files(out, metrics);
  io::write_json_file(out / "report.json", io::json{{"version", 1}, {"log_dir", dir}, {"metrics", metrics.report}});
  std::cout << "evaluated " << n << " logs -> " << (out / "report.json").string() << "\n";
  return 0;
}

int cmd_serve(const Common& c, const std::string& bind, int port, const std::string& web, const std::string& logs,
              const std::string& models, int threads) {
  const ExperimentConfig config = load_config(c);
  config.validate();
  if (port < 0 || port > 65535) throw UsageError("--port must be in [0, 65535]");
  server::ServerConfig sc;
  sc.bind_address = bind;
  sc.port = static_cast<unsigned short>(port);
  sc.web_root = web;
  sc.log_dir = logs;
  sc.model_dir = models;
  sc.world = config.world;
  sc.cost = config.cost;
  sc.seed = config.master_seed;
  sc.threads = threads;
  sc.handle_signals = true;
  server::Server srv(sc);
  if (!c.model.empty()) {
    const fs::path p(c.model);
    auto entry = srv.registry().publish(p.stem().string(), io::read_model(p), {p.string()});
    std::cout << "model " << entry->id << (entry->lqr ? "" : " (not stabilizable)") << "\n";
  }
  std::cout << "listening on http://" << bind << ":" << srv.port() << " (websocket at /ws)" << std::endl;
  srv.run();
  return 0;
}

int cmd_experiment(const Common& c, int jobs) {
  ExperimentConfig config = load_config(c);
  if (!c.out.empty()) config.output_dir = c.out;
  if (jobs < 1) throw UsageError("--jobs must be >= 1");
  ExperimentOptions options;
  options.jobs = jobs;
  options.progress = [](const std::string& msg) { std::cerr << msg << "\n"; };
  const io::json report = run_experiment(config, options);
  std::cout << "wrote " << report.at("counts").at("trial_logs").get<int>() << " evaluation logs and report to "
            << (fs::path(config.output_dir) / "report.json").string() << "\n";
  return 0;
}

void add_common(CLI::App* app, Common& c, bool model, bool paradigm) {
  app->add_option("--config", c.config, "experiment config JSON")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "master seed (trial seed for run)");
  app->add_option("--out", c.out, "output path");
  if (model) app->add_option("--model", c.model, "model JSON file");
  if (paradigm) app->add_option("--paradigm", c.paradigm, "user_only, shared_individual, shared_general, shared_expert");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman shared control for a 2D lander"};
  app.require_subcommand(1);
  Common common;

  auto* demo = app.add_subcommand("demo", "collect unassisted demonstration trials");
  std::string demo_pilot;
  int demo_trials = 10;
  add_common(demo, common, false, false);
  demo->add_option("--pilot", demo_pilot, "pilot index or 'expert' (default: all)");
  demo->add_option("--trials", demo_trials, "trials per pilot");

  auto* train = app.add_subcommand("train", "fit a Koopman model from trial logs");
  std::vector<std::string> train_inputs;
  std::optional<double> ridge;
  add_common(train, common, false, false);
  train->add_option("logs", train_inputs, "log files or directories")->required();
  train->add_option("--ridge", ridge, "ridge regularization");

  auto* run = app.add_subcommand("run", "run one trial");
  std::string run_inputs, run_pilot;
  add_common(run, common, true, true);
  run->add_option("--inputs", run_inputs, "replay per-tick inputs from a JSON array")->check(CLI::ExistingFile);
  run->add_option("--pilot", run_pilot, "synthetic pilot index or 'expert' (default: expert)");

  auto* eval = app.add_subcommand("eval", "metrics and statistics over a log directory");
  std::string eval_dir;
  add_common(eval, common, false, false);
  eval->add_option("dir", eval_dir, "log directory")->required();

  auto* serve = app.add_subcommand("serve", "start the cockpit server");
  std::string bind = "127.0.0.1", web = "web", logs = "sessions", models = "models";
  int port = 8080, threads = 2;
  add_common(serve, common, true, false);
  serve->add_option("--bind", bind, "bind address");
  serve->add_option("--port", port, "port (0 picks one)");
  serve->add_option("--web", web, "static asset directory");
  serve->add_option("--logs", logs, "session log directory");
  serve->add_option("--models", models, "model directory");
  serve->add_option("--threads", threads, "I/O threads");

  auto* experiment = app.add_subcommand("experiment", "run the full protocol");
  int jobs = 1;
  add_common(experiment, common, false, false);
  experiment->add_option("--jobs", jobs, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*demo) return cmd_demo(common, demo_pilot, demo_trials);
    if (*train) return cmd_train(common, train_inputs, ridge);
    if (*run) return cmd_run(common, run_inputs, run_pilot);
    if (*eval) return cmd_eval(common, eval_dir);
    if (*serve) return cmd_serve(common, bind, port, web, logs, models, threads);
    if (*experiment) return cmd_experiment(common, jobs);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
