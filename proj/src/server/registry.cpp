#include "koopshare/registry.hpp"

#include <algorithm>
#include <cstdio>

#include "koopshare/error.hpp"
#include "koopshare/experiment.hpp"
#include "koopshare/io.hpp"

namespace koopshare::server {

namespace fs = std::filesystem;

namespace {

bool valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

int count_trials(const fs::path& dir) {
  int n = 0;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec))
    if (e.is_regular_file() && e.path().extension() == ".json") ++n;
  return n;
}

// Trailing integer of ids like "session_0007"; -1 when there is none.
int id_number(const std::string& id, const std::string& prefix) {
  if (id.rfind(prefix, 0) != 0) return -1;
  try {
    return std::stoi(id.substr(prefix.size()));
  } catch (...) {
    return -1;
  }
}

}  // namespace

ModelRegistry::ModelRegistry(const WorldParams& world, const CostSpec& cost, fs::path model_dir,
                             fs::path log_dir, double ridge)
    : world_(world), cost_(cost), model_dir_(std::move(model_dir)), log_dir_(std::move(log_dir)), ridge_(ridge) {
  world_.validate();
  cost_.validate();
  fs::create_directories(model_dir_);
  fs::create_directories(log_dir_);
  for (const auto& e : fs::directory_iterator(log_dir_))
    if (e.is_directory()) session_counter_ = std::max(session_counter_, id_number(e.path().filename().string(), "session_") + 1);
}

std::vector<std::string> ModelRegistry::load_existing() {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(model_dir_))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<std::string> skipped;
  for (const auto& path : files) {
    const std::string id = path.stem().string();
    if (!valid_id(id)) {
      skipped.push_back(path.string() + ": invalid model id");
      continue;
    }
    try {
      auto entry = std::make_shared<ModelEntry>();
      entry->id = id;
      entry->model = io::read_model(path);
      try {
        entry->lqr = solve_dare(extract_linear(entry->model), cost_);
      } catch (const NotStabilizable&) {
        entry->error = "model not stabilizable";
      }
      std::lock_guard lock(mutex_);
      models_[id] = std::move(entry);
      model_counter_ = std::max(model_counter_, id_number(id, "trained_") + 1);
    } catch (const Error& e) {
      skipped.push_back(path.string() + ": " + e.what());
    }
  }
  return skipped;
}

std::shared_ptr<const ModelEntry> ModelRegistry::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = models_.find(id);
  return it == models_.end() ? nullptr : it->second;
}

std::vector<std::shared_ptr<const ModelEntry>> ModelRegistry::models() const {
  std::lock_guard lock(mutex_);
  std::vector<std::shared_ptr<const ModelEntry>> out;
  for (const auto& [id, entry] : models_) out.push_back(entry);
  return out;
}

std::shared_ptr<const ModelEntry> ModelRegistry::publish(const std::string& id, KoopmanModel model,
                                                         std::vector<std::string> sources) {
  if (!valid_id(id)) throw InvalidInput("invalid model id '" + id + "'");
  auto entry = std::make_shared<ModelEntry>();
  entry->id = id;
  entry->model = std::move(model);
  entry->sources = std::move(sources);
  try {
    entry->lqr = solve_dare(extract_linear(entry->model), cost_);
  } catch (const NotStabilizable&) {
    entry->error = "model not stabilizable";
  }
  io::write_model(model_dir_ / (id + ".json"), entry->model, entry->lqr);
  std::lock_guard lock(mutex_);
  models_[id] = entry;
  return entry;
}

std::string ModelRegistry::next_model_id_locked() {
  char buf[32];
  std::snprintf(buf, sizeof buf, "trained_%03d", model_counter_++);
  return buf;
}

std::shared_ptr<const ModelEntry> ModelRegistry::train(const std::vector<std::string>& session_ids) {
  if (session_ids.empty()) throw InvalidInput("train: session_ids is empty");
  std::vector<io::LogFile> files;
  for (const auto& sid : session_ids) {
    if (!valid_id(sid)) throw InvalidInput("train: invalid session id '" + sid + "'");
    const fs::path dir = log_dir_ / sid;
    if (!fs::is_directory(dir)) throw InsufficientData("train: no recorded trials for session '" + sid + "'");
    auto logs = io::load_trial_logs(dir, true);
    if (logs.empty()) throw InsufficientData("train: no recorded trials for session '" + sid + "'");
    for (auto& f : logs) files.push_back(std::move(f));
  }
  std::vector<const TrialLog*> logs;
  for (const auto& f : files) logs.push_back(&f.log);
  KoopmanModel model = fit_from_logs(logs, ridge_);
  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = next_model_id_locked();
  }
  return publish(id, std::move(model), session_ids);
}

fs::path ModelRegistry::log_path(const std::string& session_id, int trial_index) const {
  if (!valid_id(session_id)) throw InvalidInput("invalid session id '" + session_id + "'");
  char name[32];
  std::snprintf(name, sizeof name, "trial_%02d.json", trial_index);
  return log_dir_ / session_id / name;
}

void ModelRegistry::record(const std::string& session_id, int trial_index, const TrialLog& log) {
  const fs::path path = log_path(session_id, trial_index);
  fs::create_directories(path.parent_path());
  io::write_trial_log(path, log);
}

std::vector<RecordedSession> ModelRegistry::recorded_sessions() const {
  std::lock_guard lock(mutex_);
  std::vector<RecordedSession> out;
  for (const auto& e : fs::directory_iterator(log_dir_))
    if (e.is_directory()) out.push_back({e.path().filename().string(), count_trials(e.path())});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.session_id < b.session_id; });
  return out;
}

std::string ModelRegistry::next_session_id() {
  std::lock_guard lock(mutex_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "session_%04d", session_counter_++);
  return buf;
}

}  // namespace koopshare::server
