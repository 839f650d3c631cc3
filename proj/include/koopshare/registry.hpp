#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "koopshare/controller.hpp"
#include "koopshare/koopman.hpp"
#include "koopshare/trial.hpp"

namespace koopshare::server {

// Published models are immutable; readers hold a shared_ptr for as long as they need one.
struct ModelEntry {
  std::string id;
  KoopmanModel model;
  std::optional<LqrSolution> lqr;  // absent when the DARE solve failed
  std::string error;               // why lqr is absent
  std::vector<std::string> sources;
};

struct RecordedSession {
  std::string session_id;
  int trials = 0;
};

// Models on disk plus recorded session logs. Thread-safe.
//
// Layout: model_dir/<model_id>.json and log_dir/<session_id>/trial_NN.json.
class ModelRegistry {
 public:
  ModelRegistry(const WorldParams& world, const CostSpec& cost, std::filesystem::path model_dir,
                std::filesystem::path log_dir, double ridge = kDefaultRidge);

  // Loads every model file in model_dir. Files that fail to parse are skipped
  // and reported in the returned list.
  std::vector<std::string> load_existing();

  std::shared_ptr<const ModelEntry> find(const std::string& id) const;
  std::vector<std::shared_ptr<const ModelEntry>> models() const;

  // Solves the DARE, writes the model file and publishes it under `id`.
  std::shared_ptr<const ModelEntry> publish(const std::string& id, KoopmanModel model,
                                            std::vector<std::string> sources);

  // Fits a model from every trial recorded under the given sessions.
  std::shared_ptr<const ModelEntry> train(const std::vector<std::string>& session_ids);

  std::filesystem::path log_path(const std::string& session_id, int trial_index) const;
  void record(const std::string& session_id, int trial_index, const TrialLog& log);
  std::vector<RecordedSession> recorded_sessions() const;

  // A session id not used by any recording on disk.
  std::string next_session_id();

  const WorldParams& world() const { return world_; }
  const CostSpec& cost() const { return cost_; }

 private:
  std::string next_model_id_locked();

  WorldParams world_;
  CostSpec cost_;
  std::filesystem::path model_dir_;
  std::filesystem::path log_dir_;
  double ridge_;

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const ModelEntry>> models_;
  int session_counter_ = 0;
  int model_counter_ = 0;
};

}  // namespace koopshare::server
