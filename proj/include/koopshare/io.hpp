#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "koopshare/error.hpp"

#include "koopshare/controller.hpp"
#include "koopshare/koopman.hpp"
#include "koopshare/lander.hpp"
#include "koopshare/metrics.hpp"
#include "koopshare/pilots.hpp"
#include "koopshare/trial.hpp"

namespace koopshare::io {

using nlohmann::json;

// Tracks which keys of a JSON object were read so unknown keys can be rejected.
class ObjectReader {
 public:
  ObjectReader(const json& object, std::string context);

  bool has(const char* key) const { return object_.contains(key); }
  const json& at(const char* key);

  template <typename T>
  void optional(const char* key, T& out) {
    if (has(key)) out = read<T>(key);
  }

  template <typename T>
  T required(const char* key) {
    if (!has(key)) throw ParseError(context_ + ": missing field '" + key + "'");
    return read<T>(key);
  }

  // Throws ParseError naming the first unread key.
  void finish() const;

 private:
  template <typename T>
  T read(const char* key) {
    try {
      return at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(context_ + ": field '" + key + "': " + e.what());
    }
  }

  const json& object_;
  std::string context_;
  std::vector<std::string> seen_;
};

json to_json(const WorldParams& w);
WorldParams world_from_json(const json& j);

json to_json(const CostSpec& c);
CostSpec cost_from_json(const json& j, const WorldParams& world);

json to_json(const ErgodicSpec& e);
ErgodicSpec ergodic_from_json(const json& j, const WorldParams& world);

json to_json(const PilotSpec& p);
PilotSpec pilot_from_json(const json& j);

json to_json(const TrialLog& log);
TrialLog trial_log_from_json(const json& j);

json to_json(const AffineLinearModel& m);
json to_json(const LqrSolution& s);

// {basis, ridge, n_samples, K (row-major)}; optional audit blocks "linear" and "lqr".
json model_to_json(const KoopmanModel& model, const std::optional<LqrSolution>& lqr = std::nullopt);
KoopmanModel model_from_json(const json& j);

std::string dump(const json& j);  // pretty, trailing newline
json parse(std::string_view text, const std::string& context);

json read_json_file(const std::filesystem::path& path);
// Writes through a temporary file and rename.
void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_json_file(const std::filesystem::path& path, const json& j);

TrialLog read_trial_log(const std::filesystem::path& path);
void write_trial_log(const std::filesystem::path& path, const TrialLog& log);

KoopmanModel read_model(const std::filesystem::path& path);
void write_model(const std::filesystem::path& path, const KoopmanModel& model,
                 const std::optional<LqrSolution>& lqr = std::nullopt);

struct LogFile {
  std::filesystem::path path;
  int trial_index = 0;  // parsed from trial_NN.json, else position in directory order
  TrialLog log;
};

// All *.json trial logs below `root` (or `root` itself if it is a file), in path order.
// Directories named "train" are skipped unless include_training is set.
std::vector<LogFile> load_trial_logs(const std::filesystem::path& root, bool include_training);

}  // namespace koopshare::io
