#include "koopshare/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include "koopshare/error.hpp"

namespace koopshare::io {

namespace fs = std::filesystem;

ObjectReader::ObjectReader(const json& object, std::string context)
    : object_(object), context_(std::move(context)) {
  if (!object_.is_object()) throw ParseError(context_ + ": expected a JSON object");
}

const json& ObjectReader::at(const char* key) {
  if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) seen_.emplace_back(key);
  return object_.at(key);
}

void ObjectReader::finish() const {
  for (const auto& [key, value] : object_.items()) {
    if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
      throw ParseError(context_ + ": unknown field '" + key + "'");
    }
  }
}

namespace {

template <typename Derived>
json matrix_to_json(const Eigen::MatrixBase<Derived>& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename Derived>
json vector_to_json(const Eigen::MatrixBase<Derived>& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

double finite_number(const json& j, const std::string& context) {
  if (!j.is_number()) throw ParseError(context + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ParseError(context + ": non-finite number");
  return v;
}

Eigen::MatrixXd matrix_from_json(const json& j, int rows, int cols, const std::string& context) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows) {
    throw ParseError(context + ": expected " + std::to_string(rows) + " rows");
  }
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      throw ParseError(context + ": expected " + std::to_string(cols) + " columns");
    }
    for (int k = 0; k < cols; ++k) m(i, k) = finite_number(row[static_cast<std::size_t>(k)], context);
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json& j, int size, const std::string& context) {
  if (!j.is_array() || static_cast<int>(j.size()) != size) {
    throw ParseError(context + ": expected an array of " + std::to_string(size) + " numbers");
  }
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v[i] = finite_number(j[static_cast<std::size_t>(i)], context);
  return v;
}

json input_to_json(const ControlInput& u) { return json::array({u.main, u.rot}); }

ControlInput input_from_json(const json& j, const std::string& context) {
  const Eigen::VectorXd v = vector_from_json(j, 2, context);
  return {v[0], v[1]};
}

}  // namespace

json to_json(const WorldParams& w) {
  return json{{"width", w.width},
              {"height", w.height},
              {"gravity", w.gravity},
              {"mass", w.mass},
              {"inertia", w.inertia},
              {"main_thrust", w.main_thrust},
              {"side_thrust", w.side_thrust},
              {"arm", w.arm},
              {"dt", w.dt},
              {"start", {w.start_x, w.start_y}},
              {"goal", {w.goal_x, w.goal_y}},
              {"goal_radius", w.goal_radius},
              {"tol_v", w.tol_v},
              {"tol_omega", w.tol_omega},
              {"tol_theta", w.tol_theta},
              {"max_steps", w.max_steps},
              {"start_position_std", w.start_position_std},
              {"start_speed", w.start_speed},
              {"start_spin", w.start_spin}};
}

WorldParams world_from_json(const json& j) {
  ObjectReader r(j, "world");
  WorldParams w;
  r.optional("width", w.width);
  r.optional("height", w.height);
  r.optional("gravity", w.gravity);
  r.optional("mass", w.mass);
  r.optional("inertia", w.inertia);
  r.optional("main_thrust", w.main_thrust);
  r.optional("side_thrust", w.side_thrust);
  r.optional("arm", w.arm);
  r.optional("dt", w.dt);
  if (r.has("start")) {
    const auto v = vector_from_json(r.at("start"), 2, "world.start");
    w.start_x = v[0];
    w.start_y = v[1];
  }
  if (r.has("goal")) {
    const auto v = vector_from_json(r.at("goal"), 2, "world.goal");
    w.goal_x = v[0];
    w.goal_y = v[1];
  }
  r.optional("goal_radius", w.goal_radius);
  r.optional("tol_v", w.tol_v);
  r.optional("tol_omega", w.tol_omega);
  r.optional("tol_theta", w.tol_theta);
  r.optional("max_steps", w.max_steps);
  r.optional("start_position_std", w.start_position_std);
  r.optional("start_speed", w.start_speed);
  r.optional("start_spin", w.start_spin);
  r.finish();
  w.validate();
  return w;
}

json to_json(const CostSpec& c) {
  return json{{"Q", matrix_to_json(c.Q)}, {"R", matrix_to_json(c.R)}, {"goal", vector_to_json(c.goal)}};
}

CostSpec cost_from_json(const json& j, const WorldParams& world) {
  ObjectReader r(j, "cost");
  CostSpec c = CostSpec::defaults(world);
  if (r.has("Q")) c.Q = matrix_from_json(r.at("Q"), 6, 6, "cost.Q");
  if (r.has("R")) c.R = matrix_from_json(r.at("R"), 2, 2, "cost.R");
  if (r.has("goal")) c.goal = vector_from_json(r.at("goal"), 6, "cost.goal");
  r.finish();
  c.validate();
  return c;
}

json to_json(const ErgodicSpec& e) {
  return json{{"bounds", {e.width, e.height}}, {"k_max", e.k_max},
              {"sigma_goal", e.sigma_goal},   {"weight_exponent", e.weight_exponent},
              {"grid", e.grid},               {"goal", {e.goal_x, e.goal_y}}};
}

ErgodicSpec ergodic_from_json(const json& j, const WorldParams& world) {
  ObjectReader r(j, "ergodic");
  ErgodicSpec e = ErgodicSpec::defaults(world);
  if (r.has("bounds")) {
    const auto v = vector_from_json(r.at("bounds"), 2, "ergodic.bounds");
    e.width = v[0];
    e.height = v[1];
  }
  r.optional("k_max", e.k_max);
  r.optional("sigma_goal", e.sigma_goal);
  r.optional("weight_exponent", e.weight_exponent);
  r.optional("grid", e.grid);
  if (r.has("goal")) {
    const auto v = vector_from_json(r.at("goal"), 2, "ergodic.goal");
    e.goal_x = v[0];
    e.goal_y = v[1];
  }
  r.finish();
  e.validate();
  return e;
}

json to_json(const PilotSpec& p) {
  json j{{"kind", std::string(to_string(p.kind))}, {"skill", p.skill}, {"seed", p.seed}};
  if (p.reaction_delay) j["reaction_delay"] = *p.reaction_delay;
  if (p.noise_std) j["noise_std"] = *p.noise_std;
  return j;
}

PilotSpec pilot_from_json(const json& j) {
  ObjectReader r(j, "pilot");
  PilotSpec p;
  p.kind = pilot_kind_from_string(r.required<std::string>("kind"));
  r.optional("skill", p.skill);
  r.optional("seed", p.seed);
  if (r.has("reaction_delay")) p.reaction_delay = r.required<int>("reaction_delay");
  if (r.has("noise_std")) p.noise_std = r.required<double>("noise_std");
  r.finish();
  p.validate();
  return p;
}

json to_json(const TrialLog& log) {
  json samples = json::array();
  for (const auto& s : log.samples) {
    json sj{{"t", s.t},
            {"state", {s.state.x, s.state.y, s.state.theta, s.state.vx, s.state.vy, s.state.omega}},
            {"u_user", input_to_json(s.u_user)}};
    if (s.u_opt) sj["u_opt"] = input_to_json(*s.u_opt);
    sj["u_applied"] = input_to_json(s.u_applied);
    samples.push_back(std::move(sj));
  }
  return json{{"version", log.version},
              {"paradigm", std::string(to_string(log.paradigm))},
              {"pilot_id", log.pilot_id},
              {"seed", log.seed},
              {"dt", log.dt},
              {"outcome", {{"status", std::string(to_string(log.outcome.status))}, {"steps", log.outcome.steps}}},
              {"samples", std::move(samples)}};
}

TrialLog trial_log_from_json(const json& j) {
  ObjectReader r(j, "trial log");
  TrialLog log;
  log.version = r.required<int>("version");
  try {
    log.paradigm = paradigm_from_string(r.required<std::string>("paradigm"));
  } catch (const UsageError& e) {
    throw ParseError(std::string("trial log: ") + e.what());
  }
  log.pilot_id = r.required<int>("pilot_id");
  log.seed = r.required<std::uint64_t>("seed");
  log.dt = r.required<double>("dt");
  {
    ObjectReader o(r.at("outcome"), "trial log outcome");
    log.outcome.status = trial_status_from_string(o.required<std::string>("status"));
    log.outcome.steps = o.required<int>("steps");
    log.outcome.wall_time = log.outcome.steps * log.dt;
    o.finish();
  }
  const json& samples = r.at("samples");
  if (!samples.is_array()) throw ParseError("trial log: samples must be an array");
  log.samples.reserve(samples.size());
  for (const auto& sj : samples) {
    ObjectReader s(sj, "trial log sample");
    LogSample sample;
    sample.t = finite_number(s.at("t"), "sample.t");
    sample.state = LanderState::from_vector(vector_from_json(s.at("state"), 6, "sample.state"));
    sample.u_user = input_from_json(s.at("u_user"), "sample.u_user");
    if (s.has("u_opt")) sample.u_opt = input_from_json(s.at("u_opt"), "sample.u_opt");
    sample.u_applied = input_from_json(s.at("u_applied"), "sample.u_applied");
    s.finish();
    log.samples.push_back(sample);
  }
  r.finish();
  log.validate();
  return log;
}

json to_json(const AffineLinearModel& m) {
  return json{{"A", matrix_to_json(m.A)}, {"B", matrix_to_json(m.B)}, {"c", vector_to_json(m.c)}};
}

json to_json(const LqrSolution& s) {
  return json{{"P", matrix_to_json(s.P)},
              {"gain", matrix_to_json(s.gain)},
              {"u_ff", vector_to_json(s.u_ff)},
              {"equilibrium_residual", vector_to_json(s.equilibrium_residual)},
              {"dare_residual", s.dare_residual},
              {"spectral_radius", s.spectral_radius},
              {"iterations", s.iterations}};
}

json model_to_json(const KoopmanModel& model, const std::optional<LqrSolution>& lqr) {
  json k = json::array();
  for (Eigen::Index i = 0; i < model.K.rows(); ++i) {
    for (Eigen::Index j = 0; j < model.K.cols(); ++j) k.push_back(model.K(i, j));
  }
  json j{{"basis", std::string(to_string(model.basis.kind))},
         {"ridge", model.ridge},
         {"n_samples", model.n_samples},
         {"K", std::move(k)}};
  if (model.basis.kind == BasisKind::linear_with_bias) j["linear"] = to_json(extract_linear(model));
  if (lqr) j["lqr"] = to_json(*lqr);
  return j;
}

KoopmanModel model_from_json(const json& j) {
  ObjectReader r(j, "model");
  KoopmanModel m;
  try {
    m.basis.kind = basis_kind_from_string(r.required<std::string>("basis"));
  } catch (const ConfigError& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
  m.ridge = r.required<double>("ridge");
  m.n_samples = r.required<std::size_t>("n_samples");
  const int n = m.basis.lifted_dim();
  const json& k = r.at("K");
  if (!k.is_array() || static_cast<int>(k.size()) != n * n) {
    throw ParseError("model: K must hold " + std::to_string(n * n) + " numbers");
  }
  m.K.resize(n, n);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < n; ++c) m.K(i, c) = finite_number(k[static_cast<std::size_t>(i * n + c)], "model.K");
  }
  // Audit blocks are derived data; accepted and ignored.
  if (r.has("linear")) r.at("linear");
  if (r.has("lqr")) r.at("lqr");
  r.finish();
  m.validate();
  return m;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json parse(std::string_view text, const std::string& context) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(context + ": " + e.what());
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp.string() + ": " + ec.message());
}

void write_json_file(const fs::path& path, const json& j) { write_text_file(path, dump(j)); }

TrialLog read_trial_log(const fs::path& path) {
  try {
    return trial_log_from_json(read_json_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_trial_log(const fs::path& path, const TrialLog& log) { write_json_file(path, to_json(log)); }

KoopmanModel read_model(const fs::path& path) { return model_from_json(read_json_file(path)); }

void write_model(const fs::path& path, const KoopmanModel& model, const std::optional<LqrSolution>& lqr) {
  write_json_file(path, model_to_json(model, lqr));
}

std::vector<LogFile> load_trial_logs(const fs::path& root, bool include_training) {
  std::vector<fs::path> paths;
  if (fs::is_regular_file(root)) {
    paths.push_back(root);
  } else if (fs::is_directory(root)) {
    for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator(); ++it) {
      if (it->is_directory() && !include_training && it->path().filename() == "train") {
        it.disable_recursion_pending();
        continue;
      }
      if (it->is_regular_file() && it->path().extension() == ".json" &&
          it->path().filename().string().starts_with("trial_")) {
        paths.push_back(it->path());
      }
    }
  } else {
    throw ParseError("no such file or directory: " + root.string());
  }
  std::sort(paths.begin(), paths.end());

  static const std::regex trial_name(R"(trial_(\d+)\.json)");
  std::vector<LogFile> out;
  out.reserve(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    LogFile f;
    f.path = paths[i];
    std::smatch m;
    const std::string name = paths[i].filename().string();
    f.trial_index = std::regex_match(name, m, trial_name) ? std::stoi(m[1]) : static_cast<int>(i);
    f.log = read_trial_log(paths[i]);
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace koopshare::io
