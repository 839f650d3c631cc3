#include "koopshare/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "koopshare/error.hpp"
#include "koopshare/kernels.hpp"

namespace koopshare {

TrialMetrics trial_metrics(const TrialLog& log, const CostSpec& cost) {
  log.validate();
  TrialMetrics m;
  m.time_s = log.outcome.steps * log.dt;
  m.success = log.outcome.status == TrialStatus::success;
  for (std::size_t i = 0; i < log.samples.size(); ++i) {
    const auto& s = log.samples[i];
    m.total_cost += running_cost(s.state, s.u_applied, cost);
    if (i + 1 < log.samples.size()) {
      const auto& n = log.samples[i + 1].state;
      m.path_length += std::hypot(n.x - s.state.x, n.y - s.state.y);
    }
  }
  return m;
}

double agreement(const TrialLog& log) {
  if (!is_shared(log.paradigm)) throw NotApplicable("agreement is undefined for user_only logs");
  if (log.samples.empty()) throw NotApplicable("agreement is undefined for an empty log");
  std::size_t agree = 0;
  for (const auto& s : log.samples) {
    if (!s.u_opt) throw ParseError("shared log sample without u_opt");
    agree += (s.u_user.main * s.u_opt->main >= 0.0) ? 1 : 0;
    agree += (s.u_user.rot * s.u_opt->rot >= 0.0) ? 1 : 0;
  }
  return static_cast<double>(agree) / (2.0 * static_cast<double>(log.samples.size()));
}

namespace {

template <typename Get>
double mean_relative_std(std::span<const AffineLinearModel> models, int rows, int cols, Get get) {
  double total = 0.0;
  int included = 0;
  const double n = static_cast<double>(models.size());
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      double mean = 0.0;
      for (const auto& m : models) mean += get(m, i, j);
      mean /= n;
      if (std::abs(mean) < 1e-6) continue;
      double var = 0.0;
      for (const auto& m : models) var += (get(m, i, j) - mean) * (get(m, i, j) - mean);
      total += std::sqrt(var / n) / std::abs(mean);
      ++included;
    }
  }
  return included == 0 ? 0.0 : 100.0 * total / included;
}

}  // namespace

ModelSimilarity model_similarity(std::span<const AffineLinearModel> models) {
  if (models.size() < 2) throw InsufficientData("model_similarity needs at least 2 models");
  return {mean_relative_std(models, 6, 6, [](const AffineLinearModel& m, int i, int j) { return m.A(i, j); }),
          mean_relative_std(models, 6, 2, [](const AffineLinearModel& m, int i, int j) { return m.B(i, j); })};
}

Heatmap heatmap(std::span<const TrialLog> logs, int nx, int ny, const WorldParams& world) {
  if (logs.empty()) throw InsufficientData("heatmap needs at least one log");
  if (nx < 1 || ny < 1) throw InvalidInput("heatmap grid must be at least 1x1");
  Heatmap h{nx, ny, std::vector<double>(static_cast<std::size_t>(nx * ny), 0.0)};
  std::vector<std::size_t> counts(h.cells.size(), 0);
  std::size_t total = 0;
  for (const auto& log : logs) {
    for (const auto& s : log.samples) {
      const int ix = std::clamp(static_cast<int>(std::floor(s.state.x / world.width * nx)), 0, nx - 1);
      const int iy = std::clamp(static_cast<int>(std::floor(s.state.y / world.height * ny)), 0, ny - 1);
      ++counts[static_cast<std::size_t>(ix * ny + iy)];
      ++total;
    }
  }
  if (total == 0) throw InsufficientData("heatmap: logs contain no samples");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    h.cells[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  }
  return h;
}

ErgodicSpec ErgodicSpec::defaults(const WorldParams& world) {
  ErgodicSpec s;
  s.width = world.width;
  s.height = world.height;
  s.goal_x = world.goal_x;
  s.goal_y = world.goal_y;
  return s;
}

void ErgodicSpec::validate() const {
  if (k_max < 1) throw ConfigError("ergodic: k_max must be >= 1");
  if (!(sigma_goal > 0.0)) throw ConfigError("ergodic: sigma_goal must be positive");
  if (!(weight_exponent > 0.0)) throw ConfigError("ergodic: weight exponent must be positive");
  if (grid < 1) throw ConfigError("ergodic: quadrature grid must be >= 1");
  if (!(width > 0.0 && height > 0.0)) throw ConfigError("ergodic: bounds must be positive");
}

ErgodicMetric::ErgodicMetric(const ErgodicSpec& spec) : spec_(spec) {
  spec_.validate();
  const int modes = modes_per_axis();
  const auto count = static_cast<std::size_t>(modes * modes);
  inv_h_.resize(count);
  weights_.resize(count);
  auto axis_norm = [](int k, double len) { return k == 0 ? len : len / 2.0; };
  for (int k1 = 0; k1 < modes; ++k1) {
    for (int k2 = 0; k2 < modes; ++k2) {
      const auto idx = static_cast<std::size_t>(k1 * modes + k2);
      inv_h_[idx] = 1.0 / std::sqrt(axis_norm(k1, spec_.width) * axis_norm(k2, spec_.height));
      weights_[idx] = std::pow(1.0 + k1 * k1 + k2 * k2, -spec_.weight_exponent);
    }
  }

  // Midpoint quadrature of the goal Gaussian truncated to the box.
  const int g = spec_.grid;
  const double dx = spec_.width / g, dy = spec_.height / g;
  std::vector<double> qx, qy, qw;
  qx.reserve(static_cast<std::size_t>(g * g));
  qy.reserve(qx.capacity());
  qw.reserve(qx.capacity());
  double mass = 0.0;
  const double inv_var = 1.0 / (spec_.sigma_goal * spec_.sigma_goal);
  for (int i = 0; i < g; ++i) {
    const double x = (i + 0.5) * dx;
    for (int j = 0; j < g; ++j) {
      const double y = (j + 0.5) * dy;
      const double r2 = (x - spec_.goal_x) * (x - spec_.goal_x) + (y - spec_.goal_y) * (y - spec_.goal_y);
      const double w = std::exp(-0.5 * r2 * inv_var) * dx * dy;
      qx.push_back(x);
      qy.push_back(y);
      qw.push_back(w);
      mass += w;
    }
  }
  if (!(mass > 0.0)) throw ConfigError("ergodic: goal distribution has no mass inside the domain");
  for (double& w : qw) w /= mass;

  target_.assign(count, 0.0);
  kernels::cosine_moments(qx, qy, qw, spec_.k_max, spec_.width, spec_.height, target_);
  for (std::size_t k = 0; k < count; ++k) target_[k] *= inv_h_[k];
}

std::vector<double> ErgodicMetric::trajectory_coefficients(std::span<const double> xs,
                                                           std::span<const double> ys) const {
  if (xs.empty() || xs.size() != ys.size()) throw InvalidInput("ergodicity needs at least one sample");
  const std::vector<double> w(xs.size(), 1.0 / static_cast<double>(xs.size()));
  std::vector<double> c(target_.size(), 0.0);
  kernels::cosine_moments(xs, ys, w, spec_.k_max, spec_.width, spec_.height, c);
  for (std::size_t k = 0; k < c.size(); ++k) c[k] *= inv_h_[k];
  return c;
}

double ErgodicMetric::distance(std::span<const double> xs, std::span<const double> ys) const {
  const std::vector<double> c = trajectory_coefficients(xs, ys);
  double eps = 0.0;
  // The k = (0, 0) term is identically zero: both coefficients equal 1/h_0.
  for (std::size_t k = 1; k < c.size(); ++k) {
    const double d = c[k] - target_[k];
    eps += weights_[k] * d * d;
  }
  return eps;
}

double ErgodicMetric::operator()(const TrialLog& log) const {
  if (log.samples.empty()) throw InvalidInput("ergodicity of an empty log");
  std::vector<double> xs, ys;
  xs.reserve(log.samples.size());
  ys.reserve(log.samples.size());
  for (const auto& s : log.samples) {
    xs.push_back(s.state.x);
    ys.push_back(s.state.y);
  }
  return distance(xs, ys);
}

double ergodicity(const TrialLog& log, const ErgodicSpec& spec) { return ErgodicMetric(spec)(log); }

}  // namespace koopshare
