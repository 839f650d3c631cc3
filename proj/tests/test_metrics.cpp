#include <doctest.h>

#include <cmath>
#include <random>

#include "koopshare/error.hpp"
#include "koopshare/metrics.hpp"

using namespace koopshare;

namespace {

TrialLog make_log(Paradigm p, const std::vector<LanderState>& states, TrialStatus status = TrialStatus::success) {
  TrialLog log;
  log.paradigm = p;
  for (std::size_t i = 0; i < states.size(); ++i) {
    LogSample s;
    s.t = static_cast<double>(i) * log.dt;
    s.state = states[i];
    if (is_shared(p)) s.u_opt = ControlInput{};
    log.samples.push_back(s);
  }
  log.outcome = {status, static_cast<int>(states.size()), 0.0};
  return log;
}

std::vector<double> truncated_goal_gaussian(const ErgodicSpec& spec, std::size_t n, std::uint64_t seed,
                                            std::vector<double>& ys) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gx(spec.goal_x, spec.sigma_goal), gy(spec.goal_y, spec.sigma_goal);
  std::vector<double> xs;
  ys.clear();
  while (xs.size() < n) {
    const double x = gx(rng), y = gy(rng);
    if (x < 0 || x > spec.width || y < 0 || y > spec.height) continue;
    xs.push_back(x);
    ys.push_back(y);
  }
  return xs;
}

}  // namespace

TEST_CASE("path length and cost") {
  const CostSpec cost = CostSpec::defaults(WorldParams{});
  const TrialLog tri = make_log(Paradigm::user_only, {{0, 0, 0, 0, 0, 0}, {3, 4, 0, 0, 0, 0}});
  CHECK(trial_metrics(tri, cost).path_length == 5.0);
  CHECK(trial_metrics(tri, cost).time_s == doctest::Approx(0.04));

  const LanderState goal = LanderState::from_vector(cost.goal);
  const TrialLog still = make_log(Paradigm::user_only, std::vector<LanderState>(50, goal));
  CHECK(trial_metrics(still, cost).total_cost == 0.0);
  CHECK(trial_metrics(still, cost).path_length == 0.0);
  CHECK(trial_metrics(still, cost).success);
}

TEST_CASE("trial metrics match an array recomputation") {
  const CostSpec cost = CostSpec::defaults(WorldParams{});
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> d(-1, 1);
  TrialLog log = make_log(Paradigm::user_only, std::vector<LanderState>(100));
  Eigen::Matrix<double, 6, 100> X;
  Eigen::Matrix<double, 2, 100> U;
  for (int i = 0; i < 100; ++i) {
    for (int k = 0; k < 6; ++k) X(k, i) = 10.0 * d(rng);
    U(0, i) = 0.5 + 0.5 * d(rng);
    U(1, i) = d(rng);
    log.samples[static_cast<std::size_t>(i)].state = LanderState::from_vector(X.col(i));
    log.samples[static_cast<std::size_t>(i)].u_applied = ControlInput::from_vector(U.col(i));
  }
  const Eigen::Matrix<double, 6, 100> D = X.colwise() - cost.goal;
  const double cost_ref = (D.array() * (cost.Q * D).array()).sum() + (U.array() * (cost.R * U).array()).sum();
  const auto steps = X.topRows<2>().rightCols<99>() - X.topRows<2>().leftCols<99>();
  const double path_ref = steps.colwise().norm().sum();

  const TrialMetrics m = trial_metrics(log, cost);
  CHECK(std::abs(m.total_cost - cost_ref) < 1e-9 * cost_ref);
  CHECK(std::abs(m.path_length - path_ref) < 1e-9);
}

TEST_CASE("malformed log is a parse error") {
  TrialLog log = make_log(Paradigm::user_only, {{}, {}});
  log.outcome.steps = 5;
  CHECK_THROWS_AS(trial_metrics(log, CostSpec{}), ParseError);
}

TEST_CASE("agreement") {
  TrialLog log = make_log(Paradigm::shared_general, std::vector<LanderState>(4));
  for (auto& s : log.samples) {
    s.u_user = {0.3, 0.2};
    s.u_opt = ControlInput{0.5, 0.7};
  }
  CHECK(agreement(log) == 1.0);

  for (auto& s : log.samples) s.u_user.rot = -0.2;
  CHECK(agreement(log) == 0.5);

  // Hand-counted pattern: main agrees 4/4 (one zero), rot agrees 1/4.
  const double rot_user[] = {0.1, -0.1, -0.4, 0.0};
  const double rot_opt[] = {-0.2, 0.3, 0.2, 0.9};
  for (int i = 0; i < 4; ++i) {
    log.samples[static_cast<std::size_t>(i)].u_user = {i == 0 ? 0.0 : 0.4, rot_user[i]};
    log.samples[static_cast<std::size_t>(i)].u_opt = ControlInput{0.4, rot_opt[i]};
  }
  CHECK(agreement(log) == doctest::Approx(5.0 / 8.0));

  CHECK_THROWS_AS(agreement(make_log(Paradigm::user_only, {{}})), NotApplicable);
}

TEST_CASE("model similarity fixtures") {
  AffineLinearModel a;
  a.A = Mat6::Constant(0.7);
  a.B = Mat62::Constant(-0.2);
  CHECK(model_similarity(std::vector{a, a}).std_pct_A == 0.0);
  CHECK(model_similarity(std::vector{a, a}).std_pct_B == 0.0);

  AffineLinearModel b = a, c = a;
  b.A(2, 3) = 1.0;
  c.A(2, 3) = 3.0;
  const ModelSimilarity s = model_similarity(std::vector{b, c});
  CHECK(s.std_pct_A * 36.0 == doctest::Approx(50.0));  // one entry at 50%, 35 at 0%
  CHECK(s.std_pct_B == 0.0);

  CHECK_THROWS_AS(model_similarity(std::vector{a}), InsufficientData);
}

TEST_CASE("model similarity matches a per-entry brute force") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n01;
  for (int set = 0; set < 5; ++set) {
    std::vector<AffineLinearModel> models(static_cast<std::size_t>(3 + set));
    for (auto& m : models) {
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) m.A(i, j) = (i == j ? 1.0 : 0.1) + 0.01 * n01(rng);
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 2; ++j) m.B(i, j) = 0.05 * (i + 1) * (j + 1) + 0.005 * n01(rng);
    }
    auto brute = [&](auto get, int rows, int cols) {
      std::vector<double> contributions;
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
          std::vector<double> v;
          for (const auto& m : models) v.push_back(get(m, i, j));
          double mean = 0;
          for (double x : v) mean += x;
          mean /= static_cast<double>(v.size());
          if (std::abs(mean) < 1e-6) continue;
          double ss = 0;
          for (double x : v) ss += (x - mean) * (x - mean);
          contributions.push_back(100.0 * std::sqrt(ss / static_cast<double>(v.size())) / std::abs(mean));
        }
      }
      double total = 0;
      for (double x : contributions) total += x;
      return total / static_cast<double>(contributions.size());
    };
    const ModelSimilarity s = model_similarity(models);
    CHECK(std::abs(s.std_pct_A - brute([](const AffineLinearModel& m, int i, int j) { return m.A(i, j); }, 6, 6)) <
          1e-10);
    CHECK(std::abs(s.std_pct_B - brute([](const AffineLinearModel& m, int i, int j) { return m.B(i, j); }, 6, 2)) <
          1e-10);
  }
}

TEST_CASE("heatmap fixtures") {
  const WorldParams w;
  const std::vector<TrialLog> one{make_log(Paradigm::user_only, std::vector<LanderState>(30, {5, 5, 0, 0, 0, 0}))};
  const Heatmap h = heatmap(one, 60, 40, w);
  int nonzero = 0;
  for (double c : h.cells) nonzero += c != 0.0;
  CHECK(nonzero == 1);
  CHECK(h.at(15, 15) == 1.0);

  const std::vector<TrialLog> two{make_log(Paradigm::user_only, std::vector<LanderState>(10, {1, 1, 0, 0, 0, 0})),
                                  make_log(Paradigm::user_only, std::vector<LanderState>(10, {19, 12, 0, 0, 0, 0}))};
  const Heatmap h2 = heatmap(two, 60, 40, w);
  CHECK(h2.at(3, 3) == 0.5);
  CHECK(h2.at(57, 36) == 0.5);

  // Outside the box clamps to the edge cells.
  const std::vector<TrialLog> out{make_log(Paradigm::user_only, {{-3, 50, 0, 0, 0, 0}})};
  CHECK(heatmap(out, 60, 40, w).at(0, 39) == 1.0);
}

TEST_CASE("heatmap of uniform samples stays within the binomial bound") {
  const WorldParams w;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> ux(0, w.width), uy(0, w.height);
  const int n = 1000000;
  std::vector<TrialLog> logs(10);
  for (auto& log : logs) {
    log.samples.resize(n / 10);
    for (auto& s : log.samples) s.state = {ux(rng), uy(rng), 0, 0, 0, 0};
  }
  const Heatmap h = heatmap(logs, 60, 40, w);
  const double p = 1.0 / 2400.0;
  double worst = 0, total = 0;
  for (double c : h.cells) {
    worst = std::max(worst, std::abs(c - p));
    total += c;
  }
  CHECK(total == doctest::Approx(1.0));
  CHECK(worst < 5.0 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("ergodic constant mode contributes nothing") {
  const ErgodicSpec spec = ErgodicSpec::defaults(WorldParams{});
  const ErgodicMetric metric(spec);
  const double expect = 1.0 / std::sqrt(spec.width * spec.height);
  CHECK(metric.target_coefficients()[0] == doctest::Approx(expect).epsilon(1e-14));
  const std::vector<double> xs{1.0, 17.0}, ys{12.0, 0.5};
  CHECK(metric.trajectory_coefficients(xs, ys)[0] == doctest::Approx(expect).epsilon(1e-14));
  // Recomputing the sum by hand over all modes gives the same distance.
  const auto c = metric.trajectory_coefficients(xs, ys);
  double eps = 0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double d = c[k] - metric.target_coefficients()[k];
    eps += metric.weights()[k] * d * d;
  }
  CHECK(metric.distance(xs, ys) == doctest::Approx(eps).epsilon(1e-12));
}

TEST_CASE("ergodic basis is orthonormal on the box") {
  ErgodicSpec spec = ErgodicSpec::defaults(WorldParams{});
  spec.k_max = 3;
  const ErgodicMetric metric(spec);
  // Midpoint rule on a fine grid: integral of F_k^2 is 1.
  const int g = 400;
  const int modes = metric.modes_per_axis();
  std::vector<double> sq(static_cast<std::size_t>(modes * modes), 0.0);
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      const double x = (i + 0.5) * spec.width / g, y = (j + 0.5) * spec.height / g;
      const double cell = spec.width * spec.height / (g * g);
      for (int k1 = 0; k1 < modes; ++k1)
        for (int k2 = 0; k2 < modes; ++k2) {
          const auto idx = static_cast<std::size_t>(k1 * modes + k2);
          const double f = std::cos(k1 * M_PI * x / spec.width) * std::cos(k2 * M_PI * y / spec.height) *
                           metric.normalizers()[idx];
          sq[idx] += f * f * cell;
        }
    }
  }
  for (double v : sq) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("samples of the goal distribution are nearly ergodic") {
  const ErgodicSpec spec = ErgodicSpec::defaults(WorldParams{});
  const ErgodicMetric metric(spec);
  double e3 = 0, e5 = 0;
  const int seeds = 4;
  for (int s = 0; s < seeds; ++s) {
    std::vector<double> ys;
    const auto xs = truncated_goal_gaussian(spec, 100000, 100 + s, ys);
    const double big = metric.distance(xs, ys);
    CHECK(big < 1e-3);
    e5 += big / seeds;
    const std::vector<double> xs3(xs.begin(), xs.begin() + 1000), ys3(ys.begin(), ys.begin() + 1000);
    e3 += metric.distance(xs3, ys3) / seeds;
  }
  MESSAGE("mean eps: N=1e3 " << e3 << ", N=1e5 " << e5);
  // Monte-Carlo error variance scales as 1/N: a hundredfold more samples, roughly a hundredth of the distance.
  CHECK(e5 < e3);
  CHECK(e3 / e5 > 20.0);
  CHECK(e3 / e5 < 500.0);
}

TEST_CASE("staying away from the goal is less ergodic") {
  const ErgodicSpec spec = ErgodicSpec::defaults(WorldParams{});
  const TrialLog far = make_log(Paradigm::user_only, std::vector<LanderState>(100, {2, 12, 0, 0, 0, 0}));
  const TrialLog home =
      make_log(Paradigm::user_only, std::vector<LanderState>(100, {spec.goal_x, spec.goal_y, 0, 0, 0, 0}));
  CHECK(ergodicity(far, spec) > ergodicity(home, spec));
  CHECK(ergodicity(home, spec) >= 0.0);
  CHECK_THROWS_AS(ergodicity(make_log(Paradigm::user_only, {}), spec), InvalidInput);
}
