#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "koopshare/controller.hpp"
#include "koopshare/error.hpp"
#include "koopshare/pilots.hpp"

using namespace koopshare;
using fixtures::lander_fit;
using fixtures::max_abs;

namespace {

int sign(double v) { return (v > 0) - (v < 0); }

// The rule restated per dimension, independent of the implementation.
double filter_reference(double user, double optimal) {
  if (sign(user) == 0 || sign(optimal) == 0) return user;
  return sign(user) == sign(optimal) ? user : 0.0;
}

}  // namespace

TEST_CASE("scalar Riccati fixture") {
  Eigen::MatrixXd A(1, 1), B(1, 1), Q(1, 1), R(1, 1);
  A << 0.5;
  B << 1.0;
  Q << 1.0;
  R << 1.0;
  const RiccatiResult r = solve_riccati(A, B, Q, R);
  const double oracle = (0.25 + std::sqrt(4.0625)) / 2.0;  // positive root of P^2 - 0.25 P - 1
  CHECK(std::abs(r.P(0, 0) - oracle) < 1e-9);
  CHECK(std::abs(r.P(0, 0) - 1.1327822) < 1e-7);
  CHECK(r.residual < kDareTolerance);
}

TEST_CASE("deadbeat reduction") {
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(3, 3);
  const RiccatiResult r = solve_riccati(Eigen::MatrixXd::Zero(3, 3), I, I, I);
  CHECK(max_abs(r.P - I) == 0.0);
  CHECK(max_abs(r.gain) == 0.0);
}

TEST_CASE("solver error paths") {
  Eigen::MatrixXd A(1, 1), B(1, 1), Q(1, 1), R(1, 1);
  A << 2.0;
  B << 0.0;  // unstable and uncontrollable
  Q << 1.0;
  R << 1.0;
  CHECK_THROWS_AS(solve_riccati(A, B, Q, R), NotStabilizable);
  B << 1.0;
  R << 0.0;
  CHECK_THROWS_AS(solve_riccati(A, B, Q, R), CostSpecError);
  CostSpec bad = CostSpec::defaults(WorldParams{});
  bad.R(1, 1) = -1.0;
  CHECK_THROWS_AS(bad.validate(), CostSpecError);
}

TEST_CASE("DARE certificate on the fitted lander model") {
  const auto& fit = lander_fit();
  CHECK(fit.lqr.dare_residual < 1e-10);
  CHECK(riccati_residual(fit.linear.A, fit.linear.B, fit.cost.Q, fit.cost.R, fit.lqr.P) < 1e-10);
  CHECK(fit.lqr.spectral_radius < 1.0);
  CHECK(spectral_radius(fit.linear.A - fit.linear.B * fit.lqr.gain) == doctest::Approx(fit.lqr.spectral_radius));
}

TEST_CASE("hover feedforward at the goal") {
  const auto& fit = lander_fit();
  const WorldParams w;
  const LanderState goal = LanderState::from_vector(fit.cost.goal);
  const ControlInput u = optimal_input(fit.lqr, fit.cost, goal);
  CHECK(u.main == doctest::Approx(w.hover_throttle()).epsilon(0.10));
  CHECK(std::abs(u.rot) < 0.1 * w.hover_throttle());
  CHECK(u == clamp_input(ControlInput::from_vector(fit.lqr.u_ff)));
}

TEST_CASE("zero gain gives the feedforward everywhere") {
  LqrSolution sol;
  sol.u_ff = Vec2(0.3, -0.2);
  const CostSpec cost = CostSpec::defaults(WorldParams{});
  for (const LanderState& s : {LanderState{1, 2, 3, 4, 5, 6}, LanderState{}, LanderState{19, 1, -1, 0, 0, 2}}) {
    CHECK(optimal_input(sol, cost, s) == ControlInput{0.3, -0.2});
  }
}

TEST_CASE("mirrored states give mirrored rotation commands") {
  const auto& fit = lander_fit();
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec6 dev(d(rng), d(rng), 0.2 * d(rng), d(rng), d(rng), 0.2 * d(rng));
    const Vec6 mirrored(-dev[0], dev[1], -dev[2], -dev[3], dev[4], -dev[5]);
    const Vec2 a = optimal_input_unclamped(fit.lqr, fit.cost, LanderState::from_vector(fit.cost.goal + dev));
    const Vec2 b = optimal_input_unclamped(fit.lqr, fit.cost, LanderState::from_vector(fit.cost.goal + mirrored));
    worst = std::max(worst, std::abs(a[1] + b[1]));
  }
  MESSAGE("worst mirrored u_rot mismatch " << worst);
  CHECK(worst < 1e-2);
}

TEST_CASE("half-plane filter fixtures") {
  CHECK(half_plane_filter({0.5, -0.3}, {0.2, 0.4}) == ControlInput{0.5, 0.0});
  CHECK(half_plane_filter({0.5, 0.5}, {0.5, 0.5}) == ControlInput{0.5, 0.5});
  CHECK(half_plane_filter({0.0, -0.7}, {0.9, 0.0}) == ControlInput{0.0, -0.7});
}

TEST_CASE("half-plane filter on the full sign grid") {
  const double vals[] = {-0.6, 0.0, 0.4};
  for (double um : vals)
    for (double ur : vals)
      for (double om : vals)
        for (double orot : vals) {
          const ControlInput out = half_plane_filter({um, ur}, {om, orot});
          CHECK(out.main == filter_reference(um, om));
          CHECK(out.rot == filter_reference(ur, orot));
        }
}

TEST_CASE("half-plane filter properties on random pairs") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> d(-1, 1);
  for (int i = 0; i < 10000; ++i) {
    const ControlInput user{d(rng), d(rng)}, opt{d(rng), d(rng)};
    const ControlInput once = half_plane_filter(user, opt);
    CHECK(half_plane_filter(once, opt) == once);           // idempotent
    CHECK(half_plane_filter(opt, opt) == opt);             // agreeing input passes
    CHECK(half_plane_filter(user, {0.0, 0.0}) == user);    // neutral optimum blocks nothing
    CHECK(std::abs(once.main) <= std::abs(user.main));
    CHECK(std::abs(once.rot) <= std::abs(user.rot));
  }
}

TEST_CASE("shared_step pass-through and full block") {
  const auto& fit = lander_fit();
  const WorldParams w;
  const LanderState s{9.0, 5.0, 0.05, 0.2, -0.3, 0.0};
  const ControlInput opt = optimal_input(fit.lqr, fit.cost, s);
  REQUIRE(opt.main > 0.0);
  REQUIRE(opt.rot != 0.0);

  const ControlInput agree{opt.main * 0.5, opt.rot * 0.5};
  const SharedStep a = shared_step(s, agree, fit.lqr, fit.cost, w);
  CHECK(a.applied == agree);
  CHECK(a.next == step(s, agree, w));

  // Main thrust cannot go negative, so only the rotation channel can be fully opposed;
  // a zero throttle opposes nothing.
  const ControlInput oppose{0.0, -opt.rot};
  const SharedStep b = shared_step(s, oppose, fit.lqr, fit.cost, w);
  CHECK(b.applied == ControlInput{0.0, 0.0});
  CHECK(b.next == step(s, {0.0, 0.0}, w));
}

TEST_CASE("logged shared rollout replays through the filter") {
  const auto& fit = lander_fit();
  PilotSpec spec;
  spec.skill = 0.3;
  spec.seed = 12;
  const TrialLog log =
      run_pilot_trial(Paradigm::shared_individual, 0, 777, spec, fit.world, fit.cost, fit.lqr);
  REQUIRE(log.samples.size() >= 20u);
  for (std::size_t t = 0; t < 20; ++t) {
    const LogSample& s = log.samples[t];
    REQUIRE(s.u_opt.has_value());
    CHECK(*s.u_opt == optimal_input(fit.lqr, fit.cost, s.state));
    CHECK(s.u_applied == half_plane_filter(clamp_input(s.u_user), *s.u_opt));
    CHECK(log.samples[t + 1].state == step(s.state, s.u_applied, fit.world));
  }
}

TEST_CASE("running cost") {
  CostSpec c;
  c.Q = Mat6::Identity();
  c.R = Mat2::Identity();
  CHECK(running_cost(LanderState{}, {0, 0}, c) == 0.0);
  CHECK(running_cost(LanderState{1, 0, 0, 0, 0, 0}, {0, 0}, c) == 1.0);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-2, 2);
  for (int i = 0; i < 50; ++i) {
    Mat6 M = Mat6::NullaryExpr([&](Eigen::Index, Eigen::Index) { return d(rng); });
    c.Q = M * M.transpose();
    Mat2 N = Mat2::NullaryExpr([&](Eigen::Index, Eigen::Index) { return d(rng); });
    c.R = N * N.transpose() + Mat2::Identity();
    c.goal = Vec6::NullaryExpr([&](Eigen::Index) { return d(rng); });
    const LanderState s = LanderState::from_vector(Vec6::NullaryExpr([&](Eigen::Index) { return d(rng); }));
    const ControlInput u{d(rng), d(rng)};
    const Vec6 dv = s.to_vector() - c.goal;
    const Vec2 uv = u.to_vector();
    double brute = 0;
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 6; ++b) brute += dv[a] * c.Q(a, b) * dv[b];
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) brute += uv[a] * c.R(a, b) * uv[b];
    CHECK(std::abs(running_cost(s, u, c) - brute) < 1e-12 * std::max(1.0, std::abs(brute)));
  }
}

TEST_CASE("finite horizon recursion") {
  AffineLinearModel zero;
  zero.B = Mat62::Identity();
  const auto one = finite_horizon_lqr(zero, CostSpec::defaults(WorldParams{}), 1);
  REQUIRE(one.size() == 1u);
  CHECK(max_abs(one[0].gain) == 0.0);
  CHECK_THROWS_AS(finite_horizon_lqr(zero, CostSpec::defaults(WorldParams{}), 0), InvalidInput);

  const auto& fit = lander_fit();
  // The infinite-horizon iteration converged in lqr.iterations steps; twice that
  // is ample for the backward recursion started from Q.
  const int horizon = 2 * fit.lqr.iterations + 100;
  const auto stages = finite_horizon_lqr(fit.linear, fit.cost, horizon);
  CHECK(max_abs(stages[0].gain - fit.lqr.gain) < 1e-8);
  // The goal is not an exact equilibrium of the fitted model, so the long-horizon
  // feedforward also corrects for the defect r; closed form of its fixed point.
  const Mat6& P = fit.lqr.P;
  const Vec6 r = -fit.lqr.equilibrium_residual;
  const Mat6 closed = fit.linear.A - fit.linear.B * fit.lqr.gain;
  const Vec6 p = (Mat6::Identity() - closed.transpose()).lu().solve(closed.transpose() * P * r);
  const Mat2 s = fit.cost.R + fit.linear.B.transpose() * P * fit.linear.B;
  const Vec2 u_ff_inf = fit.lqr.u_ff - s.ldlt().solve(fit.linear.B.transpose() * (P * r + p));
  MESSAGE("defect norm " << r.norm() << ", feedforward shift " << (u_ff_inf - fit.lqr.u_ff).norm());
  CHECK(max_abs(stages[0].u_ff - u_ff_inf) < 1e-8);

  // gain_0 for horizon h is stage (horizon - h) of the long recursion.
  double prev = std::numeric_limits<double>::infinity();
  for (int h = 1; h <= horizon; ++h) {
    const double gap = max_abs(stages[static_cast<std::size_t>(horizon - h)].gain - fit.lqr.gain);
    CHECK(gap <= prev + 1e-12);
    prev = gap;
  }
}
