#include "koopshare/lander.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "koopshare/error.hpp"

namespace koopshare {

bool LanderState::finite() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(theta) && std::isfinite(vx) &&
         std::isfinite(vy) && std::isfinite(omega);
}

bool ControlInput::finite() const { return std::isfinite(main) && std::isfinite(rot); }

void WorldParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("world: ") + what);
  };
  require(dt > 0.0, "dt must be positive");
  require(width > 0.0 && height > 0.0, "domain extents must be positive");
  require(gravity > 0.0 && mass > 0.0 && inertia > 0.0, "physical constants must be positive");
  require(main_thrust > 0.0 && side_thrust > 0.0 && arm > 0.0, "actuator constants must be positive");
  require(goal_x > 0.0 && goal_x < width && goal_y > 0.0 && goal_y < height,
          "goal must lie strictly inside the domain");
  require(goal_radius > 0.0, "goal_radius must be positive");
  require(tol_v > 0.0 && tol_omega > 0.0 && tol_theta > 0.0, "tolerances must be positive");
  require(max_steps > 0, "max_steps must be positive");
  require(main_thrust / (mass * gravity) > 1.0, "main thrust cannot hover the lander");
  require(start_position_std >= 0.0 && start_speed >= 0.0 && start_spin >= 0.0,
          "initial-condition scales must be non-negative");
}

std::string_view to_string(TrialStatus status) {
  switch (status) {
    case TrialStatus::running: return "running";
    case TrialStatus::success: return "success";
    case TrialStatus::crash: return "crash";
    case TrialStatus::out_of_bounds: return "out_of_bounds";
    case TrialStatus::timeout: return "timeout";
  }
  return "running";
}

TrialStatus trial_status_from_string(std::string_view name) {
  for (auto s : {TrialStatus::running, TrialStatus::success, TrialStatus::crash,
                 TrialStatus::out_of_bounds, TrialStatus::timeout}) {
    if (to_string(s) == name) return s;
  }
  throw ParseError("unknown trial status '" + std::string(name) + "'");
}

ControlInput clamp_input(const ControlInput& raw) {
  if (!raw.finite()) throw InvalidInput("clamp_input: non-finite control input");
  return {std::clamp(raw.main, 0.0, 1.0), std::clamp(raw.rot, -1.0, 1.0)};
}

LanderState step(const LanderState& s, const ControlInput& u, const WorldParams& p) {
  if (!s.finite()) throw InvalidInput("step: non-finite lander state");
  if (!u.finite()) throw InvalidInput("step: non-finite control input");

  const double sin_t = std::sin(s.theta);
  const double cos_t = std::cos(s.theta);
  const double main_acc = p.main_thrust * u.main / p.mass;
  const double side_acc = p.side_thrust * u.rot / p.mass;
  const double ax = -main_acc * sin_t + side_acc * cos_t;
  const double ay = main_acc * cos_t + side_acc * sin_t - p.gravity;
  const double alpha = p.arm * p.side_thrust * u.rot / p.inertia;

  LanderState n;
  n.vx = s.vx + ax * p.dt;
  n.vy = s.vy + ay * p.dt;
  n.omega = s.omega + alpha * p.dt;
  n.x = s.x + n.vx * p.dt;
  n.y = s.y + n.vy * p.dt;
  n.theta = s.theta + n.omega * p.dt;
  if (!n.finite()) throw InvalidInput("step: integration produced a non-finite state");
  return n;
}

LanderState sample_initial(std::uint64_t seed, const WorldParams& p) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  LanderState s;
  s.x = p.start_x + p.start_position_std * noise(rng);
  s.y = p.start_y + p.start_position_std * noise(rng);
  s.theta = 0.0;
  s.vx = p.start_speed * unit(rng);
  s.vy = p.start_speed * unit(rng);
  s.omega = p.start_spin * unit(rng);
  return s;
}

double wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(theta, two_pi);
  if (w > std::numbers::pi) w -= two_pi;
  if (w <= -std::numbers::pi) w += two_pi;
  return w;
}

TrialStatus judge(const LanderState& s, int steps, const WorldParams& p) {
  if (s.y <= 0.0) return TrialStatus::crash;
  if (s.x < 0.0 || s.x > p.width || s.y > p.height) return TrialStatus::out_of_bounds;
  const double dist = std::hypot(s.x - p.goal_x, s.y - p.goal_y);
  if (dist <= p.goal_radius && std::abs(s.vx) <= p.tol_v && std::abs(s.vy) <= p.tol_v &&
      std::abs(s.omega) <= p.tol_omega && std::abs(wrap_angle(s.theta)) <= p.tol_theta) {
    return TrialStatus::success;
  }
  if (steps >= p.max_steps) return TrialStatus::timeout;
  return TrialStatus::running;
}

}  // namespace koopshare
