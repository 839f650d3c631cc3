#pragma once

#include <cstdint>
#include <string_view>

#include <Eigen/Core>

namespace koopshare {

using Vec2 = Eigen::Vector2d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// Planar lander pose and rates. theta = 0 is upright, counterclockwise positive.
struct LanderState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double omega = 0.0;

  Vec6 to_vector() const { return (Vec6() << x, y, theta, vx, vy, omega).finished(); }
  static LanderState from_vector(const Vec6& v) { return {v[0], v[1], v[2], v[3], v[4], v[5]}; }
  bool finite() const;

  friend bool operator==(const LanderState&, const LanderState&) = default;
};

// Main throttle in [0, 1]; rotational command in [-1, 1] (positive = counterclockwise torque).
struct ControlInput {
  double main = 0.0;
  double rot = 0.0;

  Vec2 to_vector() const { return {main, rot}; }
  static ControlInput from_vector(const Vec2& v) { return {v[0], v[1]}; }
  bool finite() const;

  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

struct WorldParams {
  double width = 20.0;     // L1
  double height = 13.33;   // L2
  double gravity = 1.62;
  double mass = 1.0;
  double inertia = 0.25;
  double main_thrust = 4.0;
  double side_thrust = 0.4;
  double arm = 0.5;
  double dt = 0.02;
  double start_x = 10.0;
  double start_y = 10.0;
  double goal_x = 10.0;
  double goal_y = 6.0;
  double goal_radius = 0.5;
  double tol_v = 0.1;
  double tol_omega = 0.1;
  double tol_theta = 0.1;
  int max_steps = 1500;
  // Initial-condition distribution.
  double start_position_std = 0.2;
  double start_speed = 1.0;
  double start_spin = 0.5;

  // Throws ConfigError when any invariant is violated.
  void validate() const;
  double hover_throttle() const { return mass * gravity / main_thrust; }

  friend bool operator==(const WorldParams&, const WorldParams&) = default;
};

enum class TrialStatus { running, success, crash, out_of_bounds, timeout };

std::string_view to_string(TrialStatus status);
TrialStatus trial_status_from_string(std::string_view name);

struct TrialOutcome {
  TrialStatus status = TrialStatus::running;
  int steps = 0;
  double wall_time = 0.0;

  friend bool operator==(const TrialOutcome&, const TrialOutcome&) = default;
};

ControlInput clamp_input(const ControlInput& raw);

// One semi-implicit Euler step. The input must already be within actuator bounds.
LanderState step(const LanderState& state, const ControlInput& input, const WorldParams& params);

LanderState sample_initial(std::uint64_t seed, const WorldParams& params);

// Verdict for a state after `steps` completed steps. Crash and out-of-bounds
// win over success; timeout applies only when nothing else does.
TrialStatus judge(const LanderState& state, int steps, const WorldParams& params);

// Heading wrapped to (-pi, pi].
double wrap_angle(double theta);

}  // namespace koopshare
