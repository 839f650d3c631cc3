#include "koopshare/pilots.hpp"

#include <cmath>
#include <string>

#include "koopshare/error.hpp"

namespace koopshare {

std::string_view to_string(PilotKind kind) { return kind == PilotKind::expert ? "expert" : "novice"; }

PilotKind pilot_kind_from_string(std::string_view name) {
  if (name == "expert") return PilotKind::expert;
  if (name == "novice") return PilotKind::novice;
  throw ConfigError("unknown pilot kind '" + std::string(name) + "'");
}

int PilotSpec::effective_delay() const {
  if (reaction_delay) return *reaction_delay;
  return kind == PilotKind::expert ? 0 : static_cast<int>(std::lround(10.0 * (1.0 - skill)));
}

double PilotSpec::effective_noise() const {
  if (noise_std) return *noise_std;
  return kind == PilotKind::expert ? 0.02 : 0.3 * (1.0 - skill);
}

double PilotSpec::gain_scale() const { return kind == PilotKind::expert ? 1.0 : 0.3 + 0.7 * skill; }

void PilotSpec::validate() const {
  if (!(skill >= 0.0 && skill <= 1.0)) throw ConfigError("pilot: skill must lie in [0, 1]");
  if (reaction_delay && *reaction_delay < 0) throw ConfigError("pilot: reaction_delay must be >= 0");
  if (noise_std && !(*noise_std >= 0.0)) throw ConfigError("pilot: noise_std must be >= 0");
}

AffineLinearModel nominal_hover_model(const WorldParams& w) {
  const double dt = w.dt;
  const double u_hover = w.hover_throttle();
  // Continuous accelerations as linear maps of (theta, u_main, u_rot).
  Eigen::Matrix<double, 3, 6> acc_state = Eigen::Matrix<double, 3, 6>::Zero();
  acc_state(0, 2) = -w.main_thrust * u_hover / w.mass;
  Eigen::Matrix<double, 3, 2> acc_input;
  acc_input << 0.0, w.side_thrust / w.mass,
               w.main_thrust / w.mass, 0.0,
               0.0, w.arm * w.side_thrust / w.inertia;
  Eigen::Vector3d acc_bias(0.0, -w.gravity, 0.0);

  // Semi-implicit Euler: v' = v + a dt, p' = p + v' dt.
  AffineLinearModel m;
  m.A.setIdentity();
  m.A.block<3, 3>(0, 3) = dt * Eigen::Matrix3d::Identity();
  m.A.block<3, 6>(3, 0) += dt * acc_state;
  m.A.block<3, 6>(0, 0) += dt * dt * acc_state;
  m.B.block<3, 2>(3, 0) = dt * acc_input;
  m.B.block<3, 2>(0, 0) = dt * dt * acc_input;
  m.c.segment<3>(3) = dt * acc_bias;
  m.c.segment<3>(0) = dt * dt * acc_bias;
  return m;
}

CostSpec nominal_pilot_cost(const WorldParams& world) {
  CostSpec cost;
  cost.Q.diagonal() << 0.00626, 0.04869, 59.49502, 0.14554, 0.08622, 0.38975;
  cost.R = Vec2(3.18451, 1.40231).asDiagonal();
  cost.goal << world.goal_x, world.goal_y, 0.0, 0.0, 0.0, 0.0;
  return cost;
}

Mat26 nominal_pilot_gain(const WorldParams& world) {
  const AffineLinearModel m = nominal_hover_model(world);
  const CostSpec cost = nominal_pilot_cost(world);
  return solve_riccati(m.A, m.B, cost.Q, cost.R).gain;
}

Pilot::Pilot(const PilotSpec& spec, const WorldParams& world)
    : Pilot(spec, world, nominal_pilot_gain(world)) {}

Pilot::Pilot(const PilotSpec& spec, const WorldParams& world, const Mat26& nominal_gain)
    : spec_(spec), world_(world), gain_(spec.gain_scale() * nominal_gain), rng_(spec.seed) {
  spec_.validate();
  goal_ << world.goal_x, world.goal_y, 0.0, 0.0, 0.0, 0.0;
}

ControlInput Pilot::input(const LanderState& state) {
  if (hold_remaining_ > 0) {
    --hold_remaining_;
    return held_;
  }
  const Vec2 feedback = Vec2(world_.hover_throttle(), 0.0) + gain_ * (goal_ - state.to_vector());
  ControlInput u = clamp_input(ControlInput::from_vector(feedback));
  const double sigma = spec_.effective_noise();
  if (sigma > 0.0) {
    u.main += sigma * noise_(rng_);
    u.rot += sigma * noise_(rng_);
  }
  held_ = u;
  hold_remaining_ = spec_.effective_delay();
  return u;
}

}  // namespace koopshare
