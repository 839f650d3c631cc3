#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

#include "koopshare/controller.hpp"
#include "koopshare/lander.hpp"

namespace koopshare {

enum class PilotKind { expert, novice };

std::string_view to_string(PilotKind kind);
PilotKind pilot_kind_from_string(std::string_view name);

struct PilotSpec {
  PilotKind kind = PilotKind::novice;
  double skill = 0.5;  // novices only, in [0, 1]
  // When unset these follow from kind and skill:
  //   expert: delay 0, noise 0.02
  //   novice: delay round(10 (1 - skill)), noise 0.3 (1 - skill)
  std::optional<int> reaction_delay;
  std::optional<double> noise_std;
  std::uint64_t seed = 0;

  int effective_delay() const;
  double effective_noise() const;
  // Multiplier on the nominal feedback gains: 1 for experts, 0.3 + 0.7 skill for novices.
  double gain_scale() const;
  void validate() const;

  friend bool operator==(const PilotSpec&, const PilotSpec&) = default;
};

// Hover linearization the synthetic pilots fly with (small angle, thrust near
// hover throttle u_h = m g / T_main), discretized with the simulator's
// semi-implicit Euler:
//   ddx     = -(T_main u_h / m) theta + (T_side / m) u_rot
//   ddy     =  (T_main / m) u_main - g
//   ddtheta =  (arm T_side / I) u_rot
AffineLinearModel nominal_hover_model(const WorldParams& world);

// Weights of the pilots' internal regulator, fixed by calibration against the
// expert and novice success targets. They weight attitude heavily and position
// lightly, so the pilots' approach differs from the shared controller's.
CostSpec nominal_pilot_cost(const WorldParams& world);

// Feedback gain of the pilots' internal regulator on the nominal model.
Mat26 nominal_pilot_gain(const WorldParams& world);

// A stateful synthetic pilot. Owns its RNG and the held-input buffer that
// models reaction delay. One instance per trial.
class Pilot {
 public:
  Pilot(const PilotSpec& spec, const WorldParams& world);
  Pilot(const PilotSpec& spec, const WorldParams& world, const Mat26& nominal_gain);

  // Input for the current tick. Within actuator bounds except for additive noise.
  ControlInput input(const LanderState& state);

  const PilotSpec& spec() const { return spec_; }

 private:
  PilotSpec spec_;
  WorldParams world_;
  Mat26 gain_;
  Vec6 goal_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> noise_{0.0, 1.0};
  ControlInput held_{};
  int hold_remaining_ = 0;
};

}  // namespace koopshare
