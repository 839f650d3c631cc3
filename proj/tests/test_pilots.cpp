#include <doctest.h>

#include "koopshare/error.hpp"
#include "koopshare/experiment.hpp"
#include "koopshare/pilots.hpp"

using namespace koopshare;

namespace {

PilotSpec noiseless(PilotKind kind, double skill) {
  PilotSpec p;
  p.kind = kind;
  p.skill = skill;
  p.noise_std = 0.0;
  p.seed = 3;
  return p;
}

int successes(const PilotSpec& pilot, int trials, std::uint64_t master) {
  const WorldParams w;
  const CostSpec cost = CostSpec::defaults(w);
  int ok = 0;
  for (int i = 0; i < trials; ++i) {
    const TrialLog log = run_pilot_trial(Paradigm::user_only, 0, demo_seed(master, 0, i), pilot, w, cost, std::nullopt);
    ok += log.outcome.status == TrialStatus::success;
  }
  return ok;
}

}  // namespace

TEST_CASE("derived skill parameters") {
  PilotSpec p;
  p.skill = 0.3;
  CHECK(p.effective_delay() == 7);
  CHECK(p.effective_noise() == doctest::Approx(0.21));
  CHECK(p.gain_scale() == doctest::Approx(0.51));
  p.kind = PilotKind::expert;
  CHECK(p.effective_delay() == 0);
  CHECK(p.effective_noise() == 0.02);
  CHECK(p.gain_scale() == 1.0);
}

TEST_CASE("spec validation") {
  PilotSpec p;
  p.skill = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.skill = 0.5;
  p.reaction_delay = -1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.reaction_delay = 2;
  p.noise_std = -0.1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("expert at the goal flies the hover feedforward") {
  const WorldParams w;
  Pilot pilot(noiseless(PilotKind::expert, 1.0), w);
  const ControlInput u = pilot.input({w.goal_x, w.goal_y, 0, 0, 0, 0});
  CHECK(u.main == doctest::Approx(0.405).epsilon(1e-12));
  CHECK(u.rot == 0.0);
}

TEST_CASE("skill-1 novice without delay or noise is the expert") {
  const WorldParams w;
  PilotSpec novice = noiseless(PilotKind::novice, 1.0);
  novice.reaction_delay = 0;
  Pilot a(novice, w), b(noiseless(PilotKind::expert, 1.0), w);
  LanderState s = sample_initial(5, w);
  for (int t = 0; t < 200; ++t) {
    const ControlInput ua = a.input(s), ub = b.input(s);
    CHECK(ua == ub);
    s = step(s, clamp_input(ua), w);
  }
}

TEST_CASE("same seed, same trajectory, same inputs") {
  const WorldParams w;
  PilotSpec p;
  p.skill = 0.4;
  p.seed = 77;
  Pilot a(p, w), b(p, w);
  LanderState s = sample_initial(8, w);
  for (int t = 0; t < 300; ++t) {
    const ControlInput ua = a.input(s);
    CHECK(ua == b.input(s));
    s = step(s, clamp_input(ua), w);
  }
}

TEST_CASE("reaction delay holds the input") {
  const WorldParams w;
  PilotSpec p;
  p.skill = 0.5;  // delay 5
  p.seed = 1;
  Pilot pilot(p, w);
  LanderState s = sample_initial(2, w);
  const ControlInput first = pilot.input(s);
  for (int t = 0; t < 5; ++t) {
    s = step(s, clamp_input(first), w);
    CHECK(pilot.input(s) == first);
  }
  s = step(s, clamp_input(first), w);
  CHECK_FALSE(pilot.input(s) == first);
}

TEST_CASE("calibration gap between expert and weak novice") {
  const ExperimentConfig config = ExperimentConfig::defaults(1);
  const int expert = successes(config.expert, 50, config.master_seed);
  PilotSpec weak;
  weak.skill = 0.3;
  weak.seed = 4242;
  const int novice = successes(weak, 50, config.master_seed);
  MESSAGE("expert " << expert << "/50, novice(0.3) " << novice << "/50");
  CHECK(expert >= 45);
  CHECK(novice <= 30);
}
