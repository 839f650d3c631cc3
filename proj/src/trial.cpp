#include "koopshare/trial.hpp"

#include <cmath>
#include <string>

#include "koopshare/error.hpp"

namespace koopshare {

std::string_view to_string(Paradigm p) {
  switch (p) {
    case Paradigm::user_only: return "user_only";
    case Paradigm::shared_individual: return "shared_individual";
    case Paradigm::shared_general: return "shared_general";
    case Paradigm::shared_expert: return "shared_expert";
  }
  return "user_only";
}

Paradigm paradigm_from_string(std::string_view name) {
  for (Paradigm p : kAllParadigms) {
    if (to_string(p) == name) return p;
  }
  if (name == "shared") return Paradigm::shared_individual;
  throw UsageError("unknown paradigm '" + std::string(name) +
                   "' (expected user_only, shared_individual, shared_general or shared_expert)");
}

void TrialLog::validate() const {
  if (version != 1) throw ParseError("trial log: unsupported version " + std::to_string(version));
  if (!(dt > 0.0)) throw ParseError("trial log: dt must be positive");
  if (outcome.status == TrialStatus::running) throw ParseError("trial log: outcome must be a final verdict");
  if (static_cast<std::size_t>(outcome.steps) != samples.size()) {
    throw ParseError("trial log: sample count " + std::to_string(samples.size()) + " does not match steps " +
                     std::to_string(outcome.steps));
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (std::abs(s.t - static_cast<double>(i) * dt) > 1e-9 * (1.0 + s.t)) {
      throw ParseError("trial log: non-uniform timestamp at sample " + std::to_string(i));
    }
    if (s.u_opt.has_value() != is_shared(paradigm)) {
      throw ParseError("trial log: u_opt must be present exactly for shared paradigms");
    }
    if (!s.state.finite() || !s.u_user.finite() || !s.u_applied.finite() || (s.u_opt && !s.u_opt->finite())) {
      throw ParseError("trial log: non-finite value at sample " + std::to_string(i));
    }
  }
}

Trajectory TrialLog::as_trajectory() const {
  Trajectory traj;
  traj.reserve(samples.size());
  for (const auto& s : samples) traj.push_back({s.state, s.u_applied, s.t});
  return traj;
}

TrialRunner::TrialRunner(Paradigm paradigm, int pilot_id, std::uint64_t seed, const WorldParams& world,
                         const CostSpec& cost, std::optional<LqrSolution> solution)
    : world_(world), cost_(cost), solution_(std::move(solution)) {
  if (is_shared(paradigm) && !solution_) throw ConfigError("shared paradigm requires an LQR solution");
  world_.validate();
  state_ = sample_initial(seed, world_);
  status_ = judge(state_, 0, world_);
  log_.paradigm = paradigm;
  log_.pilot_id = pilot_id;
  log_.seed = seed;
  log_.dt = world_.dt;
  log_.samples.reserve(static_cast<std::size_t>(world_.max_steps));
  log_.outcome = {status_, 0, 0.0};
}

const LogSample& TrialRunner::advance(const ControlInput& user_input) {
  if (!running()) throw InvalidInput("TrialRunner::advance: trial already finished");
  LogSample sample;
  sample.t = static_cast<double>(log_.samples.size()) * world_.dt;
  sample.state = state_;
  sample.u_user = user_input;
  const ControlInput clamped = clamp_input(user_input);
  if (is_shared(log_.paradigm)) {
    const SharedStep s = shared_step(state_, user_input, *solution_, cost_, world_);
    sample.u_opt = s.optimal;
    sample.u_applied = s.applied;
    state_ = s.next;
  } else {
    sample.u_applied = clamped;
    state_ = step(state_, clamped, world_);
  }
  log_.samples.push_back(sample);
  const int steps = static_cast<int>(log_.samples.size());
  status_ = judge(state_, steps, world_);
  log_.outcome = {status_, steps, steps * world_.dt};
  return log_.samples.back();
}

void TrialRunner::abort() {
  if (running()) {
    status_ = TrialStatus::timeout;
    log_.outcome.status = status_;
  }
}

TrialLog run_trial(Paradigm paradigm, int pilot_id, std::uint64_t seed, const WorldParams& world,
                   const CostSpec& cost, const std::optional<LqrSolution>& solution, const InputSource& pilot) {
  TrialRunner runner(paradigm, pilot_id, seed, world, cost, solution);
  while (runner.running()) runner.advance(pilot(runner.state(), runner.steps()));
  return runner.log();
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master_seed, int pilot_id, Paradigm paradigm, int trial_index) {
  std::uint64_t s = mix_seed(master_seed, static_cast<std::uint64_t>(pilot_id) + 1);
  s = mix_seed(s, static_cast<std::uint64_t>(paradigm) + 101);
  return mix_seed(s, static_cast<std::uint64_t>(trial_index) + 10007);
}

}  // namespace koopshare
