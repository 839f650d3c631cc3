#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "koopshare/controller.hpp"
#include "koopshare/koopman.hpp"
#include "koopshare/lander.hpp"

namespace koopshare {

enum class Paradigm { user_only, shared_individual, shared_general, shared_expert };

inline constexpr Paradigm kAllParadigms[] = {Paradigm::user_only, Paradigm::shared_individual,
                                             Paradigm::shared_general, Paradigm::shared_expert};

std::string_view to_string(Paradigm p);
// Accepts the four canonical names; "shared" is read as shared_individual.
Paradigm paradigm_from_string(std::string_view name);
inline bool is_shared(Paradigm p) { return p != Paradigm::user_only; }

struct LogSample {
  double t = 0.0;
  LanderState state;  // state the inputs were computed from
  ControlInput u_user;  // raw pilot input, before clamping
  std::optional<ControlInput> u_opt;  // present iff the paradigm is shared
  ControlInput u_applied;

  friend bool operator==(const LogSample&, const LogSample&) = default;
};

struct TrialLog {
  int version = 1;
  Paradigm paradigm = Paradigm::user_only;
  int pilot_id = 0;
  std::uint64_t seed = 0;
  double dt = 0.02;
  TrialOutcome outcome;
  std::vector<LogSample> samples;

  // Throws ParseError when the structural invariants do not hold.
  void validate() const;
  // Joint (state, applied input) samples for model fitting.
  Trajectory as_trajectory() const;

  friend bool operator==(const TrialLog&, const TrialLog&) = default;
};

// Steps one trial sample by sample. The offline runner and the live server
// both drive trials through this class, so identical per-tick inputs give
// identical logs.
class TrialRunner {
 public:
  TrialRunner(Paradigm paradigm, int pilot_id, std::uint64_t seed, const WorldParams& world, const CostSpec& cost,
              std::optional<LqrSolution> solution);

  bool running() const { return status_ == TrialStatus::running; }
  TrialStatus status() const { return status_; }
  const LanderState& state() const { return state_; }
  int steps() const { return static_cast<int>(log_.samples.size()); }

  // Records one sample and advances the simulator. Requires running().
  const LogSample& advance(const ControlInput& user_input);

  // Ends the trial early (client abort); keeps the verdict if already decided.
  void abort();

  const TrialLog& log() const { return log_; }

 private:
  WorldParams world_;
  CostSpec cost_;
  std::optional<LqrSolution> solution_;
  LanderState state_;
  TrialStatus status_;
  TrialLog log_;
};

using InputSource = std::function<ControlInput(const LanderState& state, int step)>;

TrialLog run_trial(Paradigm paradigm, int pilot_id, std::uint64_t seed, const WorldParams& world,
                   const CostSpec& cost, const std::optional<LqrSolution>& solution, const InputSource& pilot);

// Pure mixing of (master_seed, pilot, paradigm, trial) into a trial seed.
std::uint64_t derive_seed(std::uint64_t master_seed, int pilot_id, Paradigm paradigm, int trial_index);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace koopshare
