#pragma once

#include <random>

#include "koopshare/controller.hpp"
#include "koopshare/experiment.hpp"

namespace fixtures {

using namespace koopshare;

// Model fitted to the default expert's demonstrations; built once per binary.
struct LanderFit {
  WorldParams world;
  CostSpec cost = CostSpec::defaults(WorldParams{});
  KoopmanModel model;
  AffineLinearModel linear;
  LqrSolution lqr;
};

inline const LanderFit& lander_fit() {
  static const LanderFit fit = [] {
    LanderFit f;
    const ExperimentConfig config = ExperimentConfig::defaults(1);
    auto logs = collect_demonstrations(config.expert, kExpertPilotId, config.trials_train, config.master_seed,
                                       f.world, f.cost);
    std::vector<const TrialLog*> ptrs;
    for (const auto& l : logs) ptrs.push_back(&l);
    f.model = fit_from_logs(ptrs, kDefaultRidge);
    f.linear = extract_linear(f.model);
    f.lqr = solve_dare(f.linear, f.cost);
    return f;
  }();
  return fit;
}

inline double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace fixtures
