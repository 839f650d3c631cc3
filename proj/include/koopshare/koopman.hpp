#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "koopshare/lander.hpp"

namespace koopshare {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat62 = Eigen::Matrix<double, 6, 2>;

inline constexpr int kStateDim = 6;
inline constexpr int kControlDim = 2;

// One snapshot of the joint pilot + lander system.
struct JointSample {
  LanderState state;
  ControlInput input;
  double t = 0.0;
};

using Trajectory = std::vector<JointSample>;

enum class BasisKind { linear_with_bias };

std::string_view to_string(BasisKind kind);
// Throws ConfigError for families this build cannot lift.
BasisKind basis_kind_from_string(std::string_view name);

// Lifted coordinates: bias at 0, state at 1..6, control at 7..8.
struct BasisSpec {
  BasisKind kind = BasisKind::linear_with_bias;

  static constexpr int bias_index = 0;
  static constexpr int state_offset = 1;
  static constexpr int control_offset = 1 + kStateDim;

  int lifted_dim() const;

  friend bool operator==(const BasisSpec&, const BasisSpec&) = default;
};

struct KoopmanModel {
  Eigen::MatrixXd K;  // lifted_dim x lifted_dim; z_next ~= K^T z
  BasisSpec basis;
  double ridge = 0.0;
  std::size_t n_samples = 0;

  // Throws ParseError on wrong shape or non-finite entries.
  void validate() const;
};

// x_next = A x + B u + c
struct AffineLinearModel {
  Mat6 A = Mat6::Zero();
  Mat62 B = Mat62::Zero();
  Vec6 c = Vec6::Zero();

  Vec6 apply(const Vec6& x, const Vec2& u) const { return A * x + B * u + c; }
};

inline constexpr double kDefaultRidge = 1e-6;

Eigen::VectorXd lift(const JointSample& sample, const BasisSpec& basis);

// Number of consecutive within-trajectory pairs fit_koopman would use.
std::size_t count_snapshot_pairs(std::span<const Trajectory> trajectories);

// Closed-form ridge EDMD: K = (Zx Zx^T + ridge I)^-1 Zx Zy^T, with snapshot
// pairs taken inside each trajectory only.
KoopmanModel fit_koopman(std::span<const Trajectory> trajectories, const BasisSpec& basis,
                         double ridge = kDefaultRidge);

// The regularized least-squares objective fit_koopman minimizes.
double fit_objective(std::span<const Trajectory> trajectories, const KoopmanModel& model);

AffineLinearModel extract_linear(const KoopmanModel& model);

LanderState predict(const KoopmanModel& model, const JointSample& sample);

}  // namespace koopshare
