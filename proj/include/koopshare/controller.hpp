#pragma once

#include <vector>

#include <Eigen/Core>

#include "koopshare/koopman.hpp"
#include "koopshare/lander.hpp"

namespace koopshare {

using Mat2 = Eigen::Matrix2d;
using Mat26 = Eigen::Matrix<double, 2, 6>;

// Running cost l(x, u) = (x - goal)^T Q (x - goal) + u^T R u.
struct CostSpec {
  Mat6 Q = Mat6::Zero();
  Mat2 R = Mat2::Identity();
  Vec6 goal = Vec6::Zero();

  // Q = diag(10, 10, 50, 1, 1, 5), R = diag(14.24829, 58.45372) (calibrated), goal at the world's goal position at rest.
  static CostSpec defaults(const WorldParams& world);
  // Throws CostSpecError unless Q is symmetric PSD and R symmetric PD.
  void validate() const;
};

struct LqrSolution {
  Mat6 P = Mat6::Zero();
  Mat26 gain = Mat26::Zero();
  Vec2 u_ff = Vec2::Zero();
  // (I - A) goal - c - B u_ff; zero when the goal is an exact equilibrium.
  Vec6 equilibrium_residual = Vec6::Zero();
  double dare_residual = 0.0;
  double spectral_radius = 0.0;
  int iterations = 0;
};

// Dimension-generic Riccati core, used by solve_dare and directly for small fixtures.
struct RiccatiResult {
  Eigen::MatrixXd P;
  Eigen::MatrixXd gain;  // (R + B^T P B)^-1 B^T P A
  double residual = 0.0;
  int iterations = 0;
};

inline constexpr double kDareTolerance = 1e-10;
inline constexpr int kDareMaxIterations = 100000;

// Fixed-point iteration P <- A^T P A - A^T P B (R + B^T P B)^-1 B^T P A + Q from P = Q,
// stopping once the infinity-norm residual is below tol.
RiccatiResult solve_riccati(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                            const Eigen::MatrixXd& R, double tol = kDareTolerance,
                            int max_iter = kDareMaxIterations);

double riccati_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                        const Eigen::MatrixXd& R, const Eigen::MatrixXd& P);

double spectral_radius(const Eigen::MatrixXd& M);

LqrSolution solve_dare(const AffineLinearModel& model, const CostSpec& cost, double tol = kDareTolerance,
                       int max_iter = kDareMaxIterations);

// u* = clamp(u_ff - gain (x - goal))
ControlInput optimal_input(const LqrSolution& sol, const CostSpec& cost, const LanderState& state);
Vec2 optimal_input_unclamped(const LqrSolution& sol, const CostSpec& cost, const LanderState& state);

// Per dimension: pass the pilot's value if it does not oppose the optimal
// input's sign (a zero product passes), otherwise output exactly 0.
ControlInput half_plane_filter(const ControlInput& user, const ControlInput& optimal);

struct SharedStep {
  ControlInput applied;
  ControlInput optimal;
  LanderState next;
};

SharedStep shared_step(const LanderState& state, const ControlInput& user_input, const LqrSolution& sol,
                       const CostSpec& cost, const WorldParams& params);

double running_cost(const LanderState& state, const ControlInput& input, const CostSpec& cost);

struct HorizonStage {
  Mat26 gain = Mat26::Zero();
  Vec2 u_ff = Vec2::Zero();
};

// Backward Riccati recursion over `horizon` stages with terminal weight Q.
// Element t is the policy for stage t; u_t = u_ff_t - gain_t (x_t - goal).
std::vector<HorizonStage> finite_horizon_lqr(const AffineLinearModel& model, const CostSpec& cost, int horizon);

}  // namespace koopshare
