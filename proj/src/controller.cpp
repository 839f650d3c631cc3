#include "koopshare/controller.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "koopshare/error.hpp"

namespace koopshare {

CostSpec CostSpec::defaults(const WorldParams& world) {
  CostSpec cost;
  cost.Q.diagonal() << 10.0, 10.0, 50.0, 1.0, 1.0, 5.0;
  cost.R = Vec2(14.24829, 58.45372).asDiagonal();
  cost.goal << world.goal_x, world.goal_y, 0.0, 0.0, 0.0, 0.0;
  return cost;
}

void CostSpec::validate() const {
  if (!Q.allFinite() || !R.allFinite() || !goal.allFinite()) throw CostSpecError("cost: non-finite entries");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw CostSpecError("cost: Q is not symmetric");
  if ((R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw CostSpecError("cost: R is not symmetric");
  const Eigen::SelfAdjointEigenSolver<Mat6> q_eig(Q);
  if (q_eig.eigenvalues().minCoeff() < -1e-12) throw CostSpecError("cost: Q is not positive semi-definite");
  const Eigen::SelfAdjointEigenSolver<Mat2> r_eig(R);
  if (r_eig.eigenvalues().minCoeff() <= 0.0) throw CostSpecError("cost: R is not positive definite");
}

namespace {

Eigen::MatrixXd riccati_update(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                               const Eigen::MatrixXd& R, const Eigen::MatrixXd& P, Eigen::MatrixXd* gain) {
  const Eigen::MatrixXd bt_p = B.transpose() * P;
  const Eigen::MatrixXd s = R + bt_p * B;
  const Eigen::MatrixXd k = s.ldlt().solve(bt_p * A);
  if (gain) *gain = k;
  Eigen::MatrixXd next = A.transpose() * P * A - (A.transpose() * P * B) * k + Q;
  return 0.5 * (next + next.transpose());
}

}  // namespace

double riccati_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                        const Eigen::MatrixXd& R, const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd bt_p = B.transpose() * P;
  const Eigen::MatrixXd s = R + bt_p * B;
  const Eigen::MatrixXd rhs = A.transpose() * P * A - (A.transpose() * P * B) * s.ldlt().solve(bt_p * A) + Q;
  return (P - rhs).cwiseAbs().rowwise().sum().maxCoeff();
}

double spectral_radius(const Eigen::MatrixXd& M) {
  return Eigen::EigenSolver<Eigen::MatrixXd>(M, false).eigenvalues().cwiseAbs().maxCoeff();
}

RiccatiResult solve_riccati(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                            const Eigen::MatrixXd& R, double tol, int max_iter) {
  if (A.rows() != A.cols() || B.rows() != A.rows() || Q.rows() != A.rows() || Q.cols() != A.cols() ||
      R.rows() != B.cols() || R.cols() != B.cols()) {
    throw InvalidInput("solve_riccati: inconsistent matrix dimensions");
  }
  if (Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(R).eigenvalues().minCoeff() <= 0.0) {
    throw CostSpecError("solve_riccati: R is not positive definite");
  }

  RiccatiResult out;
  Eigen::MatrixXd P = Q;
  double residual = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::MatrixXd next = riccati_update(A, B, Q, R, P, nullptr);
    if (!next.allFinite()) {
      throw NotStabilizable("Riccati iteration diverged after " + std::to_string(it) + " iterations", residual);
    }
    // ||P_k - F(P_k)|| is the DARE residual of P_k itself, so P_k is the one returned.
    residual = (next - P).cwiseAbs().rowwise().sum().maxCoeff();
    // Confirm with the independent residual formula; the two differ by rounding.
    if (residual < tol && riccati_residual(A, B, Q, R, P) < tol) {
      out.iterations = it;
      break;
    }
    P = std::move(next);
    if (it == max_iter) {
      throw NotStabilizable("Riccati iteration did not converge in " + std::to_string(max_iter) +
                                " iterations (residual " + std::to_string(residual) + ")",
                            residual);
    }
  }
  riccati_update(A, B, Q, R, P, &out.gain);
  out.residual = riccati_residual(A, B, Q, R, P);
  out.P = std::move(P);
  return out;
}

LqrSolution solve_dare(const AffineLinearModel& model, const CostSpec& cost, double tol, int max_iter) {
  cost.validate();
  if (!model.A.allFinite() || !model.B.allFinite() || !model.c.allFinite()) {
    throw InvalidInput("solve_dare: model has non-finite entries");
  }
  const RiccatiResult ric = solve_riccati(model.A, model.B, cost.Q, cost.R, tol, max_iter);

  LqrSolution sol;
  sol.P = ric.P;
  sol.gain = ric.gain;
  sol.iterations = ric.iterations;
  sol.dare_residual = ric.residual;
  sol.spectral_radius = spectral_radius(model.A - model.B * sol.gain);
  if (!(sol.spectral_radius < 1.0)) {
    throw NotStabilizable("closed loop is not stable (spectral radius " + std::to_string(sol.spectral_radius) + ")",
                          ric.residual);
  }

  const Vec6 target = (Mat6::Identity() - model.A) * cost.goal - model.c;
  sol.u_ff = model.B.jacobiSvd(Eigen::ComputeFullU | Eigen::ComputeFullV).solve(target);
  sol.equilibrium_residual = target - model.B * sol.u_ff;
  return sol;
}

Vec2 optimal_input_unclamped(const LqrSolution& sol, const CostSpec& cost, const LanderState& state) {
  return sol.u_ff - sol.gain * (state.to_vector() - cost.goal);
}

ControlInput optimal_input(const LqrSolution& sol, const CostSpec& cost, const LanderState& state) {
  return clamp_input(ControlInput::from_vector(optimal_input_unclamped(sol, cost, state)));
}

ControlInput half_plane_filter(const ControlInput& user, const ControlInput& optimal) {
  return {user.main * optimal.main >= 0.0 ? user.main : 0.0, user.rot * optimal.rot >= 0.0 ? user.rot : 0.0};
}

SharedStep shared_step(const LanderState& state, const ControlInput& user_input, const LqrSolution& sol,
                       const CostSpec& cost, const WorldParams& params) {
  SharedStep out;
  out.optimal = optimal_input(sol, cost, state);
  out.applied = half_plane_filter(clamp_input(user_input), out.optimal);
  out.next = step(state, out.applied, params);
  return out;
}

double running_cost(const LanderState& state, const ControlInput& input, const CostSpec& cost) {
  const Vec6 d = state.to_vector() - cost.goal;
  const Vec2 u = input.to_vector();
  return d.dot(cost.Q * d) + u.dot(cost.R * u);
}

std::vector<HorizonStage> finite_horizon_lqr(const AffineLinearModel& model, const CostSpec& cost, int horizon) {
  if (horizon < 1) throw InvalidInput("finite_horizon_lqr: horizon must be >= 1");
  cost.validate();

  // Deviation coordinates about (goal, u_ff): d' = A d + B v + r, r the equilibrium defect.
  const Vec6 target = (Mat6::Identity() - model.A) * cost.goal - model.c;
  const Vec2 u_ff = model.B.jacobiSvd(Eigen::ComputeFullU | Eigen::ComputeFullV).solve(target);
  const Vec6 r = model.B * u_ff - target;

  std::vector<HorizonStage> stages(static_cast<std::size_t>(horizon));
  Mat6 P = cost.Q;
  Vec6 p = Vec6::Zero();  // linear term of the cost-to-go
  for (int t = horizon - 1; t >= 0; --t) {
    const Mat2 s = cost.R + model.B.transpose() * P * model.B;
    const Eigen::LDLT<Mat2> s_ldlt(s);
    const Mat26 gain = s_ldlt.solve(model.B.transpose() * P * model.A);
    const Vec2 offset = s_ldlt.solve(model.B.transpose() * (P * r + p));
    const Mat6 closed = model.A - model.B * gain;
    const Vec6 p_prev = closed.transpose() * (P * r + p);
    Mat6 P_prev = cost.Q + model.A.transpose() * P * closed;
    P = 0.5 * (P_prev + P_prev.transpose());
    p = p_prev;
    stages[static_cast<std::size_t>(t)] = {gain, u_ff - offset};
  }
  return stages;
}

}  // namespace koopshare
