#include "koopshare/koopman.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "koopshare/error.hpp"
#include "koopshare/kernels.hpp"

namespace koopshare {

std::string_view to_string(BasisKind kind) {
  switch (kind) {
    case BasisKind::linear_with_bias: return "linear-with-bias";
  }
  return "linear-with-bias";
}

BasisKind basis_kind_from_string(std::string_view name) {
  if (name == "linear-with-bias") return BasisKind::linear_with_bias;
  throw ConfigError("unsupported basis kind '" + std::string(name) + "'");
}

int BasisSpec::lifted_dim() const {
  switch (kind) {
    case BasisKind::linear_with_bias: return 1 + kStateDim + kControlDim;
  }
  throw ConfigError("unsupported basis kind");
}

void KoopmanModel::validate() const {
  const int n = basis.lifted_dim();
  if (K.rows() != n || K.cols() != n) {
    throw ParseError("Koopman matrix must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (!K.allFinite()) throw ParseError("Koopman matrix has non-finite entries");
  if (!std::isfinite(ridge) || ridge < 0.0) throw ParseError("ridge must be finite and non-negative");
}

Eigen::VectorXd lift(const JointSample& sample, const BasisSpec& basis) {
  switch (basis.kind) {
    case BasisKind::linear_with_bias: {
      Eigen::VectorXd z(basis.lifted_dim());
      z[BasisSpec::bias_index] = 1.0;
      z.segment<kStateDim>(BasisSpec::state_offset) = sample.state.to_vector();
      z.segment<kControlDim>(BasisSpec::control_offset) = sample.input.to_vector();
      return z;
    }
  }
  throw ConfigError("unsupported basis kind");
}

std::size_t count_snapshot_pairs(std::span<const Trajectory> trajectories) {
  std::size_t pairs = 0;
  for (const auto& traj : trajectories) {
    if (traj.size() >= 2) pairs += traj.size() - 1;
  }
  return pairs;
}

namespace {

// Lifted snapshots of all pairs, each stored contiguously (pairs x dim).
void stack_pairs(std::span<const Trajectory> trajectories, const BasisSpec& basis,
                 std::vector<double>& current, std::vector<double>& next) {
  const auto dim = static_cast<std::size_t>(basis.lifted_dim());
  const std::size_t pairs = count_snapshot_pairs(trajectories);
  current.resize(pairs * dim);
  next.resize(pairs * dim);
  std::size_t row = 0;
  for (const auto& traj : trajectories) {
    for (std::size_t t = 0; t + 1 < traj.size(); ++t, ++row) {
      const Eigen::VectorXd z0 = lift(traj[t], basis);
      const Eigen::VectorXd z1 = lift(traj[t + 1], basis);
      if (!z0.allFinite() || !z1.allFinite()) throw InvalidInput("fit_koopman: non-finite sample");
      std::copy(z0.data(), z0.data() + dim, current.data() + row * dim);
      std::copy(z1.data(), z1.data() + dim, next.data() + row * dim);
    }
  }
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

KoopmanModel fit_koopman(std::span<const Trajectory> trajectories, const BasisSpec& basis, double ridge) {
  if (!std::isfinite(ridge) || ridge < 0.0) throw InvalidInput("fit_koopman: ridge must be >= 0");
  for (const auto& traj : trajectories) {
    if (traj.size() < 2) throw InsufficientData("fit_koopman: every trajectory needs at least 2 samples");
  }
  const int n = basis.lifted_dim();
  const std::size_t pairs = count_snapshot_pairs(trajectories);
  if (pairs < static_cast<std::size_t>(n)) {
    throw InsufficientData("insufficient data: " + std::to_string(pairs) + " snapshot pairs, need at least " +
                           std::to_string(n));
  }

  std::vector<double> current, next;
  stack_pairs(trajectories, basis, current, next);

  RowMajor gram = RowMajor::Zero(n, n);
  RowMajor cross = RowMajor::Zero(n, n);
  kernels::accumulate_gram(current, next, static_cast<std::size_t>(n),
                           std::span<double>(gram.data(), gram.size()),
                           std::span<double>(cross.data(), cross.size()));

  Eigen::MatrixXd normal = gram;
  normal.diagonal().array() += ridge;
  const Eigen::MatrixXd rhs = cross;

  KoopmanModel model;
  model.basis = basis;
  model.ridge = ridge;
  model.n_samples = pairs;

  if (ridge > 0.0) {
    Eigen::LLT<Eigen::MatrixXd> llt(normal);
    if (llt.info() != Eigen::Success) throw SingularSystem("fit_koopman: normal matrix is not positive definite");
    model.K = llt.solve(rhs);
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(normal);
    if (qr.rank() < n) {
      throw SingularSystem("fit_koopman: snapshot matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                           " < " + std::to_string(n) + "); use a ridge > 0");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(normal);
    if (llt.info() == Eigen::Success) {
      model.K = llt.solve(rhs);
    } else {
      model.K = normal.completeOrthogonalDecomposition().pseudoInverse() * rhs;
    }
  }
  if (!model.K.allFinite()) throw SingularSystem("fit_koopman: solve produced non-finite entries");
  return model;
}

double fit_objective(std::span<const Trajectory> trajectories, const KoopmanModel& model) {
  double total = model.ridge * model.K.squaredNorm();
  for (const auto& traj : trajectories) {
    for (std::size_t t = 0; t + 1 < traj.size(); ++t) {
      const Eigen::VectorXd z0 = lift(traj[t], model.basis);
      const Eigen::VectorXd z1 = lift(traj[t + 1], model.basis);
      total += (model.K.transpose() * z0 - z1).squaredNorm();
    }
  }
  return total;
}

AffineLinearModel extract_linear(const KoopmanModel& model) {
  if (model.basis.kind != BasisKind::linear_with_bias) {
    throw ConfigError("extract_linear: only the linear-with-bias basis is supported");
  }
  model.validate();
  const Eigen::MatrixXd m = model.K.transpose();
  AffineLinearModel lin;
  lin.A = m.block<kStateDim, kStateDim>(BasisSpec::state_offset, BasisSpec::state_offset);
  lin.B = m.block<kStateDim, kControlDim>(BasisSpec::state_offset, BasisSpec::control_offset);
  lin.c = m.block<kStateDim, 1>(BasisSpec::state_offset, BasisSpec::bias_index);
  return lin;
}

LanderState predict(const KoopmanModel& model, const JointSample& sample) {
  const Eigen::VectorXd next = model.K.transpose() * lift(sample, model.basis);
  return LanderState::from_vector(next.segment<kStateDim>(BasisSpec::state_offset));
}

}  // namespace koopshare
