#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "koopshare/controller.hpp"
#include "koopshare/koopman.hpp"
#include "koopshare/trial.hpp"

namespace koopshare {

struct TrialMetrics {
  double time_s = 0.0;
  double path_length = 0.0;
  double total_cost = 0.0;
  bool success = false;
};

TrialMetrics trial_metrics(const TrialLog& log, const CostSpec& cost);

// Fraction of (step, dimension) pairs where u_user_i * u_opt_i >= 0.
double agreement(const TrialLog& log);

struct ModelSimilarity {
  double std_pct_A = 0.0;
  double std_pct_B = 0.0;
};

// Mean over entries of population std / |mean| (percent); entries with
// |mean| < 1e-6 are skipped.
ModelSimilarity model_similarity(std::span<const AffineLinearModel> models);

struct Heatmap {
  int nx = 0;
  int ny = 0;
  std::vector<double> cells;  // cells[ix * ny + iy], sums to 1

  double at(int ix, int iy) const { return cells[static_cast<std::size_t>(ix * ny + iy)]; }
};

// Occupancy over [0, width] x [0, height]; samples outside clamp to edge cells.
Heatmap heatmap(std::span<const TrialLog> logs, int nx, int ny, const WorldParams& world);

struct ErgodicSpec {
  double width = 20.0;
  double height = 13.33;
  int k_max = 10;
  double sigma_goal = 1.0;
  double weight_exponent = 1.5;
  int grid = 200;  // quadrature cells per axis
  double goal_x = 10.0;
  double goal_y = 6.0;

  static ErgodicSpec defaults(const WorldParams& world);
  void validate() const;

  friend bool operator==(const ErgodicSpec&, const ErgodicSpec&) = default;
};

// Fourier cosine basis on the box, normalized so each F_k has unit L2 norm:
// F_k(x, y) = cos(k1 pi x / L1) cos(k2 pi y / L2) / h_k.
// Target coefficients are computed once on construction and shared read-only.
class ErgodicMetric {
 public:
  explicit ErgodicMetric(const ErgodicSpec& spec);

  const ErgodicSpec& spec() const { return spec_; }
  int modes_per_axis() const { return spec_.k_max + 1; }

  // Flattened [k1 * modes + k2] arrays.
  const std::vector<double>& target_coefficients() const { return target_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& normalizers() const { return inv_h_; }

  std::vector<double> trajectory_coefficients(std::span<const double> xs, std::span<const double> ys) const;

  // Weighted squared distance sum_k Lambda_k (c_k - phi_k)^2.
  double distance(std::span<const double> xs, std::span<const double> ys) const;
  double operator()(const TrialLog& log) const;

 private:
  ErgodicSpec spec_;
  std::vector<double> inv_h_;
  std::vector<double> weights_;
  std::vector<double> target_;
};

// Convenience wrapper; builds the target each call.
double ergodicity(const TrialLog& log, const ErgodicSpec& spec);

}  // namespace koopshare
