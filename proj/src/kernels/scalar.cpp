#include <cmath>
#include <numbers>
#include <vector>

#include "koopshare/kernels.hpp"

namespace koopshare::kernels::detail {

void gram_scalar(std::span<const double> x, std::span<const double> y, std::size_t dim,
                 std::span<double> gram, std::span<double> cross) {
  check_gram_args(x, y, dim, gram, cross);
  const std::size_t count = x.size() / dim;
  for (std::size_t t = 0; t < count; ++t) {
    const double* xt = x.data() + t * dim;
    const double* yt = y.data() + t * dim;
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        gram[i * dim + j] += xt[i] * xt[j];
        cross[i * dim + j] += xt[i] * yt[j];
      }
    }
  }
}

// Reference path: every cosine is evaluated directly with std::cos.
void cosine_moments_scalar(std::span<const double> xs, std::span<const double> ys,
                           std::span<const double> weights, int kmax, double lx, double ly,
                           std::span<double> out) {
  check_moment_args(xs, ys, weights, kmax, out);
  const auto modes = static_cast<std::size_t>(kmax + 1);
  std::vector<double> cx(modes), cy(modes);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    for (std::size_t k = 0; k < modes; ++k) {
      cx[k] = std::cos(static_cast<double>(k) * std::numbers::pi * xs[t] / lx);
      cy[k] = weights[t] * std::cos(static_cast<double>(k) * std::numbers::pi * ys[t] / ly);
    }
    for (std::size_t k1 = 0; k1 < modes; ++k1) {
      for (std::size_t k2 = 0; k2 < modes; ++k2) out[k1 * modes + k2] += cx[k1] * cy[k2];
    }
  }
}

}  // namespace koopshare::kernels::detail
