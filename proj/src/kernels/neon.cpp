#include <arm_neon.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "koopshare/kernels.hpp"

namespace koopshare::kernels::detail {

void gram_neon(std::span<const double> x, std::span<const double> y, std::size_t dim,
               std::span<double> gram, std::span<double> cross) {
  check_gram_args(x, y, dim, gram, cross);
  const std::size_t count = x.size() / dim;
  const std::size_t wide = dim - dim % 2;
  for (std::size_t t = 0; t < count; ++t) {
    const double* xt = x.data() + t * dim;
    const double* yt = y.data() + t * dim;
    for (std::size_t i = 0; i < dim; ++i) {
      const float64x2_t xi = vdupq_n_f64(xt[i]);
      double* grow = gram.data() + i * dim;
      double* crow = cross.data() + i * dim;
      std::size_t j = 0;
      for (; j < wide; j += 2) {
        vst1q_f64(grow + j, vaddq_f64(vld1q_f64(grow + j), vmulq_f64(xi, vld1q_f64(xt + j))));
        vst1q_f64(crow + j, vaddq_f64(vld1q_f64(crow + j), vmulq_f64(xi, vld1q_f64(yt + j))));
      }
      for (; j < dim; ++j) {
        grow[j] += xt[i] * xt[j];
        crow[j] += xt[i] * yt[j];
      }
    }
  }
}

void cosine_moments_neon(std::span<const double> xs, std::span<const double> ys,
                         std::span<const double> weights, int kmax, double lx, double ly,
                         std::span<double> out) {
  check_moment_args(xs, ys, weights, kmax, out);
  const auto modes = static_cast<std::size_t>(kmax + 1);
  const std::size_t n = xs.size();
  const std::size_t wide = n - n % 2;

  std::vector<float64x2_t> acc(modes * modes, vdupq_n_f64(0.0));
  std::vector<float64x2_t> cx(modes), cy(modes);
  const float64x2_t two = vdupq_n_f64(2.0);

  for (std::size_t t = 0; t < wide; t += 2) {
    const double fx[2] = {std::cos(std::numbers::pi * xs[t] / lx), std::cos(std::numbers::pi * xs[t + 1] / lx)};
    const double fy[2] = {std::cos(std::numbers::pi * ys[t] / ly), std::cos(std::numbers::pi * ys[t + 1] / ly)};
    const float64x2_t w = vld1q_f64(weights.data() + t);
    const float64x2_t c1x = vld1q_f64(fx);
    const float64x2_t c1y = vld1q_f64(fy);

    cx[0] = vdupq_n_f64(1.0);
    cy[0] = w;
    if (modes > 1) {
      cx[1] = c1x;
      cy[1] = vmulq_f64(w, c1y);
    }
    float64x2_t py2 = vdupq_n_f64(1.0), py1 = c1y;
    for (std::size_t k = 2; k < modes; ++k) {
      cx[k] = vsubq_f64(vmulq_f64(vmulq_f64(two, c1x), cx[k - 1]), cx[k - 2]);
      const float64x2_t yk = vsubq_f64(vmulq_f64(vmulq_f64(two, c1y), py1), py2);
      cy[k] = vmulq_f64(w, yk);
      py2 = py1;
      py1 = yk;
    }
    for (std::size_t k1 = 0; k1 < modes; ++k1) {
      for (std::size_t k2 = 0; k2 < modes; ++k2) {
        acc[k1 * modes + k2] = vaddq_f64(acc[k1 * modes + k2], vmulq_f64(cx[k1], cy[k2]));
      }
    }
  }
  for (std::size_t k = 0; k < modes * modes; ++k) out[k] += vaddvq_f64(acc[k]);

  if (wide < n) {
    cosine_moments_scalar(xs.subspan(wide), ys.subspan(wide), weights.subspan(wide), kmax, lx, ly, out);
  }
}

}  // namespace koopshare::kernels::detail
