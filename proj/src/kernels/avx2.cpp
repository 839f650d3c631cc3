#include <immintrin.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "koopshare/kernels.hpp"

namespace koopshare::kernels::detail {

namespace {

// Wrapper so vector-of-register containers keep their alignment attributes.
struct Lane4 {
  __m256d v;
};

double horizontal_sum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

}  // namespace

// Vectorized over the column index j. Each output entry is accumulated in the
// same order as the scalar reference, so results are bit-identical to it.
void gram_avx2(std::span<const double> x, std::span<const double> y, std::size_t dim,
               std::span<double> gram, std::span<double> cross) {
  check_gram_args(x, y, dim, gram, cross);
  const std::size_t count = x.size() / dim;
  const std::size_t wide = dim - dim % 4;
  for (std::size_t t = 0; t < count; ++t) {
    const double* xt = x.data() + t * dim;
    const double* yt = y.data() + t * dim;
    for (std::size_t i = 0; i < dim; ++i) {
      const __m256d xi = _mm256_set1_pd(xt[i]);
      double* grow = gram.data() + i * dim;
      double* crow = cross.data() + i * dim;
      std::size_t j = 0;
      for (; j < wide; j += 4) {
        const __m256d g = _mm256_add_pd(_mm256_loadu_pd(grow + j), _mm256_mul_pd(xi, _mm256_loadu_pd(xt + j)));
        const __m256d c = _mm256_add_pd(_mm256_loadu_pd(crow + j), _mm256_mul_pd(xi, _mm256_loadu_pd(yt + j)));
        _mm256_storeu_pd(grow + j, g);
        _mm256_storeu_pd(crow + j, c);
      }
      for (; j < dim; ++j) {
        grow[j] += xt[i] * xt[j];
        crow[j] += xt[i] * yt[j];
      }
    }
  }
}

// Vectorized over samples, four at a time. Higher harmonics come from the
// Chebyshev recurrence cos(k a) = 2 cos(a) cos((k-1) a) - cos((k-2) a).
void cosine_moments_avx2(std::span<const double> xs, std::span<const double> ys,
                         std::span<const double> weights, int kmax, double lx, double ly,
                         std::span<double> out) {
  check_moment_args(xs, ys, weights, kmax, out);
  const auto modes = static_cast<std::size_t>(kmax + 1);
  const std::size_t n = xs.size();
  const std::size_t wide = n - n % 4;

  std::vector<Lane4> acc(modes * modes, Lane4{_mm256_setzero_pd()});
  std::vector<Lane4> cx_store(modes), cy_store(modes);
  Lane4* cx = cx_store.data();
  Lane4* cy = cy_store.data();
  const __m256d two = _mm256_set1_pd(2.0);

  for (std::size_t t = 0; t < wide; t += 4) {
    alignas(32) double first_x[4], first_y[4];
    for (int l = 0; l < 4; ++l) {
      first_x[l] = std::cos(std::numbers::pi * xs[t + l] / lx);
      first_y[l] = std::cos(std::numbers::pi * ys[t + l] / ly);
    }
    const __m256d w = _mm256_loadu_pd(weights.data() + t);
    const __m256d c1x = _mm256_load_pd(first_x);
    const __m256d c1y = _mm256_load_pd(first_y);

    cx[0].v = _mm256_set1_pd(1.0);
    cy[0].v = w;
    if (modes > 1) {
      cx[1].v = c1x;
      cy[1].v = _mm256_mul_pd(w, c1y);
    }
    // Recurrence on the unweighted y cosines, weight applied afterwards.
    __m256d py2 = _mm256_set1_pd(1.0), py1 = c1y;
    for (std::size_t k = 2; k < modes; ++k) {
      cx[k].v = _mm256_sub_pd(_mm256_mul_pd(_mm256_mul_pd(two, c1x), cx[k - 1].v), cx[k - 2].v);
      const __m256d yk = _mm256_sub_pd(_mm256_mul_pd(_mm256_mul_pd(two, c1y), py1), py2);
      cy[k].v = _mm256_mul_pd(w, yk);
      py2 = py1;
      py1 = yk;
    }
    for (std::size_t k1 = 0; k1 < modes; ++k1) {
      Lane4* row = acc.data() + k1 * modes;
      for (std::size_t k2 = 0; k2 < modes; ++k2) {
        row[k2].v = _mm256_add_pd(row[k2].v, _mm256_mul_pd(cx[k1].v, cy[k2].v));
      }
    }
  }
  for (std::size_t k = 0; k < modes * modes; ++k) out[k] += horizontal_sum(acc[k].v);

  if (wide < n) {
    cosine_moments_scalar(xs.subspan(wide), ys.subspan(wide), weights.subspan(wide), kmax, lx, ly, out);
  }
}

}  // namespace koopshare::kernels::detail
