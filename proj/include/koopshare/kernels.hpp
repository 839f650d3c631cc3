#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

// Data-parallel inner loops shared by the EDMD fit and the ergodicity metric.
// Every kernel has a scalar reference implementation; vector variants are
// selected at runtime from the host CPU and must agree with the reference to
// within rounding (see tests/test_kernels.cpp).
namespace koopshare::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa);

// Snapshot accumulation for least squares.
//   gram[i*dim + j]  += sum_t x_t[i] * x_t[j]
//   cross[i*dim + j] += sum_t x_t[i] * y_t[j]
// x and y hold `count` snapshots of length `dim`, each stored contiguously.
using GramFn = void (*)(std::span<const double> x, std::span<const double> y, std::size_t dim,
                        std::span<double> gram, std::span<double> cross);

// Weighted separable cosine moments on a box [0,lx] x [0,ly]:
//   out[k1*(kmax+1) + k2] += sum_t w_t cos(k1 pi x_t / lx) cos(k2 pi y_t / ly)
using CosineMomentsFn = void (*)(std::span<const double> xs, std::span<const double> ys,
                                 std::span<const double> weights, int kmax, double lx, double ly,
                                 std::span<double> out);

struct KernelTable {
  Isa isa;
  GramFn accumulate_gram;
  CosineMomentsFn cosine_moments;
};

// ISAs compiled in and supported by the running CPU, scalar first.
std::vector<Isa> available_isas();

const KernelTable& table(Isa isa);

// The table used by the library. Defaults to the widest available ISA; the
// KOOPSHARE_ISA environment variable ("scalar", "avx2", "neon") overrides.
const KernelTable& active();
void set_active(Isa isa);

inline void accumulate_gram(std::span<const double> x, std::span<const double> y, std::size_t dim,
                            std::span<double> gram, std::span<double> cross) {
  active().accumulate_gram(x, y, dim, gram, cross);
}

inline void cosine_moments(std::span<const double> xs, std::span<const double> ys,
                           std::span<const double> weights, int kmax, double lx, double ly,
                           std::span<double> out) {
  active().cosine_moments(xs, ys, weights, kmax, lx, ly, out);
}

namespace detail {
void check_gram_args(std::span<const double> x, std::span<const double> y, std::size_t dim,
                     std::span<double> gram, std::span<double> cross);
void check_moment_args(std::span<const double> xs, std::span<const double> ys,
                       std::span<const double> weights, int kmax, std::span<double> out);

void gram_scalar(std::span<const double>, std::span<const double>, std::size_t, std::span<double>,
                 std::span<double>);
void cosine_moments_scalar(std::span<const double>, std::span<const double>, std::span<const double>,
                           int, double, double, std::span<double>);
#if defined(KOOPSHARE_HAVE_AVX2)
void gram_avx2(std::span<const double>, std::span<const double>, std::size_t, std::span<double>,
               std::span<double>);
void cosine_moments_avx2(std::span<const double>, std::span<const double>, std::span<const double>,
                         int, double, double, std::span<double>);
#endif
#if defined(KOOPSHARE_HAVE_NEON)
void gram_neon(std::span<const double>, std::span<const double>, std::size_t, std::span<double>,
               std::span<double>);
void cosine_moments_neon(std::span<const double>, std::span<const double>, std::span<const double>,
                         int, double, double, std::span<double>);
#endif
}  // namespace detail

}  // namespace koopshare::kernels
