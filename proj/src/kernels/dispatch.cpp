#include <atomic>
#include <cstdlib>
#include <string>

#include "koopshare/error.hpp"
#include "koopshare/kernels.hpp"

namespace koopshare::kernels {

namespace {

constexpr KernelTable scalar_table{Isa::scalar, detail::gram_scalar, detail::cosine_moments_scalar};
#if defined(KOOPSHARE_HAVE_AVX2)
constexpr KernelTable avx2_table{Isa::avx2, detail::gram_avx2, detail::cosine_moments_avx2};
#endif
#if defined(KOOPSHARE_HAVE_NEON)
constexpr KernelTable neon_table{Isa::neon, detail::gram_neon, detail::cosine_moments_neon};
#endif

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(KOOPSHARE_HAVE_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::neon:
#if defined(KOOPSHARE_HAVE_NEON)
      return true;  // mandatory on aarch64
#else
      return false;
#endif
  }
  return false;
}

Isa initial_isa() {
  if (const char* env = std::getenv("KOOPSHARE_ISA")) {
    const std::string wanted(env);
    for (Isa isa : available_isas()) {
      if (to_string(isa) == wanted) return isa;
    }
  }
  return available_isas().back();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table(initial_isa())};
  return slot;
}

}  // namespace

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "scalar";
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
    if (cpu_supports(isa)) out.push_back(isa);
  }
  return out;
}

const KernelTable& table(Isa isa) {
  if (!cpu_supports(isa)) {
    throw ConfigError("kernel ISA '" + std::string(to_string(isa)) + "' is not available on this host");
  }
  switch (isa) {
#if defined(KOOPSHARE_HAVE_AVX2)
    case Isa::avx2: return avx2_table;
#endif
#if defined(KOOPSHARE_HAVE_NEON)
    case Isa::neon: return neon_table;
#endif
    default: return scalar_table;
  }
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

void set_active(Isa isa) { active_slot().store(&table(isa), std::memory_order_release); }

namespace detail {

void check_gram_args(std::span<const double> x, std::span<const double> y, std::size_t dim,
                     std::span<double> gram, std::span<double> cross) {
  if (dim == 0 || x.size() != y.size() || x.size() % dim != 0 || gram.size() != dim * dim ||
      cross.size() != dim * dim) {
    throw InvalidInput("accumulate_gram: inconsistent buffer sizes");
  }
}

void check_moment_args(std::span<const double> xs, std::span<const double> ys,
                       std::span<const double> weights, int kmax, std::span<double> out) {
  const auto modes = static_cast<std::size_t>(kmax + 1);
  if (kmax < 0 || xs.size() != ys.size() || xs.size() != weights.size() ||
      out.size() != modes * modes) {
    throw InvalidInput("cosine_moments: inconsistent buffer sizes");
  }
}

}  // namespace detail

}  // namespace koopshare::kernels
