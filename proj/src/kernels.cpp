#include "npmle/kernels.hpp"

#include <algorithm>
#include <exception>
#include <string>

#include "npmle/data.hpp"
#include "npmle/error.hpp"
#include "npmle/kernel.hpp"
#include "npmle/mixture.hpp"

namespace npmle {

namespace {

void check_fill_args(const Dataset& data, const KernelSpec& kernel,
                     std::span<const Component> components, std::span<double> out) {
  if (out.size() != data.size() * components.size())
    throw Error("fill_columns: output size mismatch");
  if (data.alternatives() != kernel.alternatives)
    throw Error("fill_columns: dataset and kernel disagree on the number of alternatives");
  const std::size_t d = kernel.mixed_dim();
  for (std::size_t s = 0; s < components.size(); ++s) {
    const auto& c = components[s];
    if (c.location.size() != d || c.cov_diag.size() != d)
      throw Error("fill_columns: component " + std::to_string(s) + " has dimension " +
                  std::to_string(c.location.size()) + ", kernel expects " + std::to_string(d));
    if (kernel.family == Family::MNL && !c.is_point_mass())
      throw Error("fill_columns: component " + std::to_string(s) +
                  " is Gaussian but the MNL kernel admits point masses only");
  }
}

inline double cell(const Dataset& data, const KernelSpec& kernel, const Component& c,
                   std::size_t i) {
  const double p =
      component_prob_unchecked(data.regressors(i), data.choice(i), kernel, c.location, c.cov_diag);
  return std::max(p, kProbFloor);
}

std::string cell_error(std::size_t i, std::size_t s, const std::exception& e) {
  return "kernel evaluation failed at observation " + std::to_string(i) + ", component " +
         std::to_string(s) + ": " + e.what();
}

constexpr std::size_t kBlock = 256;

// Mixture sums for rows [i0, i1), accumulated component by component so the
// summation order per row is fixed (s = 0, 1, ...) regardless of blocking.
inline void block_sums(std::span<const double> p, std::size_t n, std::span<const double> w,
                       std::size_t i0, std::size_t i1, double* acc) {
  std::fill(acc, acc + (i1 - i0), 0.0);
  for (std::size_t s = 0; s < w.size(); ++s) {
    const double ws = w[s];
    const double* col = p.data() + s * n;
    for (std::size_t i = i0; i < i1; ++i) acc[i - i0] += ws * col[i];
  }
}

inline std::size_t mixture_block(std::span<const double> p, std::size_t n,
                                 std::span<const double> w, std::span<double> mixed,
                                 std::size_t i0, std::size_t i1) {
  block_sums(p, n, w, i0, i1, mixed.data() + i0);
  std::size_t floored = 0;
  for (std::size_t i = i0; i < i1; ++i) {
    if (mixed[i] < kProbFloor) {
      ++floored;
      mixed[i] = kProbFloor;
    }
  }
  return floored;
}

inline void gamma_block(std::span<const double> p, std::size_t n, std::span<const double> w,
                        std::span<double> gamma, std::size_t i0, std::size_t i1) {
  double acc[kBlock];
  block_sums(p, n, w, i0, i1, acc);
  double wsum = 0.0;
  for (double v : w) wsum += v;
  for (std::size_t s = 0; s < w.size(); ++s) {
    const double* col = p.data() + s * n;
    double* g = gamma.data() + s * n;
    for (std::size_t i = i0; i < i1; ++i) {
      const double sum = acc[i - i0];
      // Every term underflowed: fall back to the prior weights.
      g[i] = sum > 0.0 ? w[s] * col[i] / sum : w[s] / wsum;
    }
  }
}

inline std::size_t n_blocks(std::size_t n) { return (n + kBlock - 1) / kBlock; }

}  // namespace

namespace serial {

void fill_columns(const Dataset& data, const KernelSpec& kernel,
                  std::span<const Component> components, std::span<double> out) {
  check_fill_args(data, kernel, components, out);
  const std::size_t n = data.size();
  for (std::size_t s = 0; s < components.size(); ++s)
    for (std::size_t i = 0; i < n; ++i) {
      try {
        out[s * n + i] = cell(data, kernel, components[s], i);
      } catch (const std::exception& e) {
        throw Error(cell_error(i, s, e));
      }
    }
}

std::size_t mixture_probs(std::span<const double> p, std::size_t n, std::span<const double> w,
                          std::span<double> mixed) {
  std::size_t floored = 0;
  for (std::size_t b = 0; b < n_blocks(n); ++b)
    floored += mixture_block(p, n, w, mixed, b * kBlock, std::min(n, (b + 1) * kBlock));
  return floored;
}

void ratio_means(std::span<const double> p, std::size_t n, std::span<const double> mixed,
                 std::span<double> out) {
  for (std::size_t s = 0; s < out.size(); ++s) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += p[s * n + i] / mixed[i];
    out[s] = sum / static_cast<double>(n);
  }
}

void responsibilities(std::span<const double> p, std::size_t n, std::span<const double> w,
                      std::span<double> gamma) {
  for (std::size_t b = 0; b < n_blocks(n); ++b)
    gamma_block(p, n, w, gamma, b * kBlock, std::min(n, (b + 1) * kBlock));
}

}  // namespace serial

namespace parallel {

void fill_columns(const Dataset& data, const KernelSpec& kernel,
                  std::span<const Component> components, std::span<double> out) {
  check_fill_args(data, kernel, components, out);
  const std::size_t n = data.size();
  const std::size_t cells = n * components.size();
  std::string failure;
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < cells; ++c) {
    const std::size_t s = c / n;
    const std::size_t i = c % n;
    try {
      out[c] = cell(data, kernel, components[s], i);
    } catch (const std::exception& e) {
#pragma omp critical(npmle_fill_failure)
      if (failure.empty()) failure = cell_error(i, s, e);
    }
  }
  if (!failure.empty()) throw Error(failure);
}

std::size_t mixture_probs(std::span<const double> p, std::size_t n, std::span<const double> w,
                          std::span<double> mixed) {
  std::size_t floored = 0;
  const std::size_t blocks = n_blocks(n);
#pragma omp parallel for schedule(static) reduction(+ : floored)
  for (std::size_t b = 0; b < blocks; ++b)
    floored += mixture_block(p, n, w, mixed, b * kBlock, std::min(n, (b + 1) * kBlock));
  return floored;
}

void ratio_means(std::span<const double> p, std::size_t n, std::span<const double> mixed,
                 std::span<double> out) {
#pragma omp parallel for schedule(static)
  for (std::size_t s = 0; s < out.size(); ++s) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += p[s * n + i] / mixed[i];
    out[s] = sum / static_cast<double>(n);
  }
}

void responsibilities(std::span<const double> p, std::size_t n, std::span<const double> w,
                      std::span<double> gamma) {
  const std::size_t blocks = n_blocks(n);
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < blocks; ++b)
    gamma_block(p, n, w, gamma, b * kBlock, std::min(n, (b + 1) * kBlock));
}

}  // namespace parallel

}  // namespace npmle
