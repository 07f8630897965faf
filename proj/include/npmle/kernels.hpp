#pragma once

// Data-parallel inner loops shared by every solver. Each kernel has a serial
// reference and an OpenMP version; both produce bit-identical output because
// every reduction runs in the same fixed order (parallelism is only over
// independent output cells).
//
// Matrices are column-major n x S: entry (i, s) lives at p[s * n + i].

#include <cstddef>
#include <span>

namespace npmle {

class Dataset;
struct KernelSpec;
struct Component;

namespace serial {

/// out[s * n + i] = p(y_i | X_i; components[s]), floored at kProbFloor.
void fill_columns(const Dataset& data, const KernelSpec& kernel,
                  std::span<const Component> components, std::span<double> out);

/// mixed[i] = max(sum_s w[s] p(i, s), kProbFloor). Returns the floored count.
std::size_t mixture_probs(std::span<const double> p, std::size_t n, std::span<const double> w,
                          std::span<double> mixed);

/// out[s] = n^-1 sum_i p(i, s) / mixed[i].
void ratio_means(std::span<const double> p, std::size_t n, std::span<const double> mixed,
                 std::span<double> out);

/// gamma(i, s) = w[s] p(i, s) / sum_r w[r] p(i, r).
void responsibilities(std::span<const double> p, std::size_t n, std::span<const double> w,
                      std::span<double> gamma);

}  // namespace serial

namespace parallel {

void fill_columns(const Dataset& data, const KernelSpec& kernel,
                  std::span<const Component> components, std::span<double> out);
std::size_t mixture_probs(std::span<const double> p, std::size_t n, std::span<const double> w,
                          std::span<double> mixed);
void ratio_means(std::span<const double> p, std::size_t n, std::span<const double> mixed,
                 std::span<double> out);
void responsibilities(std::span<const double> p, std::size_t n, std::span<const double> w,
                      std::span<double> gamma);

}  // namespace parallel

}  // namespace npmle
