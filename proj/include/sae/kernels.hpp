#pragma once

// Elementwise kernels behind merging, re-densification and averaging.
//
// Each kernel has a serial reference and an OpenMP version. The OpenMP
// versions split the index range statically and perform no reductions, so
// their output is bit-identical to the serial reference for any thread
// count. Tests and bench/ compare the two.

#include <algorithm>
#include <cstddef>
#include <span>

namespace sae {

enum class Exec { Serial, Parallel };

namespace kernels {

/// Arrays shorter than this run serially even in the OpenMP versions.
inline constexpr std::size_t kParallelMinElements = 1 << 14;

/// One element of the attraction merge: a zero in one parent is occupied by
/// the other parent's value; two nonzeros interpolate with weight lambda on a.
inline double merge_element(double a, double b, double lambda) {
  if (a == 0.0) return b == 0.0 ? 0.0 : b;
  if (b == 0.0) return a;
  if (a == b) return a;
  const double m = lambda * a + (1.0 - lambda) * b;
  return std::clamp(m, std::min(a, b), std::max(a, b));
}

namespace serial {
void merge_attract(std::span<const double> a, std::span<const double> b, double lambda,
                   std::span<double> out);
void interpolate(std::span<const double> a, std::span<const double> b, double lambda,
                 std::span<double> out);
void fill_zeros(std::span<const double> p, std::span<const double> donor, std::span<double> out);
void mean(std::span<const std::span<const double>> inputs, std::span<double> out);
}  // namespace serial

namespace omp {
void merge_attract(std::span<const double> a, std::span<const double> b, double lambda,
                   std::span<double> out);
void interpolate(std::span<const double> a, std::span<const double> b, double lambda,
                 std::span<double> out);
void fill_zeros(std::span<const double> p, std::span<const double> donor, std::span<double> out);
void mean(std::span<const std::span<const double>> inputs, std::span<double> out);
}  // namespace omp

}  // namespace kernels
}  // namespace sae
