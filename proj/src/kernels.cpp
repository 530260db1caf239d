#include "sae/kernels.hpp"

#include <cstdint>

namespace sae::kernels {

namespace {

inline double lerp(double a, double b, double lambda) {
  if (a == b) return a;
  return lambda * a + (1.0 - lambda) * b;
}

inline double fill(double p, double donor) { return p == 0.0 ? donor : p; }

// Summation order over inputs is fixed (0..K-1) for every element.
inline double mean_at(std::span<const std::span<const double>> inputs, std::size_t i) {
  double s = 0.0;
  for (const auto& in : inputs) s += in[i];
  return s / static_cast<double>(inputs.size());
}

}  // namespace

namespace serial {

void merge_attract(std::span<const double> a, std::span<const double> b, double lambda,
                   std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = merge_element(a[i], b[i], lambda);
}

void interpolate(std::span<const double> a, std::span<const double> b, double lambda,
                 std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = lerp(a[i], b[i], lambda);
}

void fill_zeros(std::span<const double> p, std::span<const double> donor, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fill(p[i], donor[i]);
}

void mean(std::span<const std::span<const double>> inputs, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mean_at(inputs, i);
}

}  // namespace serial

namespace omp {

void merge_attract(std::span<const double> a, std::span<const double> b, double lambda,
                   std::span<double> out) {
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static) if (out.size() >= kParallelMinElements)
  for (std::int64_t i = 0; i < n; ++i) out[i] = merge_element(a[i], b[i], lambda);
}

void interpolate(std::span<const double> a, std::span<const double> b, double lambda,
                 std::span<double> out) {
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static) if (out.size() >= kParallelMinElements)
  for (std::int64_t i = 0; i < n; ++i) out[i] = lerp(a[i], b[i], lambda);
}

void fill_zeros(std::span<const double> p, std::span<const double> donor, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static) if (out.size() >= kParallelMinElements)
  for (std::int64_t i = 0; i < n; ++i) out[i] = fill(p[i], donor[i]);
}

void mean(std::span<const std::span<const double>> inputs, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static) if (out.size() >= kParallelMinElements)
  for (std::int64_t i = 0; i < n; ++i) out[i] = mean_at(inputs, static_cast<std::size_t>(i));
}

}  // namespace omp

}  // namespace sae::kernels
