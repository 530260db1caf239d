#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sae/params.hpp"
#include "sae/rng.hpp"

namespace sae::test {

// Random values with roughly `zero_rate` exact zeros.
inline std::vector<double> random_values(Rng& rng, std::size_t n, double zero_rate = 0.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform() < zero_rate ? 0.0 : rng.normal();
  return v;
}

inline ParameterSet random_params(Rng& rng, const std::vector<std::vector<std::size_t>>& shapes,
                                  double zero_rate = 0.0) {
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    std::size_t n = 1;
    for (auto d : shapes[i]) n *= d;
    layers.push_back({"layer" + std::to_string(i), Tensor(shapes[i], random_values(rng, n, zero_rate))});
  }
  return ParameterSet(std::move(layers));
}

inline ParameterSet single_layer(std::vector<double> v, const std::string& name = "w") {
  const std::size_t n = v.size();
  return ParameterSet({{name, Tensor({n}, std::move(v))}});
}

inline std::size_t count_zeros(std::span<const double> v) {
  std::size_t z = 0;
  for (double x : v) z += x == 0.0 ? 1 : 0;
  return z;
}

}  // namespace sae::test
