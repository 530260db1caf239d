#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sae/kernels.hpp"
#include "sae/params.hpp"
#include "sae/tasks.hpp"

namespace sae {

/// Two random directions, each layer rescaled to the norm of the matching
/// layer of the reference point.
struct DirectionPair {
  ParameterSet d1;
  ParameterSet d2;
  std::uint64_t seed = 0;
};

DirectionPair random_directions(const ParameterSet& theta0, std::uint64_t seed);

/// theta0 + alpha * d1 + beta * d2.
ParameterSet point_params(const ParameterSet& theta0, const DirectionPair& dirs, double alpha, double beta);

struct GridSpec {
  double alpha_max = 1.0;
  double beta_max = 1.0;
  std::size_t resolution = 21;
  double eps = 1e-8;

  std::vector<std::string> violations() const;
  /// Evenly spaced over [-alpha_max, alpha_max]; the middle of an odd grid
  /// is exactly 0.
  double alpha(std::size_t i) const;
  double beta(std::size_t j) const;
};

/// Row-major R x R values; row i is alpha_i, column j is beta_j.
struct GridValues {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  GridValues() = default;
  GridValues(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// Mean loss over the dataset at every grid point.
GridValues loss_grid(const ParameterSet& theta0, const DirectionPair& dirs, const GridSpec& grid,
                     const Dataset& data, Exec exec = Exec::Parallel);

/// Writes the gradient at theta into grad (same length). Must be reentrant.
using GradientFn = std::function<void(std::span<const double> theta, std::span<double> grad)>;

inline constexpr double kHvpStep = 1e-4;

/// Hessian-vector product by central differences of the gradient along the
/// unit direction, scaled back by |v|. Throws InvalidArgument for v = 0.
std::vector<double> hvp(const GradientFn& grad, std::span<const double> theta, std::span<const double> v,
                        double h = kHvpStep);

/// Mean-loss gradient of an MLP on a batch, over flattened parameters.
GradientFn mlp_gradient(const MlpSpec& spec, const Dataset& batch);

ParameterSet hvp(const ParameterSet& theta, const Dataset& batch, const ParameterSet& v);

struct EigConfig {
  int iters = 1000;
  /// Successive estimates within tol * max(1, |lambda|) count as converged.
  double tol = 1e-5;
  std::uint64_t seed = 0;
};

struct EigResult {
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Power iteration for the dominant eigenvalue (magnitude |Hv|, sign from
/// the Rayleigh quotient), then power iteration on H - lambda_1 I for the
/// opposite end of the spectrum.
EigResult extreme_eigs(const GradientFn& grad, std::span<const double> theta, const EigConfig& cfg);
EigResult extreme_eigs(const ParameterSet& theta, const Dataset& batch, const EigConfig& cfg);

/// clip(|lambda_min| / (|lambda_max| + eps), 0, 0.5)
double convexity_value(double lambda_max, double lambda_min, double eps);

struct ConvexityResult {
  GridSpec grid;
  GridValues convexity;
  GridValues lambda_max;
  GridValues lambda_min;
  GridValues loss;
  /// 1 where both power iterations converged.
  std::vector<unsigned char> converged;

  bool converged_at(std::size_t i, std::size_t j) const { return converged[i * grid.resolution + j] != 0; }
};

/// Each cell's start vector is seeded from cfg.seed and the cell index, so
/// the result does not depend on evaluation order.
ConvexityResult convexity_grid(const ParameterSet& theta0, const DirectionPair& dirs, const GridSpec& grid,
                               const Dataset& data, const EigConfig& cfg, Exec exec = Exec::Parallel);

/// i,j,alpha,beta,value
void write_grid_csv(std::ostream& out, const GridSpec& grid, const GridValues& values);
/// i,j,alpha,beta,value,lambda_max,lambda_min,converged
void write_convexity_csv(std::ostream& out, const ConvexityResult& r);
/// 8-bit binary PGM, min-max normalized, one pixel per cell.
void write_pgm(std::ostream& out, const GridValues& values);

}  // namespace sae
