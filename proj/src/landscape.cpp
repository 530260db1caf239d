#include "sae/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>

#include "sae/error.hpp"
#include "sae/evolve.hpp"
#include "sae/parallel.hpp"
#include "sae/rng.hpp"

namespace sae {

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

ParameterSet random_direction(const ParameterSet& theta0, Rng& rng) {
  std::vector<Layer> layers;
  for (const Layer& l : theta0.layers()) {
    std::vector<double> d(l.tensor.numel());
    for (double& x : d) x = rng.normal();
    const double target = norm(l.tensor.values());
    const double raw = norm(d);
    const double scale = (target == 0.0 || raw == 0.0) ? 0.0 : target / raw;
    for (double& x : d) x *= scale;
    layers.push_back({l.name, Tensor(l.tensor.dims(), std::move(d))});
  }
  return ParameterSet(std::move(layers));
}

void check_grid(const GridSpec& grid) {
  if (const auto v = grid.violations(); !v.empty()) throw InvalidArgument(v.front());
}

std::vector<double> point_flat(std::span<const double> t0, std::span<const double> d1,
                               std::span<const double> d2, double alpha, double beta) {
  std::vector<double> out(t0.size());
  for (std::size_t k = 0; k < t0.size(); ++k) out[k] = t0[k] + alpha * d1[k] + beta * d2[k];
  return out;
}

// Dominant eigenvalue of (H - shift I) by power iteration.
struct PowerResult {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

PowerResult power_iteration(const GradientFn& grad, std::span<const double> theta, double shift,
                            const EigConfig& cfg, Rng& rng) {
  std::vector<double> v(theta.size());
  for (double& x : v) x = rng.normal();
  double n = norm(v);
  for (double& x : v) x /= n;

  PowerResult r;
  double prev = 0.0;
  for (int it = 1; it <= cfg.iters; ++it) {
    std::vector<double> w = hvp(grad, theta, v);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= shift * v[k];
    const double rayleigh = dot(v, w);
    const double mag = norm(w);
    r.iterations = it;
    if (mag == 0.0) {
      r.value = 0.0;
      r.converged = true;
      return r;
    }
    r.value = rayleigh < 0.0 ? -mag : mag;
    // Relative to the eigenvalue of H itself; the shifted value can be much
    // larger and would hide slow drift.
    if (it > 1 && std::abs(r.value - prev) <= cfg.tol * std::max(1.0, std::abs(r.value + shift))) {
      r.converged = true;
      return r;
    }
    prev = r.value;
    for (std::size_t k = 0; k < w.size(); ++k) v[k] = w[k] / mag;
  }
  return r;
}

}  // namespace

DirectionPair random_directions(const ParameterSet& theta0, std::uint64_t seed) {
  Rng r1(derive_seed(seed, "direction", 1));
  Rng r2(derive_seed(seed, "direction", 2));
  return {random_direction(theta0, r1), random_direction(theta0, r2), seed};
}

ParameterSet point_params(const ParameterSet& theta0, const DirectionPair& dirs, double alpha, double beta) {
  require_compatible(theta0, dirs.d1);
  require_compatible(theta0, dirs.d2);
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < theta0.size(); ++l) {
    const Tensor& t = theta0.layers()[l].tensor;
    layers.push_back({theta0.layers()[l].name,
                      Tensor(t.dims(), point_flat(t.values(), dirs.d1.layers()[l].tensor.values(),
                                                  dirs.d2.layers()[l].tensor.values(), alpha, beta))});
  }
  return ParameterSet(std::move(layers));
}

std::vector<std::string> GridSpec::violations() const {
  std::vector<std::string> v;
  if (resolution < 2) v.push_back("grid resolution must be >= 2");
  if (!(alpha_max > 0.0) || !std::isfinite(alpha_max)) v.push_back("alpha range must be > 0");
  if (!(beta_max > 0.0) || !std::isfinite(beta_max)) v.push_back("beta range must be > 0");
  if (!(eps >= 0.0) || !std::isfinite(eps)) v.push_back("eps must be >= 0");
  return v;
}

double GridSpec::alpha(std::size_t i) const {
  const double r = static_cast<double>(resolution - 1);
  return alpha_max * (2.0 * static_cast<double>(i) - r) / r;
}

double GridSpec::beta(std::size_t j) const {
  const double r = static_cast<double>(resolution - 1);
  return beta_max * (2.0 * static_cast<double>(j) - r) / r;
}

GridValues loss_grid(const ParameterSet& theta0, const DirectionPair& dirs, const GridSpec& grid,
                     const Dataset& data, Exec exec) {
  check_grid(grid);
  require_compatible(theta0, dirs.d1);
  require_compatible(theta0, dirs.d2);
  const detail::MlpLayout layout(infer_mlp(theta0).widths);
  const std::vector<double> t0 = flatten(theta0);
  const std::vector<double> d1 = flatten(dirs.d1);
  const std::vector<double> d2 = flatten(dirs.d2);
  const std::size_t R = grid.resolution;
  GridValues out(R, R);
  const auto cells = static_cast<std::int64_t>(R * R);
  ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (std::int64_t c = 0; c < cells; ++c) slot.run([&] {
    const auto i = static_cast<std::size_t>(c) / R;
    const auto j = static_cast<std::size_t>(c) % R;
    const std::vector<double> theta = point_flat(t0, d1, d2, grid.alpha(i), grid.beta(j));
    out(i, j) = detail::flat_loss_grad(layout, theta, data.examples, {});
  });
  slot.rethrow();
  return out;
}

std::vector<double> hvp(const GradientFn& grad, std::span<const double> theta, std::span<const double> v,
                        double h) {
  if (v.size() != theta.size()) throw InvalidArgument("direction length differs from parameters");
  const double vn = norm(v);
  if (vn == 0.0) throw InvalidArgument("hvp direction has zero norm");
  std::vector<double> plus(theta.begin(), theta.end());
  std::vector<double> minus(theta.begin(), theta.end());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double step = h * (v[k] / vn);
    plus[k] += step;
    minus[k] -= step;
  }
  std::vector<double> gp(theta.size());
  std::vector<double> gm(theta.size());
  grad(plus, gp);
  grad(minus, gm);
  const double scale = vn / (2.0 * h);
  for (std::size_t k = 0; k < gp.size(); ++k) gp[k] = (gp[k] - gm[k]) * scale;
  return gp;
}

GradientFn mlp_gradient(const MlpSpec& spec, const Dataset& batch) {
  if (batch.examples.empty()) throw InvalidArgument("empty batch");
  auto layout = std::make_shared<detail::MlpLayout>(spec.widths);
  auto examples = std::make_shared<std::vector<Example>>(batch.examples);
  return [layout, examples](std::span<const double> theta, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    detail::flat_loss_grad(*layout, theta, *examples, g);
  };
}

ParameterSet hvp(const ParameterSet& theta, const Dataset& batch, const ParameterSet& v) {
  require_compatible(theta, v);
  const GradientFn g = mlp_gradient(infer_mlp(theta), batch);
  return unflatten(theta, hvp(g, flatten(theta), flatten(v)));
}

EigResult extreme_eigs(const GradientFn& grad, std::span<const double> theta, const EigConfig& cfg) {
  if (cfg.iters < 1) throw InvalidArgument("eigen iterations must be >= 1");
  if (theta.empty()) throw InvalidArgument("empty parameter vector");
  Rng rng(cfg.seed);
  const PowerResult first = power_iteration(grad, theta, 0.0, cfg, rng);
  const PowerResult second = power_iteration(grad, theta, first.value, cfg, rng);
  const double other = first.value + second.value;
  EigResult r;
  r.lambda_max = std::max(first.value, other);
  r.lambda_min = std::min(first.value, other);
  r.converged = first.converged && second.converged;
  r.iterations = first.iterations + second.iterations;
  return r;
}

EigResult extreme_eigs(const ParameterSet& theta, const Dataset& batch, const EigConfig& cfg) {
  return extreme_eigs(mlp_gradient(infer_mlp(theta), batch), flatten(theta), cfg);
}

double convexity_value(double lambda_max, double lambda_min, double eps) {
  return std::clamp(std::abs(lambda_min) / (std::abs(lambda_max) + eps), 0.0, 0.5);
}

ConvexityResult convexity_grid(const ParameterSet& theta0, const DirectionPair& dirs, const GridSpec& grid,
                               const Dataset& data, const EigConfig& cfg, Exec exec) {
  check_grid(grid);
  require_compatible(theta0, dirs.d1);
  require_compatible(theta0, dirs.d2);
  const MlpSpec spec = infer_mlp(theta0);
  const detail::MlpLayout layout(spec.widths);
  const GradientFn g = mlp_gradient(spec, data);
  const std::vector<double> t0 = flatten(theta0);
  const std::vector<double> d1 = flatten(dirs.d1);
  const std::vector<double> d2 = flatten(dirs.d2);
  const std::size_t R = grid.resolution;

  ConvexityResult r;
  r.grid = grid;
  r.convexity = r.lambda_max = r.lambda_min = r.loss = GridValues(R, R);
  r.converged.assign(R * R, 0);
  const auto cells = static_cast<std::int64_t>(R * R);
  ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic) if (exec == Exec::Parallel)
  for (std::int64_t c = 0; c < cells; ++c) slot.run([&] {
    const auto i = static_cast<std::size_t>(c) / R;
    const auto j = static_cast<std::size_t>(c) % R;
    const std::vector<double> theta = point_flat(t0, d1, d2, grid.alpha(i), grid.beta(j));
    EigConfig cell = cfg;
    cell.seed = derive_seed(cfg.seed, "eig", i, j);
    const EigResult e = extreme_eigs(g, theta, cell);
    r.lambda_max(i, j) = e.lambda_max;
    r.lambda_min(i, j) = e.lambda_min;
    r.convexity(i, j) = convexity_value(e.lambda_max, e.lambda_min, grid.eps);
    r.converged[static_cast<std::size_t>(c)] = e.converged ? 1 : 0;
    r.loss(i, j) = detail::flat_loss_grad(layout, theta, data.examples, {});
  });
  slot.rethrow();
  return r;
}

void write_grid_csv(std::ostream& out, const GridSpec& grid, const GridValues& values) {
  out << "i,j,alpha,beta,value\n";
  for (std::size_t i = 0; i < values.rows; ++i) {
    for (std::size_t j = 0; j < values.cols; ++j) {
      out << i << ',' << j << ',' << format_double(grid.alpha(i)) << ',' << format_double(grid.beta(j)) << ','
          << format_double(values(i, j)) << '\n';
    }
  }
}

void write_convexity_csv(std::ostream& out, const ConvexityResult& r) {
  out << "i,j,alpha,beta,value,lambda_max,lambda_min,converged\n";
  for (std::size_t i = 0; i < r.convexity.rows; ++i) {
    for (std::size_t j = 0; j < r.convexity.cols; ++j) {
      out << i << ',' << j << ',' << format_double(r.grid.alpha(i)) << ',' << format_double(r.grid.beta(j))
          << ',' << format_double(r.convexity(i, j)) << ',' << format_double(r.lambda_max(i, j)) << ','
          << format_double(r.lambda_min(i, j)) << ',' << (r.converged_at(i, j) ? 1 : 0) << '\n';
    }
  }
}

void write_pgm(std::ostream& out, const GridValues& values) {
  out << "P5\n" << values.cols << ' ' << values.rows << "\n255\n";
  if (values.data.empty()) return;
  const auto [lo, hi] = std::minmax_element(values.data.begin(), values.data.end());
  const double span = *hi - *lo;
  for (double v : values.data) {
    const double t = span > 0.0 ? (v - *lo) / span : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
  }
}

}  // namespace sae
