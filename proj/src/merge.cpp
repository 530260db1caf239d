#include "sae/merge.hpp"

#include <cstdio>
#include <stdexcept>

#include "sae/error.hpp"

namespace sae {

namespace {

std::vector<double> copy_values(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw InvalidArgument(std::string(what) + " must lie in [0, 1], got " + std::to_string(v));
  }
}

}  // namespace

std::vector<std::string> MergeConfig::violations() const {
  std::vector<std::string> v;
  if (!(gamma >= 0.0 && gamma <= 1.0)) v.push_back("gamma must lie in [0, 1]");
  return v;
}

double MergeWeights::at(std::string_view layer) const {
  for (const auto& l : layers) {
    if (l.layer == layer) return l.lambda;
  }
  throw std::out_of_range("no lambda for layer " + std::string(layer));
}

std::string MergeWeights::serialize() const {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", layers[i].lambda);
    if (i) out += ';';
    out += layers[i].layer + "=" + buf;
  }
  return out;
}

double compute_lambda(double s_a, double s_b, double w_a, double w_b) {
  if (!(s_a >= 0.0 && s_b >= 0.0 && w_a >= 0.0 && w_b >= 0.0)) {
    throw InvalidArgument("mixing-ratio inputs must be non-negative");
  }
  const double x = s_a + w_a;
  const double y = s_b + w_b;
  const double denom = x + y;
  if (denom == 0.0 || x == y) return 0.5;
  // The smaller side is divided directly and the larger one is its
  // complement, which makes the swapped call sum to exactly 1.
  return x < y ? x / denom : 1.0 - y / denom;
}

Tensor merge_layer(const Tensor& a, const Tensor& b, double lambda, Exec exec) {
  if (!a.same_shape(b)) throw IncompatibleError("merge_layer: shape mismatch");
  check_unit(lambda, "lambda");
  std::vector<double> out(a.numel());
  if (exec == Exec::Serial) {
    kernels::serial::merge_attract(a.values(), b.values(), lambda, out);
  } else {
    kernels::omp::merge_attract(a.values(), b.values(), lambda, out);
  }
  return Tensor(a.dims(), std::move(out));
}

MergeResult merge_models(const ParameterSet& a, const ParameterSet& b, double s_a, double s_b,
                         const MergeConfig& cfg) {
  require_compatible(a, b);
  check_unit(s_a, "s_a");
  check_unit(s_b, "s_b");
  const auto omegas = sparsity_weights(a, b, cfg.measure, cfg.granularity);
  MergeResult r;
  std::vector<Layer> layers;
  layers.reserve(a.size());
  for (std::size_t l = 0; l < a.size(); ++l) {
    const Layer& la = a.layers()[l];
    const double lambda = compute_lambda(s_a, s_b, omegas[l].a, omegas[l].b);
    r.weights.layers.push_back({la.name, lambda});
    layers.push_back({la.name, merge_layer(la.tensor, b.layers()[l].tensor, lambda)});
  }
  r.model = ParameterSet(std::move(layers));
  return r;
}

ParameterSet interpolate(const ParameterSet& a, const ParameterSet& b,
                         std::span<const double> lambdas) {
  require_compatible(a, b);
  if (lambdas.size() != a.size()) {
    throw InvalidArgument("interpolate: need one lambda per layer");
  }
  std::vector<Layer> layers;
  layers.reserve(a.size());
  for (std::size_t l = 0; l < a.size(); ++l) {
    check_unit(lambdas[l], "lambda");
    const Tensor& ta = a.layers()[l].tensor;
    std::vector<double> out(ta.numel());
    kernels::omp::interpolate(ta.values(), b.layers()[l].tensor.values(), lambdas[l], out);
    layers.push_back({a.layers()[l].name, Tensor(ta.dims(), std::move(out))});
  }
  return ParameterSet(std::move(layers));
}

ParameterSet redense(const ParameterSet& p, const ParameterSet& donor, Exec exec) {
  require_compatible(p, donor);
  std::vector<Layer> layers;
  layers.reserve(p.size());
  for (std::size_t l = 0; l < p.size(); ++l) {
    const Tensor& t = p.layers()[l].tensor;
    std::vector<double> out(t.numel());
    if (exec == Exec::Serial) {
      kernels::serial::fill_zeros(t.values(), donor.layers()[l].tensor.values(), out);
    } else {
      kernels::omp::fill_zeros(t.values(), donor.layers()[l].tensor.values(), out);
    }
    layers.push_back({p.layers()[l].name, Tensor(t.dims(), std::move(out))});
  }
  return ParameterSet(std::move(layers));
}

ParameterSet weight_average(std::span<const ParameterSet> models, Exec exec) {
  if (models.empty()) throw InvalidArgument("weight_average: empty model list");
  for (std::size_t k = 1; k < models.size(); ++k) require_compatible(models[0], models[k]);
  std::vector<Layer> layers;
  layers.reserve(models[0].size());
  std::vector<std::span<const double>> inputs(models.size());
  for (std::size_t l = 0; l < models[0].size(); ++l) {
    for (std::size_t k = 0; k < models.size(); ++k) inputs[k] = models[k].layers()[l].tensor.values();
    const Tensor& t = models[0].layers()[l].tensor;
    std::vector<double> out(t.numel());
    if (exec == Exec::Serial) {
      kernels::serial::mean(inputs, out);
    } else {
      kernels::omp::mean(inputs, out);
    }
    layers.push_back({models[0].layers()[l].name, Tensor(t.dims(), std::move(out))});
  }
  return ParameterSet(std::move(layers));
}

ParameterSet task_arithmetic(const ParameterSet& base, std::span<const ParameterSet> experts,
                             double scale) {
  for (const auto& e : experts) require_compatible(base, e);
  const double base_weight = 1.0 - scale * static_cast<double>(experts.size());
  std::vector<Layer> layers;
  layers.reserve(base.size());
  for (std::size_t l = 0; l < base.size(); ++l) {
    const Tensor& t = base.layers()[l].tensor;
    std::vector<double> out = copy_values(t);
    for (std::size_t i = 0; i < out.size(); ++i) {
      double sum = 0.0;
      for (const auto& e : experts) sum += e.layers()[l].tensor[i];
      out[i] = base_weight * out[i] + scale * sum;
    }
    layers.push_back({base.layers()[l].name, Tensor(t.dims(), std::move(out))});
  }
  return ParameterSet(std::move(layers));
}

std::string to_string(RedenseMode m) {
  return m == RedenseMode::FromOriginalDense ? "original-dense" : "parents";
}

RedenseMode parse_redense(const std::string& s) {
  if (s == "parents") return RedenseMode::FromParents;
  if (s == "original-dense") return RedenseMode::FromOriginalDense;
  throw InvalidArgument("redense must be parents or original-dense, got " + s);
}

}  // namespace sae
