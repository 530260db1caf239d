#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sae/kernels.hpp"
#include "sae/params.hpp"
#include "sae/sparsity.hpp"

namespace sae {

enum class RedenseMode { FromParents, FromOriginalDense };

struct MergeConfig {
  SparsityMeasure measure = SparsityMeasure::Magnitude;
  Granularity granularity = Granularity::Global;
  RedenseMode redense = RedenseMode::FromParents;
  /// Weight of the zero fraction in the selection score.
  double gamma = 0.2;

  std::vector<std::string> violations() const;
};

struct LayerLambda {
  std::string layer;
  double lambda = 0.5;
};

/// Per-layer mixing ratios used by one merge.
struct MergeWeights {
  std::vector<LayerLambda> layers;

  double at(std::string_view layer) const;
  /// "name=value;name=value", values printed with 17 significant digits.
  std::string serialize() const;
};

/// (s_a + w_a) / ((s_a + w_a) + (s_b + w_b)), or 0.5 when the denominator
/// is zero. Computed so that lambda(a, b) + lambda(b, a) == 1 exactly.
double compute_lambda(double s_a, double s_b, double w_a, double w_b);

/// Attraction merge of one tensor; see kernels::merge_element.
Tensor merge_layer(const Tensor& a, const Tensor& b, double lambda, Exec exec = Exec::Parallel);

struct MergeResult {
  ParameterSet model;
  MergeWeights weights;
};

/// Layer-wise sparsity-aware merge of two parents with evaluation scores
/// s_a, s_b in [0, 1].
MergeResult merge_models(const ParameterSet& a, const ParameterSet& b, double s_a, double s_b,
                         const MergeConfig& cfg);

/// Dense per-layer interpolation without attraction:
/// lambdas[l] * a + (1 - lambdas[l]) * b.
ParameterSet interpolate(const ParameterSet& a, const ParameterSet& b,
                         std::span<const double> lambdas);

/// Replaces every exact zero of p with the donor's value at that position.
ParameterSet redense(const ParameterSet& p, const ParameterSet& donor, Exec exec = Exec::Parallel);

ParameterSet weight_average(std::span<const ParameterSet> models, Exec exec = Exec::Parallel);

/// base + scale * sum_k (expert_k - base), evaluated as
/// (1 - scale * K) * base + scale * sum_k expert_k.
ParameterSet task_arithmetic(const ParameterSet& base, std::span<const ParameterSet> experts,
                             double scale);

std::string to_string(RedenseMode m);
RedenseMode parse_redense(const std::string& s);

}  // namespace sae
