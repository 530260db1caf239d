#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sae/params.hpp"

namespace sae {

enum class SparsityMeasure { ZeroCount, Magnitude };
enum class Granularity { Global, Local };
enum class RampShape { Linear, Cosine };

/// Cyclic ramp-and-restart controller for the prune rate.
///
/// Cycle i has nominal length t0 * t_mult^i. Inside a cycle the rate rises
/// from s_min to s_max; the next cycle restarts at s_min. The last cycle is
/// cut off by total_steps but keeps its nominal slope.
struct SparsitySchedule {
  double s_min = 0.1;
  double s_max = 0.6;
  int t0 = 3;
  int t_mult = 2;
  int total_steps = 12;
  RampShape ramp = RampShape::Linear;

  /// Every violated invariant, empty when valid.
  std::vector<std::string> violations() const;
  /// Throws InvalidArgument listing all violations.
  void validate() const;
};

double schedule_rate(const SparsitySchedule& sched, int step);

/// floor(rate * n). A 1e-9 slack keeps decimal rates such as 0.3 from losing
/// an element to binary rounding of the product.
std::size_t prune_quota(double rate, std::size_t n);

/// Zeros the prune_quota(rate, N) smallest-magnitude entries, model-wide
/// (Global) or per layer (Local). Entries already at zero count toward the
/// quota. Ties go to the lower flat index; survivors are copied bit-for-bit.
ParameterSet prune(const ParameterSet& p, double rate, Granularity granularity);

struct LayerStats {
  std::string name;
  std::size_t numel = 0;
  std::size_t zero_count = 0;
  double zero_fraction = 0.0;
  double mean_abs = 0.0;
};

struct SparsityStats {
  std::vector<LayerStats> layers;
  std::size_t numel = 0;
  std::size_t zero_count = 0;
  double zero_fraction = 0.0;
  double mean_abs = 0.0;
};

SparsityStats collect_stats(const ParameterSet& p);

/// Sparsity-induced weights of one layer for the two parents.
struct OmegaPair {
  double a = 0.0;
  double b = 0.0;
};

inline constexpr double kMagnitudeEpsilon = 1e-12;

/// Per-layer omega signals in [0, 1].
///
/// ZeroCount: the zero fraction of the layer (Local) or of the whole model
/// (Global). Magnitude: pair-normalized mean absolute value,
/// omega_a = 1 - m_a / (m_a + m_b + eps), so the parent with the smaller
/// mean magnitude gets the larger weight. Global uses model-wide means.
std::vector<OmegaPair> sparsity_weights(const ParameterSet& a, const ParameterSet& b,
                                        SparsityMeasure measure, Granularity granularity);

/// `count` rates evenly spaced over [s_min, s_max]; a single rate sits at the
/// midpoint.
std::vector<double> variant_rates(std::size_t count, double s_min, double s_max);

struct SparseVariant {
  ParameterSet params;
  std::size_t parent = 0;
  double rate = 0.0;
};

/// capacity - dense.size() pruned copies. Variant i uses the i-th evenly
/// spaced rate and parent i mod dense.size(). Magnitude pruning is
/// deterministic, so `seed` only labels the result.
std::vector<SparseVariant> make_sparse_variants(std::span<const ParameterSet> dense,
                                                std::size_t capacity,
                                                const SparsitySchedule& sched, std::uint64_t seed,
                                                Granularity granularity = Granularity::Global);

std::string to_string(SparsityMeasure m);
std::string to_string(Granularity g);
SparsityMeasure parse_measure(const std::string& s);
Granularity parse_granularity(const std::string& s);

}  // namespace sae
