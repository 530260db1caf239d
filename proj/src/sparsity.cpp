#include "sae/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <utility>

#include "sae/error.hpp"

namespace sae {

namespace {

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw InvalidArgument("prune rate must lie in [0, 1], got " + std::to_string(rate));
  }
}

// Indices of the k smallest |values| with ties on the lower index.
std::vector<std::size_t> smallest_k(std::span<const double> values, std::size_t k) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (k == 0) return {};
  auto less = [&](std::size_t i, std::size_t j) {
    const double ai = std::abs(values[i]);
    const double aj = std::abs(values[j]);
    return ai < aj || (ai == aj && i < j);
  };
  if (k < idx.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), less);
    idx.resize(k);
  }
  return idx;
}

}  // namespace

std::vector<std::string> SparsitySchedule::violations() const {
  std::vector<std::string> v;
  if (!(s_min >= 0.0 && s_min <= 1.0)) v.push_back("s_min must lie in [0, 1]");
  if (!(s_max >= 0.0 && s_max <= 1.0)) v.push_back("s_max must lie in [0, 1]");
  if (!(s_min <= s_max)) v.push_back("s_min must not exceed s_max");
  if (t0 < 1) v.push_back("t0 must be >= 1");
  if (t_mult < 1) v.push_back("t_mult must be >= 1");
  if (total_steps < 0) v.push_back("total_steps must be >= 0");
  return v;
}

void SparsitySchedule::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid sparsity schedule:";
  for (const auto& s : v) msg += " " + s + ";";
  throw InvalidArgument(msg);
}

double schedule_rate(const SparsitySchedule& sched, int step) {
  sched.validate();
  if (step < 0 || step >= sched.total_steps) {
    throw InvalidArgument("schedule step " + std::to_string(step) + " outside [0, " +
                          std::to_string(sched.total_steps) + ")");
  }
  long long cycle = sched.t0;
  long long t = step;
  while (t >= cycle) {
    t -= cycle;
    cycle *= sched.t_mult;
  }
  if (cycle == 1) return sched.s_max;
  const double frac = static_cast<double>(t) / static_cast<double>(cycle - 1);
  const double span = sched.s_max - sched.s_min;
  if (sched.ramp == RampShape::Cosine) {
    return sched.s_min + span * 0.5 * (1.0 - std::cos(std::numbers::pi * frac));
  }
  return sched.s_min + span * frac;
}

std::size_t prune_quota(double rate, std::size_t n) {
  check_rate(rate);
  const auto k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 1e-9));
  return std::min(k, n);
}

ParameterSet prune(const ParameterSet& p, double rate, Granularity granularity) {
  check_rate(rate);
  std::vector<std::vector<double>> values;
  values.reserve(p.size());
  for (const Layer& l : p.layers()) values.emplace_back(l.tensor.values().begin(), l.tensor.values().end());

  if (granularity == Granularity::Local) {
    for (auto& v : values) {
      for (std::size_t i : smallest_k(v, prune_quota(rate, v.size()))) v[i] = 0.0;
    }
  } else {
    std::vector<double> flat;
    flat.reserve(param_count(p));
    std::vector<std::pair<std::size_t, std::size_t>> where;  // flat index -> (layer, offset)
    where.reserve(param_count(p));
    for (std::size_t li = 0; li < values.size(); ++li) {
      for (std::size_t j = 0; j < values[li].size(); ++j) {
        flat.push_back(values[li][j]);
        where.emplace_back(li, j);
      }
    }
    for (std::size_t i : smallest_k(flat, prune_quota(rate, flat.size()))) {
      values[where[i].first][where[i].second] = 0.0;
    }
  }

  std::vector<Layer> layers;
  layers.reserve(p.size());
  for (std::size_t li = 0; li < p.size(); ++li) {
    const Layer& l = p.layers()[li];
    layers.push_back({l.name, Tensor(l.tensor.dims(), std::move(values[li]))});
  }
  return ParameterSet(std::move(layers));
}

SparsityStats collect_stats(const ParameterSet& p) {
  SparsityStats s;
  double abs_total = 0.0;
  for (const Layer& l : p.layers()) {
    LayerStats ls;
    ls.name = l.name;
    ls.numel = l.tensor.numel();
    double abs_sum = 0.0;
    for (double v : l.tensor.values()) {
      if (v == 0.0) ++ls.zero_count;
      abs_sum += std::abs(v);
    }
    if (ls.numel > 0) {
      ls.zero_fraction = static_cast<double>(ls.zero_count) / static_cast<double>(ls.numel);
      ls.mean_abs = abs_sum / static_cast<double>(ls.numel);
    }
    s.numel += ls.numel;
    s.zero_count += ls.zero_count;
    abs_total += abs_sum;
    s.layers.push_back(std::move(ls));
  }
  if (s.numel > 0) {
    s.zero_fraction = static_cast<double>(s.zero_count) / static_cast<double>(s.numel);
    s.mean_abs = abs_total / static_cast<double>(s.numel);
  }
  return s;
}

std::vector<OmegaPair> sparsity_weights(const ParameterSet& a, const ParameterSet& b,
                                        SparsityMeasure measure, Granularity granularity) {
  require_compatible(a, b);
  const SparsityStats sa = collect_stats(a);
  const SparsityStats sb = collect_stats(b);

  auto magnitude_pair = [](double ma, double mb) {
    const double denom = ma + mb + kMagnitudeEpsilon;
    return OmegaPair{1.0 - ma / denom, 1.0 - mb / denom};
  };

  std::vector<OmegaPair> out(a.size());
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (measure == SparsityMeasure::ZeroCount) {
      out[l] = granularity == Granularity::Local
                   ? OmegaPair{sa.layers[l].zero_fraction, sb.layers[l].zero_fraction}
                   : OmegaPair{sa.zero_fraction, sb.zero_fraction};
    } else {
      out[l] = granularity == Granularity::Local
                   ? magnitude_pair(sa.layers[l].mean_abs, sb.layers[l].mean_abs)
                   : magnitude_pair(sa.mean_abs, sb.mean_abs);
    }
  }
  return out;
}

std::vector<double> variant_rates(std::size_t count, double s_min, double s_max) {
  std::vector<double> rates(count);
  if (count == 1) {
    rates[0] = 0.5 * (s_min + s_max);
    return rates;
  }
  for (std::size_t i = 0; i < count; ++i) {
    rates[i] = s_min + (s_max - s_min) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return rates;
}

std::vector<SparseVariant> make_sparse_variants(std::span<const ParameterSet> dense,
                                                std::size_t capacity,
                                                const SparsitySchedule& sched, std::uint64_t seed,
                                                Granularity granularity) {
  (void)seed;
  sched.validate();
  if (dense.empty()) throw InvalidArgument("need at least one dense model");
  if (capacity < dense.size()) {
    throw InvalidArgument("capacity " + std::to_string(capacity) + " below the number of dense models " +
                          std::to_string(dense.size()));
  }
  const std::size_t count = capacity - dense.size();
  const std::vector<double> rates = variant_rates(count, sched.s_min, sched.s_max);
  std::vector<SparseVariant> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t parent = i % dense.size();
    out.push_back({prune(dense[parent], rates[i], granularity), parent, rates[i]});
  }
  return out;
}

std::string to_string(SparsityMeasure m) {
  return m == SparsityMeasure::ZeroCount ? "zero-count" : "magnitude";
}

std::string to_string(Granularity g) { return g == Granularity::Local ? "local" : "global"; }

SparsityMeasure parse_measure(const std::string& s) {
  if (s == "zero-count") return SparsityMeasure::ZeroCount;
  if (s == "magnitude") return SparsityMeasure::Magnitude;
  throw InvalidArgument("measure must be magnitude or zero-count, got " + s);
}

Granularity parse_granularity(const std::string& s) {
  if (s == "global") return Granularity::Global;
  if (s == "local") return Granularity::Local;
  throw InvalidArgument("granularity must be global or local, got " + s);
}

}  // namespace sae
