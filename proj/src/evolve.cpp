#include "sae/evolve.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "sae/error.hpp"
#include "sae/parallel.hpp"
#include "sae/rng.hpp"

namespace sae {

namespace {

void apply_score(Individual& ind, const Score& s) {
  ind.perf = s.perf;
  ind.perf_mean = s.perf_mean;
  ind.total_score = s.total;
  ind.stats = collect_stats(ind.params);
}

Individual make_individual(int id, ParameterSet params, Lineage lineage, bool root,
                           std::span<const Dataset> batches, double gamma) {
  Individual ind;
  ind.id = id;
  ind.params = std::move(params);
  ind.lineage = std::move(lineage);
  ind.dense_root = root;
  apply_score(ind, score(ind.params, batches, gamma));
  return ind;
}

MemberSnapshot snapshot(const Individual& ind) {
  return {ind.id, ind.perf, ind.perf_mean, ind.stats.zero_fraction, ind.total_score};
}

// Lowest total_score; among equals the newest member goes first.
std::size_t worst_index(const std::vector<Individual>& members) {
  std::size_t w = 0;
  for (std::size_t i = 1; i < members.size(); ++i) {
    const auto& m = members[i];
    if (m.total_score < members[w].total_score ||
        (m.total_score == members[w].total_score && m.id > members[w].id)) {
      w = i;
    }
  }
  return w;
}

std::size_t index_of(const std::vector<Individual>& members, int id) {
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i].id == id) return i;
  }
  return members.size();
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const Individual& Archive::best() const {
  if (members.empty()) throw InvalidArgument("empty archive");
  std::size_t b = 0;
  for (std::size_t i = 1; i < members.size(); ++i) {
    if (members[i].total_score > members[b].total_score ||
        (members[i].total_score == members[b].total_score && members[i].id < members[b].id)) {
      b = i;
    }
  }
  return members[b];
}

std::vector<std::string> EvolveConfig::violations() const {
  std::vector<std::string> v = schedule.violations();
  for (auto& s : merge.violations()) v.push_back(std::move(s));
  if (capacity < 2) v.push_back("capacity must be >= 2");
  if (capacity % 2 != 0) v.push_back("capacity must be even");
  if (tasks.empty()) v.push_back("at least one task is required");
  if (opt_batch == 0) v.push_back("optimization batch size must be positive");
  return v;
}

Score score(const ParameterSet& params, std::span<const Dataset> batches, double gamma) {
  if (batches.empty()) throw InvalidArgument("score: no batches");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in [0, 1]");
  Score s;
  for (const Dataset& d : batches) {
    if (d.empty()) throw InvalidArgument("score: empty batch");
    s.perf.push_back(accuracy(params, d));
  }
  s.perf_mean = std::accumulate(s.perf.begin(), s.perf.end(), 0.0) / static_cast<double>(s.perf.size());
  s.zero_fraction = collect_stats(params).zero_fraction;
  s.total = (1.0 - gamma) * s.perf_mean + gamma * s.zero_fraction;
  return s;
}

std::vector<Dataset> optimization_batches(std::span<const TaskHandle> tasks, std::size_t per_task,
                                          std::uint64_t seed, std::uint64_t generation) {
  std::vector<Dataset> out;
  out.reserve(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    out.push_back(gen_dataset(tasks[t].spec, Split::Opt, per_task, derive_seed(seed, "opt", generation, t)));
  }
  return out;
}

std::vector<Dataset> optimization_batches(const EvolveConfig& cfg, std::uint64_t generation) {
  return optimization_batches(cfg.tasks, cfg.opt_batch, cfg.seed, generation);
}

Archive init_archive(std::span<const ParameterSet> experts, const EvolveConfig& cfg) {
  if (const auto v = cfg.violations(); !v.empty()) throw InvalidArgument(v.front());
  if (experts.size() < 2) throw InvalidArgument("need at least two dense experts");
  for (std::size_t k = 1; k < experts.size(); ++k) require_compatible(experts[0], experts[k]);
  if (cfg.capacity < experts.size()) throw InvalidArgument("capacity below the number of experts");

  const std::vector<Dataset> batches = optimization_batches(cfg, 0);
  const auto variants = make_sparse_variants(experts, cfg.capacity, cfg.schedule, cfg.seed);

  Archive archive;
  archive.capacity = cfg.capacity;
  archive.original_dense = weight_average(experts);
  archive.members.resize(cfg.capacity);
  const auto n = static_cast<std::int64_t>(cfg.capacity);
  const auto k = static_cast<std::int64_t>(experts.size());
  ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) slot.run([&] {
    const int id = static_cast<int>(i);
    if (i < k) {
      archive.members[i] = make_individual(id, experts[i], {0, {}, 0.0}, true, batches, cfg.merge.gamma);
    } else {
      const auto& v = variants[static_cast<std::size_t>(i - k)];
      archive.members[i] = make_individual(id, v.params, {0, {static_cast<int>(v.parent)}, v.rate},
                                           false, batches, cfg.merge.gamma);
    }
  });
  slot.rethrow();
  archive.next_id = static_cast<int>(cfg.capacity);
  return archive;
}

TraceRecord evolve_step(Archive& archive, const EvolveConfig& cfg, int step) {
  if (archive.members.size() != archive.capacity || archive.capacity == 0) {
    throw InvalidArgument("evolve_step: archive not at capacity");
  }
  if (archive.capacity % 2 != 0) throw InvalidArgument("evolve_step: capacity must be even");
  const double rate = schedule_rate(cfg.schedule, step);
  const auto generation = static_cast<std::uint64_t>(step) + 1;
  const std::vector<Dataset> batches = optimization_batches(cfg, generation);
  const double gamma = cfg.merge.gamma;

  if (cfg.refresh_scores) {
    const auto n = static_cast<std::int64_t>(archive.members.size());
    ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) slot.run([&] {
      auto& m = archive.members[static_cast<std::size_t>(i)];
      apply_score(m, score(m.params, batches, gamma));
    });
    slot.rethrow();
  }

  TraceRecord rec;
  rec.step = step;
  rec.rate = rate;

  std::vector<std::size_t> order(archive.members.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, "pairing", generation));
  rng.shuffle(std::span(order));
  const std::size_t num_pairs = order.size() / 2;
  for (std::size_t p = 0; p < num_pairs; ++p) {
    rec.pairing.emplace_back(archive.members[order[2 * p]].id, archive.members[order[2 * p + 1]].id);
  }

  std::vector<Individual> children(num_pairs);
  rec.offspring.resize(num_pairs);
  const auto np = static_cast<std::int64_t>(num_pairs);
  ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t p = 0; p < np; ++p) slot.run([&] {
    const auto pi = static_cast<std::size_t>(p);
    const Individual& a = archive.members[order[2 * pi]];
    const Individual& b = archive.members[order[2 * pi + 1]];
    MergeResult merged = merge_models(a.params, b.params, a.perf_mean, b.perf_mean, cfg.merge);
    ParameterSet child = prune(merged.model, rate, Granularity::Global);
    const double pruned_zero_fraction = collect_stats(child).zero_fraction;
    if (cfg.merge.redense == RedenseMode::FromOriginalDense) {
      child = redense(child, archive.original_dense);
    }
    const int id = archive.next_id + static_cast<int>(p);
    children[pi] = make_individual(id, std::move(child), {step + 1, {a.id, b.id}, rate}, false, batches, gamma);

    OffspringEvent& ev = rec.offspring[pi];
    ev.offspring_id = id;
    ev.parent_a = a.id;
    ev.parent_b = b.id;
    ev.prune_rate = rate;
    ev.weights = std::move(merged.weights);
    ev.perf = children[pi].perf;
    ev.perf_mean = children[pi].perf_mean;
    ev.zero_fraction = pruned_zero_fraction;
    ev.total_score = children[pi].total_score;
  });
  slot.rethrow();
  archive.next_id += static_cast<int>(num_pairs);

  for (std::size_t p = 0; p < num_pairs; ++p) {
    OffspringEvent& ev = rec.offspring[p];
    std::size_t target = archive.members.size();
    if (cfg.replacement == ReplacementPolicy::ArchiveWorst) {
      target = worst_index(archive.members);
    } else {
      const std::size_t ia = index_of(archive.members, ev.parent_a);
      const std::size_t ib = index_of(archive.members, ev.parent_b);
      if (ia < archive.members.size() && ib < archive.members.size()) {
        target = archive.members[ib].total_score < archive.members[ia].total_score ? ib : ia;
      } else {
        target = ia < archive.members.size() ? ia : ib;
      }
    }
    if (target < archive.members.size() && children[p].total_score > archive.members[target].total_score) {
      ev.accepted = true;
      ev.replaced_id = archive.members[target].id;
      archive.members[target] = std::move(children[p]);
    }
  }

  if (cfg.anneal == AnnealTarget::OffspringAndArchive) {
    const auto n = static_cast<std::int64_t>(archive.members.size());
    ExceptionSlot anneal_slot;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) anneal_slot.run([&] {
      auto& m = archive.members[static_cast<std::size_t>(i)];
      if (m.dense_root) return;
      m.params = prune(m.params, rate, Granularity::Global);
      m.lineage.prune_rate = std::max(m.lineage.prune_rate, rate);
      apply_score(m, score(m.params, batches, gamma));
    });
    anneal_slot.rethrow();
  }

  for (const auto& m : archive.members) rec.members.push_back(snapshot(m));
  return rec;
}

SaeResult run_sae(std::span<const ParameterSet> experts, const EvolveConfig& cfg) {
  SaeResult r;
  r.archive = init_archive(experts, cfg);
  for (int step = 0; step < cfg.schedule.total_steps; ++step) {
    r.trace.push_back(evolve_step(r.archive, cfg, step));
  }
  r.best = r.archive.best();
  return r;
}

void write_trace_csv(std::ostream& out, std::span<const TraceRecord> trace) {
  out << "step,member_id,perf_task_a,perf_task_b,perf_mean,zero_frac,total_score,event\n";
  auto perf_cols = [&](const std::vector<double>& perf) {
    out << (perf.size() > 0 ? format_double(perf[0]) : "") << ','
        << (perf.size() > 1 ? format_double(perf[1]) : "") << ',';
  };
  for (const TraceRecord& rec : trace) {
    for (const OffspringEvent& ev : rec.offspring) {
      out << rec.step << ',' << ev.offspring_id << ',';
      perf_cols(ev.perf);
      out << format_double(ev.perf_mean) << ',' << format_double(ev.zero_fraction) << ','
          << format_double(ev.total_score) << ",offspring parents=" << ev.parent_a << '|' << ev.parent_b
          << " rate=" << format_double(ev.prune_rate)
          << (ev.accepted ? " accepted replaced=" + std::to_string(ev.replaced_id) : std::string(" rejected"))
          << " lambda=" << ev.weights.serialize() << '\n';
    }
    for (const MemberSnapshot& m : rec.members) {
      out << rec.step << ',' << m.id << ',';
      perf_cols(m.perf);
      out << format_double(m.perf_mean) << ',' << format_double(m.zero_fraction) << ','
          << format_double(m.total_score) << ",member\n";
    }
  }
}

std::string to_string(AnnealTarget a) {
  return a == AnnealTarget::OffspringAndArchive ? "archive" : "offspring";
}

AnnealTarget parse_anneal(const std::string& s) {
  if (s == "offspring") return AnnealTarget::OffspringOnly;
  if (s == "archive") return AnnealTarget::OffspringAndArchive;
  throw InvalidArgument("anneal must be offspring or archive, got " + s);
}

std::string to_string(ReplacementPolicy p) {
  return p == ReplacementPolicy::WorseParent ? "worse-parent" : "archive-worst";
}

ReplacementPolicy parse_replacement(const std::string& s) {
  if (s == "archive-worst") return ReplacementPolicy::ArchiveWorst;
  if (s == "worse-parent") return ReplacementPolicy::WorseParent;
  throw InvalidArgument("replacement must be archive-worst or worse-parent, got " + s);
}

}  // namespace sae
