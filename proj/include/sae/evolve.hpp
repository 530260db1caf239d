#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sae/merge.hpp"
#include "sae/params.hpp"
#include "sae/sparsity.hpp"
#include "sae/tasks.hpp"

namespace sae {

struct TaskHandle {
  std::string name;
  ModularTaskSpec spec;
};

enum class AnnealTarget { OffspringOnly, OffspringAndArchive };

/// ArchiveWorst evicts the lowest-scoring member of the whole archive;
/// WorseParent only competes against the weaker of the two parents.
enum class ReplacementPolicy { ArchiveWorst, WorseParent };

struct Lineage {
  int generation = 0;
  std::vector<int> parents;
  double prune_rate = 0.0;
};

struct Individual {
  int id = -1;
  ParameterSet params;
  std::vector<double> perf;
  double perf_mean = 0.0;
  SparsityStats stats;
  /// (1 - gamma) * perf_mean + gamma * zero_fraction.
  double total_score = 0.0;
  Lineage lineage;
  /// Original dense experts are never re-pruned.
  bool dense_root = false;
};

struct Archive {
  std::size_t capacity = 0;
  std::vector<Individual> members;
  /// Elementwise mean of the root experts, the donor for FromOriginalDense.
  ParameterSet original_dense;
  int next_id = 0;

  const Individual& best() const;
};

struct EvolveConfig {
  std::size_t capacity = 8;
  SparsitySchedule schedule;
  MergeConfig merge;
  std::uint64_t seed = 0;
  std::vector<TaskHandle> tasks;
  /// Examples per task in each freshly drawn optimization batch.
  std::size_t opt_batch = 64;
  AnnealTarget anneal = AnnealTarget::OffspringOnly;
  ReplacementPolicy replacement = ReplacementPolicy::ArchiveWorst;
  /// Re-evaluate every member on the step's batch before pairing.
  bool refresh_scores = false;

  std::vector<std::string> violations() const;
};

struct Score {
  std::vector<double> perf;
  double perf_mean = 0.0;
  double zero_fraction = 0.0;
  double total = 0.0;
};

/// Per-task accuracy on the given batches blended with the zero fraction.
Score score(const ParameterSet& params, std::span<const Dataset> batches, double gamma);

/// The optimization batch of every task for one generation (0 = archive
/// initialization, step s uses generation s + 1).
std::vector<Dataset> optimization_batches(const EvolveConfig& cfg, std::uint64_t generation);
std::vector<Dataset> optimization_batches(std::span<const TaskHandle> tasks, std::size_t per_task,
                                          std::uint64_t seed, std::uint64_t generation);

/// Dense experts followed by evenly spaced sparse variants up to capacity,
/// all scored on the generation-0 batches.
Archive init_archive(std::span<const ParameterSet> experts, const EvolveConfig& cfg);

struct MemberSnapshot {
  int id = -1;
  std::vector<double> perf;
  double perf_mean = 0.0;
  double zero_fraction = 0.0;
  double total_score = 0.0;
};

struct OffspringEvent {
  int offspring_id = -1;
  int parent_a = -1;
  int parent_b = -1;
  double prune_rate = 0.0;
  MergeWeights weights;
  std::vector<double> perf;
  double perf_mean = 0.0;
  double zero_fraction = 0.0;
  double total_score = 0.0;
  bool accepted = false;
  int replaced_id = -1;
};

struct TraceRecord {
  int step = 0;
  double rate = 0.0;
  std::vector<std::pair<int, int>> pairing;
  std::vector<OffspringEvent> offspring;
  /// Archive state after the step, in archive order.
  std::vector<MemberSnapshot> members;
};

/// One prune-merge-redense generation.
///
/// Members are paired by a uniformly random perfect matching, each pair
/// yields one offspring (merged with the parents' perf_mean as scores,
/// pruned globally at schedule_rate(step), re-densed from the original
/// dense average when configured), offspring are scored on a fresh batch,
/// and replacements are applied in pair order. With OffspringOnly and no
/// score refresh the archive-best total_score never decreases.
TraceRecord evolve_step(Archive& archive, const EvolveConfig& cfg, int step);

struct SaeResult {
  Individual best;
  std::vector<TraceRecord> trace;
  Archive archive;
};

SaeResult run_sae(std::span<const ParameterSet> experts, const EvolveConfig& cfg);

/// step,member_id,perf_task_a,perf_task_b,perf_mean,zero_frac,total_score,event
void write_trace_csv(std::ostream& out, std::span<const TraceRecord> trace);

std::string to_string(AnnealTarget a);
AnnealTarget parse_anneal(const std::string& s);
std::string to_string(ReplacementPolicy p);
ReplacementPolicy parse_replacement(const std::string& s);

/// "%.17g" so CSV output round-trips doubles exactly.
std::string format_double(double v);

}  // namespace sae
