#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sae/evolve.hpp"
#include "sae/params.hpp"
#include "sae/rng.hpp"

namespace sae {

// Particle swarm baseline over dense per-layer mixing coefficients.
// There is no attraction rule here: experts are interpolated directly.

struct PsoConfig {
  std::size_t swarm = 8;
  int iterations = 12;
  double inertia = 0.729;
  double c1 = 1.49445;
  double c2 = 1.49445;
  double vmax = 0.2;
  std::uint64_t seed = 0;
  std::size_t opt_batch = 64;

  std::vector<std::string> violations() const;
};

struct Particle {
  std::vector<double> position;
  std::vector<double> velocity;
  std::vector<double> best_position;
  double fitness = -std::numeric_limits<double>::infinity();
  double best_fitness = -std::numeric_limits<double>::infinity();
};

struct Swarm {
  std::vector<Particle> particles;
  std::vector<double> best_position;
  double best_fitness = -std::numeric_limits<double>::infinity();
};

/// Positions uniform in [0, 1]^dims, zero velocities.
Swarm init_swarm(std::size_t dims, const PsoConfig& cfg);

/// v <- w v + c1 r1 (pbest - x) + c2 r2 (gbest - x), clamped to +-vmax;
/// x <- clamp(x + v, 0, 1).
void update_swarm(Swarm& swarm, const PsoConfig& cfg, Rng& rng);

/// Fitness of a position at a given iteration; called concurrently.
using FitnessFn = std::function<double(std::span<const double> position, int iteration)>;

struct PsoTraceRow {
  int iteration = 0;
  double gbest_fitness = 0.0;
  double mean_fitness = 0.0;
  std::vector<double> gbest_position;
};

/// Iteration 0 scores the initial positions; every later iteration moves
/// the swarm first. Personal and global bests only change on strict
/// improvement, so gbest_fitness never decreases.
std::vector<PsoTraceRow> optimize_swarm(Swarm& swarm, const PsoConfig& cfg, const FitnessFn& fitness);

/// Number of coefficients a particle carries for these experts: one per
/// layer for two experts, one per (layer, expert) otherwise.
std::size_t pso_dims(std::span<const ParameterSet> experts);

/// Two experts: per-layer lambda * e0 + (1 - lambda) * e1. More experts:
/// per-layer weights normalized to sum 1 (uniform when all are zero).
ParameterSet mix_experts(std::span<const ParameterSet> experts, std::span<const double> position);

struct PsoResult {
  ParameterSet model;
  std::vector<double> position;
  double fitness = 0.0;
  std::vector<PsoTraceRow> trace;
};

/// Fitness is the mean task accuracy on each iteration's optimization batch.
PsoResult run_pso(std::span<const ParameterSet> experts, const PsoConfig& cfg,
                  std::span<const TaskHandle> tasks);

/// iteration,gbest_fitness,mean_fitness,gbest_position
void write_pso_trace_csv(std::ostream& out, std::span<const PsoTraceRow> trace);

}  // namespace sae
