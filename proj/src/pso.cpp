#include "sae/pso.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "sae/error.hpp"
#include "sae/merge.hpp"
#include "sae/parallel.hpp"
#include "sae/rng.hpp"

namespace sae {

std::vector<std::string> PsoConfig::violations() const {
  std::vector<std::string> v;
  if (swarm < 2) v.push_back("swarm size must be >= 2");
  if (iterations < 0) v.push_back("iterations must be >= 0");
  if (!(inertia > 0.0)) v.push_back("inertia w must be > 0");
  if (!(c1 > 0.0)) v.push_back("c1 must be > 0");
  if (!(c2 > 0.0)) v.push_back("c2 must be > 0");
  if (!(vmax > 0.0)) v.push_back("velocity clamp must be > 0");
  if (opt_batch == 0) v.push_back("optimization batch size must be positive");
  return v;
}

Swarm init_swarm(std::size_t dims, const PsoConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, "pso-init"));
  Swarm s;
  s.particles.resize(cfg.swarm);
  for (Particle& p : s.particles) {
    p.position.resize(dims);
    for (double& x : p.position) x = rng.uniform();
    p.velocity.assign(dims, 0.0);
    p.best_position = p.position;
  }
  return s;
}

void update_swarm(Swarm& swarm, const PsoConfig& cfg, Rng& rng) {
  for (Particle& p : swarm.particles) {
    for (std::size_t d = 0; d < p.position.size(); ++d) {
      const double r1 = rng.uniform();
      const double r2 = rng.uniform();
      double v = cfg.inertia * p.velocity[d] + cfg.c1 * r1 * (p.best_position[d] - p.position[d]) +
                 cfg.c2 * r2 * (swarm.best_position[d] - p.position[d]);
      v = std::clamp(v, -cfg.vmax, cfg.vmax);
      p.velocity[d] = v;
      p.position[d] = std::clamp(p.position[d] + v, 0.0, 1.0);
    }
  }
}

std::vector<PsoTraceRow> optimize_swarm(Swarm& swarm, const PsoConfig& cfg, const FitnessFn& fitness) {
  if (const auto v = cfg.violations(); !v.empty()) throw InvalidArgument(v.front());
  if (swarm.particles.empty()) throw InvalidArgument("empty swarm");
  std::vector<PsoTraceRow> trace;
  for (int it = 0; it < cfg.iterations; ++it) {
    if (it > 0) {
      Rng rng(derive_seed(cfg.seed, "pso-move", static_cast<std::uint64_t>(it)));
      update_swarm(swarm, cfg, rng);
    }
    const auto n = static_cast<std::int64_t>(swarm.particles.size());
    ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) slot.run([&] {
      Particle& p = swarm.particles[static_cast<std::size_t>(i)];
      p.fitness = fitness(p.position, it);
    });
    slot.rethrow();

    double sum = 0.0;
    for (Particle& p : swarm.particles) {
      sum += p.fitness;
      if (p.fitness > p.best_fitness) {
        p.best_fitness = p.fitness;
        p.best_position = p.position;
      }
      if (p.fitness > swarm.best_fitness) {
        swarm.best_fitness = p.fitness;
        swarm.best_position = p.position;
      }
    }
    trace.push_back({it, swarm.best_fitness, sum / static_cast<double>(n), swarm.best_position});
  }
  return trace;
}

std::size_t pso_dims(std::span<const ParameterSet> experts) {
  if (experts.size() < 2) throw InvalidArgument("PSO needs at least two experts");
  return experts.size() == 2 ? experts[0].size() : experts[0].size() * experts.size();
}

ParameterSet mix_experts(std::span<const ParameterSet> experts, std::span<const double> position) {
  const std::size_t dims = pso_dims(experts);
  for (std::size_t k = 1; k < experts.size(); ++k) require_compatible(experts[0], experts[k]);
  if (position.size() != dims) throw InvalidArgument("particle position has the wrong length");
  if (experts.size() == 2) return interpolate(experts[0], experts[1], position);

  const std::size_t K = experts.size();
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < experts[0].size(); ++l) {
    std::vector<double> w(position.begin() + static_cast<std::ptrdiff_t>(l * K),
                          position.begin() + static_cast<std::ptrdiff_t>((l + 1) * K));
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x = total > 0.0 ? x / total : 1.0 / static_cast<double>(K);
    const Tensor& t0 = experts[0].layers()[l].tensor;
    std::vector<double> out(t0.numel(), 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const auto v = experts[k].layers()[l].tensor.values();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += w[k] * v[i];
    }
    layers.push_back({experts[0].layers()[l].name, Tensor(t0.dims(), std::move(out))});
  }
  return ParameterSet(std::move(layers));
}

PsoResult run_pso(std::span<const ParameterSet> experts, const PsoConfig& cfg,
                  std::span<const TaskHandle> tasks) {
  if (const auto v = cfg.violations(); !v.empty()) throw InvalidArgument(v.front());
  if (tasks.empty()) throw InvalidArgument("PSO needs at least one task");
  const std::size_t dims = pso_dims(experts);
  for (std::size_t k = 1; k < experts.size(); ++k) require_compatible(experts[0], experts[k]);

  std::vector<std::vector<Dataset>> batches;
  for (int it = 0; it < cfg.iterations; ++it) {
    batches.push_back(optimization_batches(tasks, cfg.opt_batch, cfg.seed, static_cast<std::uint64_t>(it) + 1));
  }
  const FitnessFn fitness = [&](std::span<const double> x, int it) {
    const ParameterSet model = mix_experts(experts, x);
    double sum = 0.0;
    for (const Dataset& d : batches[static_cast<std::size_t>(it)]) sum += accuracy(model, d);
    return sum / static_cast<double>(tasks.size());
  };

  Swarm swarm = init_swarm(dims, cfg);
  PsoResult r;
  r.trace = optimize_swarm(swarm, cfg, fitness);
  if (swarm.best_position.empty()) swarm.best_position.assign(dims, 0.5);
  r.position = swarm.best_position;
  r.fitness = swarm.best_fitness;
  r.model = mix_experts(experts, r.position);
  return r;
}

void write_pso_trace_csv(std::ostream& out, std::span<const PsoTraceRow> trace) {
  out << "iteration,gbest_fitness,mean_fitness,gbest_position\n";
  for (const auto& row : trace) {
    out << row.iteration << ',' << format_double(row.gbest_fitness) << ',' << format_double(row.mean_fitness)
        << ',';
    for (std::size_t d = 0; d < row.gbest_position.size(); ++d) {
      if (d) out << ';';
      out << format_double(row.gbest_position[d]);
    }
    out << '\n';
  }
}

}  // namespace sae
