#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sae/error.hpp"
#include "sae/merge.hpp"
#include "sae/pso.hpp"
#include "support.hpp"

using namespace sae;

TEST_CASE("swarm initialization and bounds") {
  PsoConfig cfg;
  cfg.seed = 3;
  Swarm s = init_swarm(5, cfg);
  REQUIRE(s.particles.size() == cfg.swarm);
  for (const auto& p : s.particles) {
    CHECK(p.position.size() == 5);
    for (double x : p.position) CHECK((x >= 0.0 && x <= 1.0));
    for (double v : p.velocity) CHECK(v == 0.0);
  }
  s.best_position.assign(5, 1.0);
  for (auto& p : s.particles) p.best_position.assign(5, 0.0);
  Rng rng(1);
  for (int it = 0; it < 20; ++it) {
    update_swarm(s, cfg, rng);
    for (const auto& p : s.particles) {
      for (std::size_t d = 0; d < 5; ++d) {
        CHECK(std::abs(p.velocity[d]) <= cfg.vmax);
        CHECK((p.position[d] >= 0.0 && p.position[d] <= 1.0));
      }
    }
  }
}

TEST_CASE("update rule with fixed random draws") {
  PsoConfig cfg;
  cfg.vmax = 10.0;
  Swarm s;
  Particle p;
  p.position = {0.5};
  p.velocity = {0.1};
  p.best_position = {0.7};
  s.particles = {p};
  s.best_position = {0.2};
  Rng rng(77);
  Rng copy(77);
  const double r1 = copy.uniform(), r2 = copy.uniform();
  update_swarm(s, cfg, rng);
  const double v = cfg.inertia * 0.1 + cfg.c1 * r1 * (0.7 - 0.5) + cfg.c2 * r2 * (0.2 - 0.5);
  CHECK(s.particles[0].velocity[0] == doctest::Approx(v).epsilon(1e-15));
  CHECK(s.particles[0].position[0] == doctest::Approx(std::clamp(0.5 + v, 0.0, 1.0)));
}

TEST_CASE("global best is monotone and finds a smooth optimum") {
  PsoConfig cfg;
  cfg.seed = 11;
  cfg.iterations = 60;
  cfg.swarm = 10;
  const std::vector<double> target = {0.3, 0.8, 0.55};
  const FitnessFn f = [&](std::span<const double> x, int) {
    double s = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) s -= (x[d] - target[d]) * (x[d] - target[d]);
    return s;
  };
  Swarm s = init_swarm(3, cfg);
  const auto trace = optimize_swarm(s, cfg, f);
  REQUIRE(trace.size() == 60);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i].gbest_fitness >= trace[i - 1].gbest_fitness);
  CHECK(trace.back().gbest_fitness > -1e-3);
  CHECK(trace.back().gbest_position == s.best_position);

  Swarm again = init_swarm(3, cfg);
  const auto trace2 = optimize_swarm(again, cfg, f);
  CHECK(trace2.back().gbest_position == trace.back().gbest_position);
}

TEST_CASE("noisy fitness still yields a monotone global best") {
  PsoConfig cfg;
  cfg.seed = 2;
  cfg.iterations = 30;
  const FitnessFn f = [](std::span<const double> x, int it) {
    Rng r(derive_seed(1, "noise", static_cast<std::uint64_t>(it)));
    return x[0] + r.uniform();
  };
  Swarm s = init_swarm(2, cfg);
  const auto trace = optimize_swarm(s, cfg, f);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i].gbest_fitness >= trace[i - 1].gbest_fitness);
}

TEST_CASE("mixing experts") {
  const ParameterSet a({{"x", Tensor({2}, {1, 0})}, {"y", Tensor({1}, {2})}});
  const ParameterSet b({{"x", Tensor({2}, {3, 4})}, {"y", Tensor({1}, {6})}});
  const ParameterSet c({{"x", Tensor({2}, {5, 8})}, {"y", Tensor({1}, {10})}});
  const std::vector<ParameterSet> two = {a, b};
  CHECK(pso_dims(two) == 2);
  const std::vector<double> pos = {1.0, 0.25};
  const auto m = flatten(mix_experts(two, pos));
  // no attraction: the zero in a is interpolated like any other value
  CHECK(m == std::vector<double>{1, 0, 0.25 * 2 + 0.75 * 6});

  const std::vector<ParameterSet> three = {a, b, c};
  CHECK(pso_dims(three) == 6);
  const std::vector<double> w = {1, 1, 2, 0, 0, 0};
  const auto m3 = flatten(mix_experts(three, w));
  CHECK(m3[0] == doctest::Approx(0.25 * 1 + 0.25 * 3 + 0.5 * 5));
  CHECK(m3[2] == doctest::Approx(6.0));
  CHECK_THROWS_AS(mix_experts(two, std::vector<double>{0.5}), InvalidArgument);
  CHECK_THROWS_AS(pso_dims(std::vector<ParameterSet>{a}), InvalidArgument);
}

TEST_CASE("trace output and validation") {
  std::vector<PsoTraceRow> rows = {{0, 0.5, 0.25, {0.1, 0.2}}};
  std::ostringstream out;
  write_pso_trace_csv(out, rows);
  CHECK(out.str() == "iteration,gbest_fitness,mean_fitness,gbest_position\n0,0.5,0.25,0.10000000000000001;0.20000000000000001\n");
  PsoConfig bad;
  bad.swarm = 1;
  bad.vmax = 0;
  CHECK(bad.violations().size() == 2);
}
