#include <doctest.h>

#include <algorithm>

#include "sae/config.hpp"
#include "sae/error.hpp"

using namespace sae;

TEST_CASE("defaults are valid and echo round-trips") {
  const RunConfig def;
  CHECK(def.violations().empty());
  const std::string text = to_text(def);
  RunConfig back;
  back.seed = 99;
  back.evolve.capacity = 32;
  apply_config_text(back, text);
  CHECK(to_text(back) == text);
  for (const auto& key : config_keys()) CHECK(text.find(key + "=") != std::string::npos);
}

TEST_CASE("every key round-trips a changed value") {
  RunConfig cfg;
  const std::vector<std::pair<std::string, std::string>> changes = {
      {"seed", "17"},          {"out", "runs/x"},          {"pop", "16"},          {"steps", "9"},
      {"s-min", "0.05"},       {"s-max", "0.9"},           {"t0", "2"},            {"t-mult", "3"},
      {"measure", "zero-count"}, {"granularity", "local"}, {"redense", "original-dense"},
      {"gamma", "0.3"},        {"anneal", "archive"},      {"replacement", "worse-parent"},
      {"refresh", "true"},     {"swarm", "12"},            {"iters", "20"},        {"w", "0.5"},
      {"c1", "1.2"},           {"c2", "1.3"},              {"grid", "11"},         {"alpha-max", "0.5"},
      {"beta-max", "0.25"},    {"eps", "1e-6"},            {"optimizer", "sgd"},   {"ramp", "cosine"},
      {"method", "task-arithmetic"}, {"expert", "sub"},   {"hidden", "16"},       {"modulus", "11"}};
  for (const auto& [k, v] : changes) set_config_value(cfg, k, v);
  RunConfig back;
  apply_config_text(back, to_text(cfg));
  CHECK(to_text(back) == to_text(cfg));
  CHECK(back.seed == 17);
  CHECK(back.evolve.capacity == 16);
  CHECK(back.evolve.schedule.s_min == 0.05);
  CHECK(back.evolve.merge.measure == SparsityMeasure::ZeroCount);
  CHECK(back.evolve.merge.redense == RedenseMode::FromOriginalDense);
  CHECK(back.evolve.refresh_scores);
  CHECK(back.pso.inertia == 0.5);
  CHECK(back.grid.eps == 1e-6);
  CHECK(back.landscape_expert == ModOp::Sub);
  CHECK(get_config_value(back, "gamma") == "0.29999999999999999");
}

TEST_CASE("parsing errors") {
  RunConfig cfg;
  CHECK_THROWS_AS(set_config_value(cfg, "nope", "1"), InvalidArgument);
  CHECK_THROWS_AS(set_config_value(cfg, "pop", "eight"), InvalidArgument);
  CHECK_THROWS_AS(set_config_value(cfg, "pop", "8x"), InvalidArgument);
  CHECK_THROWS_AS(set_config_value(cfg, "gamma", ""), InvalidArgument);
  CHECK_THROWS_AS(set_config_value(cfg, "refresh", "maybe"), InvalidArgument);
  CHECK_THROWS_AS(set_config_value(cfg, "measure", "l2"), InvalidArgument);
  CHECK_THROWS_AS(apply_config_text(cfg, "seed 3\n"), InvalidArgument);
  apply_config_text(cfg, "# comment\n\n  seed = 5  \n");
  CHECK(cfg.seed == 5);
  CHECK_THROWS_AS(load_config("/nonexistent/config.txt"), InvalidArgument);
}

TEST_CASE("violations list every broken invariant") {
  RunConfig cfg;
  cfg.evolve.capacity = 3;
  cfg.evolve.schedule.s_min = 0.9;
  cfg.evolve.schedule.s_max = 0.1;
  cfg.evolve.merge.gamma = 2.0;
  cfg.pso.swarm = 1;
  cfg.grid.resolution = 1;
  cfg.method = "median";
  const auto v = cfg.violations();
  CHECK(v.size() >= 6);
  const auto has = [&](const std::string& needle) {
    return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
  };
  CHECK(has("capacity"));
  CHECK(has("swarm"));
  CHECK(has("grid"));
  CHECK(has("method"));
}

TEST_CASE("derived sections carry the master seed") {
  RunConfig cfg;
  cfg.seed = 42;
  const EvolveConfig e = cfg.evolve_config();
  CHECK(e.seed == 42);
  REQUIRE(e.tasks.size() == 2);
  CHECK(e.tasks[0].spec.op == ModOp::Add);
  CHECK(e.tasks[1].spec.op == ModOp::Sub);
  CHECK(e.tasks[0].spec.split_seed == cfg.experts.task(ModOp::Add, 42).split_seed);
  CHECK(cfg.pso_config().seed == 42);
  CHECK(cfg.pso_config().opt_batch == cfg.evolve.opt_batch);
}
