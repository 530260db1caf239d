// Acceptance suite: one PASS/FAIL line per criterion, each checked at its
// stated tolerance and runtime budget.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sae/cli.hpp"
#include "sae/evolve.hpp"
#include "sae/landscape.hpp"
#include "sae/merge.hpp"
#include "sae/pso.hpp"
#include "sae/sparsity.hpp"
#include "sae/tasks.hpp"

namespace fs = std::filesystem;
using namespace sae;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

fs::path g_work;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

bool same_bits(double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; }

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int rc = cli::run(args, out, err);
  if (rc != 0) std::cerr << "command failed (" << rc << "): " << err.str();
  return rc;
}

std::vector<double> random_sparse(Rng& rng, std::size_t n, double sparsity) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform() < sparsity ? 0.0 : rng.normal();
  return v;
}

// Experts for a seed, trained once through the CLI and reused.
fs::path experts_dir(std::uint64_t seed) {
  const fs::path dir = g_work / ("experts_seed" + std::to_string(seed));
  if (!fs::exists(dir / "expert_sub.ckpt")) {
    if (cli({"train-experts", "--seed", std::to_string(seed), "--out", dir.string()}) != 0) {
      throw std::runtime_error("expert training failed");
    }
  }
  return dir;
}

// ---------------------------------------------------------------------------

Outcome schedule_golden() {
  Outcome o;
  const SparsitySchedule s;  // 0.1, 0.6, T0 = 3, T_mult = 2, 12 steps
  // cycles of length 3, 6, 12 with a linear ramp over each
  std::vector<double> expect;
  for (int t = 0; t < 3; ++t) expect.push_back(0.1 + 0.5 * t / 2.0);
  for (int t = 0; t < 6; ++t) expect.push_back(0.1 + 0.5 * t / 5.0);
  for (int t = 0; t < 3; ++t) expect.push_back(0.1 + 0.5 * t / 11.0);
  double worst = 0.0;
  for (int t = 0; t < 12; ++t) worst = std::max(worst, std::abs(schedule_rate(s, t) - expect[t]));
  o.require(worst <= 1e-12, "max deviation " + fmt("%.3g", worst));
  o.detail = o.pass ? "max deviation " + fmt("%.3g", worst) : o.detail;
  return o;
}

Outcome merge_oracle() {
  Outcome o;
  Rng rng(101);
  std::size_t attraction = 0, interp = 0;
  double worst = 0.0;
  for (int pair = 0; pair < 1000; ++pair) {
    const std::size_t n = 1 + rng.below(256);
    const Tensor a({n}, random_sparse(rng, n, rng.uniform(0.0, 0.9)));
    const Tensor b({n}, random_sparse(rng, n, rng.uniform(0.0, 0.9)));
    const double lambda = rng.uniform();
    const Tensor m = merge_layer(a, b, lambda);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = a[i], y = b[i];
      if (x == 0.0 || y == 0.0) {
        const double want = (x == 0.0 && y == 0.0) ? 0.0 : (x == 0.0 ? y : x);
        ++attraction;
        o.require(same_bits(m[i], want), "attraction branch differs at pair " + std::to_string(pair));
      } else {
        ++interp;
        const double d = std::abs(m[i] - (lambda * x + (1.0 - lambda) * y));
        worst = std::max(worst, d);
        o.require(d <= 1e-12, "interpolation off by " + fmt("%.3g", d));
      }
    }
  }
  if (o.pass) {
    o.detail = std::to_string(attraction) + " attraction, " + std::to_string(interp) +
               " interpolated elements, max error " + fmt("%.3g", worst);
  }
  return o;
}

Outcome lambda_contracts() {
  Outcome o;
  Rng rng(102);
  int degenerate = 0;
  for (int i = 0; i < 10000; ++i) {
    double sa = rng.uniform(), sb = rng.uniform(), wa = rng.uniform(), wb = rng.uniform();
    if (i % 10 == 0) sa = sb = wa = wb = 0.0;
    if (i % 10 == 1) {
      sb = sa;
      wb = wa;
    }
    const double l = compute_lambda(sa, sb, wa, wb);
    const double r = compute_lambda(sb, sa, wb, wa);
    o.require(l >= 0.0 && l <= 1.0, "lambda outside [0, 1]");
    o.require(std::abs(l + r - 1.0) <= 1e-15, "complement identity fails");
    if (sa + wa + sb + wb == 0.0 || (sa + wa) == (sb + wb)) {
      ++degenerate;
      o.require(l == 0.5, "degenerate input did not give 0.5");
    }
  }
  if (o.pass) o.detail = "10000 quadruples, " + std::to_string(degenerate) + " degenerate";
  return o;
}

Outcome pruning_exactness() {
  Outcome o;
  Rng rng(103);
  for (int c = 0; c < 200; ++c) {
    const std::size_t rows = 1 + rng.below(20), cols = 1 + rng.below(30);
    const ParameterSet p({{"w", Tensor({rows, cols}, random_sparse(rng, rows * cols, rng.uniform(0.0, 0.5)))},
                          {"b", Tensor({rows}, random_sparse(rng, rows, rng.uniform(0.0, 0.5)))}});
    const double rate = rng.uniform();
    const auto before = flatten(p);
    std::size_t prior = 0;
    for (double x : before) prior += x == 0.0;
    const ParameterSet q = prune(p, rate, Granularity::Global);
    const auto after = flatten(q);
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < after.size(); ++i) {
      if (after[i] == 0.0) {
        ++zeros;
      } else {
        o.require(same_bits(after[i], before[i]), "a surviving entry changed");
      }
    }
    const auto quota = static_cast<std::size_t>(std::floor(rate * static_cast<double>(before.size())));
    o.require(zeros == std::max(prior, quota), "zero count " + std::to_string(zeros) + " expected " +
                                                    std::to_string(std::max(prior, quota)));
    o.require(prune(q, rate, Granularity::Global) == q, "prune is not idempotent");
  }
  if (o.pass) o.detail = "200 cases";
  return o;
}

Outcome redense_inverse() {
  Outcome o;
  Rng rng(104);
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = 1 + rng.below(400);
    const ParameterSet theta({{"w", Tensor({n}, random_sparse(rng, n, 0.0))}});
    const ParameterSet back = redense(prune(theta, rng.uniform(), Granularity::Global), theta);
    const auto x = flatten(back), y = flatten(theta);
    bool ok = x.size() == y.size();
    for (std::size_t i = 0; ok && i < x.size(); ++i) ok = same_bits(x[i], y[i]);
    o.require(ok, "case " + std::to_string(c) + " not restored");
  }
  if (o.pass) o.detail = "100 cases";
  return o;
}

Outcome gradient_check() {
  Outcome o;
  const int m = 13;
  const MlpSpec spec{{2 * m, 8, 8, static_cast<std::size_t>(m)}};
  const ModularTaskSpec task{m, ModOp::Add, 5, 0.25};
  const Dataset batch = gen_dataset(task, Split::Train, 32, 6);
  const double h = 1e-5;
  Rng rng(105);
  double worst = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    ParameterSet p = init_mlp(spec, static_cast<std::uint64_t>(draw));
    std::vector<double> theta = flatten(p);
    for (double& x : theta) x += 0.05 * rng.normal();
    p = unflatten(p, theta);
    const auto analytic = flatten(loss_and_grad(p, batch).grad);
    std::vector<double> numeric(theta.size());
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double orig = theta[k];
      theta[k] = orig + h;
      const double up = mean_loss(unflatten(p, theta), batch);
      theta[k] = orig - h;
      const double down = mean_loss(unflatten(p, theta), batch);
      theta[k] = orig;
      numeric[k] = (up - down) / (2 * h);
    }
    // relative error per layer: |g_a - g_fd| / max(|g_a|, |g_fd|)
    std::size_t off = 0;
    for (const Layer& l : p.layers()) {
      double diff = 0.0, na = 0.0, nf = 0.0;
      for (std::size_t i = off; i < off + l.tensor.numel(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nf += numeric[i] * numeric[i];
      }
      off += l.tensor.numel();
      const double denom = std::max(std::sqrt(std::max(na, nf)), 1e-12);
      worst = std::max(worst, std::sqrt(diff) / denom);
    }
  }
  o.require(worst < 1e-4, "max relative error " + fmt("%.3g", worst));
  if (o.pass) o.detail = "max relative error " + fmt("%.3g", worst) + " over 20 draws";
  return o;
}

Outcome curvature_oracle() {
  Outcome o;
  // 4 -> 3 -> 3 -> 2: 35 parameters
  const MlpSpec spec{{4, 3, 3, 2}};
  Dataset batch;
  batch.modulus = 2;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) batch.examples.push_back({a, b, (a + b) % 2});
  const GradientFn g = mlp_gradient(spec, batch);
  const ParameterSet like = init_mlp(spec, 0);
  const std::size_t n = param_count(like);
  o.require(n <= 40, "oracle network too large");
  Rng rng(106);
  EigConfig cfg;
  cfg.iters = 5000;
  cfg.tol = 1e-12;
  double worst = 0.0;
  for (int point = 0; point < 10; ++point) {
    std::vector<double> theta(n);
    for (double& x : theta) x = rng.normal();
    Eigen::MatrixXd H(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    std::vector<double> x = theta, gp(n), gm(n);
    for (std::size_t k = 0; k < n; ++k) {
      x[k] = theta[k] + kHvpStep;
      g(x, gp);
      x[k] = theta[k] - kHvpStep;
      g(x, gm);
      x[k] = theta[k];
      for (std::size_t r = 0; r < n; ++r) {
        H(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = (gp[r] - gm[r]) / (2 * kHvpStep);
      }
    }
    const Eigen::MatrixXd S = 0.5 * (H + H.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(S);
    const double lmax = solver.eigenvalues().maxCoeff();
    const double lmin = solver.eigenvalues().minCoeff();
    cfg.seed = derive_seed(7, "point", static_cast<std::uint64_t>(point));
    const EigResult r = extreme_eigs(g, theta, cfg);
    const double emax = std::abs(r.lambda_max - lmax) / std::abs(lmax);
    const double emin = std::abs(r.lambda_min - lmin) / std::abs(lmin);
    worst = std::max({worst, emax, emin});
    o.require(emax <= 0.02, "lambda_max off by " + fmt("%.3g", emax) + " at point " + std::to_string(point));
    o.require(emin <= 0.02, "lambda_min off by " + fmt("%.3g", emin) + " at point " + std::to_string(point));
  }

  const std::vector<double> at = {0.4, -1.3};
  EigConfig qc;
  qc.seed = 3;
  const GradientFn convex = [](std::span<const double> t, std::span<double> out) {
    out[0] = 2 * t[0];
    out[1] = 2 * t[1];
  };
  const GradientFn saddle = [](std::span<const double> t, std::span<double> out) {
    out[0] = 2 * t[0];
    out[1] = -2 * t[1];
  };
  const GradientFn flat = [](std::span<const double> t, std::span<double> out) {
    out[0] = 2 * t[0];
    out[1] = 0.0;
  };
  const auto conv = [&](const GradientFn& f) {
    const EigResult r = extreme_eigs(f, at, qc);
    return convexity_value(r.lambda_max, r.lambda_min, 1e-8);
  };
  const double c1 = conv(convex), c2 = conv(saddle), c3 = conv(flat);
  o.require(c1 == 0.5, "convex quadratic gave " + fmt("%.17g", c1));
  o.require(c2 == 0.5, "saddle gave " + fmt("%.17g", c2));
  o.require(c3 == 0.0, "flat quadratic gave " + fmt("%.17g", c3));
  if (o.pass) o.detail = "max relative error " + fmt("%.3g", worst) + "; quadratics 0.5, 0.5, 0";
  return o;
}

Outcome convexity_range() {
  Outcome o;
  const fs::path ex = experts_dir(0);
  const fs::path out = g_work / "convexity_range";
  o.require(cli({"convexity", "--seed", "0", "--experts", ex.string(), "--grid", "21", "--out", out.string()}) == 0,
            "convexity command failed");
  if (!o.pass) return o;
  std::ifstream f(out / "convexity.csv");
  std::string line;
  std::getline(f, line);
  std::size_t cells = 0, unconverged = 0;
  double lo = 1.0, hi = 0.0;
  while (std::getline(f, line)) {
    std::vector<std::string> c;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) c.push_back(cell);
    if (c.size() != 8) {
      o.require(false, "malformed row");
      break;
    }
    const double v = std::stod(c[4]);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    o.require(v >= 0.0 && v <= 0.5, "value " + c[4] + " outside [0, 0.5]");
    unconverged += c[7] == "0";
    ++cells;
  }
  o.require(cells == 441, "expected 441 cells, got " + std::to_string(cells));
  if (o.pass) {
    o.detail = "441 cells in [" + fmt("%.3g", lo) + ", " + fmt("%.3g", hi) + "], " + std::to_string(unconverged) +
               " flagged unconverged";
  }
  return o;
}

Outcome determinism() {
  Outcome o;
  const fs::path ex = experts_dir(0);
  const auto twice = [&](const std::string& cmd, const std::vector<std::string>& files,
                         std::vector<std::string> extra) {
    std::vector<std::string> outputs[2];
    for (int k = 0; k < 2; ++k) {
      const fs::path dir = g_work / ("determinism_" + cmd + std::to_string(k));
      std::vector<std::string> args = {cmd, "--seed", "11", "--experts", ex.string(), "--out", dir.string()};
      args.insert(args.end(), extra.begin(), extra.end());
      o.require(cli(args) == 0, cmd + " failed");
      for (const auto& f : files) outputs[k].push_back(slurp(dir / f));
    }
    for (std::size_t i = 0; i < files.size(); ++i) {
      o.require(!outputs[0][i].empty() && outputs[0][i] == outputs[1][i], cmd + ": " + files[i] + " differs");
    }
  };
  twice("evolve", {"trace.csv", "best.ckpt", "summary.csv"}, {});
  twice("pso", {"pso_trace.csv", "best.ckpt", "summary.csv"}, {});
  twice("convexity", {"convexity.csv", "landscape.csv", "convexity.pgm"}, {"--grid", "11"});
  if (o.pass) o.detail = "evolve, pso and convexity outputs byte-identical";
  return o;
}

Outcome monotonicity() {
  Outcome o;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const fs::path ex = experts_dir(seed);
    const std::vector<ParameterSet> experts = {load_checkpoint(ex / "expert_add.ckpt"),
                                               load_checkpoint(ex / "expert_sub.ckpt")};
    ExpertConfig ecfg;
    EvolveConfig cfg;
    cfg.seed = seed;
    cfg.tasks = {{"add", ecfg.task(ModOp::Add, seed)}, {"sub", ecfg.task(ModOp::Sub, seed)}};
    Archive a = init_archive(experts, cfg);
    double best = a.best().total_score;
    for (int step = 0; step < cfg.schedule.total_steps; ++step) {
      evolve_step(a, cfg, step);
      o.require(a.members.size() == cfg.capacity, "archive size changed");
      o.require(a.best().total_score >= best, "best score dropped at seed " + std::to_string(seed));
      best = a.best().total_score;
    }

    PsoConfig pcfg;
    pcfg.seed = seed;
    const PsoResult p = run_pso(experts, pcfg, cfg.tasks);
    for (std::size_t i = 1; i < p.trace.size(); ++i) {
      o.require(p.trace[i].gbest_fitness >= p.trace[i - 1].gbest_fitness, "PSO gbest dropped");
    }
  }
  if (o.pass) o.detail = "5 SAE and 5 PSO runs";
  return o;
}

std::vector<cli::SummaryRow> summary(const fs::path& dir) { return cli::read_summary((dir / "summary.csv").string()); }

Outcome directional_analog() {
  Outcome o;
  std::vector<std::string> runs;
  int wins = 0;
  std::ostringstream per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const std::string s = std::to_string(seed);
    const fs::path ex = experts_dir(seed);
    const fs::path base = g_work / ("table_seed" + s);
    const std::vector<std::string> common = {"--seed", s, "--experts", ex.string()};
    const auto go = [&](const std::string& name, std::vector<std::string> args) {
      const fs::path dir = base / name;
      args.insert(args.end(), common.begin(), common.end());
      args.push_back("--out");
      args.push_back(dir.string());
      o.require(cli(args) == 0, name + " failed for seed " + s);
      runs.push_back(dir.string());
      return dir;
    };
    const fs::path sae = go("sae", {"evolve"});
    go("pso", {"pso"});
    const fs::path wa = go("wa", {"baseline", "--method", "weight-average"});
    go("ta", {"baseline", "--method", "task-arithmetic"});
    runs.push_back(ex.string());
    if (!o.pass) return o;
    const double a = summary(sae)[0].avg, b = summary(wa)[0].avg;
    wins += a >= b;
    per_seed << (seed > 1 ? ", " : "") << fmt("%.3f", a) << " vs " << fmt("%.3f", b);
  }
  const fs::path rep = g_work / "table_report";
  std::vector<std::string> args = {"report", "--out", rep.string(), "--runs"};
  args.insert(args.end(), runs.begin(), runs.end());
  o.require(cli(args) == 0, "report failed");
  if (!o.pass) return o;
  std::set<std::string> methods;
  for (const auto& r : cli::read_summary((rep / "report.csv").string())) methods.insert(r.method);
  for (const char* m : {"sae", "pso", "weight-average", "task-arithmetic", "expert_add", "expert_sub"}) {
    o.require(methods.count(m) == 1, std::string("report lacks ") + m);
  }
  o.require(wins >= 3, "SAE >= weight average in only " + std::to_string(wins) + "/5 seeds (" + per_seed.str() + ")");
  if (o.pass) o.detail = std::to_string(wins) + "/5 seeds SAE >= weight average (" + per_seed.str() + ")";
  return o;
}

Outcome ablation_harness() {
  Outcome o;
  const fs::path ex = experts_dir(1);
  std::vector<std::string> runs;
  for (const char* gran : {"global", "local"}) {
    for (const char* meas : {"magnitude", "zero-count"}) {
      for (const auto& range : std::vector<std::pair<const char*, const char*>>{{"0.1", "0.6"}, {"0.05", "0.9"}}) {
        for (const char* red : {"parents", "original-dense"}) {
          const fs::path dir = g_work / "ablation" /
                               (std::string(gran) + "_" + meas + "_" + range.first + "-" + range.second + "_" + red);
          o.require(cli({"evolve", "--seed", "1", "--experts", ex.string(), "--granularity", gran, "--measure", meas,
                         "--s-min", range.first, "--s-max", range.second, "--redense", red, "--out",
                         dir.string()}) == 0,
                    std::string("evolve failed for ") + dir.filename().string());
          runs.push_back(dir.string());
        }
      }
    }
  }
  if (!o.pass) return o;
  const fs::path rep = g_work / "ablation_report";
  std::vector<std::string> args = {"report", "--out", rep.string(), "--runs"};
  args.insert(args.end(), runs.begin(), runs.end());
  o.require(cli(args) == 0, "report failed");
  if (!o.pass) return o;
  const auto rows = cli::read_summary((rep / "report.csv").string());
  std::set<std::string> configs;
  for (const auto& r : rows) {
    configs.insert(r.config);
    o.require(std::isfinite(r.task_a) && std::isfinite(r.task_b) && std::isfinite(r.avg), "non-finite row");
  }
  o.require(rows.size() == 16, "expected 16 rows, got " + std::to_string(rows.size()));
  o.require(configs.size() == 16, "configs are not distinct");
  if (o.pass) o.detail = "16 complete rows";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  g_work = fs::temp_directory_path() / "sae_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      only.insert(std::stoi(argv[++i]));
    } else {
      std::cerr << "usage: sae_acceptance [--work DIR] [--only N]...\n";
      return 2;
    }
  }
  fs::create_directories(g_work);

  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "schedule golden sequence", 1, schedule_golden},
      {2, "merge oracle equivalence", 5, merge_oracle},
      {3, "mixing-ratio contracts", 1, lambda_contracts},
      {4, "pruning exactness", 5, pruning_exactness},
      {5, "redense inverse", 2, redense_inverse},
      {6, "gradient check", 10, gradient_check},
      {7, "curvature oracle", 30, curvature_oracle},
      {8, "convexity range", 300, convexity_range},
      {9, "determinism", 600, determinism},
      {10, "evolution monotonicity", 600, monotonicity},
      {11, "directional analog of the baseline comparison", 900, directional_analog},
      {12, "ablation harness", 2700, ablation_harness},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      o.detail += (o.detail.empty() ? "" : "; ") + std::string("over runtime budget");
      o.pass = false;
    }
    failed += !o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << c.id << ". " << c.name << ": " << o.detail << " ("
              << fmt("%.2f", secs) << " s, budget " << fmt("%g", c.budget_s) << " s)" << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << '\n';
  return failed ? 1 : 0;
}
