#include "sae/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "sae/config.hpp"
#include "sae/error.hpp"
#include "sae/merge.hpp"
#include "sae/parallel.hpp"

namespace fs = std::filesystem;

namespace sae::cli {

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("write failed for " + path.string());
}

template <class Fn>
void write_stream(const fs::path& path, Fn&& fn) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  fn(f);
  if (!f) throw Error("write failed for " + path.string());
}

std::string short_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

class RunDir {
 public:
  RunDir(const RunConfig& cfg, const std::string& command) : root_(cfg.out), command_(command) {
    fs::create_directories(root_);
    write_text(root_ / "config.txt", to_text(cfg));
    write_text(root_ / "seed.txt", std::to_string(cfg.seed) + "\n");
    log("start " + command_);
  }

  const fs::path& root() const { return root_; }
  fs::path operator/(const std::string& name) const { return root_ / name; }

  void log(const std::string& msg) const {
    std::ofstream f(root_ / "run.log", std::ios::app);
    f << timestamp() << ' ' << msg << '\n';
  }

 private:
  fs::path root_;
  std::string command_;
};

struct TaskData {
  std::vector<TaskHandle> tasks;
  std::vector<Dataset> test;
};

TaskData task_data(const RunConfig& cfg) {
  TaskData d;
  d.tasks = cfg.tasks();
  for (const auto& t : d.tasks) d.test.push_back(full_split(t.spec, Split::Test));
  return d;
}

SummaryRow evaluate(const ParameterSet& model, const TaskData& data, const std::string& method,
                    const std::string& config, std::uint64_t seed) {
  SummaryRow r;
  r.method = method;
  r.config = config;
  r.seed = std::to_string(seed);
  r.task_a = accuracy(model, data.test[0]);
  r.task_b = accuracy(model, data.test[1]);
  r.avg = 0.5 * (r.task_a + r.task_b);
  return r;
}

void write_summary(const fs::path& path, const std::vector<SummaryRow>& rows) {
  write_stream(path, [&](std::ostream& f) {
    f << "method,config,seed,task_a,task_b,avg\n";
    for (const auto& r : rows) {
      f << r.method << ',' << r.config << ',' << r.seed << ',' << format_double(r.task_a) << ','
        << format_double(r.task_b) << ',' << format_double(r.avg) << '\n';
    }
  });
}

void print_rows(std::ostream& out, const std::vector<SummaryRow>& rows) {
  for (const auto& r : rows) {
    out << r.method << " [" << r.config << "] task_a=" << short_double(r.task_a)
        << " task_b=" << short_double(r.task_b) << " avg=" << short_double(r.avg) << '\n';
  }
}

Experts obtain_experts(const RunConfig& cfg, const RunDir& dir) {
  if (!cfg.experts_dir.empty()) {
    const fs::path d(cfg.experts_dir);
    for (const char* name : {"base.ckpt", "expert_add.ckpt", "expert_sub.ckpt"}) {
      if (!fs::exists(d / name)) throw Error("missing expert checkpoint " + (d / name).string());
    }
    return {load_checkpoint(d / "base.ckpt"), load_checkpoint(d / "expert_add.ckpt"),
            load_checkpoint(d / "expert_sub.ckpt")};
  }
  dir.log("training experts from seed");
  Experts e = build_experts(cfg.experts, cfg.seed);
  fs::create_directories(dir / "experts");
  save_checkpoint(e.base, dir.root() / "experts" / "base.ckpt");
  save_checkpoint(e.add, dir.root() / "experts" / "expert_add.ckpt");
  save_checkpoint(e.sub, dir.root() / "experts" / "expert_sub.ckpt");
  return e;
}

std::string label_or(const RunConfig& cfg, const std::string& fallback) {
  return cfg.label.empty() ? fallback : cfg.label;
}

std::string sae_label(const RunConfig& cfg) {
  const auto& e = cfg.evolve;
  return "granularity=" + to_string(e.merge.granularity) + ";measure=" + to_string(e.merge.measure) +
         ";range=" + short_double(e.schedule.s_min) + "-" + short_double(e.schedule.s_max) +
         ";redense=" + to_string(e.merge.redense) + ";pop=" + std::to_string(e.capacity);
}

void write_data_csv(const fs::path& path, const Dataset& d) {
  write_stream(path, [&](std::ostream& f) {
    f << "a,b,label\n";
    for (const auto& ex : d.examples) f << ex.a << ',' << ex.b << ',' << ex.label << '\n';
  });
}

int cmd_gen_data(const RunConfig& cfg, RunDir& dir, std::ostream& out) {
  fs::create_directories(dir / "data");
  for (const auto& t : cfg.tasks()) {
    const Dataset train = full_split(t.spec, Split::Train);
    const Dataset test = full_split(t.spec, Split::Test);
    write_data_csv(dir.root() / "data" / (t.name + "_train.csv"), train);
    write_data_csv(dir.root() / "data" / (t.name + "_test.csv"), test);
    out << t.name << ": " << train.size() << " train, " << test.size() << " test pairs\n";
  }
  return 0;
}

int cmd_train_experts(const RunConfig& cfg, RunDir& dir, std::ostream& out) {
  const Experts e = build_experts(cfg.experts, cfg.seed);
  save_checkpoint(e.base, dir / "base.ckpt");
  save_checkpoint(e.add, dir / "expert_add.ckpt");
  save_checkpoint(e.sub, dir / "expert_sub.ckpt");
  const TaskData data = task_data(cfg);
  const std::string label =
      label_or(cfg, "epochs=" + std::to_string(cfg.experts.base_epochs) + "+" +
                        std::to_string(cfg.experts.expert_epochs) + ";opt=" + to_string(cfg.experts.optimizer));
  const std::vector<SummaryRow> rows = {evaluate(e.base, data, "base", label, cfg.seed),
                                        evaluate(e.add, data, "expert_add", label, cfg.seed),
                                        evaluate(e.sub, data, "expert_sub", label, cfg.seed)};
  write_summary(dir / "summary.csv", rows);
  print_rows(out, rows);
  return 0;
}

int cmd_evolve(const RunConfig& cfg, RunDir& dir, std::ostream& out) {
  const Experts e = obtain_experts(cfg, dir);
  const std::vector<ParameterSet> experts = {e.add, e.sub};
  const SaeResult r = run_sae(experts, cfg.evolve_config());
  write_stream(dir / "trace.csv", [&](std::ostream& f) { write_trace_csv(f, r.trace); });
  save_checkpoint(r.best.params, dir / "best.ckpt");
  const std::vector<SummaryRow> rows = {evaluate(r.best.params, task_data(cfg), "sae", label_or(cfg, sae_label(cfg)),
                                                 cfg.seed)};
  write_summary(dir / "summary.csv", rows);
  out << "best member " << r.best.id << " total_score=" << short_double(r.best.total_score)
      << " zero_frac=" << short_double(r.best.stats.zero_fraction) << '\n';
  print_rows(out, rows);
  return 0;
}

int cmd_pso(const RunConfig& cfg, RunDir& dir, std::ostream& out) {
  const Experts e = obtain_experts(cfg, dir);
  const std::vector<ParameterSet> experts = {e.add, e.sub};
  const auto tasks = cfg.tasks();
  const PsoResult r = run_pso(experts, cfg.pso_config(), tasks);
  write_stream(dir / "pso_trace.csv", [&](std::ostream& f) { write_pso_trace_csv(f, r.trace); });
  save_checkpoint(r.model, dir / "best.ckpt");
  const std::string label =
      label_or(cfg, "swarm=" + std::to_string(cfg.pso.swarm) + ";iters=" + std::to_string(cfg.pso.iterations));
  const std::vector<SummaryRow> rows = {evaluate(r.model, task_data(cfg), "pso", label, cfg.seed)};
  write_summary(dir / "summary.csv", rows);
  out << "gbest fitness " << short_double(r.fitness) << '\n';
  print_rows(out, rows);
  return 0;
}

int cmd_baseline(const RunConfig& cfg, RunDir& dir, std::ostream& out) {
  const Experts e = obtain_experts(cfg, dir);
  const std::vector<ParameterSet> experts = {e.add, e.sub};
  ParameterSet model;
  std::string label;
  if (cfg.method == "weight-average") {
    model = weight_average(experts);
    label = "uniform";
  } else {
    model = task_arithmetic(e.base, experts, cfg.ta_scale);
    label = "scale=" + short_double(cfg.ta_scale);
  }
  save_checkpoint(model, dir / "model.ckpt");
  const std::vector<SummaryRow> rows = {evaluate(model, task_data(cfg), cfg.method, label_or(cfg, label), cfg.seed)};
  write_summary(dir / "summary.csv", rows);
  print_rows(out, rows);
  return 0;
}

int cmd_eval(const RunConfig& cfg, RunDir& dir, std::ostream& out) {
  if (cfg.model.empty()) throw InvalidArgument("eval needs --model FILE");
  if (!fs::exists(cfg.model)) throw Error("missing model checkpoint " + cfg.model);
  const ParameterSet model = load_checkpoint(cfg.model);
  const std::vector<SummaryRow> rows = {
      evaluate(model, task_data(cfg), "eval", label_or(cfg, fs::path(cfg.model).filename().string()), cfg.seed)};
  write_summary(dir / "summary.csv", rows);
  print_rows(out, rows);
  return 0;
}

struct ScanInput {
  ParameterSet model;
  Dataset data;
};

ScanInput scan_input(const RunConfig& cfg, const RunDir& dir) {
  ScanInput s;
  if (!cfg.model.empty()) {
    if (!fs::exists(cfg.model)) throw Error("missing model checkpoint " + cfg.model);
    s.model = load_checkpoint(cfg.model);
  } else {
    const Experts e = obtain_experts(cfg, dir);
    s.model = cfg.landscape_expert == ModOp::Add ? e.add : e.sub;
  }
  s.data = full_split(cfg.experts.task(cfg.landscape_expert, cfg.seed), Split::Train);
  return s;
}

int cmd_landscape(const RunConfig& cfg, RunDir& dir, std::ostream& out) {
  const ScanInput in = scan_input(cfg, dir);
  const DirectionPair dirs = random_directions(in.model, derive_seed(cfg.seed, "landscape"));
  const GridValues loss = loss_grid(in.model, dirs, cfg.grid, in.data);
  write_stream(dir / "landscape.csv", [&](std::ostream& f) { write_grid_csv(f, cfg.grid, loss); });
  write_stream(dir / "landscape.pgm", [&](std::ostream& f) { write_pgm(f, loss); });
  const std::size_t c = cfg.grid.resolution / 2;
  out << "loss grid " << loss.rows << "x" << loss.cols << ", center " << short_double(loss(c, c)) << '\n';
  return 0;
}

int cmd_convexity(const RunConfig& cfg, RunDir& dir, std::ostream& out) {
  const ScanInput in = scan_input(cfg, dir);
  const DirectionPair dirs = random_directions(in.model, derive_seed(cfg.seed, "landscape"));
  EigConfig eig = cfg.eig;
  eig.seed = derive_seed(cfg.seed, "curvature");
  const ConvexityResult r = convexity_grid(in.model, dirs, cfg.grid, in.data, eig);
  write_stream(dir / "convexity.csv", [&](std::ostream& f) { write_convexity_csv(f, r); });
  write_stream(dir / "convexity.pgm", [&](std::ostream& f) { write_pgm(f, r.convexity); });
  write_stream(dir / "landscape.csv", [&](std::ostream& f) { write_grid_csv(f, cfg.grid, r.loss); });
  std::size_t unconverged = 0;
  for (unsigned char c : r.converged) unconverged += c ? 0 : 1;
  out << "convexity grid " << r.convexity.rows << "x" << r.convexity.cols << ", " << unconverged
      << " cells not converged\n";
  if (unconverged) dir.log(std::to_string(unconverged) + " cells did not converge");
  return 0;
}

int cmd_report(const RunConfig&, RunDir& dir, const std::vector<std::string>& runs, std::ostream& out) {
  if (runs.empty()) throw InvalidArgument("report needs --runs DIR...");
  std::vector<SummaryRow> rows;
  for (const auto& run : runs) {
    const fs::path p = fs::path(run) / "summary.csv";
    if (!fs::exists(p)) throw Error("missing summary " + p.string());
    for (auto& r : read_summary(p.string())) rows.push_back(std::move(r));
  }
  write_summary(dir / "report.csv", rows);

  // Mean over seeds per (method, config), in order of first appearance.
  struct Acc {
    std::size_t n = 0;
    double a = 0.0, b = 0.0, avg = 0.0;
  };
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, Acc> acc;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.method, r.config);
    if (!acc.count(key)) order.push_back(key);
    Acc& x = acc[key];
    ++x.n;
    x.a += r.task_a;
    x.b += r.task_b;
    x.avg += r.avg;
  }
  write_stream(dir / "report_mean.csv", [&](std::ostream& f) {
    f << "method,config,n,task_a,task_b,avg\n";
    for (const auto& key : order) {
      const Acc& x = acc[key];
      const double n = static_cast<double>(x.n);
      f << key.first << ',' << key.second << ',' << x.n << ',' << format_double(x.a / n) << ','
        << format_double(x.b / n) << ',' << format_double(x.avg / n) << '\n';
      out << key.first << " [" << key.second << "] n=" << x.n << " task_a=" << short_double(x.a / n)
          << " task_b=" << short_double(x.b / n) << " avg=" << short_double(x.avg / n) << '\n';
    }
  });
  return 0;
}

}  // namespace

std::vector<SummaryRow> read_summary(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path);
  std::string line;
  if (!std::getline(f, line) || line != "method,config,seed,task_a,task_b,avg") {
    throw FormatError(path + ": unexpected summary header");
  }
  std::vector<SummaryRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw FormatError(path + ": malformed summary row '" + line + "'");
    SummaryRow r;
    r.method = cells[0];
    r.config = cells[1];
    r.seed = cells[2];
    try {
      r.task_a = std::stod(cells[3]);
      r.task_b = std::stod(cells[4]);
      r.avg = std::stod(cells[5]);
    } catch (const std::exception&) {
      throw FormatError(path + ": non-numeric accuracy in '" + line + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparsity-aware evolutionary model merging on modular twin tasks", "sae"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::string config_file;
  app.add_option("--config", config_file, "key=value config file; flags override it");
  std::map<std::string, std::string> flags;
  for (const auto& key : config_keys()) app.add_option("--" + key, flags[key], "config key " + key);
  std::vector<std::string> runs;

  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"gen-data", "Write the train/test pools of both tasks as CSV"},
      {"train-experts", "Train the base model and both task experts"},
      {"evolve", "Run sparsity-aware evolutionary merging"},
      {"pso", "Run the particle swarm merging baseline"},
      {"baseline", "Static merge: --method weight-average or task-arithmetic"},
      {"eval", "Evaluate --model on both test splits"},
      {"landscape", "Loss surface along two normalized random directions"},
      {"convexity", "Hessian convexity proxy over the landscape grid"},
      {"report", "Join run summaries: --runs DIR..."},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* s = app.add_subcommand(c.name, c.help);
    s->fallthrough();
    subs[c.name] = s;
  }
  subs["report"]->add_option("--runs", runs, "Run directories containing summary.csv")->expected(1, -1);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    RunConfig cfg;
    if (!config_file.empty()) cfg = load_config(config_file);
    for (const auto& key : config_keys()) {
      if (app.get_option("--" + key)->count() > 0) set_config_value(cfg, key, flags[key]);
    }
    if (const auto v = cfg.violations(); !v.empty()) {
      err << "invalid configuration:\n";
      for (const auto& s : v) err << "  - " << s << '\n';
      return 2;
    }
    if (cfg.jobs > 0) set_worker_count(cfg.jobs);

    std::string name;
    for (const auto& [n, s] : subs) {
      if (s->parsed()) name = n;
    }
    RunDir dir(cfg, name);
    int rc = 0;
    if (name == "gen-data") rc = cmd_gen_data(cfg, dir, out);
    else if (name == "train-experts") rc = cmd_train_experts(cfg, dir, out);
    else if (name == "evolve") rc = cmd_evolve(cfg, dir, out);
    else if (name == "pso") rc = cmd_pso(cfg, dir, out);
    else if (name == "baseline") rc = cmd_baseline(cfg, dir, out);
    else if (name == "eval") rc = cmd_eval(cfg, dir, out);
    else if (name == "landscape") rc = cmd_landscape(cfg, dir, out);
    else if (name == "convexity") rc = cmd_convexity(cfg, dir, out);
    else if (name == "report") rc = cmd_report(cfg, dir, runs, out);
    dir.log("finished " + name + " rc=" + std::to_string(rc));
    return rc;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace sae::cli
