#include "sae/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "sae/error.hpp"

namespace sae {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const char* first = s.data();
  const char* last = s.data() + s.size();
  std::from_chars_result r;
  if constexpr (std::is_floating_point_v<T>) {
    r = std::from_chars(first, last, v, std::chars_format::general);
  } else {
    r = std::from_chars(first, last, v);
  }
  if (s.empty() || r.ec != std::errc() || r.ptr != last) {
    throw InvalidArgument("bad value for " + key + ": '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw InvalidArgument("bad value for " + key + ": '" + s + "' (expected true or false)");
}

RampShape parse_ramp(const std::string& s) {
  if (s == "linear") return RampShape::Linear;
  if (s == "cosine") return RampShape::Cosine;
  throw InvalidArgument("unknown ramp '" + s + "' (expected linear or cosine)");
}

std::string ramp_name(RampShape r) { return r == RampShape::Linear ? "linear" : "cosine"; }

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Get>
Key make_double(std::string name, Get ref) {
  return {name, [name, ref](RunConfig& c, const std::string& v) { ref(c) = parse_number<double>(name, v); },
          [ref](const RunConfig& c) { return format_double(ref(c)); }};
}

template <class T, class Get>
Key make_int(std::string name, Get ref) {
  return {name, [name, ref](RunConfig& c, const std::string& v) { ref(c) = parse_number<T>(name, v); },
          [ref](const RunConfig& c) { return std::to_string(ref(c)); }};
}

template <class Get>
Key make_string(std::string name, Get ref) {
  return {name, [ref](RunConfig& c, const std::string& v) { ref(c) = v; },
          [ref](const RunConfig& c) { return ref(c); }};
}

template <class Get, class Parse, class Show>
Key make_enum(std::string name, Get ref, Parse parse, Show show) {
  return {name, [ref, parse](RunConfig& c, const std::string& v) { ref(c) = parse(v); },
          [ref, show](const RunConfig& c) { return show(ref(c)); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> k = [] {
    std::vector<Key> v;
    v.push_back(make_int<std::uint64_t>("seed", [](auto& c) -> auto& { return c.seed; }));
    v.push_back(make_string("out", [](auto& c) -> auto& { return c.out; }));
    v.push_back(make_string("label", [](auto& c) -> auto& { return c.label; }));
    v.push_back(make_string("experts", [](auto& c) -> auto& { return c.experts_dir; }));
    v.push_back(make_string("model", [](auto& c) -> auto& { return c.model; }));
    v.push_back(make_string("method", [](auto& c) -> auto& { return c.method; }));
    v.push_back(make_double("scale", [](auto& c) -> auto& { return c.ta_scale; }));
    v.push_back(make_enum(
        "expert", [](auto& c) -> auto& { return c.landscape_expert; }, parse_op,
        [](ModOp o) { return to_string(o); }));
    v.push_back(make_int<int>("jobs", [](auto& c) -> auto& { return c.jobs; }));

    v.push_back(make_int<int>("modulus", [](auto& c) -> auto& { return c.experts.modulus; }));
    v.push_back(make_int<std::size_t>("hidden", [](auto& c) -> auto& { return c.experts.hidden; }));
    v.push_back(make_double("test-fraction", [](auto& c) -> auto& { return c.experts.test_fraction; }));
    v.push_back(make_int<int>("base-epochs", [](auto& c) -> auto& { return c.experts.base_epochs; }));
    v.push_back(make_int<int>("expert-epochs", [](auto& c) -> auto& { return c.experts.expert_epochs; }));
    v.push_back(make_enum(
        "optimizer", [](auto& c) -> auto& { return c.experts.optimizer; }, parse_optimizer,
        [](Optimizer o) { return to_string(o); }));
    v.push_back(make_double("lr", [](auto& c) -> auto& { return c.experts.learning_rate; }));
    v.push_back(make_double("weight-decay", [](auto& c) -> auto& { return c.experts.weight_decay; }));
    v.push_back(make_int<std::size_t>("batch-size", [](auto& c) -> auto& { return c.experts.batch_size; }));

    v.push_back(make_int<std::size_t>("pop", [](auto& c) -> auto& { return c.evolve.capacity; }));
    v.push_back(make_int<int>("steps", [](auto& c) -> auto& { return c.evolve.schedule.total_steps; }));
    v.push_back(make_double("s-min", [](auto& c) -> auto& { return c.evolve.schedule.s_min; }));
    v.push_back(make_double("s-max", [](auto& c) -> auto& { return c.evolve.schedule.s_max; }));
    v.push_back(make_int<int>("t0", [](auto& c) -> auto& { return c.evolve.schedule.t0; }));
    v.push_back(make_int<int>("t-mult", [](auto& c) -> auto& { return c.evolve.schedule.t_mult; }));
    v.push_back(make_enum("ramp", [](auto& c) -> auto& { return c.evolve.schedule.ramp; }, parse_ramp,
                          ramp_name));
    v.push_back(make_enum(
        "measure", [](auto& c) -> auto& { return c.evolve.merge.measure; }, parse_measure,
        [](SparsityMeasure m) { return to_string(m); }));
    v.push_back(make_enum(
        "granularity", [](auto& c) -> auto& { return c.evolve.merge.granularity; }, parse_granularity,
        [](Granularity g) { return to_string(g); }));
    v.push_back(make_enum(
        "redense", [](auto& c) -> auto& { return c.evolve.merge.redense; }, parse_redense,
        [](RedenseMode m) { return to_string(m); }));
    v.push_back(make_double("gamma", [](auto& c) -> auto& { return c.evolve.merge.gamma; }));
    v.push_back(make_enum(
        "anneal", [](auto& c) -> auto& { return c.evolve.anneal; }, parse_anneal,
        [](AnnealTarget a) { return to_string(a); }));
    v.push_back(make_enum(
        "replacement", [](auto& c) -> auto& { return c.evolve.replacement; }, parse_replacement,
        [](ReplacementPolicy p) { return to_string(p); }));
    v.push_back({"refresh",
                 [](RunConfig& c, const std::string& s) { c.evolve.refresh_scores = parse_bool("refresh", s); },
                 [](const RunConfig& c) { return std::string(c.evolve.refresh_scores ? "true" : "false"); }});
    v.push_back(make_int<std::size_t>("opt-batch", [](auto& c) -> auto& { return c.evolve.opt_batch; }));

    v.push_back(make_int<std::size_t>("swarm", [](auto& c) -> auto& { return c.pso.swarm; }));
    v.push_back(make_int<int>("iters", [](auto& c) -> auto& { return c.pso.iterations; }));
    v.push_back(make_double("w", [](auto& c) -> auto& { return c.pso.inertia; }));
    v.push_back(make_double("c1", [](auto& c) -> auto& { return c.pso.c1; }));
    v.push_back(make_double("c2", [](auto& c) -> auto& { return c.pso.c2; }));
    v.push_back(make_double("vmax", [](auto& c) -> auto& { return c.pso.vmax; }));

    v.push_back(make_int<std::size_t>("grid", [](auto& c) -> auto& { return c.grid.resolution; }));
    v.push_back(make_double("alpha-max", [](auto& c) -> auto& { return c.grid.alpha_max; }));
    v.push_back(make_double("beta-max", [](auto& c) -> auto& { return c.grid.beta_max; }));
    v.push_back(make_double("eps", [](auto& c) -> auto& { return c.grid.eps; }));
    v.push_back(make_int<int>("eig-iters", [](auto& c) -> auto& { return c.eig.iters; }));
    v.push_back(make_double("eig-tol", [](auto& c) -> auto& { return c.eig.tol; }));
    return v;
  }();
  return k;
}

const Key& find_key(const std::string& name) {
  for (const Key& k : keys()) {
    if (k.name == name) return k;
  }
  throw InvalidArgument("unknown config key '" + name + "'");
}

}  // namespace

std::vector<std::string> RunConfig::violations() const {
  std::vector<std::string> v;
  if (out.empty()) v.push_back("output directory must not be empty");
  if (method != "weight-average" && method != "task-arithmetic") {
    v.push_back("method must be weight-average or task-arithmetic");
  }
  if (!std::isfinite(ta_scale)) v.push_back("task-arithmetic scale must be finite");
  if (jobs < 0) v.push_back("jobs must be >= 0");
  if (experts.modulus < 2) v.push_back("modulus must be >= 2");
  if (experts.hidden == 0) v.push_back("hidden width must be positive");
  if (!(experts.test_fraction > 0.0 && experts.test_fraction < 1.0)) {
    v.push_back("test fraction must be in (0, 1)");
  }
  if (experts.base_epochs < 0) v.push_back("base epochs must be >= 0");
  if (experts.expert_epochs < 0) v.push_back("expert epochs must be >= 0");
  if (!(experts.learning_rate > 0.0)) v.push_back("learning rate must be > 0");
  if (!(experts.weight_decay >= 0.0)) v.push_back("weight decay must be >= 0");

  EvolveConfig e = evolve;
  e.tasks = {{"add", {}}, {"sub", {}}};
  for (auto& s : e.violations()) v.push_back(std::move(s));
  for (auto& s : pso.violations()) v.push_back(std::move(s));
  for (auto& s : grid.violations()) v.push_back(std::move(s));
  if (eig.iters < 1) v.push_back("eigen iterations must be >= 1");
  if (!(eig.tol > 0.0)) v.push_back("eigen tolerance must be > 0");
  return v;
}

std::vector<TaskHandle> RunConfig::tasks() const {
  return {{"add", experts.task(ModOp::Add, seed)}, {"sub", experts.task(ModOp::Sub, seed)}};
}

EvolveConfig RunConfig::evolve_config() const {
  EvolveConfig e = evolve;
  e.seed = seed;
  e.tasks = tasks();
  return e;
}

PsoConfig RunConfig::pso_config() const {
  PsoConfig p = pso;
  p.seed = seed;
  p.opt_batch = evolve.opt_batch;
  return p;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const Key& k : keys()) n.push_back(k.name);
    return n;
  }();
  return names;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_key(key).set(cfg, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return find_key(key).get(cfg); }

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("config line " + std::to_string(lineno) + " has no '='");
    }
    set_config_value(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, ss.str());
  return cfg;
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const Key& k : keys()) out += k.name + "=" + k.get(cfg) + "\n";
  return out;
}

}  // namespace sae
