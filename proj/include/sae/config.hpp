#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sae/evolve.hpp"
#include "sae/landscape.hpp"
#include "sae/pso.hpp"
#include "sae/tasks.hpp"

namespace sae {

/// Every knob of a run. Serialized as flat key=value lines; the key names
/// double as command-line flag names.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "run";
  /// Free-form tag for the summary's config column; derived when empty.
  std::string label;
  /// Directory holding base.ckpt, expert_add.ckpt, expert_sub.ckpt. Experts
  /// are trained from the seed when empty.
  std::string experts_dir;
  std::string model;
  std::string method = "weight-average";
  double ta_scale = 1.0;
  /// Which expert the landscape commands scan when no model is given.
  ModOp landscape_expert = ModOp::Add;
  int jobs = 0;

  ExpertConfig experts;
  EvolveConfig evolve;
  PsoConfig pso;
  GridSpec grid;
  EigConfig eig;

  /// Every violated invariant across all sections.
  std::vector<std::string> violations() const;

  /// The twin tasks (add, sub) derived from the seed and task settings.
  std::vector<TaskHandle> tasks() const;
  /// Evolve section with seed and tasks filled in.
  EvolveConfig evolve_config() const;
  PsoConfig pso_config() const;
};

/// Names of every key, in echo order.
const std::vector<std::string>& config_keys();

/// Throws InvalidArgument for an unknown key or unparsable value.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

/// Lines of key=value; blank lines and lines starting with '#' are skipped.
void apply_config_text(RunConfig& cfg, const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// All keys, one per line, in config_keys() order. Round-trips through
/// apply_config_text.
std::string to_text(const RunConfig& cfg);

}  // namespace sae
