#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sae::cli {

/// Runs one subcommand. args excludes the program name. Returns the exit
/// code; usage errors and failures are reported on err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// method,config,seed,task_a,task_b,avg
struct SummaryRow {
  std::string method;
  std::string config;
  std::string seed;
  double task_a = 0.0;
  double task_b = 0.0;
  double avg = 0.0;
};

std::vector<SummaryRow> read_summary(const std::string& path);

}  // namespace sae::cli
