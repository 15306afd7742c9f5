#pragma once

#include <optional>
#include <string>

#include "run_config.hpp"

namespace eflab::cli {

/// Command-line overrides applied on top of the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::optional<std::string> out;
  // sample only
  std::optional<double> dt;
  std::optional<int> steps_img;
  std::optional<double> cfg_w;
  std::optional<std::string> mode;
  std::optional<std::size_t> runs;
  std::optional<std::string> trace_out;
  std::optional<std::string> dataset;
  std::optional<std::string> model;
};

void apply(RunConfig& cfg, Overrides const& o);

/// Each returns the process exit code (0, or 1 when a check failed).
int cmd_gen(RunConfig const& cfg, unsigned threads);
int cmd_corrupt(RunConfig const& cfg, unsigned threads);
int cmd_oracle(RunConfig const& cfg, unsigned threads);
int cmd_train(RunConfig const& cfg, unsigned threads);
int cmd_sample(RunConfig const& cfg, unsigned threads);
int cmd_validate_schedule(RunConfig const& cfg, unsigned threads);
int cmd_report(RunConfig const& cfg, unsigned threads);

/// Writes out/manifest.json for `command`.
void write_manifest(RunConfig const& cfg, std::string const& command, unsigned threads);

}  // namespace eflab::cli
