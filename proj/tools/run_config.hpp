#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eflab/corruption.hpp"
#include "eflab/sampler.hpp"
#include "eflab/schedule.hpp"
#include "eflab/sequence.hpp"
#include "eflab/synthdata.hpp"
#include "eflab/toymodel.hpp"
#include "eflab/validation.hpp"

namespace eflab::cli {

inline constexpr int kConfigVersion = 1;

struct DataSection {
  std::string dataset;                        ///< dataset lines
  std::optional<synth::GeneratorSpec> spec;   ///< inline or loaded from a path
  std::size_t count = 1000;
};

struct SampleSection {
  double dt = 1e-2;
  double dt_img = 0.0;
  double cfg_w = 1.0;
  GenerationMode mode = GenerationMode::interleaved;
  std::size_t runs = 1000;
  bool two_head = true;
  double temperature = 1.0;
  std::size_t num_images = 1;
  bool guide_velocities = false;
  std::vector<std::vector<int>> prompts;  ///< empty: one unconditional prompt
  std::string model = "oracle";  ///< "oracle" or a checkpoint path
  std::string trace_out;
};

struct OracleSection {
  GenerationMode mode = GenerationMode::interleaved;
  std::vector<double> times{0.5};
  std::vector<MixedSequence> states;  ///< empty: every reachable state of the dataset
  std::size_t max_states = 10000;
};

struct ReportSection {
  std::string samples;
  std::string dataset;
  double tolerance = 0.05;
};

/// Whole run configuration. Unknown keys are rejected; relative paths are
/// resolved against the directory of the config file.
struct RunConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 0;
  std::string out = "out";
  Schedule schedule;
  Vocabulary vocab{3, {}};
  int image_dim = 2;
  std::size_t max_len = 16;
  DataSection data;
  std::size_t corrupt_repeats = 1;
  GenerationMode corrupt_mode = GenerationMode::interleaved;
  OracleSection oracle;
  TrainConfig train;
  ModelDims dims;
  SampleSection sample;
  validation::ScheduleCheckConfig validate;
  ReportSection report;

  nlohmann::json source;  ///< the document as read, for the manifest

  SequenceLimits limits() const;
  /// Effective values after resolution and overrides; what the manifest records.
  nlohmann::json resolved() const;
};

RunConfig parse_config(nlohmann::json const& j, std::filesystem::path const& base_dir);
RunConfig load_config(std::string const& path);

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(nlohmann::json const& j);

}  // namespace eflab::cli
