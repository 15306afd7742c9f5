#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "eflab/rng.hpp"
#include "eflab/schedule.hpp"
#include "eflab/sequence.hpp"

namespace eflab {

/// How text and image times are coupled.
///  - interleaved: tau_text ~ U(0,2); images may be deleted via tau_img < 0.
///  - independent: t_text, t_img ~ U(0,1) independently; images never deleted.
///  - text_only:   t ~ U(0,1); images (if any) are deleted like tokens and kept clean.
enum class GenerationMode { interleaved, independent, text_only };

std::string to_string(GenerationMode m);
GenerationMode parse_mode(std::string const& name);

/// A surviving generated image with its flow-matching pair.
struct FlowTarget {
  std::size_t element = 0;  ///< index into x_t
  Eigen::VectorXd y0;       ///< noise
  Eigen::VectorXd y1;       ///< clean data
  double t = 0.0;           ///< clipped image time
};

struct CorruptionRecord {
  MixedSequence x_t;
  std::vector<std::vector<int>> bags;  ///< per gap of x_t, deleted symbols in source order
  std::vector<std::size_t> counts;     ///< counts[g] == bags[g].size()
  ExtendedTime tau_text;
  std::vector<ExtendedTime> image_times;  ///< aligned with surviving generated images of x_t
  std::vector<std::size_t> alignment;     ///< x_t index -> source index in x1
  std::vector<FlowTarget> flow_targets;
  std::size_t deleted_images = 0;
  GenerationMode mode = GenerationMode::interleaved;

  double t_text() const { return tau_text.clipped(); }
  std::size_t gap_count() const { return bags.size(); }
};

/// Fate of one image under the interleaved schedule.
struct ImageFate {
  bool deleted = false;
  double t_img = 0.0;  ///< clipped time when it survives
  double tau_img = 0.0;
};

ImageFate deletion_time_of_image(Schedule const& s, double tau_text, Rng& rng);

/// Draws the (extended) text time for `mode` and corrupts x1.
CorruptionRecord corrupt(MixedSequence const& x1, Schedule const& s, GenerationMode mode, int image_token_id, Rng& rng);

/// Corrupts x1 at a given text time: tau_text in [0,2] for interleaved, [0,1] otherwise.
CorruptionRecord corrupt_at(MixedSequence const& x1, Schedule const& s, GenerationMode mode, double tau_text,
                            int image_token_id, Rng& rng);

/// Interleaves x_t's symbols with the recorded bags; equals x1's symbol sequence.
std::vector<int> reconstruct_symbols(CorruptionRecord const& rec, int image_token_id);

nlohmann::json to_json(CorruptionRecord const& rec);

}  // namespace eflab
