#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "eflab/corruption.hpp"
#include "eflab/losses.hpp"
#include "eflab/model.hpp"
#include "eflab/rng.hpp"
#include "eflab/schedule.hpp"
#include "eflab/sequence.hpp"

namespace eflab {

struct SamplerConfig {
  double dt = 1e-2;
  double dt_img = 0.0;  ///< image Euler step; 0 means "same as dt"
  double guidance_w = 1.0;
  Schedule schedule;
  GenerationMode mode = GenerationMode::interleaved;
  SequenceLimits limits;
  bool two_head_sampling = true;
  double temperature = 1.0;
  std::size_t num_images = 1;      ///< independent mode: images present from the start
  bool guide_velocities = false;   ///< also mix velocities linearly under guidance
  bool record_snapshots = false;

  void validate() const;
};

struct InsertionEvent {
  std::size_t step = 0;
  double t_text = 0.0;  ///< text time after the step (the insertion timestamp)
  std::size_t gap = 0;  ///< gap index in the pre-step sequence
  int symbol = 0;
};

struct Snapshot {
  double t_text = 0.0;
  std::size_t length = 0;
  std::vector<double> image_times;
};

struct GenerationTrace {
  std::vector<Snapshot> snapshots;
  std::vector<InsertionEvent> events;
  std::vector<double> insertion_times;     ///< per final element; NaN for prompt elements
  std::vector<double> image_done_clock;    ///< loop clock (steps * dt) at which each image reached t_img = 1
  std::size_t steps = 0;
  std::size_t clamp_count = 0;             ///< per-gap probabilities that had to be clamped to 1
  bool truncated = false;                  ///< an insertion was dropped at max_len
};

struct SamplerState {
  MixedSequence seq;
  double t_text = 0.0;
  GenerationTrace trace;

  bool done() const;
};

/// Geometric guidance on rates and token distributions. w = 1 returns `cond`
/// and w = 0 returns `uncond` unchanged. The effective rate (1-pi)*lambda is
/// interpolated; pi is interpolated geometrically and lambda_nonzero recovered
/// as the quotient so that (1-pi^cfg)*lambda_nonzero^cfg equals the guided rate.
InsertionHeads cfg_heads(InsertionHeads const& cond, InsertionHeads const& uncond, double w);

/// First-order Euler integration with `steps` uniform substeps.
Eigen::VectorXd euler_flow(Eigen::VectorXd y, double t0, double t1,
                           std::function<Eigen::VectorXd(Eigen::VectorXd const&, double)> const& v, int steps);

/// One generation step: image Euler updates, then parallel insertions drawn
/// against the pre-step state, then the text clock advances.
void step(SamplerState& state, HeadModel const& model, SamplerConfig const& cfg, Rng& rng);

struct GenerationResult {
  MixedSequence sequence;
  GenerationTrace trace;
};

GenerationResult generate(MixedSequence const& prompt, HeadModel const& model, SamplerConfig const& cfg, Rng& rng);

/// Independent runs; run r uses `rng_root.stream(r)`, so results do not depend on `threads`.
std::vector<GenerationResult> generate_many(MixedSequence const& prompt, HeadModel const& model,
                                            SamplerConfig const& cfg, Rng const& rng_root, std::size_t runs,
                                            unsigned threads = 1);

nlohmann::json to_json(GenerationTrace const& trace);

}  // namespace eflab
