#pragma once

#include <vector>

#include <Eigen/Core>

#include "eflab/losses.hpp"
#include "eflab/sequence.hpp"

namespace eflab {

/// Output contract of every generator: one heads set per gap of the input
/// (gap_count = size + 1) and one velocity per image element, in order.
struct ModelOutput {
  InsertionHeads heads;
  std::vector<Eigen::VectorXd> velocities;
};

/// Anything the sampler can query. Unconditional predictions are obtained by
/// evaluating the sequence with its prompt removed.
class HeadModel {
public:
  virtual ~HeadModel() = default;
  /// `t_text` is supplied for models that use it (the oracle); learned insertion
  /// heads may ignore it.
  virtual void evaluate(MixedSequence const& seq, double t_text, ModelOutput& out) const = 0;
};

}  // namespace eflab
