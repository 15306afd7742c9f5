#pragma once

#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "eflab/corruption.hpp"
#include "eflab/losses.hpp"
#include "eflab/model.hpp"
#include "eflab/sequence.hpp"

namespace eflab {

struct UnreachableStateError : DataError {
  explicit UnreachableStateError(std::string const& what) : DataError("unreachable state: " + what) {}
};

/// A weighted point target for the image velocity field.
struct PointTarget {
  double weight = 0.0;
  Eigen::VectorXd value;
};

/// E[Y1 - Y0 | Y_t = y_t] for a finite set of point targets under the linear
/// interpolant, i.e. responsibilities w_k N(y_t; t y*_k, (1-t)^2 I) applied to
/// (y*_k - y_t) / (1 - t).
Eigen::VectorXd oracle_velocity(std::vector<PointTarget> const& targets, Eigen::VectorXd const& y_t, double t_img);

/// Exact posterior insertion statistics for a tiny dataset, obtained by
/// enumerating every way the corruption process can produce a given state.
///
/// Records are grouped by their symbol sequences; image content does not enter
/// the text posterior. A query whose prompt is empty marginalizes over every
/// record's prompt (the unconditional prediction); otherwise only records with
/// a matching prompt contribute.
class OracleTable {
public:
  struct Options {
    GenerationMode mode = GenerationMode::interleaved;
    std::size_t max_target_len = 12;         ///< explicit embedding enumeration bound
    std::size_t max_floor_states = 10000;    ///< loss_floor enumeration budget
  };

  OracleTable(Dataset const& data, Vocabulary vocab, Schedule schedule);
  OracleTable(Dataset const& data, Vocabulary vocab, Schedule schedule, Options opts);

  Vocabulary const& vocab() const noexcept { return vocab_; }
  Schedule const& schedule() const noexcept { return schedule_; }
  Options const& options() const noexcept { return opts_; }
  std::size_t record_count() const noexcept { return record_group_.size(); }

  /// Posterior over dataset record indices given a corrupted state at time t.
  std::map<std::size_t, double> posterior_over_data(MixedSequence const& x_t, double t) const;

  /// Exact heads (pi = P(k=0), lambda_nonzero = E[k | k>0], q = normalized
  /// expected bag composition) for every gap of x_t. Value copy.
  InsertionHeads oracle_heads(MixedSequence const& x_t, double t) const;

  /// Posterior point targets for the image at element index `element` of x_t.
  std::vector<PointTarget> image_targets(MixedSequence const& x_t, double t, std::size_t element) const;

  /// Expected text loss under corruption at time t, with `heads_of` supplying
  /// predictions for each corrupted state. Enumerates every deletion pattern.
  double expected_text_loss(double t, std::function<InsertionHeads(MixedSequence const&)> const& heads_of) const;

  /// expected_text_loss with the oracle's own heads plugged in.
  double loss_floor(double t) const;

  struct Entry {
    InsertionHeads heads;
    std::vector<std::vector<PointTarget>> image_targets;  ///< per element (empty for tokens)
  };
  /// Shared cached entry, for hot loops that must not copy; null when the
  /// state is unreachable.
  std::shared_ptr<Entry const> lookup(MixedSequence const& x_t, double t) const;

private:
  struct Group {
    std::vector<int> prompt;
    std::vector<int> target;
    double weight = 0.0;
    std::vector<std::size_t> records;
    std::vector<double> record_weights;
  };

  struct Key {
    std::vector<int> symbols;
    std::size_t prompt_len = 0;
    long long t_quant = 0;
    bool operator==(Key const&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(Key const& k) const noexcept;
  };

  double presence(int symbol, double kappa_t) const;
  bool matches_prompt(Group const& g, std::vector<int> const& symbols, std::size_t prompt_len) const;
  std::vector<double> group_weights(std::vector<int> const& symbols, std::size_t prompt_len, double t) const;
  std::shared_ptr<Entry const> compute(MixedSequence const& x_t, double t) const;

  Vocabulary vocab_;
  Schedule schedule_;
  Options opts_;
  Eigen::Index image_dim_ = 0;
  std::vector<std::vector<Eigen::VectorXd>> record_images_;
  std::vector<Group> groups_;
  std::vector<std::size_t> record_group_;

  mutable std::shared_mutex cache_mutex_;
  mutable std::unordered_map<Key, std::shared_ptr<Entry const>, KeyHash> cache_;
};

/// HeadModel adapter over an OracleTable.
class OracleModel final : public HeadModel {
public:
  /// With `zero_on_unreachable`, unreachable states get zero insertion rates
  /// instead of an error (guided sampling can leave the data support).
  explicit OracleModel(OracleTable const& table, bool zero_on_unreachable = false)
      : table_(table), zero_on_unreachable_(zero_on_unreachable) {}

  void evaluate(MixedSequence const& seq, double t_text, ModelOutput& out) const override;

private:
  OracleTable const& table_;
  bool zero_on_unreachable_;
};

}  // namespace eflab
