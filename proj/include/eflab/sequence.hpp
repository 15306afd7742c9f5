#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "eflab/errors.hpp"
#include "eflab/rng.hpp"
#include "eflab/schedule.hpp"

namespace eflab {

struct CapacityError : DataError {
  explicit CapacityError(std::string const& what) : DataError("capacity error: " + what) {}
};
struct IndexError : DataError {
  explicit IndexError(std::string const& what) : DataError("index error: " + what) {}
};

/// Ordinary tokens are 0..size-1; the image token is `size`, one past the range.
struct Vocabulary {
  int size = 0;
  std::vector<std::string> names;

  int image_token_id() const noexcept { return size; }
  /// Ordinary tokens plus the image token; the length of every q distribution.
  int head_width() const noexcept { return size + 1; }
  bool is_token(int id) const noexcept { return id >= 0 && id < size; }
  std::string name(int id) const;
};

struct ImageBlock {
  Eigen::VectorXd values;
  ExtendedTime time;

  double t() const { return time.clipped(); }
};

struct Element {
  std::variant<int, ImageBlock> value;

  static Element token(int id) { return Element{id}; }
  static Element image(Eigen::VectorXd values, double t) { return Element{ImageBlock{std::move(values), {t}}}; }

  bool is_image() const noexcept { return std::holds_alternative<ImageBlock>(value); }
  int token_id() const { return std::get<int>(value); }
  ImageBlock const& image() const { return std::get<ImageBlock>(value); }
  ImageBlock& image() { return std::get<ImageBlock>(value); }

  /// Token id, or `image_token_id` for an image element.
  int symbol(int image_token_id) const noexcept {
    return is_image() ? image_token_id : std::get<int>(value);
  }
};

bool operator==(Element const& a, Element const& b);

/// Ordered tokens and image blocks. The first `prompt_len` elements are a
/// conditioning prefix: never corrupted, never edited.
struct MixedSequence {
  std::vector<Element> elements;
  std::size_t prompt_len = 0;

  std::size_t size() const noexcept { return elements.size(); }
  bool empty() const noexcept { return elements.empty(); }
  std::size_t generated_size() const noexcept { return elements.size() - prompt_len; }
  /// Gaps are numbered 0..size(); gap g sits before element g.
  std::size_t gap_count() const noexcept { return elements.size() + 1; }
  std::size_t image_count() const;

  std::vector<int> symbols(int image_token_id) const;
  MixedSequence prompt() const;
  MixedSequence without_prompt() const;

  static MixedSequence from_tokens(std::vector<int> const& ids, std::size_t prompt_len = 0);

  friend bool operator==(MixedSequence const&, MixedSequence const&) = default;
};

/// Run-wide limits a sequence must respect.
struct SequenceLimits {
  Vocabulary vocab;
  int image_dim = 2;
  std::size_t max_len = 32;  ///< bound on the non-prompt element count
};

/// Inserts `a` at gap `gap` (after element gap-1). An image token expands to a
/// fresh standard-normal block at t_img = 0. The input is left unchanged.
MixedSequence insert(MixedSequence const& seq, std::size_t gap, int a, SequenceLimits const& limits, Rng& rng);

/// In-place variant used by the sampler's hot loop.
void insert_in_place(MixedSequence& seq, std::size_t gap, int a, SequenceLimits const& limits, Rng& rng);

/// Exact element counts over all sequences; images count under image_token_id.
std::map<int, std::size_t> token_histogram(std::vector<MixedSequence> const& seqs, int image_token_id);

/// Throws DataError when a sequence breaks the vocabulary or limits.
void validate(MixedSequence const& seq, SequenceLimits const& limits);

/// Line-oriented dataset: records plus optional per-record weights.
struct Dataset {
  std::vector<MixedSequence> records;
  std::vector<double> weights;

  std::size_t size() const noexcept { return records.size(); }
  void add(MixedSequence seq, double weight = 1.0) {
    records.push_back(std::move(seq));
    weights.push_back(weight);
  }
};

nlohmann::json to_json_record(MixedSequence const& seq, std::optional<double> weight = std::nullopt,
                              bool with_times = false);
MixedSequence from_json_record(nlohmann::json const& j, double* weight = nullptr);

Dataset read_dataset(std::istream& in);
Dataset read_dataset_file(std::string const& path);
void write_dataset(std::ostream& out, Dataset const& data, bool with_weights = false);
void write_dataset_file(std::string const& path, Dataset const& data, bool with_weights = false);

/// One name per line, line number = id.
std::vector<std::string> read_token_names(std::string const& path);

}  // namespace eflab
