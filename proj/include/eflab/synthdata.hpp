#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "eflab/rng.hpp"
#include "eflab/sequence.hpp"

namespace eflab::synth {

/// One image class. Records of this class carry `prompt` as their prompt, so
/// every image in the record is preceded by the class tokens.
struct ImageClass {
  double weight = 1.0;
  std::vector<int> prompt;
  Eigen::VectorXd mean;
  double std = 0.1;
};

/// Target element of a fixed template: a token id, or an image of class `image_class`.
struct TemplateItem {
  int token = -1;
  int image_class = -1;
};

struct Template {
  double weight = 1.0;
  std::vector<int> prompt;
  std::vector<TemplateItem> target;
};

struct GeneratorSpec {
  int vocab = 4;
  int image_dim = 2;
  std::vector<double> length_hist;       ///< P(number of target text tokens = n)
  std::vector<double> token_weights;     ///< distribution of target text tokens; uniform if empty
  std::vector<ImageClass> classes;
  std::vector<double> image_count_hist;  ///< P(number of images in a record = m)
  std::vector<Template> templates;       ///< when non-empty, records are drawn from these only
  std::uint64_t seed = 0;

  /// Throws ConfigError on unnormalized distributions or inconsistent dimensions.
  void validate() const;
};

void from_json(nlohmann::json const& j, GeneratorSpec& s);
void to_json(nlohmann::json& j, GeneratorSpec const& s);
GeneratorSpec read_spec_file(std::string const& path);

/// i.i.d. records; record i uses stream i of a child of `rng`, so the output is
/// independent of `threads`.
Dataset generate(GeneratorSpec const& spec, std::size_t count, Rng& rng, unsigned threads = 1);

/// Exact empirical statistics. Images are grouped by the prompt symbols of their record.
nlohmann::json stats(Dataset const& data, int vocab);

}  // namespace eflab::synth
