#include <doctest.h>

#include <cmath>
#include <sstream>

#include "eflab/sequence.hpp"
#include "eflab/synthdata.hpp"
#include "eflab/metrics.hpp"

using namespace eflab;

namespace {
constexpr int a = 0, b = 1, c = 2;

SequenceLimits limits(int vocab = 3, int dim = 2, std::size_t max_len = 8) {
  SequenceLimits l;
  l.vocab.size = vocab;
  l.image_dim = dim;
  l.max_len = max_len;
  return l;
}
}  // namespace

TEST_CASE("insert basics") {
  Rng rng(1);
  auto const lim = limits();
  auto const ac = MixedSequence::from_tokens({a, c});
  auto const abc = insert(ac, 1, b, lim, rng);
  CHECK(abc == MixedSequence::from_tokens({a, b, c}));
  CHECK(ac == MixedSequence::from_tokens({a, c}));  // input untouched
  CHECK(insert(MixedSequence{}, 0, a, lim, rng) == MixedSequence::from_tokens({a}));
  CHECK(insert(ac, 0, b, lim, rng) == MixedSequence::from_tokens({b, a, c}));
  CHECK(insert(ac, 2, b, lim, rng) == MixedSequence::from_tokens({a, c, b}));
  CHECK_THROWS_AS(insert(ac, 3, b, lim, rng), IndexError);
}

TEST_CASE("insert respects capacity and the prompt") {
  Rng rng(1);
  auto lim = limits();
  lim.max_len = 2;
  auto const full = MixedSequence::from_tokens({a, b});
  CHECK_THROWS_AS(insert(full, 0, c, lim, rng), CapacityError);
  // the prompt does not count toward max_len
  auto const prompted = MixedSequence::from_tokens({c, a, b}, 1);
  CHECK_THROWS_AS(insert(prompted, 3, c, lim, rng), CapacityError);
  auto const p1 = MixedSequence::from_tokens({c, a}, 1);
  CHECK(insert(p1, 1, b, lim, rng) == MixedSequence::from_tokens({c, b, a}, 1));
  CHECK_THROWS_AS(insert(MixedSequence::from_tokens({c, a, b}, 2), 1, b, limits(), rng), IndexError);
}

TEST_CASE("image insertion draws a standard normal block at t=0") {
  Rng rng(7);
  auto const lim = limits(3, 256);
  auto const out = insert(MixedSequence::from_tokens({a}), 1, lim.vocab.image_token_id(), lim, rng);
  REQUIRE(out.size() == 2);
  REQUIRE(out.elements[1].is_image());
  auto const& blk = out.elements[1].image();
  CHECK(blk.values.size() == 256);
  CHECK(blk.t() == 0.0);
  double const mean = blk.values.mean();
  double const var = (blk.values.array() - mean).square().sum() / 255.0;
  // sample mean sd = 1/16; sample variance sd ~ sqrt(2/255)
  CHECK(std::abs(mean) <= 3.0 / 16.0);
  CHECK(std::abs(var - 1.0) <= 3.0 * std::sqrt(2.0 / 255.0));
}

TEST_CASE("token histogram") {
  auto const h = token_histogram({MixedSequence::from_tokens({a, b}), MixedSequence::from_tokens({a})}, 3);
  CHECK(h.size() == 2);
  CHECK(h.at(a) == 2);
  CHECK(h.at(b) == 1);
  CHECK(token_histogram({}, 3).empty());
  MixedSequence with_img = MixedSequence::from_tokens({a});
  with_img.elements.push_back(Element::image(Eigen::VectorXd::Zero(2), 1.0));
  CHECK(token_histogram({with_img}, 3).at(3) == 1);
}

TEST_CASE("token histogram of a generated corpus matches the mixture") {
  synth::GeneratorSpec spec;
  spec.vocab = 3;
  spec.length_hist = {0.0, 0.0, 1.0};
  spec.token_weights = {0.5, 0.3, 0.2};
  Rng rng(4);
  auto const data = synth::generate(spec, 20000, rng);
  auto const h = token_histogram(data.records, 3);
  std::size_t const n = 40000;
  for (int tok = 0; tok < 3; ++tok) CHECK(metrics::within_binomial(h.at(tok), n, spec.token_weights[tok]));
}

TEST_CASE("json round trip keeps image values exactly") {
  Rng rng(2);
  MixedSequence seq = MixedSequence::from_tokens({c, a}, 1);
  Eigen::VectorXd v(3);
  v << 0.1, -1.0 / 3.0, 1e-300;
  seq.elements.push_back(Element::image(v, 1.0));
  seq.elements.push_back(Element::token(b));
  auto const j = to_json_record(seq);
  CHECK(j["prompt"] == nlohmann::json::array({c}));
  auto const back = from_json_record(j);
  CHECK(back == seq);
  CHECK(back.elements[2].image().values[1] == v[1]);

  std::stringstream ss;
  Dataset d;
  d.add(seq, 0.25);
  d.add(MixedSequence::from_tokens({a, b}), 0.75);
  write_dataset(ss, d, true);
  auto const d2 = read_dataset(ss);
  REQUIRE(d2.size() == 2);
  CHECK(d2.records[0] == seq);
  CHECK(d2.weights[1] == 0.75);
}

TEST_CASE("dataset parsing errors") {
  CHECK_THROWS_AS(from_json_record(nlohmann::json::parse(R"({"prompt":[],"target":[1],"extra":1})")), DataError);
  CHECK_THROWS_AS(from_json_record(nlohmann::json::parse(R"({"target":["x"]})")), DataError);
  std::stringstream bad("{\"target\": [0]}\nnot json\n");
  CHECK_THROWS_AS(read_dataset(bad), DataError);
}

TEST_CASE("validate") {
  auto const lim = limits();
  CHECK_NOTHROW(validate(MixedSequence::from_tokens({a, b}), lim));
  CHECK_THROWS_AS(validate(MixedSequence::from_tokens({a, 3}), lim), DataError);
  MixedSequence wrong_dim = MixedSequence::from_tokens({a});
  wrong_dim.elements.push_back(Element::image(Eigen::VectorXd::Zero(5), 1.0));
  CHECK_THROWS_AS(validate(wrong_dim, lim), DataError);
}
