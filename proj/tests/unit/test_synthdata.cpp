#include <doctest.h>

#include <cmath>
#include <sstream>

#include "eflab/metrics.hpp"
#include "eflab/synthdata.hpp"

using namespace eflab;

namespace {
synth::GeneratorSpec paired() {
  return nlohmann::json::parse(R"({
    "vocab": 4, "image_dim": 2, "seed": 1,
    "length_hist": [0.0, 0.5, 0.5],
    "token_weights": [0.1, 0.2, 0.3, 0.4],
    "image_count_hist": [0.5, 0.3, 0.2],
    "classes": [
      {"weight": 0.5, "prompt": [0], "mean": [1.0, 0.0], "std": 0.01},
      {"weight": 0.5, "prompt": [1], "mean": [-1.0, 0.5], "std": 0.2}
    ]})").get<synth::GeneratorSpec>();
}
}  // namespace

TEST_CASE("degenerate template spec") {
  auto const spec = nlohmann::json::parse(R"({"vocab": 2, "templates": [{"target": [0, 1]}]})").get<synth::GeneratorSpec>();
  Rng rng(1);
  auto const d = synth::generate(spec, 3, rng);
  REQUIRE(d.size() == 3);
  for (auto const& r : d.records) CHECK(r == MixedSequence::from_tokens({0, 1}));
}

TEST_CASE("image-count distribution") {
  auto const spec = paired();
  Rng rng(2);
  std::size_t const n = 100000;
  auto const d = synth::generate(spec, n, rng);
  std::vector<std::size_t> counts(3, 0);
  for (auto const& r : d.records) ++counts.at(r.image_count());
  for (std::size_t m = 0; m < 3; ++m) CHECK(metrics::within_binomial(counts[m], n, spec.image_count_hist[m]));
}

TEST_CASE("class moments") {
  auto const spec = paired();
  Rng rng(3);
  auto const d = synth::generate(spec, 20000, rng);
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  std::size_t n = 0;
  for (auto const& r : d.records) {
    CHECK(r.prompt_len == 1);
    for (std::size_t i = 1; i < r.size(); ++i) {
      if (!r.elements[i].is_image() || r.elements[0].token_id() != 0) continue;
      sum += r.elements[i].image().values;
      ++n;
    }
  }
  REQUIRE(n > 1000);
  Eigen::Vector2d const mean = sum / static_cast<double>(n);
  CHECK(std::abs(mean[0] - 1.0) <= 3.0 * 0.01 / std::sqrt(n));
  CHECK(std::abs(mean[1]) <= 3.0 * 0.01 / std::sqrt(n));
}

TEST_CASE("stats") {
  auto const empty = synth::stats(Dataset{}, 4);
  CHECK(empty["records"] == 0);
  for (double p : empty["token_marginals"].get<std::vector<double>>()) CHECK(p == 0.0);
  for (double p : empty["length_hist"].get<std::vector<double>>()) CHECK(p == 0.0);
  for (double p : empty["image_count_hist"].get<std::vector<double>>()) CHECK(p == 0.0);

  auto const spec = paired();
  Rng rng(4);
  std::size_t const n = 10000;
  auto const d = synth::generate(spec, n, rng);
  auto const st = synth::stats(d, 4);
  auto const lc = st["length_counts"].get<std::vector<std::size_t>>();
  for (std::size_t k = 0; k < spec.length_hist.size(); ++k)
    CHECK(metrics::within_binomial(k < lc.size() ? lc[k] : 0, n, spec.length_hist[k]));
  auto const ic = st["image_count_counts"].get<std::vector<std::size_t>>();
  for (std::size_t k = 0; k < spec.image_count_hist.size(); ++k)
    CHECK(metrics::within_binomial(ic[k], n, spec.image_count_hist[k]));
  auto const tc = st["token_counts"].get<std::vector<std::size_t>>();
  std::size_t total = 0;
  for (auto x : tc) total += x;
  for (std::size_t k = 0; k < 4; ++k) CHECK(metrics::within_binomial(tc[k], total, spec.token_weights[k]));
  for (auto const& [key, cls] : st["classes"].items()) {
    auto const& c = spec.classes[key == "0" ? 0 : 1];
    auto const mean = cls["mean"].get<std::vector<double>>();
    auto const var = cls["var"].get<std::vector<double>>();
    double const m = cls["n"].get<double>();
    for (int k = 0; k < 2; ++k) {
      CHECK(std::abs(mean[k] - c.mean[k]) <= 3.0 * c.std / std::sqrt(m));
      // sample variance of a normal: sd ~ sigma^2 sqrt(2/m)
      CHECK(std::abs(var[k] - c.std * c.std) <= 3.0 * c.std * c.std * std::sqrt(2.0 / m));
    }
  }

  std::stringstream ss;
  write_dataset(ss, d);
  CHECK(synth::stats(read_dataset(ss), 4) == st);
}

TEST_CASE("reproducible and thread independent") {
  auto const spec = paired();
  Rng r1(9), r2(9);
  auto const d1 = synth::generate(spec, 500, r1, 1);
  auto const d2 = synth::generate(spec, 500, r2, 3);
  CHECK(d1.records == d2.records);
  SequenceLimits lim;
  lim.vocab.size = 4;
  for (auto const& r : d1.records) CHECK_NOTHROW(validate(r, lim));
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"vocab": 2, "length_hist": [0.5, 0.4]})").get<synth::GeneratorSpec>(),
                  ConfigError);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"vocab": 2, "length_hist": [1.0], "colour": 1})").get<synth::GeneratorSpec>(),
                  ConfigError);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"vocab": 2, "image_dim": 2, "length_hist": [1.0],
      "classes": [{"mean": [1.0, 2.0, 3.0]}]})").get<synth::GeneratorSpec>(),
                  ConfigError);
  Rng rng(1);
  CHECK_THROWS_AS(synth::generate(paired(), 0, rng), ConfigError);
  nlohmann::json j = paired();
  CHECK(j.get<synth::GeneratorSpec>().classes.size() == 2);
}
