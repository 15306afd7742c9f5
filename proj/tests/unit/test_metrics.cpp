#include <doctest.h>

#include <cmath>

#include "eflab/metrics.hpp"

using namespace eflab;
using namespace eflab::metrics;

TEST_CASE("total variation") {
  Histogram p{{"x", 1}, {"y", 3}};
  CHECK(total_variation(p, p) == 0.0);
  CHECK(total_variation(p, Histogram{{"z", 2}}) == 1.0);
  CHECK(total_variation(Histogram{{"x", 1}}, Histogram{{"x", 1}, {"y", 1}}) == doctest::Approx(0.5));
}

TEST_CASE("ks statistic and p-value") {
  std::vector<double> xs{0.1, 0.2, 0.3, 0.4};
  auto const uni = [](double x) { return std::clamp(x, 0.0, 1.0); };
  CHECK(ks_statistic(xs, uni) == doctest::Approx(0.6));
  // reference values of the Kolmogorov tail Q(lambda)
  CHECK(ks_pvalue(1.36 / std::sqrt(1e6), 1000000) == doctest::Approx(0.0495).epsilon(0.01));
  CHECK(ks_pvalue(1.63 / std::sqrt(1e6), 1000000) == doctest::Approx(0.0098).epsilon(0.02));
  CHECK(ks_pvalue(0.0, 10) == 1.0);
  Rng rng(1);
  std::vector<double> u(5000), shifted(5000);
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = rng.uniform();
    shifted[i] = std::min(1.0, u[i] + 0.05);
  }
  CHECK(ks_pvalue(ks_statistic(u, uni), u.size()) > 0.01);
  CHECK(ks_pvalue(ks_statistic(shifted, uni), shifted.size()) < 0.01);
}

TEST_CASE("binomial bounds") {
  CHECK(binomial_sigma(0.5, 100) == doctest::Approx(0.05));
  CHECK(within_binomial(50, 100, 0.5));
  CHECK(within_binomial(65, 100, 0.5));
  CHECK_FALSE(within_binomial(66, 100, 0.5));
}

TEST_CASE("sequence keys") {
  auto s = MixedSequence::from_tokens({2, 0}, 1);
  s.elements.push_back(Element::image(Eigen::Vector2d(0.9, 0.1), 1.0));
  CHECK(sequence_key(s) == "2|0 img");
  std::vector<Eigen::VectorXd> centroids{Eigen::Vector2d(-1, 0), Eigen::Vector2d(1, 0)};
  CHECK(sequence_key(s, centroids) == "2|0 img1");
  CHECK(sequence_key(MixedSequence::from_tokens({0, 1})) == "0 1");
  CHECK(sequence_key(MixedSequence{}).empty());
  Dataset d;
  d.add(s);
  auto const c = class_centroids(d);
  REQUIRE(c.size() == 1);
  CHECK(c[0] == Eigen::Vector2d(0.9, 0.1));
}

TEST_CASE("report json") {
  MetricReport r{"tv", 0.01, 0.05, "value <= tolerance", true, 100, 7, {}};
  nlohmann::json j = r;
  CHECK(j["pass"] == true);
  CHECK(j["seed"] == 7);
  CHECK_FALSE(j.contains("detail"));
}
