#include <doctest.h>

#include <cmath>
#include <random>

#include "eflab/corruption.hpp"
#include "eflab/losses.hpp"

using namespace eflab;

TEST_CASE("poisson nll") {
  CHECK(poisson_nll(1.0, 0) == 1.0);
  CHECK(poisson_nll(2.0, 2) == doctest::Approx(2.0 - 2.0 * std::log(2.0)));
  CHECK(poisson_nll(2.0, 2) == doctest::Approx(0.61371).epsilon(1e-5));
  CHECK_THROWS_AS(poisson_nll(0.0, 1), DomainError);
  CHECK_THROWS_AS(poisson_nll(-1.0, 1), DomainError);
  // golden-section search for the minimizer at k = 5
  double lo = 1e-3, hi = 50.0;
  double const g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200; ++it) {
    double const m1 = hi - g * (hi - lo), m2 = lo + g * (hi - lo);
    if (poisson_nll(m1, 5) < poisson_nll(m2, 5))
      hi = m2;
    else
      lo = m1;
  }
  CHECK(std::abs(0.5 * (lo + hi) - 5.0) < 1e-6);
  for (double lam : {0.5, 1.0, 3.0}) {
    double const h = 1e-6;
    double const fd = (poisson_nll(lam + h, 3) - poisson_nll(lam - h, 3)) / (2 * h);
    CHECK(fd == doctest::Approx(poisson_nll_grad(lam, 3)).epsilon(1e-8));
  }
}

TEST_CASE("zero-inflated loss") {
  auto const z0 = zero_inflated_loss(0.5, 7.0, 0);
  CHECK(z0.bce == doctest::Approx(std::log(2.0)));
  CHECK(z0.poisson == 0.0);
  auto const z3 = zero_inflated_loss(0.5, 3.0, 3);
  CHECK(z3.bce == doctest::Approx(std::log(2.0)));
  CHECK(z3.poisson == doctest::Approx(3.0 - 3.0 * std::log(3.0)));
  CHECK(z3.poisson == doctest::Approx(-0.29584).epsilon(1e-4));
  CHECK_THROWS_AS(zero_inflated_loss(1.5, 1.0, 0), DomainError);
  CHECK_THROWS_AS(zero_inflated_loss(0.5, 0.0, 1), DomainError);
  auto const sat = zero_inflated_loss(1.0, 1.0, 2);
  CHECK(sat.saturated);
  CHECK(sat.bce == doctest::Approx(-std::log(1e-300)));
}

TEST_CASE("zero-inflated consistency by brute force") {
  // count law {0:0.7, 2:0.3}
  auto expected = [](double pi, double lam) {
    auto const z0 = zero_inflated_loss(pi, lam, 0);
    auto const z2 = zero_inflated_loss(pi, lam, 2);
    return 0.7 * (z0.bce + z0.poisson) + 0.3 * (z2.bce + z2.poisson);
  };
  double best = INFINITY, bp = 0, bl = 0;
  for (int i = 1; i < 1000; ++i)
    for (int j = 1; j <= 400; ++j) {
      double const pi = i / 1000.0, lam = j / 100.0;
      double const v = expected(pi, lam);
      if (v < best) best = v, bp = pi, bl = lam;
    }
  CHECK(std::abs(bp - 0.7) <= 1e-3);
  CHECK(std::abs(bl - 2.0) <= 1e-2);
}

TEST_CASE("bag cross entropy") {
  Eigen::VectorXd uniform = Eigen::VectorXd::Constant(5, 0.2);
  std::vector<int> empty;
  CHECK(bag_cross_entropy(uniform, empty).value == 0.0);
  std::vector<int> one{0};
  CHECK(bag_cross_entropy(uniform, one).value == doctest::Approx(std::log(5.0)));
  Eigen::VectorXd q(5);
  q << 0.5, 0.25, 0.25, 0.0, 0.0;
  std::vector<int> aab{0, 0, 1};
  CHECK(bag_cross_entropy(q, aab).value == doctest::Approx(2 * std::log(2.0) + std::log(4.0)));
  CHECK(bag_cross_entropy(q, aab).value == doctest::Approx(2.7726).epsilon(1e-4));
  std::vector<int> zero{3};
  auto const sat = bag_cross_entropy(q, zero);
  CHECK(sat.saturated);
  CHECK(std::isfinite(sat.value));
}

TEST_CASE("flow matching loss") {
  Eigen::VectorXd y0(2), y1(2), v(2);
  y0 << 0.0, 0.0;
  y1 << 3.0, 4.0;
  v = y1 - y0;
  CHECK(flow_matching_loss(v, y0, y1) == 0.0);
  CHECK(flow_matching_loss(Eigen::VectorXd::Zero(2), y0, y1) == doctest::Approx(12.5));
  Rng rng(1);
  for (int r = 0; r < 20; ++r) {
    Eigen::VectorXd const a = rng.normal_vector(4), b = rng.normal_vector(4), p = rng.normal_vector(4);
    auto const grad = flow_matching_loss_grad(p, a, b);
    for (int i = 0; i < 4; ++i) {
      double const h = 1e-6;
      Eigen::VectorXd pp = p, pm = p;
      pp[i] += h;
      pm[i] -= h;
      double const fd = (flow_matching_loss(pp, a, b) - flow_matching_loss(pm, a, b)) / (2 * h);
      CHECK(std::abs(fd - grad[i]) <= 1e-6 * std::max(1.0, std::abs(grad[i])));
    }
  }
  CHECK_THROWS_AS(flow_matching_loss(Eigen::VectorXd::Zero(3), y0, y1), DomainError);
}

TEST_CASE("combine rate") {
  CHECK(combine_rate(0.5, 4.0) == 2.0);
  CHECK(combine_rate(1.0 - 1e-12, 3.0) < 1e-11);
}

TEST_CASE("text loss") {
  Rng rng(2);
  constexpr int img = 3;
  SUBCASE("nothing deleted and pi near one") {
    auto const x = MixedSequence::from_tokens({0, 1, 2});
    auto const rec = corrupt_at(x, Schedule::linear(), GenerationMode::text_only, 1.0, img, rng);
    InsertionHeads h(4, 4);
    h.pi.setConstant(1.0 - 1e-9);
    auto const r = text_loss(h, rec);
    CHECK(r.text_total < 1e-8 * 4.0 / 3.0);
    CHECK(r.normalizer == 3.0);
  }
  SUBCASE("single gap with oracle heads") {
    auto const rec = corrupt_at(MixedSequence::from_tokens({0, 1}), Schedule::linear(), GenerationMode::text_only, 0.0,
                                img, rng);
    InsertionHeads h(1, 4);
    double const eps = 1e-12;
    h.pi[0] = eps;
    h.lambda_nonzero[0] = 2.0;
    h.q.col(0) << 0.5, 0.5, 0.0, 0.0;
    auto const r = text_loss(h, rec);
    double const expect = (2.0 - 2.0 * std::log(2.0)) + 2.0 * std::log(2.0) - std::log(1.0 - eps);
    CHECK(r.text_total == doctest::Approx(expect).epsilon(1e-12));
    CHECK(r.text_total == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(r.normalizer == 1.0);
    CHECK(r.text_total_from_gaps() == doctest::Approx(r.text_total));
  }
  SUBCASE("prompt gaps are skipped and bag order is irrelevant") {
    auto const x = MixedSequence::from_tokens({2, 2, 0, 1, 0}, 2);
    auto rec = corrupt_at(x, Schedule::linear(), GenerationMode::text_only, 0.0, img, rng);
    CHECK(rec.bags.size() == 3);
    InsertionHeads h(3, 4);
    h.pi.setConstant(0.3);
    h.lambda_nonzero.setConstant(1.7);
    h.q.col(2) << 0.1, 0.2, 0.3, 0.4;
    auto const r1 = text_loss(h, rec);
    CHECK(r1.per_gap.size() == 1);
    std::reverse(rec.bags[2].begin(), rec.bags[2].end());
    auto const r2 = text_loss(h, rec);
    CHECK(r1.text_total == r2.text_total);
    // prompt gap heads do not matter
    h.pi[0] = 0.999;
    h.q.col(1) << 1, 0, 0, 0;
    CHECK(text_loss(h, rec).text_total == r1.text_total);
  }
  SUBCASE("shape mismatch") {
    auto const rec = corrupt_at(MixedSequence::from_tokens({0}), Schedule::linear(), GenerationMode::text_only, 1.0, img, rng);
    CHECK_THROWS_AS(text_loss(InsertionHeads(5, 4), rec), DomainError);
  }
}

TEST_CASE("total loss and json") {
  Rng rng(3);
  auto x = MixedSequence::from_tokens({0});
  x.elements.push_back(Element::image(Eigen::Vector2d(1.0, 2.0), 1.0));
  auto const rec = corrupt_at(x, Schedule::linear(), GenerationMode::interleaved, 2.0, 3, rng);
  REQUIRE(rec.flow_targets.size() == 1);
  InsertionHeads h(3, 4);
  h.pi.setConstant(0.5);
  std::vector<Eigen::VectorXd> v{Eigen::Vector2d::Zero()};
  auto const r = total_loss(h, v, rec, 0.5);
  double const mse = flow_matching_loss(v[0], rec.flow_targets[0].y0, rec.flow_targets[0].y1);
  CHECK(r.image_mse == doctest::Approx(mse));
  CHECK(r.grand_total == doctest::Approx(r.text_total + 0.5 * mse));
  nlohmann::json j;
  to_json(j, r);
  CHECK(j.contains("token_ce"));
  CHECK(j.contains("per_gap"));
}
