#include <doctest.h>

#include <cmath>
#include <vector>

#include "eflab/metrics.hpp"
#include "eflab/schedule.hpp"

using namespace eflab;

TEST_CASE("kappa closed forms") {
  auto const lin = Schedule::linear();
  auto const p2 = Schedule::polynomial(2.0);
  CHECK(kappa(lin, 0.3) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(kappa(lin, 1.0) == 1.0);
  CHECK(kappa(p2, 0.5) == doctest::Approx(0.25).epsilon(1e-15));
  for (auto const& s : {lin, p2, Schedule::polynomial(0.5), Schedule::polynomial(3.7)}) {
    CHECK(kappa(s, 0.0) == 0.0);
    CHECK(kappa(s, 1.0) == 1.0);
    double prev = -1.0;
    for (int i = 0; i <= 1000; ++i) {
      double const t = i / 1000.0;
      double const k = kappa(s, t);
      CHECK(k > prev);
      prev = k;
      CHECK(std::abs(kappa_inverse(s, k) - t) <= 1e-12);
    }
  }
}

TEST_CASE("rate ratio") {
  auto const lin = Schedule::linear();
  auto const p2 = Schedule::polynomial(2.0);
  CHECK(kappa_rate_ratio(lin, 0.5) == doctest::Approx(2.0));
  CHECK(kappa_rate_ratio(lin, 0.0) == doctest::Approx(1.0));
  CHECK(kappa_rate_ratio(p2, 0.5) == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  // central difference of kappa against the analytic derivative
  for (double t : {0.1, 0.37, 0.5, 0.9}) {
    double const h = 1e-6;
    double const fd = (kappa(p2, t + h) - kappa(p2, t - h)) / (2 * h);
    CHECK(fd == doctest::Approx(kappa_derivative(p2, t)).epsilon(1e-8));
    CHECK(kappa_rate_ratio(p2, t) > 0.0);
  }
  CHECK_THROWS_AS(kappa_rate_ratio(lin, 1.0), DomainError);
  CHECK_THROWS_AS(kappa(lin, 1.5), DomainError);
  CHECK_THROWS_AS(kappa(lin, -0.1), DomainError);
  CHECK_THROWS_AS(kappa_inverse(lin, 1.01), DomainError);
  CHECK_THROWS_AS(Schedule::polynomial(0.0), ConfigError);
}

TEST_CASE("inverse examples") {
  CHECK(kappa_inverse(Schedule::linear(), 0.7) == doctest::Approx(0.7));
  CHECK(kappa_inverse(Schedule::polynomial(2.0), 0.25) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(kappa_inverse(Schedule::polynomial(3.0), 0.0) == 0.0);
}

TEST_CASE("extended time clipping") {
  for (double tau : {-1.0, -0.3, 0.0, 0.4, 1.0, 1.7, 2.0}) {
    double const c = ExtendedTime::clip(tau);
    CHECK(c == std::min(1.0, std::max(0.0, tau)));
    CHECK(ExtendedTime::clip(c) == c);
  }
}

TEST_CASE("interleaved time sampling") {
  auto const lin = Schedule::linear();
  Rng rng(11);
  SUBCASE("tau_text = 0.4 deletes with probability 0.6") {
    std::size_t const n = 100000;
    std::size_t neg = 0;
    for (std::size_t i = 0; i < n; ++i) neg += sample_interleaved_time(lin, 0.4, rng).tau < 0.0;
    CHECK(metrics::within_binomial(neg, n, 0.6));
  }
  SUBCASE("tau_text = 2 always fully clean") {
    for (int i = 0; i < 10000; ++i) {
      auto const t = sample_interleaved_time(lin, 2.0, rng);
      CHECK(t.tau >= 1.0);
      CHECK(t.clipped() == 1.0);
    }
  }
  SUBCASE("tau_text = 1 mean") {
    std::size_t const n = 1000000;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += sample_interleaved_time(lin, 1.0, rng).tau;
    // offset uniform on [0,1): mean 0.5, variance 1/12
    CHECK(std::abs(sum / n - 0.5) <= 3.0 * std::sqrt(1.0 / 12.0 / n));
  }
  CHECK_THROWS_AS(sample_interleaved_time(lin, 2.5, rng), DomainError);
}

TEST_CASE("image presence law for both schedules") {
  for (auto const& s : {Schedule::linear(), Schedule::polynomial(2.0)}) {
    Rng rng(5);
    for (double tau : {0.25, 0.5, 0.75, 1.0, 1.5}) {
      std::size_t const n = 100000;
      std::size_t present = 0;
      for (std::size_t i = 0; i < n; ++i) present += sample_interleaved_time(s, tau, rng).tau >= 0.0;
      CHECK(metrics::within_binomial(present, n, kappa(s, std::min(1.0, tau))));
    }
  }
}

TEST_CASE("independent times") {
  Rng a(3), b(3);
  CHECK(sample_independent_times(a) == sample_independent_times(b));
  Rng rng(9);
  std::size_t const n = 1000000;
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) std::tie(xs[i], ys[i]) = sample_independent_times(rng);
  auto const uni = [](double x) { return std::clamp(x, 0.0, 1.0); };
  CHECK(metrics::ks_pvalue(metrics::ks_statistic(xs, uni), n) >= 0.01);
  CHECK(metrics::ks_pvalue(metrics::ks_statistic(ys, uni), n) >= 0.01);
  double mx = 0, my = 0, sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) mx += xs[i], my += ys[i];
  mx /= n, my /= n;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  CHECK(std::abs(sxy / std::sqrt(sxx * syy)) < 0.01);
}

TEST_CASE("insertion-time law via inverse sampling") {
  for (auto const& s : {Schedule::linear(), Schedule::polynomial(2.0)}) {
    Rng rng(21);
    std::size_t const n = 100000;
    std::vector<double> times(n);
    for (auto& t : times) t = kappa_inverse(s, rng.uniform());
    double const d = metrics::ks_statistic(times, [&](double x) { return kappa(s, std::clamp(x, 0.0, 1.0)); });
    CHECK(metrics::ks_pvalue(d, n) >= 0.01);
  }
}

TEST_CASE("schedule json") {
  nlohmann::json j = Schedule::polynomial(2.0);
  CHECK(j["kind"] == "poly");
  CHECK(j.get<Schedule>() == Schedule::polynomial(2.0));
  CHECK(nlohmann::json{{"kind", "linear"}}.get<Schedule>() == Schedule::linear());
  CHECK_THROWS_AS((nlohmann::json{{"kind", "cosine"}}.get<Schedule>()), ConfigError);
  CHECK_THROWS_AS((nlohmann::json{{"kind", "poly"}}.get<Schedule>()), ConfigError);
  CHECK_THROWS_AS((nlohmann::json{{"kind", "linear"}, {"shift", 1}}.get<Schedule>()), ConfigError);
}
