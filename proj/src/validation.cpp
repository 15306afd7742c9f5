#include "eflab/validation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eflab/corruption.hpp"

namespace eflab::validation {

HazardSampler::HazardSampler(Schedule const& s, double multiplier, std::size_t panels) {
  if (!(multiplier > 0.0)) throw ConfigError("hazard multiplier must be positive");
  // nodes crowd toward t = 1 where the ratio diverges
  t_.resize(panels);
  h_.resize(panels);
  auto node = [&](std::size_t i) { return 1.0 - std::pow(1.0 - static_cast<double>(i) / panels, 4.0); };
  auto rate = [&](double t) { return multiplier * kappa_rate_ratio(s, t); };
  t_[0] = 0.0;
  h_[0] = 0.0;
  for (std::size_t i = 1; i < panels; ++i) {
    double const a = t_[i - 1], b = node(i);
    double const m = 0.5 * (a + b);
    h_[i] = h_[i - 1] + (b - a) / 6.0 * (rate(a) + 4.0 * rate(m) + rate(b));
    t_[i] = b;
  }
}

double HazardSampler::cumulative(double t) const {
  if (t <= 0.0) return 0.0;
  auto const it = std::upper_bound(t_.begin(), t_.end(), t);
  if (it == t_.end()) return h_.back();
  auto const i = static_cast<std::size_t>(it - t_.begin());
  double const w = (t - t_[i - 1]) / (t_[i] - t_[i - 1]);
  return h_[i - 1] + w * (h_[i] - h_[i - 1]);
}

double HazardSampler::sample(Rng& rng) const {
  double const e = -std::log1p(-rng.uniform());
  auto const it = std::upper_bound(h_.begin(), h_.end(), e);
  if (it == h_.end()) return 1.0;
  auto const i = static_cast<std::size_t>(it - h_.begin());
  double const w = (e - h_[i - 1]) / (h_[i] - h_[i - 1]);
  return t_[i - 1] + w * (t_[i] - t_[i - 1]);
}

namespace {

std::string tau_label(char const* base, double tau) {
  std::ostringstream os;
  os << base << "@" << tau;
  return os.str();
}

metrics::MetricReport binomial_report(std::string name, std::size_t hits, std::size_t n, double p, double sigmas,
                                      std::uint64_t seed) {
  metrics::MetricReport r;
  r.name = std::move(name);
  r.n = n;
  r.seed = seed;
  r.value = static_cast<double>(hits) / static_cast<double>(n) - p;
  r.tolerance = sigmas * metrics::binomial_sigma(p, n);
  r.semantics = "|frequency - expected| <= k sigma (binomial)";
  r.pass = metrics::within_binomial(hits, n, p, sigmas);
  r.detail = {{"expected", p}, {"frequency", static_cast<double>(hits) / static_cast<double>(n)}};
  return r;
}

metrics::MetricReport ks_report(std::string name, std::vector<double> sample, Schedule const& s, double alpha,
                                std::uint64_t seed) {
  metrics::MetricReport r;
  r.name = std::move(name);
  r.n = sample.size();
  r.seed = seed;
  double const d = metrics::ks_statistic(std::move(sample), [&](double x) { return kappa(s, std::clamp(x, 0.0, 1.0)); });
  r.value = metrics::ks_pvalue(d, r.n);
  r.tolerance = alpha;
  r.semantics = "p >= alpha (Kolmogorov-Smirnov against kappa)";
  r.pass = r.value >= alpha;
  r.detail = {{"statistic", d}};
  return r;
}

}  // namespace

std::vector<metrics::MetricReport> validate_schedule(Schedule const& s, ScheduleCheckConfig const& cfg,
                                                     std::uint64_t seed) {
  if (cfg.draws == 0) throw ConfigError("validate-schedule: draws must be >= 1");
  Rng root(seed);
  std::vector<metrics::MetricReport> out;
  HazardSampler const hazard(s, cfg.ratio_multiplier);

  {
    Rng rng = root.stream(0);
    std::vector<double> times(cfg.draws);
    for (auto& t : times) t = hazard.sample(rng);
    out.push_back(ks_report("insertion_time_ks", std::move(times), s, cfg.alpha, seed));
  }
  {
    Rng rng = root.stream(1);
    std::vector<double> times(cfg.draws);
    for (auto& t : times) t = kappa_inverse(s, rng.uniform());
    out.push_back(ks_report("inverse_cdf_ks", std::move(times), s, cfg.alpha, seed));
  }
  for (std::size_t k = 0; k < cfg.tau_values.size(); ++k) {
    double const tau = cfg.tau_values[k];
    double const expected = kappa(s, std::min(1.0, tau));
    Rng train_rng = root.stream(10 + 2 * k), sample_rng = root.stream(11 + 2 * k);
    std::size_t train_hits = 0, sample_hits = 0;
    for (std::size_t i = 0; i < cfg.draws; ++i) {
      train_hits += sample_interleaved_time(s, tau, train_rng).tau >= 0.0;
      // an image exists at text time tau once its insertion time has passed
      sample_hits += hazard.sample(sample_rng) <= tau;
    }
    out.push_back(binomial_report(tau_label("train_image_presence", tau), train_hits, cfg.draws, expected, cfg.sigmas, seed));
    out.push_back(binomial_report(tau_label("sampler_image_presence", tau), sample_hits, cfg.draws, expected, cfg.sigmas, seed));
  }
  out.push_back(retention_report(s, cfg.draws, 4, 0.0, seed));
  return out;
}

metrics::MetricReport retention_report(Schedule const& s, std::size_t draws, std::size_t len, double tolerance,
                                       std::uint64_t seed) {
  Rng rng(seed ^ 0x7e7e7e7eULL);
  std::vector<int> ids(len);
  for (std::size_t i = 0; i < len; ++i) ids[i] = static_cast<int>(i % 2);
  auto const x = MixedSequence::from_tokens(ids);
  double sum = 0.0, sq = 0.0;
  for (std::size_t r = 0; r < draws; ++r) {
    auto const rec = corrupt(x, s, GenerationMode::text_only, 2, rng);
    double const f = static_cast<double>(rec.x_t.size()) / static_cast<double>(len);
    sum += f;
    sq += f * f;
  }
  double const n = static_cast<double>(draws);
  double const mean = sum / n;
  double const sd = std::sqrt(std::max(sq / n - mean * mean, 0.0) / n);
  // E[kappa(U)] by Simpson's rule on a fine grid
  constexpr int kPanels = 2000;
  double expected = 0.0;
  for (int i = 0; i < kPanels; ++i) {
    double const a = static_cast<double>(i) / kPanels, b = static_cast<double>(i + 1) / kPanels;
    expected += (b - a) / 6.0 * (kappa(s, a) + 4.0 * kappa(s, 0.5 * (a + b)) + kappa(s, b));
  }
  metrics::MetricReport r;
  r.name = "retention";
  r.n = draws;
  r.seed = seed;
  r.value = mean - expected;
  r.tolerance = tolerance > 0.0 ? tolerance : 3.0 * sd;
  r.semantics = "|mean retained fraction - E[kappa(t)]| <= tolerance";
  r.pass = std::abs(r.value) <= r.tolerance;
  r.detail = {{"mean", mean}, {"expected", expected}, {"standard_error", sd}};
  return r;
}

}  // namespace eflab::validation
