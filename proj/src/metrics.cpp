#include "eflab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace eflab::metrics {

void to_json(nlohmann::json& j, MetricReport const& r) {
  j = nlohmann::json{{"name", r.name},   {"value", r.value}, {"tolerance", r.tolerance}, {"semantics", r.semantics},
                     {"pass", r.pass}, {"n", r.n},         {"seed", r.seed}};
  if (!r.detail.is_null()) j["detail"] = r.detail;
}

double total_variation(Histogram const& p, Histogram const& q) {
  double tp = 0.0, tq = 0.0;
  for (auto const& [_, v] : p) tp += v;
  for (auto const& [_, v] : q) tq += v;
  if (tp <= 0.0 || tq <= 0.0) return (tp <= 0.0 && tq <= 0.0) ? 0.0 : 1.0;
  std::set<std::string> keys;
  for (auto const& [k, _] : p) keys.insert(k);
  for (auto const& [k, _] : q) keys.insert(k);
  double l1 = 0.0;
  for (auto const& k : keys) {
    auto const a = p.count(k) ? p.at(k) / tp : 0.0;
    auto const b = q.count(k) ? q.at(k) / tq : 0.0;
    l1 += std::abs(a - b);
  }
  return 0.5 * l1;
}

double ks_statistic(std::vector<double> sample, std::function<double(double)> const& cdf) {
  if (sample.empty()) return 0.0;
  std::sort(sample.begin(), sample.end());
  double const n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double const f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_pvalue(double d, std::size_t n) {
  if (n == 0) return 1.0;
  double const sn = std::sqrt(static_cast<double>(n));
  double const lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda < 1e-3) return 1.0;
  // Q_KS(x) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 x^2)
  double sum = 0.0;
  for (int j = 1; j <= 200; ++j) {
    double const term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double binomial_sigma(double p, std::size_t n) {
  return n == 0 ? 0.0 : std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

bool within_binomial(std::size_t observed, std::size_t n, double p, double k) {
  if (n == 0) return true;
  double const freq = static_cast<double>(observed) / static_cast<double>(n);
  return std::abs(freq - p) <= k * binomial_sigma(p, n) + 1e-15;
}

std::string sequence_key(MixedSequence const& seq, std::vector<Eigen::VectorXd> const& centroids) {
  std::string key;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i == seq.prompt_len && seq.prompt_len > 0) key += "|";
    else if (i > 0) key += ' ';
    auto const& e = seq.elements[i];
    if (!e.is_image()) {
      key += std::to_string(e.token_id());
      continue;
    }
    key += "img";
    if (centroids.empty()) continue;
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      if (centroids[c].size() != e.image().values.size()) continue;
      double const d = (centroids[c] - e.image().values).squaredNorm();
      if (d < best_d) best_d = d, best = c;
    }
    key += std::to_string(best);
  }
  return key;
}

Histogram histogram_of(std::vector<MixedSequence> const& seqs, std::vector<Eigen::VectorXd> const& centroids,
                       std::vector<double> const& weights) {
  Histogram h;
  for (std::size_t i = 0; i < seqs.size(); ++i)
    h[sequence_key(seqs[i], centroids)] += weights.size() == seqs.size() ? weights[i] : 1.0;
  return h;
}

std::vector<Eigen::VectorXd> class_centroids(Dataset const& data) {
  std::map<std::string, std::pair<Eigen::VectorXd, std::size_t>> acc;
  for (auto const& seq : data.records) {
    std::string const key = sequence_key(seq.prompt());
    for (std::size_t i = seq.prompt_len; i < seq.size(); ++i) {
      if (!seq.elements[i].is_image()) continue;
      auto const& v = seq.elements[i].image().values;
      auto& [sum, n] = acc[key];
      if (n == 0) sum = Eigen::VectorXd::Zero(v.size());
      sum += v;
      ++n;
    }
  }
  std::vector<Eigen::VectorXd> out;
  for (auto const& [_, s] : acc) out.push_back(s.first / static_cast<double>(s.second));
  return out;
}

}  // namespace eflab::metrics
