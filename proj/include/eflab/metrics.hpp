#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "eflab/sequence.hpp"

namespace eflab::metrics {

/// Self-describing statistical check. `pass` follows the stated tolerance semantics.
struct MetricReport {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  std::string semantics;  ///< e.g. "value <= tolerance", "p >= alpha"
  bool pass = false;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  nlohmann::json detail;
};

void to_json(nlohmann::json& j, MetricReport const& r);

using Histogram = std::map<std::string, double>;

/// Half the L1 distance between two histograms, each normalized by its own total.
double total_variation(Histogram const& p, Histogram const& q);

/// sup |F_n(x) - F(x)| for the empirical CDF of `sample` against `cdf`.
double ks_statistic(std::vector<double> sample, std::function<double(double)> const& cdf);

/// Asymptotic Kolmogorov tail P(K > sqrt(n) D) with the small-sample correction
/// sqrt(n) + 0.12 + 0.11/sqrt(n).
double ks_pvalue(double d, std::size_t n);

/// |observed/n - p| <= k sigma with sigma = sqrt(p(1-p)/n).
bool within_binomial(std::size_t observed, std::size_t n, double p, double k = 3.0);
double binomial_sigma(double p, std::size_t n);

/// Canonical key of a sequence for TV: token ids joined by spaces, images as
/// "img<c>" with c the nearest centroid (or plain "img" with no centroids).
std::string sequence_key(MixedSequence const& seq, std::vector<Eigen::VectorXd> const& centroids = {});

Histogram histogram_of(std::vector<MixedSequence> const& seqs, std::vector<Eigen::VectorXd> const& centroids = {},
                       std::vector<double> const& weights = {});

/// Centroids of the image values grouped by prompt key, in key order.
std::vector<Eigen::VectorXd> class_centroids(Dataset const& data);

}  // namespace eflab::metrics
