#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "eflab/corruption.hpp"
#include "eflab/errors.hpp"

namespace eflab {

/// Per-gap insertion predictions. Column g of `q` is the token distribution
/// for gap g over the M ordinary tokens plus the image token.
struct InsertionHeads {
  Eigen::VectorXd pi;              ///< P(missing count is zero)
  Eigen::VectorXd lambda_nonzero;  ///< rate restricted to nonzero counts
  Eigen::MatrixXd q;               ///< (M+1) x gaps

  InsertionHeads() = default;
  InsertionHeads(Eigen::Index gaps, Eigen::Index width)
      : pi(Eigen::VectorXd::Ones(gaps)),
        lambda_nonzero(Eigen::VectorXd::Ones(gaps)),
        q(Eigen::MatrixXd::Constant(width, gaps, 1.0 / static_cast<double>(width))) {}

  Eigen::Index gap_count() const { return pi.size(); }
  Eigen::Index width() const { return q.rows(); }
  /// Expected rate (1 - pi) * lambda_nonzero.
  double rate(Eigen::Index g) const { return (1.0 - pi[g]) * lambda_nonzero[g]; }
  /// Checks the distribution invariants: q columns sum to 1, pi in [0,1], lambda > 0.
  bool valid(double tol = 1e-9) const;
};

/// -log(0) is replaced by this value and flagged instead of propagating infinity.
inline constexpr double kLogFloor = 1e-300;

template <class Scalar>
Scalar saturating_neg_log(Scalar p, bool& saturated) {
  using std::log;
  if (p <= Scalar(0)) {
    saturated = true;
    return -log(Scalar(kLogFloor));
  }
  return -log(p);
}

/// lambda - k log(lambda); constants independent of lambda dropped.
template <class Scalar = double>
Scalar poisson_nll(Scalar lambda, long k) {
  if (!(lambda > Scalar(0))) throw DomainError("poisson_nll: lambda must be positive");
  if (k < 0) throw DomainError("poisson_nll: k must be non-negative");
  using std::log;
  return k == 0 ? lambda : lambda - Scalar(k) * log(lambda);
}

/// d/dlambda of poisson_nll.
template <class Scalar = double>
Scalar poisson_nll_grad(Scalar lambda, long k) {
  return Scalar(1) - Scalar(k) / lambda;
}

template <class Scalar = double>
struct ZeroInflatedTerms {
  Scalar bce{};
  Scalar poisson{};
  bool saturated = false;
};

/// BCE on "count is zero" plus the Poisson term on nonzero counts only.
/// pi is accepted on the closed interval so exact (oracle) heads can be scored;
/// an endpoint that makes the observed count impossible saturates.
template <class Scalar = double>
ZeroInflatedTerms<Scalar> zero_inflated_loss(Scalar pi, Scalar lambda_nonzero, long k) {
  if (!(pi >= Scalar(0) && pi <= Scalar(1))) throw DomainError("zero_inflated_loss: pi must lie in [0,1]");
  if (!(lambda_nonzero > Scalar(0))) throw DomainError("zero_inflated_loss: lambda_nonzero must be positive");
  if (k < 0) throw DomainError("zero_inflated_loss: k must be non-negative");
  ZeroInflatedTerms<Scalar> out;
  out.bce = k == 0 ? saturating_neg_log(pi, out.saturated) : saturating_neg_log(Scalar(1) - pi, out.saturated);
  out.poisson = k > 0 ? poisson_nll(lambda_nonzero, k) : Scalar(0);
  return out;
}

/// d bce / d pi.
template <class Scalar = double>
Scalar zero_inflated_bce_grad(Scalar pi, long k) {
  return k == 0 ? -Scalar(1) / pi : Scalar(1) / (Scalar(1) - pi);
}

struct CrossEntropy {
  double value = 0.0;
  bool saturated = false;
};

/// -sum_{a in bag} log q[a], with multiplicity.
template <class Derived>
CrossEntropy bag_cross_entropy(Eigen::MatrixBase<Derived> const& q, std::span<int const> bag) {
  CrossEntropy out;
  for (int a : bag) {
    if (a < 0 || a >= q.size()) throw DomainError("bag_cross_entropy: symbol outside distribution");
    out.value += saturating_neg_log(static_cast<double>(q[a]), out.saturated);
  }
  return out;
}

inline double combine_rate(double pi, double lambda_nonzero) { return (1.0 - pi) * lambda_nonzero; }

/// Mean over dimension of ||v - (y1 - y0)||^2.
template <class A, class B, class C>
double flow_matching_loss(Eigen::MatrixBase<A> const& v_pred, Eigen::MatrixBase<B> const& y0,
                          Eigen::MatrixBase<C> const& y1) {
  if (v_pred.size() != y0.size() || y0.size() != y1.size())
    throw DomainError("flow_matching_loss: dimension mismatch");
  if (v_pred.size() == 0) return 0.0;
  return (v_pred - (y1 - y0)).squaredNorm() / static_cast<double>(v_pred.size());
}

/// d loss / d v_pred.
template <class A, class B, class C>
Eigen::VectorXd flow_matching_loss_grad(Eigen::MatrixBase<A> const& v_pred, Eigen::MatrixBase<B> const& y0,
                                        Eigen::MatrixBase<C> const& y1) {
  return 2.0 * (v_pred - (y1 - y0)) / static_cast<double>(v_pred.size());
}

/// Linear interpolant t*y1 + (1-t)*y0.
template <class A, class B>
Eigen::VectorXd interpolate(Eigen::MatrixBase<A> const& y0, Eigen::MatrixBase<B> const& y1, double t) {
  return t * y1 + (1.0 - t) * y0;
}

/// Divisor of the per-gap text-loss sum for a corrupted sequence with n
/// generated elements (an image counts as one element).
inline double text_normalizer(std::size_t n) { return static_cast<double>(std::max<std::size_t>(n, 1)); }

struct GapLoss {
  double token_ce = 0.0;
  double poisson = 0.0;
  double bce = 0.0;
};

struct LossReport {
  double token_ce = 0.0;         ///< normalized sum of bag cross-entropies
  double poisson_nonzero = 0.0;  ///< normalized sum of Poisson terms on k > 0
  double bce_zero = 0.0;         ///< normalized sum of BCE terms
  double text_total = 0.0;
  double image_mse = 0.0;
  double grand_total = 0.0;
  double normalizer = 1.0;
  bool saturated = false;
  std::vector<GapLoss> per_gap;  ///< unnormalized, one per non-prompt gap

  /// Recomputes text_total from the stored per-gap terms.
  double text_total_from_gaps() const;
};

/// Text loss of heads against a corruption record; gaps inside the prompt are skipped.
LossReport text_loss(InsertionHeads const& heads, CorruptionRecord const& rec);

/// Mean flow-matching loss over the record's surviving images (0 if none).
double image_loss(std::vector<Eigen::VectorXd> const& velocities, CorruptionRecord const& rec);

/// text_loss plus weight_img * image_loss.
LossReport total_loss(InsertionHeads const& heads, std::vector<Eigen::VectorXd> const& velocities,
                      CorruptionRecord const& rec, double weight_img);

void to_json(nlohmann::json& j, LossReport const& r);

}  // namespace eflab
