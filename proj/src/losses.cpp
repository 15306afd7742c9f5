#include "eflab/losses.hpp"

namespace eflab {

bool InsertionHeads::valid(double tol) const {
  if (lambda_nonzero.size() != pi.size() || q.cols() != pi.size()) return false;
  for (Eigen::Index g = 0; g < pi.size(); ++g) {
    if (!(pi[g] >= 0.0 && pi[g] <= 1.0) || !(lambda_nonzero[g] > 0.0)) return false;
    if ((q.col(g).array() < 0.0).any() || std::abs(q.col(g).sum() - 1.0) > tol) return false;
  }
  return true;
}

double LossReport::text_total_from_gaps() const {
  double sum = 0.0;
  for (auto const& g : per_gap) sum += g.token_ce + g.poisson + g.bce;
  return sum / normalizer;
}

LossReport text_loss(InsertionHeads const& heads, CorruptionRecord const& rec) {
  if (static_cast<std::size_t>(heads.gap_count()) != rec.gap_count())
    throw DomainError("text_loss: heads have " + std::to_string(heads.gap_count()) + " gaps, record has " +
                      std::to_string(rec.gap_count()));
  LossReport r;
  r.normalizer = text_normalizer(rec.x_t.generated_size());
  for (std::size_t g = rec.x_t.prompt_len; g < rec.gap_count(); ++g) {
    auto const ge = static_cast<Eigen::Index>(g);
    auto const k = static_cast<long>(rec.counts[g]);
    auto const zi = zero_inflated_loss(heads.pi[ge], heads.lambda_nonzero[ge], k);
    auto const ce = bag_cross_entropy(heads.q.col(ge), std::span<int const>(rec.bags[g]));
    r.saturated = r.saturated || zi.saturated || ce.saturated;
    r.per_gap.push_back({ce.value, zi.poisson, zi.bce});
    r.token_ce += ce.value;
    r.poisson_nonzero += zi.poisson;
    r.bce_zero += zi.bce;
  }
  r.token_ce /= r.normalizer;
  r.poisson_nonzero /= r.normalizer;
  r.bce_zero /= r.normalizer;
  r.text_total = r.token_ce + r.poisson_nonzero + r.bce_zero;
  r.grand_total = r.text_total;
  return r;
}

double image_loss(std::vector<Eigen::VectorXd> const& velocities, CorruptionRecord const& rec) {
  if (velocities.size() != rec.flow_targets.size())
    throw DomainError("image_loss: " + std::to_string(velocities.size()) + " velocities for " +
                      std::to_string(rec.flow_targets.size()) + " images");
  if (velocities.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < velocities.size(); ++i)
    sum += flow_matching_loss(velocities[i], rec.flow_targets[i].y0, rec.flow_targets[i].y1);
  return sum / static_cast<double>(velocities.size());
}

LossReport total_loss(InsertionHeads const& heads, std::vector<Eigen::VectorXd> const& velocities,
                      CorruptionRecord const& rec, double weight_img) {
  auto r = text_loss(heads, rec);
  r.image_mse = image_loss(velocities, rec);
  r.grand_total = r.text_total + weight_img * r.image_mse;
  return r;
}

void to_json(nlohmann::json& j, LossReport const& r) {
  j = nlohmann::json{{"token_ce", r.token_ce},     {"poisson_nonzero", r.poisson_nonzero},
                     {"bce_zero", r.bce_zero},     {"text_total", r.text_total},
                     {"image_mse", r.image_mse},   {"grand_total", r.grand_total},
                     {"normalizer", r.normalizer}, {"saturated", r.saturated}};
  auto& gaps = j["per_gap"] = nlohmann::json::array();
  for (auto const& g : r.per_gap) gaps.push_back({{"token_ce", g.token_ce}, {"poisson", g.poisson}, {"bce", g.bce}});
}

}  // namespace eflab
