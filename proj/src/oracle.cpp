#include "eflab/oracle.hpp"

#include <cmath>
#include <mutex>

namespace eflab {

Eigen::VectorXd oracle_velocity(std::vector<PointTarget> const& targets, Eigen::VectorXd const& y_t, double t_img) {
  if (!(t_img >= 0.0 && t_img < 1.0)) throw DomainError("oracle_velocity: t_img must lie in [0,1)");
  if (targets.empty()) throw DomainError("oracle_velocity: empty target set");
  double const s = 1.0 - t_img;
  std::vector<double> logits(targets.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < targets.size(); ++k) {
    if (targets[k].weight <= 0.0) {
      logits[k] = -std::numeric_limits<double>::infinity();
      continue;
    }
    logits[k] = std::log(targets[k].weight) - (y_t - t_img * targets[k].value).squaredNorm() / (2.0 * s * s);
    top = std::max(top, logits[k]);
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(y_t.size());
  double norm = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    double const r = std::exp(logits[k] - top);
    norm += r;
    mean += r * targets[k].value;
  }
  return (mean / norm - y_t) / s;
}

std::size_t OracleTable::KeyHash::operator()(Key const& k) const noexcept {
  std::size_t h = std::hash<long long>{}(k.t_quant) ^ (k.prompt_len * 0x9e3779b97f4a7c15ULL);
  for (int s : k.symbols) h = (h ^ static_cast<std::size_t>(s + 1)) * 0x100000001b3ULL;
  return h;
}

OracleTable::OracleTable(Dataset const& data, Vocabulary vocab, Schedule schedule)
    : OracleTable(data, std::move(vocab), schedule, Options{}) {}

OracleTable::OracleTable(Dataset const& data, Vocabulary vocab, Schedule schedule, Options opts)
    : vocab_(std::move(vocab)), schedule_(schedule), opts_(opts) {
  if (data.size() == 0) throw DataError("oracle: empty dataset");
  int const img = vocab_.image_token_id();
  record_group_.resize(data.size());
  record_images_.resize(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    auto const& seq = data.records[r];
    auto const sym = seq.symbols(img);
    std::vector<int> prompt(sym.begin(), sym.begin() + static_cast<std::ptrdiff_t>(seq.prompt_len));
    std::vector<int> target(sym.begin() + static_cast<std::ptrdiff_t>(seq.prompt_len), sym.end());
    for (std::size_t i = seq.prompt_len; i < seq.size(); ++i)
      if (seq.elements[i].is_image()) {
        record_images_[r].push_back(seq.elements[i].image().values);
        image_dim_ = seq.elements[i].image().values.size();
      }
    std::size_t gi = 0;
    while (gi < groups_.size() && !(groups_[gi].prompt == prompt && groups_[gi].target == target)) ++gi;
    if (gi == groups_.size()) groups_.push_back({prompt, target, 0.0, {}, {}});
    double const w = data.weights.empty() ? 1.0 : data.weights[r];
    groups_[gi].weight += w;
    groups_[gi].records.push_back(r);
    groups_[gi].record_weights.push_back(w);
    record_group_[r] = gi;
  }
}

double OracleTable::presence(int symbol, double kappa_t) const {
  if (symbol == vocab_.image_token_id() && opts_.mode == GenerationMode::independent) return 1.0;
  return kappa_t;
}

bool OracleTable::matches_prompt(Group const& g, std::vector<int> const& symbols, std::size_t prompt_len) const {
  if (prompt_len == 0) return true;
  return g.prompt.size() == prompt_len && std::equal(g.prompt.begin(), g.prompt.end(), symbols.begin());
}

// Weighted subsequence-embedding count by dynamic programming:
// dp[i][j] = total weight of ways the first i target elements yield the first j kept symbols.
std::vector<double> OracleTable::group_weights(std::vector<int> const& symbols, std::size_t prompt_len,
                                               double t) const {
  double const kt = kappa(schedule_, t);
  std::vector<int> const gen(symbols.begin() + static_cast<std::ptrdiff_t>(prompt_len), symbols.end());
  std::size_t const n = gen.size();
  std::vector<double> out(groups_.size(), 0.0);
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    auto const& g = groups_[gi];
    if (!matches_prompt(g, symbols, prompt_len) || g.target.size() < n) continue;
    std::vector<double> dp(n + 1, 0.0);
    dp[0] = 1.0;
    for (std::size_t i = 0; i < g.target.size(); ++i) {
      double const p = presence(g.target[i], kt);
      for (std::size_t j = std::min(n, i + 1); j > 0; --j)
        dp[j] = dp[j] * (1.0 - p) + (g.target[i] == gen[j - 1] ? dp[j - 1] * p : 0.0);
      dp[0] *= 1.0 - p;
    }
    out[gi] = g.weight * dp[n];
  }
  return out;
}

std::map<std::size_t, double> OracleTable::posterior_over_data(MixedSequence const& x_t, double t) const {
  detail::check_unit(t, "posterior_over_data: t");
  auto const w = group_weights(x_t.symbols(vocab_.image_token_id()), x_t.prompt_len, t);
  double total = 0.0;
  for (double x : w) total += x;
  if (!(total > 0.0)) throw UnreachableStateError("no data sequence contains the state as a subsequence");
  std::map<std::size_t, double> post;
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    if (w[gi] <= 0.0) continue;
    auto const& g = groups_[gi];
    for (std::size_t k = 0; k < g.records.size(); ++k)
      post[g.records[k]] = w[gi] / total * g.record_weights[k] / g.weight;
  }
  return post;
}

std::shared_ptr<OracleTable::Entry const> OracleTable::compute(MixedSequence const& x_t, double t) const {
  int const img = vocab_.image_token_id();
  auto const symbols = x_t.symbols(img);
  std::size_t const P = x_t.prompt_len;
  std::vector<int> const gen(symbols.begin() + static_cast<std::ptrdiff_t>(P), symbols.end());
  std::size_t const n = gen.size();
  auto const width = static_cast<Eigen::Index>(vocab_.head_width());
  double const kt = kappa(schedule_, t);

  std::vector<double> p_zero(n + 1, 0.0), p_nonzero(n + 1, 0.0), e_k(n + 1, 0.0);
  Eigen::MatrixXd composition = Eigen::MatrixXd::Zero(width, static_cast<Eigen::Index>(n + 1));
  bool const want_images = std::find(gen.begin(), gen.end(), img) != gen.end();
  std::vector<std::vector<PointTarget>> targets(x_t.size());
  double total = 0.0;

  std::vector<std::size_t> embed(n);
  std::size_t visited = 0;

  for (auto const& g : groups_) {
    if (!matches_prompt(g, symbols, P) || g.target.size() < n) continue;
    if (g.target.size() > opts_.max_target_len)
      throw BudgetError("oracle: target of length " + std::to_string(g.target.size()) + " exceeds enumeration bound " +
                        std::to_string(opts_.max_target_len));
    std::size_t const L = g.target.size();
    std::vector<double> p(L);
    for (std::size_t i = 0; i < L; ++i) p[i] = presence(g.target[i], kt);

    auto accumulate = [&](double w) {
      total += w;
      std::size_t prev = 0;
      for (std::size_t gap = 0; gap <= n; ++gap) {
        std::size_t const end = gap < n ? embed[gap] : L;
        std::size_t const k = end - prev;
        if (k == 0) {
          p_zero[gap] += w;
        } else {
          p_nonzero[gap] += w;
          e_k[gap] += w * static_cast<double>(k);
          for (std::size_t i = prev; i < end; ++i) composition(g.target[i], static_cast<Eigen::Index>(gap)) += w;
        }
        if (gap < n) prev = embed[gap] + 1;
      }
      if (!want_images) return;
      for (std::size_t j = 0; j < n; ++j) {
        if (gen[j] != img) continue;
        std::size_t ordinal = 0;
        for (std::size_t i = 0; i < embed[j]; ++i) ordinal += g.target[i] == img ? 1 : 0;
        for (std::size_t k = 0; k < g.records.size(); ++k)
          targets[P + j].push_back({w * g.record_weights[k] / g.weight, record_images_[g.records[k]][ordinal]});
      }
    };

    // Depth-first over target positions: each is either deleted or matched to the next kept symbol.
    auto dfs = [&](auto&& self, std::size_t i, std::size_t j, double w) -> void {
      if (w <= 0.0) return;
      if (L - i < n - j) return;
      if (i == L) {
        if (++visited > 50'000'000) throw BudgetError("oracle: embedding enumeration budget exceeded");
        accumulate(w);
        return;
      }
      if (j < n && g.target[i] == gen[j]) {
        embed[j] = i;
        self(self, i + 1, j + 1, w * p[i]);
      }
      self(self, i + 1, j, w * (1.0 - p[i]));
    };
    dfs(dfs, 0, 0, g.weight);
  }

  if (!(total > 0.0)) return nullptr;

  auto entry = std::make_shared<Entry>();
  auto const gaps = static_cast<Eigen::Index>(x_t.gap_count());
  entry->heads = InsertionHeads(gaps, width);
  for (std::size_t gap = 0; gap <= n; ++gap) {
    auto const col = static_cast<Eigen::Index>(P + gap);
    entry->heads.pi[col] = p_nonzero[gap] > 0.0 ? p_zero[gap] / total : 1.0;
    if (p_nonzero[gap] > 0.0) {
      entry->heads.lambda_nonzero[col] = e_k[gap] / p_nonzero[gap];
      entry->heads.q.col(col) = composition.col(static_cast<Eigen::Index>(gap)) / e_k[gap];
    }
  }
  for (auto& list : targets) {
    double sum = 0.0;
    for (auto const& pt : list) sum += pt.weight;
    for (auto& pt : list) pt.weight /= sum;
  }
  entry->image_targets = std::move(targets);
  return entry;
}

std::shared_ptr<OracleTable::Entry const> OracleTable::lookup(MixedSequence const& x_t, double t) const {
  detail::check_unit(t, "oracle: t");
  Key key{x_t.symbols(vocab_.image_token_id()), x_t.prompt_len, std::llround(t * 1e9)};
  {
    std::shared_lock lock(cache_mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  auto entry = compute(x_t, t);
  std::unique_lock lock(cache_mutex_);
  return cache_.try_emplace(std::move(key), std::move(entry)).first->second;
}

InsertionHeads OracleTable::oracle_heads(MixedSequence const& x_t, double t) const {
  auto entry = lookup(x_t, t);
  if (!entry) throw UnreachableStateError("no data sequence contains the state as a subsequence");
  return entry->heads;
}

std::vector<PointTarget> OracleTable::image_targets(MixedSequence const& x_t, double t, std::size_t element) const {
  auto entry = lookup(x_t, t);
  if (!entry) throw UnreachableStateError("no data sequence contains the state as a subsequence");
  if (element >= entry->image_targets.size()) throw IndexError("image_targets: element out of range");
  return entry->image_targets[element];
}

double OracleTable::expected_text_loss(double t,
                                       std::function<InsertionHeads(MixedSequence const&)> const& heads_of) const {
  detail::check_unit(t, "expected_text_loss: t");
  int const img = vocab_.image_token_id();
  double const kt = kappa(schedule_, t);

  std::size_t states = 0;
  double all = 0.0;
  for (auto const& g : groups_) {
    if (g.target.size() >= 63) throw BudgetError("loss_floor: target too long to enumerate");
    states += std::size_t{1} << g.target.size();
    all += g.weight;
  }
  if (states > opts_.max_floor_states)
    throw BudgetError("loss_floor: " + std::to_string(states) + " corruption states exceed budget " +
                      std::to_string(opts_.max_floor_states));

  auto make_element = [&](int sym) {
    return sym == img ? Element::image(Eigen::VectorXd::Zero(image_dim_), 1.0) : Element::token(sym);
  };

  double expected = 0.0;
  for (auto const& g : groups_) {
    std::size_t const L = g.target.size();
    for (std::size_t mask = 0; mask < (std::size_t{1} << L); ++mask) {
      double prob = g.weight / all;
      for (std::size_t i = 0; i < L && prob > 0.0; ++i) {
        double const p = presence(g.target[i], kt);
        prob *= (mask >> i) & 1 ? p : 1.0 - p;
      }
      if (prob <= 0.0) continue;

      CorruptionRecord rec;
      rec.tau_text = {t};
      rec.x_t.prompt_len = g.prompt.size();
      for (int s : g.prompt) {
        rec.x_t.elements.push_back(make_element(s));
        rec.bags.emplace_back();
      }
      rec.bags.emplace_back();
      for (std::size_t i = 0; i < L; ++i) {
        if ((mask >> i) & 1) {
          rec.x_t.elements.push_back(make_element(g.target[i]));
          rec.bags.emplace_back();
        } else {
          rec.bags.back().push_back(g.target[i]);
        }
      }
      for (auto const& b : rec.bags) rec.counts.push_back(b.size());
      expected += prob * text_loss(heads_of(rec.x_t), rec).text_total;
    }
  }
  return expected;
}

double OracleTable::loss_floor(double t) const {
  return expected_text_loss(t, [&](MixedSequence const& x) { return oracle_heads(x, t); });
}

void OracleModel::evaluate(MixedSequence const& seq, double t_text, ModelOutput& out) const {
  auto const entry = table_.lookup(seq, ExtendedTime::clip(t_text));
  if (!entry) {
    if (!zero_on_unreachable_) throw UnreachableStateError("oracle model queried off the data support");
    out.heads = InsertionHeads(static_cast<Eigen::Index>(seq.gap_count()), table_.vocab().head_width());
  } else {
    out.heads = entry->heads;
  }
  out.velocities.clear();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    auto const& e = seq.elements[i];
    if (!e.is_image()) continue;
    auto const& img = e.image();
    if (entry && i >= seq.prompt_len && img.t() < 1.0 && !entry->image_targets[i].empty())
      out.velocities.push_back(oracle_velocity(entry->image_targets[i], img.values, img.t()));
    else
      out.velocities.push_back(Eigen::VectorXd::Zero(img.values.size()));
  }
}

}  // namespace eflab
