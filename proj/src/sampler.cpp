#include "eflab/sampler.hpp"

#include <cmath>
#include <limits>

#include "eflab/parallel.hpp"

namespace eflab {

namespace {

constexpr double kSnap = 1e-12;

double advance(double t, double dt) {
  double const next = t + std::min(1.0 - t, dt);
  return 1.0 - next < kSnap ? 1.0 : next;
}

// c^w * u^(1-w) for w not in {0, 1}; a zero c stays zero, a zero u is floored.
double geometric(double c, double u, double w) {
  if (c <= 0.0) return 0.0;
  double const e = w * std::log(c) + (1.0 - w) * std::log(std::max(u, kLogFloor));
  return std::exp(std::min(e, 700.0));
}

}  // namespace

void SamplerConfig::validate() const {
  if (!(dt > 0.0 && dt <= 1.0)) throw ConfigError("sampler: dt must lie in (0,1]");
  if (!(dt_img >= 0.0 && dt_img <= 1.0)) throw ConfigError("sampler: dt_img must lie in [0,1]");
  if (!(guidance_w >= 0.0) || !std::isfinite(guidance_w)) throw ConfigError("sampler: guidance weight must be >= 0");
  if (!(temperature > 0.0)) throw ConfigError("sampler: temperature must be positive");
}

bool SamplerState::done() const {
  if (t_text < 1.0) return false;
  for (auto const& e : seq.elements)
    if (e.is_image() && e.image().t() < 1.0) return false;
  return true;
}

InsertionHeads cfg_heads(InsertionHeads const& cond, InsertionHeads const& uncond, double w) {
  if (cond.gap_count() != uncond.gap_count() || cond.width() != uncond.width())
    throw DomainError("cfg_heads: conditional and unconditional heads differ in shape");
  if (w == 1.0) return cond;
  if (w == 0.0) return uncond;
  InsertionHeads out = cond;
  for (Eigen::Index g = 0; g < cond.gap_count(); ++g) {
    double const rate = geometric(cond.rate(g), uncond.rate(g), w);
    double const pi = std::min(1.0, geometric(cond.pi[g], uncond.pi[g], w));
    if (rate <= 0.0 || pi >= 1.0) {
      out.pi[g] = 1.0;
      out.lambda_nonzero[g] = 1.0;
    } else {
      out.pi[g] = pi;
      out.lambda_nonzero[g] = rate / (1.0 - pi);
    }
    auto col = out.q.col(g);
    for (Eigen::Index a = 0; a < col.size(); ++a) col[a] = geometric(cond.q(a, g), uncond.q(a, g), w);
    double const sum = col.sum();
    if (sum > 0.0 && std::isfinite(sum))
      col /= sum;
    else
      col = cond.q.col(g);
  }
  return out;
}

Eigen::VectorXd euler_flow(Eigen::VectorXd y, double t0, double t1,
                           std::function<Eigen::VectorXd(Eigen::VectorXd const&, double)> const& v, int steps) {
  if (!(t0 >= 0.0 && t0 < t1 && t1 <= 1.0)) throw DomainError("euler_flow: need 0 <= t0 < t1 <= 1");
  if (steps <= 0) throw DomainError("euler_flow: steps must be positive");
  double const h = (t1 - t0) / steps;
  for (int k = 0; k < steps; ++k) {
    double const t = t0 + k * h;
    y += h * v(y, t);
  }
  return y;
}

void step(SamplerState& state, HeadModel const& model, SamplerConfig const& cfg, Rng& rng) {
  auto& seq = state.seq;
  auto& trace = state.trace;
  std::size_t const P = seq.prompt_len;
  int const img = cfg.limits.vocab.image_token_id();
  bool const text_active = state.t_text < 1.0;
  bool const guided = cfg.guidance_w != 1.0;

  ModelOutput out;
  model.evaluate(seq, state.t_text, out);

  // Heads restricted to the generation gaps P..n, optionally guided.
  InsertionHeads heads;
  std::vector<Eigen::VectorXd> velocities = std::move(out.velocities);
  Eigen::Index const gen_gaps = static_cast<Eigen::Index>(seq.gap_count() - P);
  if (text_active || (guided && cfg.guide_velocities)) {
    if (P == 0) {
      heads = std::move(out.heads);
    } else {
      heads.pi = out.heads.pi.tail(gen_gaps);
      heads.lambda_nonzero = out.heads.lambda_nonzero.tail(gen_gaps);
      heads.q = out.heads.q.rightCols(gen_gaps);
    }
    if (guided) {
      ModelOutput un;
      model.evaluate(seq.without_prompt(), state.t_text, un);
      heads = cfg_heads(heads, un.heads, cfg.guidance_w);
      if (cfg.guide_velocities) {
        std::size_t prompt_images = seq.prompt().image_count();
        for (std::size_t k = 0; k < un.velocities.size(); ++k)
          velocities[prompt_images + k] = cfg.guidance_w * velocities[prompt_images + k] +
                                          (1.0 - cfg.guidance_w) * un.velocities[k];
      }
    }
  }

  // Images: one Euler step each.
  double const dt_img = cfg.dt_img > 0.0 ? cfg.dt_img : cfg.dt;
  std::size_t image_index = 0;
  for (auto& e : seq.elements) {
    if (!e.is_image()) continue;
    auto& block = e.image();
    auto const& v = velocities.at(image_index++);
    double const t = block.t();
    if (t >= 1.0) continue;
    double const h = std::min(1.0 - t, dt_img);
    block.values += h * v;
    block.time.tau = advance(t, dt_img);
    if (block.time.tau >= 1.0)
      trace.image_done_clock.push_back(static_cast<double>(trace.steps + 1) * cfg.dt);
  }

  // Text: parallel insertions against the pre-step state.
  if (text_active) {
    double const h = std::min(1.0 - state.t_text, cfg.dt);
    double const ratio = kappa_rate_ratio(cfg.schedule, state.t_text);
    double const t_after = advance(state.t_text, cfg.dt);
    Eigen::VectorXd weights;
    std::vector<std::pair<std::size_t, int>> inserts;
    for (Eigen::Index g = 0; g < gen_gaps; ++g) {
      bool fire = false;
      if (cfg.two_head_sampling) {
        double const p_nonzero = 1.0 - heads.pi[g];
        double p_count = h * ratio * heads.lambda_nonzero[g];
        if (p_count > 1.0) {
          ++trace.clamp_count;
          p_count = 1.0;
        }
        bool const a = rng.uniform() < p_nonzero;
        bool const b = rng.uniform() < p_count;
        fire = a && b;
      } else {
        double p = h * ratio * heads.rate(g);
        if (p > 1.0) {
          ++trace.clamp_count;
          p = 1.0;
        }
        fire = rng.uniform() < p;
      }
      if (!fire) continue;

      weights = heads.q.col(g);
      if (cfg.mode != GenerationMode::interleaved) weights[img] = 0.0;
      if (cfg.temperature != 1.0) weights = weights.array().pow(1.0 / cfg.temperature).matrix();
      if (!(weights.sum() > 0.0)) continue;
      int const symbol = static_cast<int>(rng.categorical(weights));
      inserts.emplace_back(P + static_cast<std::size_t>(g), symbol);
    }

    // Right to left keeps pre-step gap indices valid.
    for (auto it = inserts.rbegin(); it != inserts.rend(); ++it) {
      auto const [gap, symbol] = *it;
      if (seq.generated_size() + 1 > cfg.limits.max_len) {
        trace.truncated = true;
        continue;
      }
      insert_in_place(seq, gap, symbol, cfg.limits, rng);
      trace.insertion_times.insert(trace.insertion_times.begin() + static_cast<std::ptrdiff_t>(gap), t_after);
      trace.events.push_back({trace.steps, t_after, gap, symbol});
    }
    state.t_text = t_after;
  }

  ++trace.steps;
  if (cfg.record_snapshots) {
    Snapshot snap{state.t_text, seq.size(), {}};
    for (auto const& e : seq.elements)
      if (e.is_image()) snap.image_times.push_back(e.image().t());
    trace.snapshots.push_back(std::move(snap));
  }
}

GenerationResult generate(MixedSequence const& prompt, HeadModel const& model, SamplerConfig const& cfg, Rng& rng) {
  cfg.validate();
  if (prompt.generated_size() != 0)
    throw DataError("generate: the prompt must consist of conditioning elements only");
  if (cfg.mode == GenerationMode::text_only || cfg.mode == GenerationMode::interleaved) {
    if (cfg.limits.vocab.size <= 0) throw ConfigError("generate: vocabulary is empty");
  }

  SamplerState state;
  state.seq = prompt;
  state.trace.insertion_times.assign(prompt.size(), std::numeric_limits<double>::quiet_NaN());
  if (cfg.mode == GenerationMode::independent) {
    for (std::size_t k = 0; k < cfg.num_images; ++k) {
      insert_in_place(state.seq, state.seq.size(), cfg.limits.vocab.image_token_id(), cfg.limits, rng);
      state.trace.insertion_times.push_back(0.0);
      state.trace.events.push_back({0, 0.0, state.seq.size() - 1, cfg.limits.vocab.image_token_id()});
    }
  }
  while (!state.done()) step(state, model, cfg, rng);
  return {std::move(state.seq), std::move(state.trace)};
}

std::vector<GenerationResult> generate_many(MixedSequence const& prompt, HeadModel const& model,
                                            SamplerConfig const& cfg, Rng const& rng_root, std::size_t runs,
                                            unsigned threads) {
  std::vector<GenerationResult> results(runs);
  parallel_for(runs, threads, [&](std::size_t r) {
    Rng rng = rng_root.stream(r);
    results[r] = generate(prompt, model, cfg, rng);
  });
  return results;
}

nlohmann::json to_json(GenerationTrace const& trace) {
  nlohmann::json j;
  j["steps"] = trace.steps;
  j["clamp_count"] = trace.clamp_count;
  j["truncated"] = trace.truncated;
  auto& events = j["events"] = nlohmann::json::array();
  for (auto const& e : trace.events)
    events.push_back({{"step", e.step}, {"t_text", e.t_text}, {"gap", e.gap}, {"symbol", e.symbol}});
  auto& times = j["insertion_times"] = nlohmann::json::array();
  for (double t : trace.insertion_times) {
    if (std::isnan(t))
      times.push_back(nullptr);
    else
      times.push_back(t);
  }
  j["image_done_clock"] = trace.image_done_clock;
  if (!trace.snapshots.empty()) {
    auto& snaps = j["snapshots"] = nlohmann::json::array();
    for (auto const& s : trace.snapshots)
      snaps.push_back({{"t_text", s.t_text}, {"length", s.length}, {"image_times", s.image_times}});
  }
  return j;
}

}  // namespace eflab
