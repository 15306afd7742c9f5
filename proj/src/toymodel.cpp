#include "eflab/toymodel.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace eflab {

namespace {

double logistic(double s) { return 1.0 / (1.0 + std::exp(-s)); }
double softplus(double r) { return r > 30.0 ? r : std::log1p(std::exp(r)); }
constexpr double kLambdaFloor = 1e-6;

Eigen::VectorXd softmax(Eigen::VectorXd const& z) {
  Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

struct Squashed {
  double pi, lambda;
  Eigen::VectorXd q;
};

Squashed squash(ForwardGraph const& g, std::size_t k) {
  auto const& T = g.tape;
  return {logistic(T.value(g.pi_score[k])(0, 0)), softplus(T.value(g.lambda_score[k])(0, 0)) + kLambdaFloor,
          softmax(T.value(g.q_logits[k]))};
}

ModelOutput outputs_of(ForwardGraph const& g, ModelParams const& params, MixedSequence const& x_t) {
  ModelOutput out;
  out.heads = InsertionHeads(static_cast<Eigen::Index>(x_t.gap_count()), params.dims.vocab + 1);
  for (std::size_t k = 0; k < g.pi_score.size(); ++k) {
    auto const col = static_cast<Eigen::Index>(g.first_gap + k);
    auto s = squash(g, k);
    out.heads.pi[col] = s.pi;
    out.heads.lambda_nonzero[col] = s.lambda;
    out.heads.q.col(col) = s.q;
  }
  std::size_t next = 0;
  for (std::size_t j = 0; j < x_t.size(); ++j) {
    if (!x_t.elements[j].is_image()) continue;
    if (next < g.velocity_element.size() && g.velocity_element[next] == j)
      out.velocities.push_back(g.tape.value(g.velocity[next++]));
    else
      out.velocities.push_back(Eigen::VectorXd::Zero(x_t.elements[j].image().values.size()));
  }
  return out;
}

}  // namespace

void to_json(nlohmann::json& j, ModelDims const& d) {
  j = nlohmann::json{{"vocab", d.vocab},
                     {"embed", d.embed},
                     {"hidden", d.hidden},
                     {"image_dim", d.image_dim},
                     {"velocity_hidden", d.velocity_hidden},
                     {"max_len", d.max_len},
                     {"text_time_feature", d.text_time_feature}};
}

void from_json(nlohmann::json const& j, ModelDims& d) {
  static std::array<char const*, 7> const keys{"vocab",           "embed",   "hidden",           "image_dim",
                                               "velocity_hidden", "max_len", "text_time_feature"};
  for (auto const& [key, _] : j.items())
    if (std::find_if(keys.begin(), keys.end(), [&](char const* k) { return key == k; }) == keys.end())
      throw ConfigError("model: unknown key '" + key + "'");
  d.vocab = j.value("vocab", d.vocab);
  d.embed = j.value("embed", d.embed);
  d.hidden = j.value("hidden", d.hidden);
  d.image_dim = j.value("image_dim", d.image_dim);
  d.velocity_hidden = j.value("velocity_hidden", d.velocity_hidden);
  d.max_len = j.value("max_len", d.max_len);
  d.text_time_feature = j.value("text_time_feature", d.text_time_feature);
  if (d.vocab <= 0 || d.embed <= 0 || d.hidden <= 0 || d.image_dim <= 0 || d.velocity_hidden <= 0 || d.max_len == 0)
    throw ConfigError("model: dimensions must be positive");
}

std::vector<std::string> const& ModelParams::names() {
  static std::vector<std::string> const n{"embedding", "w1", "b1",  "w2", "b2", "w_pi", "b_pi", "w_lambda", "b_lambda",
                                          "w_q",       "b_q", "v1", "c1", "v2", "c2",   "v3",   "c3",       "v_skip"};
  return n;
}

ModelParams ModelParams::init(ModelDims const& dims, Rng& rng, double scale) {
  ModelParams p;
  p.dims = dims;
  auto const M = dims.vocab, d = dims.embed, H = dims.hidden, D = dims.image_dim, Hv = dims.velocity_hidden;
  auto uniform = [&](int r, int c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
    return m;
  };
  auto zeros = [](int r, int c) { return Eigen::MatrixXd::Zero(r, c).eval(); };
  p.tensors.resize(slot_count);
  p.tensors[embedding] = uniform(M + 2, d);
  p.tensors[w1] = uniform(H, 3 * d + dims.gap_features());
  p.tensors[b1] = zeros(H, 1);
  p.tensors[w2] = uniform(H, H);
  p.tensors[b2] = zeros(H, 1);
  p.tensors[w_pi] = uniform(1, H);
  p.tensors[b_pi] = zeros(1, 1);
  p.tensors[w_lambda] = uniform(1, H);
  p.tensors[b_lambda] = zeros(1, 1);
  p.tensors[w_q] = uniform(M + 1, H);
  p.tensors[b_q] = zeros(M + 1, 1);
  p.tensors[v1] = uniform(Hv, D + 1 + 2 * d);
  p.tensors[c1] = zeros(Hv, 1);
  p.tensors[v2] = uniform(Hv, Hv);
  p.tensors[c2] = zeros(Hv, 1);
  p.tensors[v3] = uniform(D, Hv);
  p.tensors[c3] = zeros(D, 1);
  p.tensors[v_skip] = uniform(D, D);
  return p;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (auto const& t : tensors) n += static_cast<std::size_t>(t.size());
  return n;
}

Eigen::VectorXd ModelParams::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index off = 0;
  for (auto const& t : tensors) {
    flat.segment(off, t.size()) = t.reshaped();
    off += t.size();
  }
  return flat;
}

void ModelParams::assign(Eigen::VectorXd const& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count()))
    throw DataError("parameter vector of size " + std::to_string(flat.size()) + ", expected " +
                    std::to_string(parameter_count()));
  Eigen::Index off = 0;
  for (auto& t : tensors) {
    t.reshaped() = flat.segment(off, t.size());
    off += t.size();
  }
}

bool ModelParams::all_finite() const {
  for (auto const& t : tensors)
    if (!t.allFinite()) return false;
  return true;
}

ForwardGraph build_forward(ModelParams const& params, MixedSequence const& x_t, double t_text) {
  ForwardGraph g;
  auto& T = g.tape;
  auto const& dims = params.dims;
  std::vector<ad::Var> P;
  P.reserve(ModelParams::slot_count);
  for (std::size_t s = 0; s < ModelParams::slot_count; ++s)
    P.push_back(T.parameter(params.tensors[s], s, ModelParams::names()[s]));

  int const img = dims.vocab;
  auto const boundary = T.row(P[ModelParams::embedding], dims.vocab + 1);
  std::vector<ad::Var> emb;
  emb.reserve(x_t.size());
  for (auto const& e : x_t.elements) {
    int const sym = e.symbol(img);
    if (sym < 0 || sym > img) throw DataError("forward: symbol outside vocabulary");
    emb.push_back(T.row(P[ModelParams::embedding], sym));
  }
  auto const pooled = emb.empty() ? boundary : T.mean(emb);

  std::size_t const n = x_t.size();
  g.first_gap = x_t.prompt_len;
  double const len_feature = static_cast<double>(x_t.generated_size()) / static_cast<double>(dims.max_len);
  for (std::size_t gap = x_t.prompt_len; gap <= n; ++gap) {
    Eigen::VectorXd feat(dims.gap_features());
    feat[0] = gap == x_t.prompt_len ? 1.0 : 0.0;
    feat[1] = gap == n ? 1.0 : 0.0;
    feat[2] = len_feature;
    if (dims.text_time_feature) feat[3] = t_text;
    std::array<ad::Var, 4> parts{gap > 0 ? emb[gap - 1] : boundary, gap < n ? emb[gap] : boundary, pooled,
                                 T.constant(feat, "gap_features")};
    auto const u = T.concat(parts);
    auto const h1 = T.tanh(T.add(T.matmul(P[ModelParams::w1], u), P[ModelParams::b1]));
    auto const h2 = T.tanh(T.add(T.matmul(P[ModelParams::w2], h1), P[ModelParams::b2]));
    g.pi_score.push_back(T.add(T.matmul(P[ModelParams::w_pi], h2), P[ModelParams::b_pi]));
    g.lambda_score.push_back(T.add(T.matmul(P[ModelParams::w_lambda], h2), P[ModelParams::b_lambda]));
    g.q_logits.push_back(T.add(T.matmul(P[ModelParams::w_q], h2), P[ModelParams::b_q]));
  }

  for (std::size_t j = x_t.prompt_len; j < n; ++j) {
    auto const& e = x_t.elements[j];
    if (!e.is_image()) continue;
    auto const& block = e.image();
    if (block.values.size() != dims.image_dim) throw DataError("forward: image dimension mismatch");
    auto const y = T.constant(block.values, "image_values");
    auto const t = T.constant(Eigen::MatrixXd::Constant(1, 1, block.t()), "image_time");
    std::array<ad::Var, 4> parts{y, t, j > 0 ? emb[j - 1] : boundary, pooled};
    auto const in = T.concat(parts);
    auto const a1 = T.tanh(T.add(T.matmul(P[ModelParams::v1], in), P[ModelParams::c1]));
    auto const a2 = T.tanh(T.add(T.matmul(P[ModelParams::v2], a1), P[ModelParams::c2]));
    auto const out = T.add(T.add(T.matmul(P[ModelParams::v3], a2), P[ModelParams::c3]),
                           T.matmul(P[ModelParams::v_skip], y));
    g.velocity.push_back(out);
    g.velocity_element.push_back(j);
  }
  return g;
}

ModelOutput forward(ModelParams const& params, MixedSequence const& x_t, double t_text) {
  auto const g = build_forward(params, x_t, t_text);
  return outputs_of(g, params, x_t);
}

namespace {

struct LossGraph {
  ForwardGraph fwd;
  ad::Var total;
  LossReport report;
};

LossGraph build_loss(ModelParams const& params, CorruptionRecord const& rec, double weight_img) {
  LossGraph L{build_forward(params, rec.x_t, rec.t_text()), {}, {}};
  auto& g = L.fwd;
  auto& T = g.tape;
  if (g.first_gap + g.pi_score.size() != rec.gap_count()) throw DomainError("loss: gap count mismatch");

  std::vector<ad::Var> terms;
  for (std::size_t k = 0; k < g.pi_score.size(); ++k) {
    std::size_t const gap = g.first_gap + k;
    auto const count = static_cast<long>(rec.counts[gap]);
    auto const s = squash(g, k);

    auto const zi = zero_inflated_loss(s.pi, s.lambda, count);
    Eigen::MatrixXd zv = Eigen::MatrixXd::Constant(1, 1, zi.bce + zi.poisson);
    terms.push_back(T.custom(
        {g.pi_score[k], g.lambda_score[k]}, zv,
        [pi = s.pi, lambda = s.lambda, dlambda = logistic(T.value(g.lambda_score[k])(0, 0)), count](
            ad::Tape& t, std::size_t self) {
          double const up = t.grad_out(self)(0, 0);
          // d/ds of -log(pi) or -log(1-pi) with pi = logistic(s)
          double const d_score = count == 0 ? -(1.0 - pi) : pi;
          t.grad_of(t.input(self, 0).id)(0, 0) += up * d_score;
          if (count > 0) t.grad_of(t.input(self, 1).id)(0, 0) += up * poisson_nll_grad(lambda, count) * dlambda;
        },
        "zero_inflated"));

    auto const& bag = rec.bags[gap];
    if (!bag.empty()) {
      auto const ce = bag_cross_entropy(s.q, std::span<int const>(bag));
      Eigen::VectorXd counts = Eigen::VectorXd::Zero(s.q.size());
      for (int a : bag) counts[a] += 1.0;
      terms.push_back(T.custom(
          {g.q_logits[k]}, Eigen::MatrixXd::Constant(1, 1, ce.value),
          [q = s.q, counts](ad::Tape& t, std::size_t self) {
            double const up = t.grad_out(self)(0, 0);
            t.grad_of(t.input(self, 0).id) += up * (counts.sum() * q - counts);
          },
          "bag_cross_entropy"));
    }
  }
  auto total = T.scale(T.sum(terms), 1.0 / text_normalizer(rec.x_t.generated_size()));

  std::vector<Eigen::VectorXd> velocities;
  if (!rec.flow_targets.empty()) {
    std::vector<ad::Var> fm;
    for (auto const& ft : rec.flow_targets) {
      auto const it = std::find(g.velocity_element.begin(), g.velocity_element.end(), ft.element);
      if (it == g.velocity_element.end()) throw DomainError("loss: flow target without velocity");
      auto const v = g.velocity[static_cast<std::size_t>(it - g.velocity_element.begin())];
      Eigen::VectorXd const vp = T.value(v);
      velocities.push_back(vp);
      fm.push_back(T.custom(
          {v}, Eigen::MatrixXd::Constant(1, 1, flow_matching_loss(vp, ft.y0, ft.y1)),
          [grad = flow_matching_loss_grad(vp, ft.y0, ft.y1)](ad::Tape& t, std::size_t self) {
            t.grad_of(t.input(self, 0).id) += t.grad_out(self)(0, 0) * grad;
          },
          "flow_matching"));
    }
    total = T.add(total, T.scale(T.mean(fm), weight_img));
  }
  L.total = total;

  auto const out = outputs_of(g, params, rec.x_t);
  L.report = total_loss(out.heads, velocities, rec, weight_img);
  return L;
}

}  // namespace

RecordLoss loss_and_grad(ModelParams const& params, CorruptionRecord const& rec, double weight_img) {
  auto L = build_loss(params, rec, weight_img);
  L.fwd.tape.backward(L.total);
  RecordLoss out;
  out.report = L.report;
  out.grads.resize(ModelParams::slot_count);
  L.fwd.tape.parameter_grads(out.grads);
  for (std::size_t s = 0; s < out.grads.size(); ++s)
    if (out.grads[s].size() == 0) out.grads[s] = Eigen::MatrixXd::Zero(params.tensors[s].rows(), params.tensors[s].cols());
  return out;
}

double loss_value(ModelParams const& params, CorruptionRecord const& rec, double weight_img) {
  auto const L = build_loss(params, rec, weight_img);
  return L.fwd.tape.value(L.total)(0, 0);
}

RecordLoss batch_loss_and_grad(ModelParams const& params, std::span<CorruptionRecord const> batch, double weight_img) {
  if (batch.empty()) throw DomainError("batch_loss_and_grad: empty batch");
  RecordLoss acc;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto r = loss_and_grad(params, batch[b], weight_img);
    if (b == 0) {
      acc = std::move(r);
      acc.report.per_gap.clear();
      continue;
    }
    for (std::size_t s = 0; s < acc.grads.size(); ++s) acc.grads[s] += r.grads[s];
    acc.report.token_ce += r.report.token_ce;
    acc.report.poisson_nonzero += r.report.poisson_nonzero;
    acc.report.bce_zero += r.report.bce_zero;
    acc.report.text_total += r.report.text_total;
    acc.report.image_mse += r.report.image_mse;
    acc.report.grand_total += r.report.grand_total;
    acc.report.saturated = acc.report.saturated || r.report.saturated;
  }
  double const inv = 1.0 / static_cast<double>(batch.size());
  for (auto& g : acc.grads) g *= inv;
  acc.report.token_ce *= inv;
  acc.report.poisson_nonzero *= inv;
  acc.report.bce_zero *= inv;
  acc.report.text_total *= inv;
  acc.report.image_mse *= inv;
  acc.report.grand_total *= inv;
  return acc;
}

void ToyModel::evaluate(MixedSequence const& seq, double t_text, ModelOutput& out) const {
  out = forward(params_, seq, t_text);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (!(weight_img >= 0.0)) throw ConfigError("train: weight_img must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be positive");
  if (!(mixed_generation_prob >= 0.0 && mixed_generation_prob <= 1.0))
    throw ConfigError("train: mixed_generation_prob must lie in [0,1]");
  if (!(uncond_prob >= 0.0 && uncond_prob <= 1.0)) throw ConfigError("train: uncond_prob must lie in [0,1]");
  if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0))
    throw ConfigError("train: final_lr_fraction must lie in [0,1]");
}

void to_json(nlohmann::json& j, TrainConfig const& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"steps", c.steps},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"mode", to_string(c.mode)},
                     {"weight_img", c.weight_img},
                     {"clip_norm", c.clip_norm},
                     {"mixed_generation_prob", c.mixed_generation_prob},
                     {"final_lr_fraction", c.final_lr_fraction},
                     {"uncond_prob", c.uncond_prob},
                     {"divergence_limit", c.divergence_limit}};
}

void from_json(nlohmann::json const& j, TrainConfig& c) {
  static std::array<char const*, 11> const keys{"learning_rate", "steps",      "batch_size",
                                                "seed",          "mode",       "weight_img",
                                                "clip_norm",     "mixed_generation_prob", "uncond_prob",
                                                "divergence_limit", "final_lr_fraction"};
  for (auto const& [key, _] : j.items())
    if (std::find_if(keys.begin(), keys.end(), [&](char const* k) { return key == k; }) == keys.end())
      throw ConfigError("train: unknown key '" + key + "'");
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("mode")) c.mode = parse_mode(j["mode"].get<std::string>());
  c.weight_img = j.value("weight_img", c.weight_img);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.mixed_generation_prob = j.value("mixed_generation_prob", c.mixed_generation_prob);
  c.uncond_prob = j.value("uncond_prob", c.uncond_prob);
  c.divergence_limit = j.value("divergence_limit", c.divergence_limit);
  c.final_lr_fraction = j.value("final_lr_fraction", c.final_lr_fraction);
  c.validate();
}

CorruptionRecord training_record(MixedSequence const& x1, TrainConfig const& cfg, Schedule const& s,
                                 int image_token_id, Rng& rng) {
  bool const drop_prompt = rng.uniform() < cfg.uncond_prob;
  bool const mixed = rng.uniform() < cfg.mixed_generation_prob;
  MixedSequence const x = drop_prompt ? x1.without_prompt() : x1;
  if (mixed) return corrupt(x, s, cfg.mode, image_token_id, rng);
  // Sequential: the text is complete and each image denoises at its own time.
  return corrupt_at(x, s, GenerationMode::independent, 1.0, image_token_id, rng);
}

TrainResult train_from(ModelParams params, Dataset const& data, TrainConfig const& cfg, Schedule const& s,
                       std::function<void(std::size_t, LossReport const&)> const& on_step) {
  cfg.validate();
  if (data.size() == 0) throw DataError("train: empty dataset");
  Rng rng(cfg.seed);
  Rng data_rng = rng.split();
  std::vector<double> weights = data.weights;
  if (weights.size() != data.size()) weights.assign(data.size(), 1.0);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  int const img = params.dims.vocab;

  TrainResult result;
  result.history.reserve(cfg.steps);
  std::vector<CorruptionRecord> batch(cfg.batch_size);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (auto& rec : batch) rec = training_record(data.records[pick(data_rng)], cfg, s, img, data_rng);
    auto r = batch_loss_and_grad(params, batch, cfg.weight_img);
    if (!std::isfinite(r.report.grand_total) || r.report.grand_total > cfg.divergence_limit)
      throw NumericError("train: loss diverged at step " + std::to_string(step) + " (loss " +
                         std::to_string(r.report.grand_total) + ")");
    double norm2 = 0.0;
    for (auto const& g : r.grads) norm2 += g.squaredNorm();
    double const norm = std::sqrt(norm2);
    double const scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
    double const frac = cfg.steps > 1 ? static_cast<double>(step) / static_cast<double>(cfg.steps - 1) : 0.0;
    double const lr = cfg.learning_rate * (1.0 - (1.0 - cfg.final_lr_fraction) * frac);
    for (std::size_t k = 0; k < params.tensors.size(); ++k) params.tensors[k] -= lr * scale * r.grads[k];
    if (!params.all_finite()) throw NumericError("train: non-finite parameters after step " + std::to_string(step));
    if (on_step) on_step(step, r.report);
    result.history.push_back(std::move(r.report));
  }
  result.params = std::move(params);
  return result;
}

TrainResult train(Dataset const& data, TrainConfig const& cfg, Schedule const& s, ModelDims const& dims,
                  std::function<void(std::size_t, LossReport const&)> const& on_step) {
  Rng init_rng(cfg.seed ^ 0x5eedULL);
  return train_from(ModelParams::init(dims, init_rng), data, cfg, s, on_step);
}

namespace {
constexpr char kMagic[8] = {'E', 'F', 'L', 'A', 'B', 'C', 'K', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    int const c = in.get();
    if (c == EOF) throw DataError("checkpoint: truncated file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}
}  // namespace

void save_checkpoint(std::string const& path, ModelParams const& params, Schedule const& s,
                     nlohmann::json const& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  put_u64(out, kCheckpointVersion);
  auto const flat = params.flatten();
  put_u64(out, static_cast<std::uint64_t>(flat.size()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(flat[i]));

  nlohmann::json meta;
  meta["version"] = kCheckpointVersion;
  meta["dims"] = params.dims;
  meta["schedule"] = s;
  auto& shapes = meta["tensors"] = nlohmann::json::array();
  for (std::size_t k = 0; k < params.tensors.size(); ++k)
    shapes.push_back({{"name", ModelParams::names()[k]},
                      {"rows", params.tensors[k].rows()},
                      {"cols", params.tensors[k].cols()}});
  if (!extra.is_null()) meta["extra"] = extra;
  std::ofstream side(path + ".json");
  if (!side) throw DataError("cannot write checkpoint sidecar '" + path + ".json'");
  side << meta.dump(2) << '\n';
}

ModelParams load_checkpoint(std::string const& path, Schedule* schedule) {
  std::ifstream side(path + ".json");
  if (!side) throw DataError("cannot open checkpoint sidecar '" + path + ".json'");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(side);
  } catch (nlohmann::json::exception const& e) {
    throw DataError(std::string("checkpoint sidecar: ") + e.what());
  }
  if (meta.value("version", 0u) != kCheckpointVersion) throw DataError("checkpoint: unsupported version");
  Rng rng(0);
  auto params = ModelParams::init(meta.at("dims").get<ModelDims>(), rng);
  if (schedule) *schedule = meta.at("schedule").get<Schedule>();

  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw DataError("checkpoint: bad magic");
  if (get_u64(in) != kCheckpointVersion) throw DataError("checkpoint: unsupported version");
  auto const count = get_u64(in);
  if (count != params.parameter_count()) throw DataError("checkpoint: parameter count does not match sidecar dims");
  Eigen::VectorXd flat(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = std::bit_cast<double>(get_u64(in));
  params.assign(flat);
  return params;
}

}  // namespace eflab
