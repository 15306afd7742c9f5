#include "eflab/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <string>

#include "eflab/errors.hpp"
#include "eflab/parallel.hpp"

namespace eflab::synth {

namespace {

constexpr double kNormTol = 1e-12;

void check_distribution(std::vector<double> const& p, char const* what, bool allow_empty = false) {
  if (p.empty()) {
    if (allow_empty) return;
    throw ConfigError(std::string("synth: ") + what + " is empty");
  }
  double total = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError(std::string("synth: ") + what + " has a negative entry");
    total += x;
  }
  if (std::abs(total - 1.0) > kNormTol)
    throw ConfigError(std::string("synth: ") + what + " sums to " + std::to_string(total) + ", not 1");
}

void check_keys(nlohmann::json const& j, std::initializer_list<char const*> keys, char const* where) {
  if (!j.is_object()) throw ConfigError(std::string("synth: ") + where + " must be an object");
  for (auto const& [key, _] : j.items())
    if (std::none_of(keys.begin(), keys.end(), [&](char const* k) { return key == k; }))
      throw ConfigError(std::string("synth: unknown key '") + key + "' in " + where);
}

Eigen::VectorXd draw_image(ImageClass const& c, Rng& rng) {
  Eigen::VectorXd v(c.mean.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = c.mean[i] + c.std * rng.normal();
  return v;
}

MixedSequence from_template(GeneratorSpec const& spec, Template const& t, Rng& rng) {
  MixedSequence seq;
  for (int id : t.prompt) seq.elements.push_back(Element::token(id));
  seq.prompt_len = t.prompt.size();
  for (auto const& item : t.target) {
    if (item.image_class >= 0)
      seq.elements.push_back(Element::image(draw_image(spec.classes[item.image_class], rng), 1.0));
    else
      seq.elements.push_back(Element::token(item.token));
  }
  return seq;
}

MixedSequence from_classes(GeneratorSpec const& spec, Rng& rng) {
  std::vector<double> class_w;
  for (auto const& c : spec.classes) class_w.push_back(c.weight);
  auto const& cls = spec.classes.empty() ? ImageClass{} : spec.classes[rng.categorical(class_w)];
  std::size_t const n_text = rng.categorical(spec.length_hist);
  std::size_t const n_img = spec.image_count_hist.empty() ? 0 : rng.categorical(spec.image_count_hist);

  MixedSequence seq;
  for (int id : cls.prompt) seq.elements.push_back(Element::token(id));
  seq.prompt_len = cls.prompt.size();

  std::vector<double> tok_w = spec.token_weights;
  if (tok_w.empty()) tok_w.assign(static_cast<std::size_t>(spec.vocab), 1.0);
  std::vector<Element> target;
  for (std::size_t i = 0; i < n_text; ++i) target.push_back(Element::token(static_cast<int>(rng.categorical(tok_w))));
  // images go at uniformly random slots among the text
  for (std::size_t m = 0; m < n_img; ++m) {
    auto const slot = static_cast<std::size_t>(rng.uniform() * static_cast<double>(target.size() + 1));
    target.insert(target.begin() + static_cast<std::ptrdiff_t>(std::min(slot, target.size())),
                  Element::image(draw_image(cls, rng), 1.0));
  }
  seq.elements.insert(seq.elements.end(), target.begin(), target.end());
  return seq;
}

std::string prompt_key(MixedSequence const& seq) {
  std::string key;
  for (std::size_t i = 0; i < seq.prompt_len; ++i) {
    if (!key.empty()) key += ' ';
    key += seq.elements[i].is_image() ? std::string("img") : std::to_string(seq.elements[i].token_id());
  }
  return key;
}

}  // namespace

void GeneratorSpec::validate() const {
  if (vocab < 1) throw ConfigError("synth: vocab must be >= 1");
  if (image_dim < 1 || image_dim > 256) throw ConfigError("synth: image_dim must lie in [1, 256]");
  auto check_token = [&](int id) {
    if (id < 0 || id >= vocab) throw ConfigError("synth: token id " + std::to_string(id) + " outside vocabulary");
  };
  if (!classes.empty()) {
    std::vector<double> w;
    for (auto const& c : classes) {
      w.push_back(c.weight);
      if (c.mean.size() != image_dim) throw ConfigError("synth: class mean dimension differs from image_dim");
      if (!(c.std >= 0.0)) throw ConfigError("synth: class std must be >= 0");
      for (int id : c.prompt) check_token(id);
    }
    check_distribution(w, "class weights");
  }
  if (templates.empty()) {
    check_distribution(length_hist, "length_hist");
    check_distribution(token_weights, "token_weights", true);
    if (!token_weights.empty() && token_weights.size() != static_cast<std::size_t>(vocab))
      throw ConfigError("synth: token_weights must have one entry per token");
    check_distribution(image_count_hist, "image_count_hist", true);
    if (!image_count_hist.empty() && image_count_hist.size() > 1 && classes.empty())
      throw ConfigError("synth: images requested but no classes given");
  } else {
    std::vector<double> w;
    for (auto const& t : templates) {
      w.push_back(t.weight);
      for (int id : t.prompt) check_token(id);
      for (auto const& item : t.target) {
        if (item.image_class >= 0) {
          if (static_cast<std::size_t>(item.image_class) >= classes.size())
            throw ConfigError("synth: template refers to an unknown image class");
        } else {
          check_token(item.token);
        }
      }
    }
    check_distribution(w, "template weights");
  }
}

void from_json(nlohmann::json const& j, GeneratorSpec& s) {
  check_keys(j, {"vocab", "image_dim", "length_hist", "token_weights", "classes", "image_count_hist", "templates", "seed"},
             "generator spec");
  try {
    s = GeneratorSpec{};
    s.vocab = j.at("vocab").get<int>();
    s.image_dim = j.value("image_dim", s.image_dim);
    s.length_hist = j.value("length_hist", std::vector<double>{});
    s.token_weights = j.value("token_weights", std::vector<double>{});
    s.image_count_hist = j.value("image_count_hist", std::vector<double>{});
    s.seed = j.value("seed", std::uint64_t{0});
    for (auto const& c : j.value("classes", nlohmann::json::array())) {
      check_keys(c, {"weight", "prompt", "mean", "std"}, "class");
      ImageClass ic;
      ic.weight = c.value("weight", 1.0);
      ic.prompt = c.value("prompt", std::vector<int>{});
      auto const mean = c.at("mean").get<std::vector<double>>();
      ic.mean = Eigen::Map<Eigen::VectorXd const>(mean.data(), static_cast<Eigen::Index>(mean.size()));
      ic.std = c.value("std", 0.1);
      s.classes.push_back(std::move(ic));
    }
    for (auto const& t : j.value("templates", nlohmann::json::array())) {
      check_keys(t, {"weight", "prompt", "target"}, "template");
      Template tp;
      tp.weight = t.value("weight", 1.0);
      tp.prompt = t.value("prompt", std::vector<int>{});
      for (auto const& item : t.at("target")) {
        if (item.is_number_integer())
          tp.target.push_back({item.get<int>(), -1});
        else if (item.is_object() && item.contains("image_class"))
          tp.target.push_back({-1, item.at("image_class").get<int>()});
        else
          throw ConfigError("synth: template target entries are token ids or {\"image_class\": k}");
      }
      s.templates.push_back(std::move(tp));
    }
  } catch (nlohmann::json::exception const& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
  s.validate();
}

void to_json(nlohmann::json& j, GeneratorSpec const& s) {
  j = nlohmann::json{{"vocab", s.vocab}, {"image_dim", s.image_dim}, {"seed", s.seed}};
  if (!s.length_hist.empty()) j["length_hist"] = s.length_hist;
  if (!s.token_weights.empty()) j["token_weights"] = s.token_weights;
  if (!s.image_count_hist.empty()) j["image_count_hist"] = s.image_count_hist;
  auto& classes = j["classes"] = nlohmann::json::array();
  for (auto const& c : s.classes)
    classes.push_back({{"weight", c.weight},
                       {"prompt", c.prompt},
                       {"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
                       {"std", c.std}});
  if (!s.templates.empty()) {
    auto& templates = j["templates"] = nlohmann::json::array();
    for (auto const& t : s.templates) {
      nlohmann::json target = nlohmann::json::array();
      for (auto const& item : t.target)
        target.push_back(item.image_class >= 0 ? nlohmann::json{{"image_class", item.image_class}}
                                               : nlohmann::json(item.token));
      templates.push_back({{"weight", t.weight}, {"prompt", t.prompt}, {"target", target}});
    }
  }
}

GeneratorSpec read_spec_file(std::string const& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open generator spec '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (nlohmann::json::exception const& e) {
    throw ConfigError("generator spec '" + path + "': " + e.what());
  }
  return j.get<GeneratorSpec>();
}

Dataset generate(GeneratorSpec const& spec, std::size_t count, Rng& rng, unsigned threads) {
  if (count == 0) throw ConfigError("synth: count must be >= 1");
  spec.validate();
  Rng const base = rng.split();
  std::vector<MixedSequence> records(count);
  std::vector<double> template_w;
  for (auto const& t : spec.templates) template_w.push_back(t.weight);
  parallel_for(count, threads, [&](std::size_t i) {
    Rng r = base.stream(i);
    records[i] = spec.templates.empty() ? from_classes(spec, r)
                                        : from_template(spec, spec.templates[r.categorical(template_w)], r);
  });
  Dataset out;
  for (auto& rec : records) out.add(std::move(rec));
  return out;
}

nlohmann::json stats(Dataset const& data, int vocab) {
  std::vector<std::size_t> length_hist(1, 0), image_hist(1, 0);
  std::vector<std::size_t> tokens(static_cast<std::size_t>(std::max(vocab, 0)), 0);
  struct Moments {
    std::size_t n = 0;
    Eigen::VectorXd sum, sum_sq;
  };
  std::map<std::string, Moments> classes;
  std::size_t total_tokens = 0;

  auto bump = [](std::vector<std::size_t>& h, std::size_t k) {
    if (h.size() <= k) h.resize(k + 1, 0);
    ++h[k];
  };
  for (auto const& seq : data.records) {
    std::size_t n_text = 0, n_img = 0;
    for (std::size_t i = seq.prompt_len; i < seq.size(); ++i) {
      auto const& e = seq.elements[i];
      if (e.is_image()) {
        ++n_img;
        auto& m = classes[prompt_key(seq)];
        auto const& v = e.image().values;
        if (m.n == 0) {
          m.sum = Eigen::VectorXd::Zero(v.size());
          m.sum_sq = Eigen::VectorXd::Zero(v.size());
        }
        ++m.n;
        m.sum += v;
        m.sum_sq += v.cwiseAbs2();
      } else {
        ++n_text;
        auto const id = static_cast<std::size_t>(e.token_id());
        if (id >= tokens.size()) tokens.resize(id + 1, 0);
        ++tokens[id];
        ++total_tokens;
      }
    }
    bump(length_hist, n_text);
    bump(image_hist, n_img);
  }

  auto normalize = [](std::vector<std::size_t> const& h, std::size_t total) {
    std::vector<double> p(h.size(), 0.0);
    if (total > 0)
      for (std::size_t i = 0; i < h.size(); ++i) p[i] = static_cast<double>(h[i]) / static_cast<double>(total);
    return p;
  };
  nlohmann::json j;
  j["records"] = data.size();
  j["length_counts"] = length_hist;
  j["length_hist"] = normalize(length_hist, data.size());
  j["image_count_counts"] = image_hist;
  j["image_count_hist"] = normalize(image_hist, data.size());
  j["token_counts"] = tokens;
  j["token_marginals"] = normalize(tokens, total_tokens);
  auto& per_class = j["classes"] = nlohmann::json::object();
  for (auto const& [key, m] : classes) {
    Eigen::VectorXd const mean = m.sum / static_cast<double>(m.n);
    Eigen::VectorXd const var = (m.sum_sq / static_cast<double>(m.n) - mean.cwiseAbs2()).cwiseMax(0.0);
    per_class[key] = {{"n", m.n},
                      {"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
                      {"var", std::vector<double>(var.data(), var.data() + var.size())}};
  }
  return j;
}

}  // namespace eflab::synth
