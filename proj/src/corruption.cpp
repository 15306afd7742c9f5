#include "eflab/corruption.hpp"

namespace eflab {

std::string to_string(GenerationMode m) {
  switch (m) {
    case GenerationMode::interleaved: return "interleaved";
    case GenerationMode::independent: return "independent";
    case GenerationMode::text_only: return "text_only";
  }
  return "?";
}

GenerationMode parse_mode(std::string const& name) {
  if (name == "interleaved") return GenerationMode::interleaved;
  if (name == "independent") return GenerationMode::independent;
  if (name == "text_only" || name == "text-only") return GenerationMode::text_only;
  throw ConfigError("unknown mode '" + name + "'");
}

ImageFate deletion_time_of_image(Schedule const& s, double tau_text, Rng& rng) {
  auto const tau = sample_interleaved_time(s, tau_text, rng);
  if (tau.tau < 0.0) return {true, 0.0, tau.tau};
  return {false, tau.clipped(), tau.tau};
}

CorruptionRecord corrupt(MixedSequence const& x1, Schedule const& s, GenerationMode mode, int image_token_id,
                         Rng& rng) {
  double const tau = mode == GenerationMode::interleaved ? rng.uniform(0.0, 2.0) : rng.uniform();
  return corrupt_at(x1, s, mode, tau, image_token_id, rng);
}

CorruptionRecord corrupt_at(MixedSequence const& x1, Schedule const& s, GenerationMode mode, double tau_text,
                            int image_token_id, Rng& rng) {
  double const hi = mode == GenerationMode::interleaved ? 2.0 : 1.0;
  if (!(tau_text >= 0.0 && tau_text <= hi))
    throw DomainError("corrupt: text time " + std::to_string(tau_text) + " outside [0," + std::to_string(hi) + "]");

  CorruptionRecord rec;
  rec.mode = mode;
  rec.tau_text = {tau_text};
  double const keep = kappa(s, ExtendedTime::clip(tau_text));

  rec.x_t.prompt_len = x1.prompt_len;
  rec.bags.emplace_back();
  for (std::size_t i = 0; i < x1.prompt_len; ++i) {
    rec.x_t.elements.push_back(x1.elements[i]);
    rec.alignment.push_back(i);
    rec.bags.emplace_back();
  }

  struct Pending {
    std::size_t element;
    Eigen::VectorXd y1;
    double tau;
  };
  std::vector<Pending> noised;

  for (std::size_t i = x1.prompt_len; i < x1.size(); ++i) {
    auto const& e = x1.elements[i];
    bool survives = false;
    double image_tau = 1.0;
    if (!e.is_image() || mode == GenerationMode::text_only) {
      survives = rng.uniform() < keep;
    } else if (mode == GenerationMode::interleaved) {
      auto const fate = deletion_time_of_image(s, tau_text, rng);
      survives = !fate.deleted;
      image_tau = fate.tau_img;
    } else {
      survives = true;
      image_tau = rng.uniform();
    }

    if (!survives) {
      rec.bags.back().push_back(e.symbol(image_token_id));
      if (e.is_image()) ++rec.deleted_images;
      continue;
    }
    rec.alignment.push_back(i);
    if (e.is_image() && mode != GenerationMode::text_only) {
      noised.push_back({rec.x_t.size(), e.image().values, image_tau});
      rec.x_t.elements.push_back(Element::image(e.image().values, image_tau));
    } else {
      rec.x_t.elements.push_back(e);
    }
    rec.bags.emplace_back();
  }

  for (auto& p : noised) {
    FlowTarget ft;
    ft.element = p.element;
    ft.t = ExtendedTime::clip(p.tau);
    ft.y1 = std::move(p.y1);
    ft.y0 = rng.normal_vector(ft.y1.size());
    rec.x_t.elements[p.element].image().values = ft.t * ft.y1 + (1.0 - ft.t) * ft.y0;
    rec.image_times.push_back({p.tau});
    rec.flow_targets.push_back(std::move(ft));
  }

  rec.counts.reserve(rec.bags.size());
  for (auto const& b : rec.bags) rec.counts.push_back(b.size());
  return rec;
}

std::vector<int> reconstruct_symbols(CorruptionRecord const& rec, int image_token_id) {
  std::vector<int> out;
  for (std::size_t g = 0; g < rec.bags.size(); ++g) {
    out.insert(out.end(), rec.bags[g].begin(), rec.bags[g].end());
    if (g < rec.x_t.size()) out.push_back(rec.x_t.elements[g].symbol(image_token_id));
  }
  return out;
}

nlohmann::json to_json(CorruptionRecord const& rec) {
  nlohmann::json j;
  j["x_t"] = to_json_record(rec.x_t, std::nullopt, true);
  j["bags"] = rec.bags;
  j["counts"] = rec.counts;
  j["tau_text"] = rec.tau_text.tau;
  j["t_text"] = rec.t_text();
  std::vector<double> times;
  for (auto const& t : rec.image_times) times.push_back(t.tau);
  j["image_times"] = times;
  j["alignment"] = rec.alignment;
  j["deleted_images"] = rec.deleted_images;
  j["mode"] = to_string(rec.mode);
  return j;
}

}  // namespace eflab
