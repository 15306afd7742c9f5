#include "run_config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace eflab::cli {

namespace {

void only_keys(nlohmann::json const& j, std::initializer_list<char const*> keys, std::string const& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto const& [key, _] : j.items())
    if (std::none_of(keys.begin(), keys.end(), [&](char const* k) { return key == k; }))
      throw ConfigError("unknown key '" + key + "' in " + where);
}

std::string resolve(std::filesystem::path const& base, std::string const& p) {
  if (p.empty()) return p;
  std::filesystem::path const path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

template <class T>
T get(nlohmann::json const& j, char const* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (nlohmann::json::exception const& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

MixedSequence state_from_json(nlohmann::json const& j) {
  try {
    return from_json_record(j);
  } catch (DataError const& e) {
    throw ConfigError(std::string("oracle state: ") + e.what());
  }
}

}  // namespace

SequenceLimits RunConfig::limits() const {
  SequenceLimits l;
  l.vocab = vocab;
  l.image_dim = image_dim;
  l.max_len = max_len;
  return l;
}

nlohmann::json RunConfig::resolved() const {
  nlohmann::json j;
  j["version"] = version;
  j["seed"] = seed;
  j["out"] = out;
  j["schedule"] = schedule;
  j["vocab"] = vocab.size;
  j["image_dim"] = image_dim;
  j["max_len"] = max_len;
  nlohmann::json d{{"dataset", data.dataset}, {"count", data.count}};
  if (data.spec) d["spec"] = *data.spec;
  j["data"] = d;
  j["corrupt"] = {{"mode", to_string(corrupt_mode)}, {"repeats", corrupt_repeats}};
  nlohmann::json states = nlohmann::json::array();
  for (auto const& s : oracle.states) states.push_back(to_json_record(s));
  j["oracle"] = {{"mode", to_string(oracle.mode)},
                 {"times", oracle.times},
                 {"states", states},
                 {"max_states", oracle.max_states}};
  j["train"] = train;
  j["model"] = dims;
  j["sampler"] = {{"dt", sample.dt},
                  {"dt_img", sample.dt_img},
                  {"cfg_w", sample.cfg_w},
                  {"mode", to_string(sample.mode)},
                  {"runs", sample.runs},
                  {"two_head", sample.two_head},
                  {"temperature", sample.temperature},
                  {"num_images", sample.num_images},
                  {"guide_velocities", sample.guide_velocities},
                  {"prompt", sample.prompts},
                  {"model", sample.model},
                  {"trace_out", sample.trace_out}};
  j["validate"] = {{"draws", validate.draws},
                   {"alpha", validate.alpha},
                   {"sigmas", validate.sigmas},
                   {"tau_values", validate.tau_values},
                   {"ratio_multiplier", validate.ratio_multiplier}};
  j["report"] = {{"samples", report.samples}, {"dataset", report.dataset}, {"tolerance", report.tolerance}};
  return j;
}

RunConfig parse_config(nlohmann::json const& j, std::filesystem::path const& base) {
  only_keys(j,
            {"version", "seed", "out", "schedule", "vocab", "image_dim", "max_len", "data", "corrupt", "oracle", "train",
             "model", "sampler", "validate", "report"},
            "config");
  RunConfig c;
  c.source = j;
  c.version = get(j, "version", kConfigVersion);
  if (c.version != kConfigVersion) throw ConfigError("unsupported config version " + std::to_string(c.version));
  c.seed = get<std::uint64_t>(j, "seed", 0);
  c.out = resolve(base, get<std::string>(j, "out", "out"));
  if (j.contains("schedule")) c.schedule = j["schedule"].get<Schedule>();
  c.image_dim = get(j, "image_dim", 2);
  c.max_len = get<std::size_t>(j, "max_len", 16);
  if (c.image_dim < 1) throw ConfigError("image_dim must be >= 1");

  if (j.contains("vocab")) {
    auto const& v = j["vocab"];
    if (v.is_number_integer()) {
      c.vocab.size = v.get<int>();
    } else {
      only_keys(v, {"size", "names"}, "vocab");
      c.vocab.size = get(v, "size", 3);
      if (v.contains("names")) {
        auto const names = resolve(base, v["names"].get<std::string>());
        c.vocab.names = read_token_names(names);
        if (c.vocab.names.size() != static_cast<std::size_t>(c.vocab.size))
          throw ConfigError("vocab: names file has " + std::to_string(c.vocab.names.size()) + " entries, size is " +
                            std::to_string(c.vocab.size));
      }
    }
    if (c.vocab.size < 1) throw ConfigError("vocab size must be >= 1");
  }

  if (j.contains("data")) {
    auto const& d = j["data"];
    only_keys(d, {"dataset", "spec", "count"}, "data");
    c.data.dataset = resolve(base, get<std::string>(d, "dataset", ""));
    c.data.count = get<std::size_t>(d, "count", 1000);
    if (d.contains("spec")) {
      if (d["spec"].is_string())
        c.data.spec = synth::read_spec_file(resolve(base, d["spec"].get<std::string>()));
      else
        c.data.spec = d["spec"].get<synth::GeneratorSpec>();
    }
  }

  if (j.contains("corrupt")) {
    auto const& d = j["corrupt"];
    only_keys(d, {"mode", "repeats"}, "corrupt");
    c.corrupt_mode = parse_mode(get<std::string>(d, "mode", "interleaved"));
    c.corrupt_repeats = get<std::size_t>(d, "repeats", 1);
  }

  if (j.contains("oracle")) {
    auto const& d = j["oracle"];
    only_keys(d, {"mode", "times", "states", "max_states"}, "oracle");
    c.oracle.mode = parse_mode(get<std::string>(d, "mode", "interleaved"));
    c.oracle.times = get(d, "times", c.oracle.times);
    c.oracle.max_states = get(d, "max_states", c.oracle.max_states);
    for (auto const& s : d.value("states", nlohmann::json::array())) c.oracle.states.push_back(state_from_json(s));
    for (double t : c.oracle.times)
      if (!(t >= 0.0 && t < 1.0)) throw ConfigError("oracle: times must lie in [0,1)");
  }

  c.train.seed = c.seed;
  if (j.contains("train")) {
    c.train = j["train"].get<TrainConfig>();
    if (!j["train"].contains("seed")) c.train.seed = c.seed;
  }
  c.dims.vocab = c.vocab.size;
  c.dims.image_dim = c.image_dim;
  c.dims.max_len = c.max_len;
  if (j.contains("model")) {
    auto m = j["model"];
    if (!m.is_object()) throw ConfigError("model must be an object");
    m["vocab"] = c.vocab.size;
    m["image_dim"] = c.image_dim;
    if (!m.contains("max_len")) m["max_len"] = c.max_len;
    c.dims = m.get<ModelDims>();
  }

  if (j.contains("sampler")) {
    auto const& d = j["sampler"];
    only_keys(d,
              {"dt", "dt_img", "steps_img", "cfg_w", "mode", "runs", "two_head", "temperature", "num_images",
               "guide_velocities", "prompt", "model", "trace_out"},
              "sampler");
    auto& s = c.sample;
    s.dt = get(d, "dt", s.dt);
    s.dt_img = get(d, "dt_img", s.dt_img);
    if (d.contains("steps_img")) {
      auto const steps = get<int>(d, "steps_img", 0);
      if (steps < 1) throw ConfigError("sampler: steps_img must be >= 1");
      s.dt_img = 1.0 / steps;
    }
    s.cfg_w = get(d, "cfg_w", s.cfg_w);
    s.mode = parse_mode(get<std::string>(d, "mode", to_string(s.mode)));
    s.runs = get(d, "runs", s.runs);
    s.two_head = get(d, "two_head", s.two_head);
    s.temperature = get(d, "temperature", s.temperature);
    s.num_images = get(d, "num_images", s.num_images);
    s.guide_velocities = get(d, "guide_velocities", s.guide_velocities);
    if (d.contains("prompt")) {
      auto const& pj = d["prompt"];
      if (!pj.is_array()) throw ConfigError("sampler: prompt must be an array");
      if (pj.empty())
        s.prompts.clear();
      else if (pj.front().is_array())
        s.prompts = get(d, "prompt", s.prompts);
      else
        s.prompts = {get(d, "prompt", std::vector<int>{})};
    }
    s.model = get<std::string>(d, "model", s.model);
    if (s.model != "oracle") s.model = resolve(base, s.model);
    s.trace_out = resolve(base, get<std::string>(d, "trace_out", ""));
  }

  if (j.contains("validate")) {
    auto const& d = j["validate"];
    only_keys(d, {"draws", "alpha", "sigmas", "tau_values", "ratio_multiplier"}, "validate");
    auto& v = c.validate;
    v.draws = get(d, "draws", v.draws);
    v.alpha = get(d, "alpha", v.alpha);
    v.sigmas = get(d, "sigmas", v.sigmas);
    v.tau_values = get(d, "tau_values", v.tau_values);
    v.ratio_multiplier = get(d, "ratio_multiplier", v.ratio_multiplier);
    if (!(v.ratio_multiplier > 0.0)) throw ConfigError("validate: ratio_multiplier must be positive");
  }

  if (j.contains("report")) {
    auto const& d = j["report"];
    only_keys(d, {"samples", "dataset", "tolerance"}, "report");
    c.report.samples = resolve(base, get<std::string>(d, "samples", ""));
    c.report.dataset = resolve(base, get<std::string>(d, "dataset", ""));
    c.report.tolerance = get(d, "tolerance", c.report.tolerance);
  }
  return c;
}

RunConfig load_config(std::string const& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (nlohmann::json::exception const& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  // A manifest carries its resolved config.
  if (j.is_object() && j.contains("config") && j.contains("code_version")) j = nlohmann::json(j["config"]);
  auto const base = std::filesystem::absolute(path).parent_path();
  try {
    return parse_config(j, base);
  } catch (nlohmann::json::exception const& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

std::string config_hash(nlohmann::json const& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace eflab::cli
