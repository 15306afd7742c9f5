#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "eflab/metrics.hpp"
#include "eflab/oracle.hpp"
#include "eflab/parallel.hpp"

#ifndef EFLAB_VERSION
#define EFLAB_VERSION "dev"
#endif

namespace eflab::cli {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(fs::path const& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

fs::path out_path(RunConfig const& cfg, char const* name) {
  fs::create_directories(cfg.out);
  return fs::path(cfg.out) / name;
}

Dataset load_data(RunConfig const& cfg, unsigned threads) {
  Dataset data;
  if (!cfg.data.dataset.empty()) {
    data = read_dataset_file(cfg.data.dataset);
  } else if (cfg.data.spec) {
    Rng rng(cfg.seed);
    data = synth::generate(*cfg.data.spec, cfg.data.count, rng, threads);
  } else {
    throw ConfigError("no data: set data.dataset or data.spec");
  }
  if (data.size() == 0) throw DataError("dataset is empty");
  auto const limits = cfg.limits();
  for (auto const& r : data.records) validate(r, limits);
  return data;
}

nlohmann::json heads_json(InsertionHeads const& h) {
  nlohmann::json gaps = nlohmann::json::array();
  for (Eigen::Index g = 0; g < h.gap_count(); ++g) {
    std::vector<double> q(h.q.rows());
    for (Eigen::Index a = 0; a < h.q.rows(); ++a) q[a] = h.q(a, g);
    gaps.push_back({{"gap", g}, {"pi", h.pi[g]}, {"lambda_nonzero", h.lambda_nonzero[g]}, {"rate", h.rate(g)},
                    {"q", q}});
  }
  return gaps;
}

// Every subsequence of each record's generated part (prompt kept), deduplicated by symbols.
std::vector<MixedSequence> reachable_states(Dataset const& data, int image_token_id, std::size_t budget) {
  std::vector<MixedSequence> states;
  std::set<std::pair<std::size_t, std::vector<int>>> seen;
  for (auto const& r : data.records) {
    std::size_t const n = r.generated_size();
    if (n > 20) throw BudgetError("oracle dump: record with " + std::to_string(n) + " generated elements");
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
      MixedSequence s;
      s.prompt_len = r.prompt_len;
      s.elements.assign(r.elements.begin(), r.elements.begin() + static_cast<std::ptrdiff_t>(r.prompt_len));
      for (std::size_t i = 0; i < n; ++i)
        if (mask >> i & 1) s.elements.push_back(r.elements[r.prompt_len + i]);
      if (!seen.emplace(s.prompt_len, s.symbols(image_token_id)).second) continue;
      if (states.size() == budget) throw BudgetError("oracle dump: more than " + std::to_string(budget) + " states");
      states.push_back(std::move(s));
    }
  }
  return states;
}

SamplerConfig sampler_config(RunConfig const& cfg) {
  SamplerConfig s;
  s.dt = cfg.sample.dt;
  s.dt_img = cfg.sample.dt_img;
  s.guidance_w = cfg.sample.cfg_w;
  s.schedule = cfg.schedule;
  s.mode = cfg.sample.mode;
  s.limits = cfg.limits();
  s.two_head_sampling = cfg.sample.two_head;
  s.temperature = cfg.sample.temperature;
  s.num_images = cfg.sample.num_images;
  s.guide_velocities = cfg.sample.guide_velocities;
  s.validate();
  return s;
}

}  // namespace

void apply(RunConfig& cfg, Overrides const& o) {
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.train.seed = *o.seed;
  }
  if (o.out) cfg.out = fs::absolute(*o.out).lexically_normal().string();
  if (o.dt) cfg.sample.dt = *o.dt;
  if (o.steps_img) {
    if (*o.steps_img < 1) throw ConfigError("--steps-img must be >= 1");
    cfg.sample.dt_img = 1.0 / *o.steps_img;
  }
  if (o.cfg_w) cfg.sample.cfg_w = *o.cfg_w;
  if (o.mode) cfg.sample.mode = parse_mode(*o.mode);
  if (o.runs) cfg.sample.runs = *o.runs;
  if (o.trace_out) cfg.sample.trace_out = fs::absolute(*o.trace_out).lexically_normal().string();
  if (o.dataset) {
    auto const p = fs::absolute(*o.dataset).lexically_normal().string();
    cfg.data.dataset = p;
    cfg.report.dataset = p;
  }
  if (o.model) cfg.sample.model = *o.model == "oracle" ? *o.model : fs::absolute(*o.model).lexically_normal().string();
}

void write_manifest(RunConfig const& cfg, std::string const& command, unsigned threads) {
  auto const resolved = cfg.resolved();
  nlohmann::json m{{"command", command},       {"code_version", EFLAB_VERSION}, {"config_hash", config_hash(resolved)},
                   {"seed", cfg.seed},         {"threads", threads},            {"config", resolved}};
  open_out(out_path(cfg, ("manifest_" + command + ".json").c_str())) << m.dump(2) << '\n';
}

int cmd_gen(RunConfig const& cfg, unsigned threads) {
  if (!cfg.data.spec) throw ConfigError("gen: data.spec is required");
  Rng rng(cfg.seed);
  auto const data = synth::generate(*cfg.data.spec, cfg.data.count, rng, threads);
  write_dataset_file(out_path(cfg, "dataset.jsonl").string(), data, true);
  open_out(out_path(cfg, "stats.json")) << synth::stats(data, cfg.data.spec->vocab).dump(2) << '\n';
  std::cout << "gen: " << data.size() << " records -> " << cfg.out << '\n';
  return 0;
}

int cmd_corrupt(RunConfig const& cfg, unsigned threads) {
  auto const data = load_data(cfg, threads);
  Rng const root(cfg.seed);
  std::size_t const reps = cfg.corrupt_repeats;
  std::vector<std::string> lines(data.size() * reps);
  int const img = cfg.vocab.image_token_id();
  parallel_for(lines.size(), threads, [&](std::size_t k) {
    Rng rng = root.stream(k);
    auto j = to_json(corrupt(data.records[k / reps], cfg.schedule, cfg.corrupt_mode, img, rng));
    j["record"] = k / reps;
    j["repeat"] = k % reps;
    lines[k] = j.dump();
  });
  auto out = open_out(out_path(cfg, "corrupted.jsonl"));
  for (auto const& l : lines) out << l << '\n';
  std::cout << "corrupt: " << lines.size() << " records -> " << cfg.out << '\n';
  return 0;
}

int cmd_oracle(RunConfig const& cfg, unsigned threads) {
  auto const data = load_data(cfg, threads);
  OracleTable::Options opts;
  opts.mode = cfg.oracle.mode;
  OracleTable const table(data, cfg.vocab, cfg.schedule, opts);
  int const img = cfg.vocab.image_token_id();
  auto const states =
      cfg.oracle.states.empty() ? reachable_states(data, img, cfg.oracle.max_states) : cfg.oracle.states;
  std::size_t const nt = cfg.oracle.times.size();
  std::vector<std::string> lines(states.size() * nt);
  parallel_for(lines.size(), threads, [&](std::size_t k) {
    auto const& s = states[k / nt];
    double const t = cfg.oracle.times[k % nt];
    nlohmann::json j{{"state", to_json_record(s)}, {"symbols", s.symbols(img)}, {"t", t}};
    try {
      j["gaps"] = heads_json(table.oracle_heads(s, t));
      j["reachable"] = true;
    } catch (UnreachableStateError const&) {
      j["reachable"] = false;
    }
    lines[k] = j.dump();
  });
  auto out = open_out(out_path(cfg, "oracle.jsonl"));
  for (auto const& l : lines) out << l << '\n';
  std::cout << "oracle: " << states.size() << " states x " << nt << " times -> " << cfg.out << '\n';
  return 0;
}

int cmd_train(RunConfig const& cfg, unsigned threads) {
  auto const data = load_data(cfg, threads);
  auto log = open_out(out_path(cfg, "train_log.jsonl"));
  auto const result = train(data, cfg.train, cfg.schedule, cfg.dims, [&](std::size_t step, LossReport const& r) {
    nlohmann::json j = r;
    j.erase("per_gap");
    j["step"] = step;
    log << j.dump() << '\n';
  });
  auto const ckpt = out_path(cfg, "model.ckpt").string();
  save_checkpoint(ckpt, result.params, cfg.schedule, {{"config_hash", config_hash(cfg.resolved())}});
  auto const& last = result.history.back();
  std::cout << "train: " << result.history.size() << " steps, final loss " << last.grand_total << " -> " << ckpt
            << '\n';
  return 0;
}

int cmd_sample(RunConfig const& cfg, unsigned threads) {
  auto const scfg = sampler_config(cfg);
  std::unique_ptr<OracleTable> table;
  std::unique_ptr<HeadModel> model;
  if (cfg.sample.model == "oracle") {
    OracleTable::Options opts;
    opts.mode = cfg.sample.mode;
    table = std::make_unique<OracleTable>(load_data(cfg, threads), cfg.vocab, cfg.schedule, opts);
    // Simultaneous insertions in one step (or guidance) can leave the data
    // support; such states get zero rates and end as off-support samples.
    model = std::make_unique<OracleModel>(*table, true);
  } else {
    Schedule trained;
    auto params = load_checkpoint(cfg.sample.model, &trained);
    if (params.dims.vocab != cfg.vocab.size || params.dims.image_dim != cfg.image_dim)
      throw ConfigError("checkpoint dims do not match vocab/image_dim of the config");
    if (!(trained == cfg.schedule)) std::cerr << "sample: warning: checkpoint was trained with a different schedule\n";
    model = std::make_unique<ToyModel>(std::move(params));
  }

  auto prompts = cfg.sample.prompts;
  if (prompts.empty()) prompts.push_back({});
  auto const limits = cfg.limits();
  Rng const root(cfg.seed);
  Dataset samples;
  std::vector<GenerationTrace> traces;
  std::size_t truncated = 0, clamps = 0;
  double length_sum = 0.0, image_sum = 0.0;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    auto const prompt = MixedSequence::from_tokens(prompts[p], prompts[p].size());
    validate(prompt, limits);
    auto results = generate_many(prompt, *model, scfg, root.stream(p), cfg.sample.runs, threads);
    for (auto& r : results) {
      truncated += r.trace.truncated;
      clamps += r.trace.clamp_count;
      length_sum += static_cast<double>(r.sequence.generated_size());
      image_sum += static_cast<double>(r.sequence.image_count());
      samples.add(std::move(r.sequence));
      if (!cfg.sample.trace_out.empty()) traces.push_back(std::move(r.trace));
    }
  }
  write_dataset_file(out_path(cfg, "samples.jsonl").string(), samples);
  if (!cfg.sample.trace_out.empty()) {
    auto out = open_out(cfg.sample.trace_out);
    for (std::size_t i = 0; i < traces.size(); ++i) {
      auto j = to_json(traces[i]);
      j["run"] = i;
      out << j.dump() << '\n';
    }
  }
  double const n = static_cast<double>(samples.size());
  nlohmann::json summary{{"runs", samples.size()},
                         {"prompts", prompts.size()},
                         {"mean_generated_length", length_sum / n},
                         {"mean_image_count", image_sum / n},
                         {"truncated_runs", truncated},
                         {"clamped_probabilities", clamps}};
  open_out(out_path(cfg, "summary.json")) << summary.dump(2) << '\n';
  std::cout << "sample: " << summary.dump() << '\n';
  return 0;
}

int cmd_validate_schedule(RunConfig const& cfg, unsigned) {
  auto reports = validation::validate_schedule(cfg.schedule, cfg.validate, cfg.seed);
  reports.push_back(validation::retention_report(cfg.schedule, cfg.validate.draws, 16, 0.0, cfg.seed + 1));
  auto out = open_out(out_path(cfg, "reports.jsonl"));
  bool ok = true;
  for (auto const& r : reports) {
    out << nlohmann::json(r).dump() << '\n';
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " value=" << r.value << " (" << r.semantics
              << ", tolerance " << r.tolerance << ", n=" << r.n << ")\n";
    ok = ok && r.pass;
  }
  return ok ? 0 : 1;
}

int cmd_report(RunConfig const& cfg, unsigned) {
  if (cfg.report.dataset.empty()) throw ConfigError("report: report.dataset is required");
  // samples default to the sample command's output in the same out dir
  auto const samples = read_dataset_file(cfg.report.samples.empty() ? out_path(cfg, "samples.jsonl").string()
                                                                    : cfg.report.samples);
  auto const data = read_dataset_file(cfg.report.dataset);
  if (samples.size() == 0 || data.size() == 0) throw DataError("report: empty input");
  auto const centroids = metrics::class_centroids(data);

  std::vector<metrics::MetricReport> reports;
  metrics::MetricReport tv;
  tv.name = "sequence_tv";
  tv.value = metrics::total_variation(metrics::histogram_of(samples.records, centroids),
                                      metrics::histogram_of(data.records, centroids, data.weights));
  tv.tolerance = cfg.report.tolerance;
  tv.semantics = "value <= tolerance";
  tv.pass = tv.value <= tv.tolerance;
  tv.n = samples.size();
  tv.seed = cfg.seed;
  tv.detail = {{"dataset_records", data.size()}, {"centroids", centroids.size()}};
  reports.push_back(tv);

  auto image_counts = [](Dataset const& d, bool weighted) {
    metrics::Histogram h;
    for (std::size_t i = 0; i < d.size(); ++i)
      h[std::to_string(d.records[i].image_count())] += weighted ? d.weights[i] : 1.0;
    return h;
  };
  metrics::MetricReport ic = tv;
  ic.name = "image_count_tv";
  ic.value = metrics::total_variation(image_counts(samples, false), image_counts(data, true));
  ic.pass = ic.value <= ic.tolerance;
  ic.detail = nlohmann::json::object();
  reports.push_back(ic);

  auto out = open_out(out_path(cfg, "report.jsonl"));
  bool ok = true;
  for (auto const& r : reports) {
    out << nlohmann::json(r).dump() << '\n';
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " value=" << r.value << " (" << r.semantics
              << ", tolerance " << r.tolerance << ", n=" << r.n << ")\n";
    ok = ok && r.pass;
  }
  return ok ? 0 : 1;
}

}  // namespace eflab::cli
