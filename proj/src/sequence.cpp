#include "eflab/sequence.hpp"

#include <fstream>
#include <istream>
#include <ostream>

namespace eflab {

std::string Vocabulary::name(int id) const {
  if (id == image_token_id()) return "<|image|>";
  if (id >= 0 && static_cast<std::size_t>(id) < names.size()) return names[static_cast<std::size_t>(id)];
  return std::to_string(id);
}

bool operator==(Element const& a, Element const& b) {
  if (a.is_image() != b.is_image()) return false;
  if (!a.is_image()) return a.token_id() == b.token_id();
  auto const& x = a.image();
  auto const& y = b.image();
  return x.time == y.time && x.values.size() == y.values.size() && x.values == y.values;
}

std::size_t MixedSequence::image_count() const {
  std::size_t n = 0;
  for (auto const& e : elements) n += e.is_image() ? 1 : 0;
  return n;
}

std::vector<int> MixedSequence::symbols(int image_token_id) const {
  std::vector<int> out;
  out.reserve(elements.size());
  for (auto const& e : elements) out.push_back(e.symbol(image_token_id));
  return out;
}

MixedSequence MixedSequence::prompt() const {
  MixedSequence p;
  p.elements.assign(elements.begin(), elements.begin() + static_cast<std::ptrdiff_t>(prompt_len));
  p.prompt_len = prompt_len;
  return p;
}

MixedSequence MixedSequence::without_prompt() const {
  MixedSequence p;
  p.elements.assign(elements.begin() + static_cast<std::ptrdiff_t>(prompt_len), elements.end());
  return p;
}

MixedSequence MixedSequence::from_tokens(std::vector<int> const& ids, std::size_t prompt_len) {
  MixedSequence s;
  s.elements.reserve(ids.size());
  for (int id : ids) s.elements.push_back(Element::token(id));
  s.prompt_len = prompt_len;
  return s;
}

void insert_in_place(MixedSequence& seq, std::size_t gap, int a, SequenceLimits const& limits, Rng& rng) {
  if (gap > seq.size())
    throw IndexError("gap " + std::to_string(gap) + " beyond sequence of length " + std::to_string(seq.size()));
  if (gap < seq.prompt_len) throw IndexError("gap " + std::to_string(gap) + " lies inside the prompt");
  if (seq.generated_size() + 1 > limits.max_len)
    throw CapacityError("sequence would exceed max_len " + std::to_string(limits.max_len));
  auto const pos = seq.elements.begin() + static_cast<std::ptrdiff_t>(gap);
  if (a == limits.vocab.image_token_id()) {
    seq.elements.insert(pos, Element::image(rng.normal_vector(limits.image_dim), 0.0));
  } else {
    if (!limits.vocab.is_token(a)) throw IndexError("token id " + std::to_string(a) + " outside vocabulary");
    seq.elements.insert(pos, Element::token(a));
  }
}

MixedSequence insert(MixedSequence const& seq, std::size_t gap, int a, SequenceLimits const& limits, Rng& rng) {
  MixedSequence out = seq;
  insert_in_place(out, gap, a, limits, rng);
  return out;
}

std::map<int, std::size_t> token_histogram(std::vector<MixedSequence> const& seqs, int image_token_id) {
  std::map<int, std::size_t> hist;
  for (auto const& s : seqs)
    for (auto const& e : s.elements) ++hist[e.symbol(image_token_id)];
  return hist;
}

void validate(MixedSequence const& seq, SequenceLimits const& limits) {
  if (seq.prompt_len > seq.size()) throw DataError("prompt_len exceeds sequence length");
  if (seq.generated_size() > limits.max_len)
    throw DataError("sequence has " + std::to_string(seq.generated_size()) + " generated elements, max_len is " +
                    std::to_string(limits.max_len));
  for (auto const& e : seq.elements) {
    if (e.is_image()) {
      if (e.image().values.size() != limits.image_dim)
        throw DataError("image block of dimension " + std::to_string(e.image().values.size()) + ", expected " +
                        std::to_string(limits.image_dim));
    } else if (!limits.vocab.is_token(e.token_id())) {
      throw DataError("token id " + std::to_string(e.token_id()) + " outside vocabulary of size " +
                      std::to_string(limits.vocab.size));
    }
  }
}

namespace {

nlohmann::json element_json(Element const& e, bool with_times) {
  if (!e.is_image()) return e.token_id();
  auto const& img = e.image();
  nlohmann::json j;
  j["img"] = std::vector<double>(img.values.data(), img.values.data() + img.values.size());
  if (with_times) j["t"] = img.time.tau;
  return j;
}

Element parse_element(nlohmann::json const& j) {
  if (j.is_number_integer()) return Element::token(j.get<int>());
  if (j.is_object() && j.contains("img") && j["img"].is_array()) {
    auto const v = j["img"].get<std::vector<double>>();
    // Images read from data are clean unless a time is recorded.
    double t = j.value("t", 1.0);
    return Element::image(Eigen::Map<Eigen::VectorXd const>(v.data(), static_cast<Eigen::Index>(v.size())), t);
  }
  throw DataError("dataset element must be an integer id or {\"img\": [...]}, got " + j.dump());
}

}  // namespace

nlohmann::json to_json_record(MixedSequence const& seq, std::optional<double> weight, bool with_times) {
  nlohmann::json prompt = nlohmann::json::array();
  nlohmann::json target = nlohmann::json::array();
  for (std::size_t i = 0; i < seq.size(); ++i)
    (i < seq.prompt_len ? prompt : target).push_back(element_json(seq.elements[i], with_times));
  nlohmann::json j{{"prompt", std::move(prompt)}, {"target", std::move(target)}};
  if (weight) j["weight"] = *weight;
  return j;
}

MixedSequence from_json_record(nlohmann::json const& j, double* weight) {
  if (!j.is_object()) throw DataError("dataset record must be a JSON object");
  for (auto const& [key, _] : j.items())
    if (key != "prompt" && key != "target" && key != "weight") throw DataError("dataset record: unknown key '" + key + "'");
  MixedSequence seq;
  if (j.contains("prompt")) {
    if (!j["prompt"].is_array()) throw DataError("'prompt' must be an array");
    for (auto const& e : j["prompt"]) seq.elements.push_back(parse_element(e));
  }
  seq.prompt_len = seq.elements.size();
  if (!j.contains("target") || !j["target"].is_array()) throw DataError("record needs a 'target' array");
  for (auto const& e : j["target"]) seq.elements.push_back(parse_element(e));
  if (weight) {
    *weight = j.value("weight", 1.0);
    if (!(*weight >= 0.0)) throw DataError("record weight must be non-negative");
  }
  return seq;
}

Dataset read_dataset(std::istream& in) {
  Dataset data;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (nlohmann::json::parse_error const& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
    double w = 1.0;
    auto seq = from_json_record(j, &w);
    data.add(std::move(seq), w);
  }
  return data;
}

Dataset read_dataset_file(std::string const& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  return read_dataset(in);
}

void write_dataset(std::ostream& out, Dataset const& data, bool with_weights) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::optional<double> w;
    if (with_weights) w = data.weights[i];
    out << to_json_record(data.records[i], w).dump() << '\n';
  }
}

void write_dataset_file(std::string const& path, Dataset const& data, bool with_weights) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset '" + path + "'");
  write_dataset(out, data, with_weights);
}

std::vector<std::string> read_token_names(std::string const& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open token names '" + path + "'");
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    names.push_back(line);
  }
  return names;
}

}  // namespace eflab
