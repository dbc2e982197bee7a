#include "avf/config.hpp"

#include <stdexcept>

#include "avf/io.hpp"

namespace avf {

json EvalConfig::to_json() const {
  json j;
  j["corruptions"] = corruptions;
  j["occlusion_video"] = occlusion_video;
  j["occlusion_window"] = occlusion_window;
  j["occlusion_stride"] = occlusion_stride;
  j["seed"] = seed;
  return j;
}

EvalConfig EvalConfig::from_json(const json& j) {
  EvalConfig c;
  json known = c.to_json();
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key()))
      throw std::invalid_argument("EvalConfig: unknown key '" + it.key() + "'");
  c.corruptions = j.value("corruptions", c.corruptions);
  c.occlusion_video = j.value("occlusion_video", c.occlusion_video);
  c.occlusion_window = j.value("occlusion_window", c.occlusion_window);
  c.occlusion_stride = j.value("occlusion_stride", c.occlusion_stride);
  c.seed = j.value("seed", c.seed);
  if (c.occlusion_window <= 0 || c.occlusion_stride <= 0)
    throw std::invalid_argument("EvalConfig: occlusion window/stride must be positive");
  return c;
}

void ExperimentConfig::validate() const {
  NetworkSpec::by_name(profile).validate();  // throws on unknown profile
  stage1.validate();
  stage2.validate();
}

json ExperimentConfig::to_json() const {
  json j;
  j["profile"] = profile;
  j["corpus"] = corpus.to_json();
  j["stage1"] = stage1.to_json();
  j["stage2"] = stage2.to_json();
  j["eval"] = eval.to_json();
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  json known = c.to_json();
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key()))
      throw std::invalid_argument("ExperimentConfig: unknown key '" + it.key() + "'");
  if (j.contains("profile")) c.profile = j.at("profile").get<std::string>();
  if (j.contains("corpus")) c.corpus = CorpusConfig::from_json(j.at("corpus"));
  if (j.contains("stage1")) c.stage1 = Stage1Config::from_json(j.at("stage1"));
  if (j.contains("stage2")) c.stage2 = Stage2Config::from_json(j.at("stage2"));
  if (j.contains("eval")) c.eval = EvalConfig::from_json(j.at("eval"));
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_json(json::parse(read_text_file(path)));
}

void ExperimentConfig::save(const std::string& path) const {
  write_text_file(path, to_json().dump(2) + "\n");
}

void ExperimentConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override must look like section.key=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);  // numbers, booleans, quoted strings
  } catch (const json::parse_error&) {
    value = raw;  // bare string
  }

  json j = to_json();
  json* node = &j;
  std::size_t begin = 0;
  while (true) {
    const std::size_t dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot - begin);
    if (key.empty()) throw std::invalid_argument("bad override path: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    if (!node->contains(key))
      throw std::invalid_argument("unknown override section '" + key + "'");
    node = &(*node)[key];
    begin = dot + 1;
  }
  *this = from_json(j);  // strict re-parse validates the result
}

std::uint64_t ExperimentConfig::hash() const {
  const std::string s = to_json().dump();
  return fnv1a64(s.data(), s.size());
}

}  // namespace avf
