#pragma once

#include <string>
#include <vector>

#include "avf/corpus.hpp"
#include "avf/stage1.hpp"
#include "avf/stage2.hpp"

namespace avf {

struct EvalConfig {
  bool corruptions = false;
  std::string occlusion_video;  // sample_id to render a heatmap for; empty = off
  int occlusion_window = 40;
  int occlusion_stride = 8;
  std::uint64_t seed = 0;

  json to_json() const;
  static EvalConfig from_json(const json& j);
};

/// Top-level experiment description: corpus, both stages, evaluation, and the
/// network profile. Serialises to JSON with strict unknown-key rejection.
struct ExperimentConfig {
  std::string profile = "desk";  // NetworkSpec profile name
  CorpusConfig corpus;
  Stage1Config stage1;
  Stage2Config stage2;
  EvalConfig eval;

  NetworkSpec network() const { return NetworkSpec::by_name(profile); }
  void validate() const;
  json to_json() const;
  static ExperimentConfig from_json(const json& j);
  static ExperimentConfig load(const std::string& path);
  void save(const std::string& path) const;

  /// Applies a flat `--set section.key=value` override (e.g.
  /// "stage1.lr=1e-3", "corpus.frame_size=64", "profile=tiny").
  void apply_override(const std::string& assignment);

  /// FNV-1a over the canonical serialisation; the reproducibility stamp.
  std::uint64_t hash() const;
};

}  // namespace avf
