#pragma once

#include <map>
#include <string>
#include <vector>

#include "avf/corrupt.hpp"
#include "avf/stage2.hpp"

namespace avf {

/// AUC/accuracy per (corruption family, severity), per-family means, and the
/// grand mean. Severity 0 is the clean column.
struct MetricReport {
  // family name -> severity (0..5) -> metric
  std::map<std::string, std::map<int, double>> auc;
  std::map<std::string, std::map<int, double>> acc;

  double family_mean_auc(const std::string& family) const;  // severities 1..5
  double grand_mean_auc() const;
  json to_json() const;
  static MetricReport from_json(const json& j);
};

/// Scores the test split under every (family, severity) pair, corruptions
/// applied before the eval transform. Deterministic in (model, manifest,
/// seed).
MetricReport robustness_sweep(DetectorModel& model, const CorpusManifest& manifest,
                              const std::string& corpus_dir, std::uint64_t seed,
                              const std::string& split = "test");

}  // namespace avf
