#include "avf/report.hpp"

#include <stdexcept>

#include "avf/metrics.hpp"

namespace avf {

double MetricReport::family_mean_auc(const std::string& family) const {
  auto it = auc.find(family);
  if (it == auc.end()) throw std::invalid_argument("MetricReport: no family " + family);
  double sum = 0.0;
  int n = 0;
  for (const auto& [severity, value] : it->second) {
    if (severity == 0) continue;  // clean column excluded from the average
    sum += value;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("MetricReport: family has no severities");
  return sum / n;
}

double MetricReport::grand_mean_auc() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& [family, severities] : auc) {
    sum += family_mean_auc(family);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("MetricReport: empty report");
  return sum / n;
}

json MetricReport::to_json() const {
  json j;
  for (const auto& [family, severities] : auc)
    for (const auto& [severity, value] : severities)
      j["auc"][family][std::to_string(severity)] = value;
  for (const auto& [family, severities] : acc)
    for (const auto& [severity, value] : severities)
      j["acc"][family][std::to_string(severity)] = value;
  for (const auto& [family, severities] : auc)
    j["family_mean_auc"][family] = family_mean_auc(family);
  j["grand_mean_auc"] = grand_mean_auc();
  return j;
}

MetricReport MetricReport::from_json(const json& j) {
  MetricReport r;
  for (auto fit = j.at("auc").begin(); fit != j.at("auc").end(); ++fit)
    for (auto sit = fit.value().begin(); sit != fit.value().end(); ++sit)
      r.auc[fit.key()][std::stoi(sit.key())] = sit.value().get<double>();
  for (auto fit = j.at("acc").begin(); fit != j.at("acc").end(); ++fit)
    for (auto sit = fit.value().begin(); sit != fit.value().end(); ++sit)
      r.acc[fit.key()][std::stoi(sit.key())] = sit.value().get<double>();
  return r;
}

MetricReport robustness_sweep(DetectorModel& model, const CorpusManifest& manifest,
                              const std::string& corpus_dir, std::uint64_t seed,
                              const std::string& split) {
  // Load the split once; clips are corrupted fresh for each (family, severity).
  std::vector<VideoClip> clips;
  std::vector<int> labels;
  for (const SampleRecord* r : manifest.split_records(split)) {
    auto [clip, sg, label] = load_sample(corpus_dir, manifest, r->sample_id);
    clips.push_back(std::move(clip));
    labels.push_back(label == Label::fake ? 1 : 0);
  }
  if (clips.empty()) throw std::runtime_error("robustness_sweep: empty split " + split);

  MetricReport report;
  for (CorruptionFamily family : all_corruption_families()) {
    for (int severity = 0; severity <= 5; ++severity) {
      Rng rng(Rng::mix(seed, Rng::mix(static_cast<std::uint64_t>(family), severity)));
      std::vector<double> scores;
      scores.reserve(clips.size());
      for (const VideoClip& clip : clips) {
        CorruptionSpec spec{family, severity};
        scores.push_back(score_video(model, corrupt(clip, spec, rng)));
      }
      report.auc[to_string(family)][severity] = roc_auc(scores, labels);
      report.acc[to_string(family)][severity] = accuracy(scores, labels);
    }
  }
  return report;
}

}  // namespace avf
