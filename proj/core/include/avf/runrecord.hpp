#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace avf {

using json = nlohmann::ordered_json;

/// Persistent record of one pipeline run: resolved config + hash, per-epoch
/// logs, final metrics, artifact paths. Immutable once completed.
class RunRecord {
 public:
  RunRecord() = default;
  RunRecord(std::string run_id, json resolved_config, std::uint64_t config_hash);

  void add_epoch_log(const json& log);
  void set_metric(const std::string& name, double value);
  void add_artifact(const std::string& name, const std::string& path);
  void complete();

  const std::string& run_id() const { return run_id_; }
  std::uint64_t config_hash() const { return config_hash_; }
  const json& config() const { return config_; }
  const std::vector<json>& epoch_logs() const { return epoch_logs_; }
  const json& final_metrics() const { return metrics_; }
  const std::map<std::string, std::string>& artifacts() const { return artifacts_; }
  bool completed() const { return completed_; }

  json to_json() const;
  static RunRecord from_json(const json& j);
  /// Writes <run_dir>/run.json (and refuses to overwrite a completed record
  /// with a different one).
  void save(const std::string& run_dir) const;
  static RunRecord load(const std::string& run_dir);

  static const char* version();  // artifact version stamp

 private:
  void mutable_or_throw() const;
  std::string run_id_;
  std::string version_;
  std::uint64_t config_hash_ = 0;
  json config_;
  std::vector<json> epoch_logs_;
  json metrics_ = json::object();
  std::map<std::string, std::string> artifacts_;
  bool completed_ = false;
};

}  // namespace avf
