#include "avf/runrecord.hpp"

#include <filesystem>
#include <stdexcept>

#include "avf/io.hpp"

namespace avf {

const char* RunRecord::version() { return "avforge-0.1.0"; }

RunRecord::RunRecord(std::string run_id, json resolved_config, std::uint64_t config_hash)
    : run_id_(std::move(run_id)),
      version_(version()),
      config_hash_(config_hash),
      config_(std::move(resolved_config)) {
  if (run_id_.empty()) throw std::invalid_argument("RunRecord: empty run_id");
}

void RunRecord::mutable_or_throw() const {
  if (completed_)
    throw std::logic_error("RunRecord '" + run_id_ + "' is completed and immutable");
}

void RunRecord::add_epoch_log(const json& log) {
  mutable_or_throw();
  epoch_logs_.push_back(log);
}

void RunRecord::set_metric(const std::string& name, double value) {
  mutable_or_throw();
  metrics_[name] = value;
}

void RunRecord::add_artifact(const std::string& name, const std::string& path) {
  mutable_or_throw();
  artifacts_[name] = path;
}

void RunRecord::complete() { completed_ = true; }

json RunRecord::to_json() const {
  json j;
  j["run_id"] = run_id_;
  j["version"] = version_;
  j["config_hash"] = config_hash_;
  j["config"] = config_;
  j["epoch_logs"] = epoch_logs_;
  j["final_metrics"] = metrics_;
  j["artifacts"] = artifacts_;
  j["completed"] = completed_;
  return j;
}

RunRecord RunRecord::from_json(const json& j) {
  RunRecord r;
  r.run_id_ = j.at("run_id").get<std::string>();
  r.version_ = j.at("version").get<std::string>();
  r.config_hash_ = j.at("config_hash").get<std::uint64_t>();
  r.config_ = j.at("config");
  for (const json& l : j.at("epoch_logs")) r.epoch_logs_.push_back(l);
  r.metrics_ = j.at("final_metrics");
  for (auto it = j.at("artifacts").begin(); it != j.at("artifacts").end(); ++it)
    r.artifacts_[it.key()] = it.value().get<std::string>();
  r.completed_ = j.at("completed").get<bool>();
  return r;
}

void RunRecord::save(const std::string& run_dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(run_dir);
  const std::string path = (fs::path(run_dir) / "run.json").string();
  if (fs::exists(path)) {
    RunRecord existing = load(run_dir);
    if (existing.completed_ && existing.to_json() != to_json())
      throw std::logic_error("refusing to overwrite completed run record at " + path);
  }
  write_text_file(path, to_json().dump(2) + "\n");
}

RunRecord RunRecord::load(const std::string& run_dir) {
  const std::string path =
      (std::filesystem::path(run_dir) / "run.json").string();
  return from_json(json::parse(read_text_file(path)));
}

}  // namespace avf
