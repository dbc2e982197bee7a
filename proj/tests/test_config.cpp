#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "avf/config.hpp"
#include "avf/io.hpp"
#include "avf/plots.hpp"
#include "avf/runrecord.hpp"

using namespace avf;

TEST_CASE("experiment config round-trips through json exactly") {
  ExperimentConfig c;
  c.profile = "tiny";
  c.stage1.lr = 1e-3;
  c.stage2.aux_weight = 0.5;
  c.corpus.frame_size = 64;
  ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.hash() == c.hash());
  ExperimentConfig other;
  CHECK(other.hash() != c.hash());
}

TEST_CASE("unknown keys are rejected at every level") {
  ExperimentConfig c;
  json j = c.to_json();
  j["surprise"] = 1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), std::invalid_argument);
  j.erase("surprise");
  j["stage1"]["surprise"] = 1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), std::invalid_argument);
  j["stage1"].erase("surprise");
  j["eval"]["surprise"] = 1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), std::invalid_argument);
}

TEST_CASE("warmup longer than training is rejected before any compute") {
  ExperimentConfig c;
  json j = c.to_json();
  j["stage1"]["warmup_epochs"] = 500;
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), std::invalid_argument);
}

TEST_CASE("flat overrides parse values and re-validate") {
  ExperimentConfig c;
  c.apply_override("stage1.lr=0.001");
  CHECK(c.stage1.lr == doctest::Approx(0.001));
  c.apply_override("profile=tiny");
  CHECK(c.profile == "tiny");
  c.apply_override("corpus.frame_size=64");
  CHECK(c.corpus.frame_size == 64);
  c.apply_override("stage2.logit_adjustment_on=false");
  CHECK_FALSE(c.stage2.logit_adjustment_on);
  CHECK_THROWS_AS(c.apply_override("nosuch.key=1"), std::invalid_argument);
  CHECK_THROWS_AS(c.apply_override("stage1.mystery=1"), std::invalid_argument);
  CHECK_THROWS_AS(c.apply_override("stage1.lr"), std::invalid_argument);
  CHECK_THROWS_AS(c.apply_override("stage1.warmup_epochs=999"), std::invalid_argument);
}

TEST_CASE("config file save/load") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "avf_cfg.json").string();
  ExperimentConfig c;
  c.profile = "tiny";
  c.save(path);
  ExperimentConfig back = ExperimentConfig::load(path);
  CHECK(back.to_json() == c.to_json());
  fs::remove(path);
}

TEST_CASE("run records are immutable after completion") {
  RunRecord r("run-1", json{{"profile", "tiny"}}, 42);
  r.add_epoch_log(json{{"epoch", 0}, {"loss", 1.5}});
  r.set_metric("test_auc", 0.75);
  r.add_artifact("stage1_ckpt", "runs/run-1/stage1.ckpt");
  r.complete();
  CHECK_THROWS_AS(r.add_epoch_log(json{{"epoch", 1}}), std::logic_error);
  CHECK_THROWS_AS(r.set_metric("x", 1.0), std::logic_error);
  CHECK_THROWS_AS(r.add_artifact("a", "b"), std::logic_error);

  RunRecord back = RunRecord::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  CHECK(back.completed());
  CHECK(back.config_hash() == 42);
}

TEST_CASE("a completed run record on disk cannot be silently replaced") {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "avf_run_rec").string();
  fs::remove_all(dir);
  RunRecord r("run-2", json::object(), 7);
  r.set_metric("auc", 0.5);
  r.complete();
  r.save(dir);
  r.save(dir);  // identical re-save is fine

  RunRecord other("run-2", json::object(), 7);
  other.set_metric("auc", 0.99);
  other.complete();
  CHECK_THROWS_AS(other.save(dir), std::logic_error);
  fs::remove_all(dir);
}

TEST_CASE("line charts and heatmaps render to valid svg") {
  namespace fs = std::filesystem;
  const std::string chart = (fs::temp_directory_path() / "avf_chart.svg").string();
  std::vector<PlotSeries> series{
      {"noise", {{1, 0.9}, {2, 0.85}, {3, 0.8}, {4, 0.7}, {5, 0.6}}},
      {"blur", {{1, 0.88}, {2, 0.86}, {3, 0.83}, {4, 0.8}, {5, 0.75}}}};
  write_line_chart(chart, "AUC vs severity", "severity", "AUC", series);
  std::string svg = read_text_file(chart);
  CHECK(svg.rfind("<svg", 0) == 0);
  std::size_t polylines = 0, pos = 0;
  while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
    ++polylines;
    pos += 9;
  }
  CHECK(polylines == 2);
  CHECK(svg.find("noise") != std::string::npos);
  fs::remove(chart);

  const std::string hm = (fs::temp_directory_path() / "avf_hm.svg").string();
  Heatmap map;
  map.H = 4;
  map.W = 5;
  map.data.assign(20, 0.0);
  map.at(1, 2) = 1.0;
  write_heatmap_svg(hm, "occlusion", map);
  std::string hsvg = read_text_file(hm);
  std::size_t rects = 0;
  pos = 0;
  while ((pos = hsvg.find("<rect", pos)) != std::string::npos) {
    ++rects;
    pos += 5;
  }
  CHECK(rects == 20);
  fs::remove(hm);

  CHECK_THROWS_AS(write_line_chart(chart, "t", "x", "y", {}), std::invalid_argument);
}
