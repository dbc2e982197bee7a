// avforge: command-line surface over the two-stage audiovisual forgery
// detection pipeline. Subcommands: generate-data, pretrain, train, evaluate,
// ablate, plots, verify. All runs archive their resolved config and a run
// record beside their outputs.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "avf/config.hpp"
#include "avf/io.hpp"
#include "avf/metrics.hpp"
#include "avf/occlusion.hpp"
#include "avf/plots.hpp"
#include "avf/report.hpp"
#include "avf/runrecord.hpp"
#include "avf/stage1.hpp"
#include "avf/stage2.hpp"

namespace fs = std::filesystem;
using namespace avf;

namespace {

struct Args {
  std::map<std::string, std::string> options;  // --key value
  std::vector<std::string> sets;               // --set a.b=c (repeatable)
  std::vector<std::string> flags;              // bare --flag

  bool has(const std::string& k) const { return options.count(k) || flag(k); }
  bool flag(const std::string& k) const {
    return std::find(flags.begin(), flags.end(), k) != flags.end();
  }
  std::string get(const std::string& k, const std::string& fallback = "") const {
    auto it = options.find(k);
    return it == options.end() ? fallback : it->second;
  }
  std::string require(const std::string& k) const {
    auto it = options.find(k);
    if (it == options.end())
      throw std::invalid_argument("missing required option --" + k);
    return it->second;
  }
};

const char* kUsage = R"(usage: avforge <command> [options]

commands:
  generate-data --config <json> --out <dir>            render the synthetic corpus
  pretrain      --config <json> --corpus <dir> --out <ckpt>   stage-1 pretraining
  train         --config <json> --corpus <dir> --stage1 <ckpt> --out <ckpt>
  evaluate      --model <ckpt> --corpus <dir> --out <dir> [--corruptions]
                [--occlusion <video_id>]
  ablate        --grid {table6|table5} --config <json> --corpus <dir> --out <dir>
  plots         --report <dir> --out <dir>
  verify        --run <dir>

common options:
  --set section.key=value   flat config override (repeatable; applied in order,
                            and each one must leave the config valid — e.g.
                            lower warmup_epochs before epochs)
  --log <path>              training log (json lines)

The workspace root for relative --out paths comes from $AVFORGE_WORKSPACE
(default: current directory).
)";

Args parse_args(int argc, char** argv, int first) {
  Args a;
  // flags that never take a value
  const std::vector<std::string> bare{"corruptions", "help"};
  for (int i = first; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg.rfind("--", 0) != 0)
      throw std::invalid_argument("unexpected positional argument '" + arg + "'");
    arg = arg.substr(2);
    if (arg == "set") {
      if (i + 1 >= argc) throw std::invalid_argument("--set needs a value");
      a.sets.push_back(argv[++i]);
    } else if (std::find(bare.begin(), bare.end(), arg) != bare.end()) {
      a.flags.push_back(arg);
    } else {
      if (i + 1 >= argc) throw std::invalid_argument("--" + arg + " needs a value");
      a.options[arg] = argv[++i];
    }
  }
  return a;
}

fs::path resolve_out(const std::string& out) {
  fs::path p(out);
  if (p.is_absolute()) return p;
  const char* ws = std::getenv("AVFORGE_WORKSPACE");
  return ws ? fs::path(ws) / p : p;
}

ExperimentConfig load_config(const Args& args) {
  ExperimentConfig cfg;
  const std::string path = args.get("config");
  if (!path.empty()) cfg = ExperimentConfig::load(path);
  for (const std::string& s : args.sets) cfg.apply_override(s);
  cfg.validate();
  return cfg;
}

fs::path dir_or_cwd(const fs::path& dir) { return dir.empty() ? fs::path(".") : dir; }

void archive_config(const ExperimentConfig& cfg, const fs::path& dir) {
  const fs::path d = dir_or_cwd(dir);
  fs::create_directories(d);
  cfg.save((d / "resolved_config.json").string());
}

json scores_to_json(const std::vector<ScoredVideo>& scored) {
  json arr = json::array();
  for (const ScoredVideo& v : scored)
    arr.push_back(json{{"video_id", v.video_id}, {"label", v.label}, {"score", v.score}});
  return arr;
}

double auc_of(const std::vector<ScoredVideo>& scored) {
  std::vector<double> s;
  std::vector<int> y;
  for (const ScoredVideo& v : scored) {
    s.push_back(v.score);
    y.push_back(v.label);
  }
  return roc_auc(s, y);
}

int cmd_generate_data(const Args& args) {
  ExperimentConfig cfg = load_config(args);
  const fs::path out = resolve_out(args.require("out"));
  fs::create_directories(out);
  CorpusManifest manifest = build_corpus(cfg.corpus, out);
  archive_config(cfg, out);
  std::cout << "wrote " << manifest.records.size() << " samples to " << out << "\n";
  return 0;
}

int cmd_pretrain(const Args& args) {
  ExperimentConfig cfg = load_config(args);
  const fs::path corpus_dir = args.require("corpus");
  const fs::path out = resolve_out(args.require("out"));
  const std::string log = args.get("log", out.string() + ".log.jsonl");
  fs::create_directories(dir_or_cwd(out.parent_path()));

  CorpusManifest manifest = load_manifest(corpus_dir);
  Stage1Result result = train_stage1(manifest, corpus_dir.string(), cfg.network(),
                                     cfg.stage1, out.string(), log);
  archive_config(cfg, out.parent_path());

  RunRecord rec("pretrain-" + std::to_string(cfg.hash()), cfg.to_json(), cfg.hash());
  for (const EpochLog& l : result.logs) rec.add_epoch_log(l.to_json());
  rec.set_metric("final_loss", result.logs.back().loss);
  rec.set_metric("collapsed", result.collapsed ? 1.0 : 0.0);
  rec.add_artifact("stage1_ckpt", out.string());
  rec.complete();
  rec.save(dir_or_cwd(out.parent_path()).string());
  std::cout << "stage-1 checkpoint: " << out
            << (result.collapsed ? "  [COLLAPSE FLAGGED]" : "") << "\n";
  return 0;
}

int cmd_train(const Args& args) {
  ExperimentConfig cfg = load_config(args);
  const fs::path corpus_dir = args.require("corpus");
  const fs::path out = resolve_out(args.require("out"));
  const std::string log = args.get("log", out.string() + ".log.jsonl");
  fs::create_directories(dir_or_cwd(out.parent_path()));

  Checkpoint stage1;
  const std::string s1path = args.get("stage1");
  if (!s1path.empty()) {
    stage1 = Checkpoint::load(s1path);
  } else {
    if (cfg.stage2.init_from_stage1)
      throw std::runtime_error(
          "train: --stage1 checkpoint required unless stage2.init_from_stage1=false");
    if (cfg.stage2.aux_loss_on && cfg.stage2.aux_weight > 0.0)
      throw std::runtime_error(
          "train: the auxiliary loss needs a stage-1 teacher; pass --stage1 or "
          "disable stage2.aux_loss_on");
    // baseline run: donor checkpoint with a randomly initialised teacher
    Stage1Trainer donor(cfg.network(), cfg.stage1);
    stage1 = donor.make_checkpoint();
  }

  CorpusManifest manifest = load_manifest(corpus_dir);
  DetectorModel model;
  Stage2Result result = train_stage2(manifest, corpus_dir.string(), stage1,
                                     cfg.network(), cfg.stage2, model, log);
  model.make_checkpoint().save(out.string());
  archive_config(cfg, out.parent_path());

  std::vector<ScoredVideo> test = score_split(model, manifest, corpus_dir.string(), "test");
  RunRecord rec("train-" + std::to_string(cfg.hash()), cfg.to_json(), cfg.hash());
  for (const Stage2EpochLog& l : result.logs) rec.add_epoch_log(l.to_json());
  rec.set_metric("best_val_auc", result.best_val_auc);
  rec.set_metric("test_auc", auc_of(test));
  rec.add_artifact("stage2_ckpt", out.string());
  if (!s1path.empty()) rec.add_artifact("stage1_ckpt", s1path);
  rec.complete();
  rec.save(dir_or_cwd(out.parent_path()).string());
  std::cout << "stage-2 checkpoint: " << out << "  val AUC " << result.best_val_auc
            << "  test AUC " << auc_of(test) << "\n";
  return 0;
}

void render_severity_curves(const MetricReport& report, const fs::path& out_dir) {
  std::vector<PlotSeries> series;
  for (const auto& [family, by_sev] : report.auc) {
    PlotSeries s;
    s.name = family;
    for (const auto& [sev, auc] : by_sev) s.points.push_back({double(sev), auc});
    series.push_back(std::move(s));
  }
  write_line_chart((out_dir / "auc_vs_severity.svg").string(), "AUC vs corruption severity",
                   "severity", "AUC", series);
  std::vector<PlotSeries> comp{
      {"compression", {}},
  };
  for (const auto& [sev, auc] : report.auc.at("compression"))
    comp[0].points.push_back({double(sev), auc});
  write_line_chart((out_dir / "auc_vs_compression.svg").string(), "AUC vs compression level",
                   "quantisation severity", "AUC", comp);
}

int cmd_evaluate(const Args& args) {
  const fs::path corpus_dir = args.require("corpus");
  const fs::path out = resolve_out(args.require("out"));
  fs::create_directories(out);
  Checkpoint ckpt = Checkpoint::load(args.require("model"));
  DetectorModel model = DetectorModel::load(ckpt);
  CorpusManifest manifest = load_manifest(corpus_dir);

  std::vector<ScoredVideo> scored = score_split(model, manifest, corpus_dir.string(), "test");
  json metrics;
  metrics["test_auc"] = auc_of(scored);
  {
    std::vector<double> s;
    std::vector<int> y;
    for (const ScoredVideo& v : scored) {
      s.push_back(v.score);
      y.push_back(v.label);
    }
    metrics["test_accuracy"] = accuracy(s, y);
  }
  write_text_file((out / "scores.json").string(), scores_to_json(scored).dump(2) + "\n");

  if (args.flag("corruptions")) {
    MetricReport report = robustness_sweep(model, manifest, corpus_dir.string(),
                                           /*seed=*/0);
    write_text_file((out / "robustness.json").string(), report.to_json().dump(2) + "\n");
    render_severity_curves(report, out);
    metrics["grand_mean_auc"] = report.grand_mean_auc();
  }

  const std::string occl_id = args.get("occlusion");
  if (!occl_id.empty()) {
    VideoClip clip = std::get<0>(load_sample(corpus_dir, manifest, occl_id));
    OcclusionConfig ocfg;
    // shrink the occluder for small desk-scale frames
    ocfg.window = std::min(40, clip.H / 2);
    ocfg.stride = std::max(1, ocfg.window / 5);
    Heatmap map = occlusion_sensitivity(model, clip, ocfg);
    json hm;
    hm["video_id"] = occl_id;
    hm["H"] = map.H;
    hm["W"] = map.W;
    hm["data"] = map.data;
    write_text_file((out / ("occlusion_" + occl_id + ".json")).string(), hm.dump() + "\n");
    write_heatmap_svg((out / ("occlusion_" + occl_id + ".svg")).string(),
                      "occlusion sensitivity: " + occl_id, map);
  }

  write_text_file((out / "metrics.json").string(), metrics.dump(2) + "\n");
  std::cout << "report in " << out << "  test AUC " << metrics["test_auc"] << "\n";
  return 0;
}

int cmd_ablate(const Args& args) {
  ExperimentConfig cfg = load_config(args);
  const std::string grid = args.require("grid");
  const fs::path corpus_dir = args.require("corpus");
  const fs::path out = resolve_out(args.require("out"));
  fs::create_directories(out);
  CorpusManifest manifest = load_manifest(corpus_dir);
  archive_config(cfg, out);

  json table = json::array();
  if (grid == "table6") {
    // {global,dense} x {negatives on/off} x {predictor on/off}
    for (const std::string& emb : {"global", "dense"})
      for (bool neg : {false, true})
        for (bool pred : {false, true}) {
          Stage1Config vc = cfg.stage1;
          vc.embedding = emb;
          vc.negatives = neg;
          vc.predictor = pred;
          if (neg && vc.queue_size <= vc.batch_size) vc.queue_size = 4 * vc.batch_size;
          const std::string name = emb + (neg ? "+neg" : "") + (pred ? "+pred" : "");
          const fs::path ckpt = out / (name + ".ckpt");
          Stage1Result res = train_stage1(manifest, corpus_dir.string(), cfg.network(),
                                          vc, ckpt.string(),
                                          (out / (name + ".log.jsonl")).string());
          json row;
          row["variant"] = name;
          row["embedding"] = emb;
          row["negatives"] = neg;
          row["predictor"] = pred;
          row["collapsed"] = res.collapsed;
          row["final_loss"] = res.logs.back().loss;
          row["final_embed_std"] = res.logs.back().embed_std;
          table.push_back(row);
          std::cout << name << (res.collapsed ? "  COLLAPSED" : "  ok") << "\n";
        }
  } else if (grid == "table5") {
    // framework ablation: only CSN / stage-1 + finetune / full method
    struct Row {
      const char* name;
      bool init;
      double w;
    };
    for (const Row& r : {Row{"only_csn", false, 0.0}, Row{"stage1_finetune", true, 0.0},
                         Row{"full", true, 1.0}}) {
      Stage2Config vc = cfg.stage2;
      vc.init_from_stage1 = r.init;
      vc.aux_weight = r.w;
      vc.aux_loss_on = r.w > 0.0;
      Checkpoint stage1;
      const std::string s1path = args.get("stage1");
      if (!s1path.empty()) {
        stage1 = Checkpoint::load(s1path);
      } else {
        Stage1Trainer donor(cfg.network(), cfg.stage1);
        stage1 = donor.make_checkpoint();
      }
      DetectorModel model;
      Stage2Result res = train_stage2(manifest, corpus_dir.string(), stage1,
                                      cfg.network(), vc, model);
      std::vector<ScoredVideo> test =
          score_split(model, manifest, corpus_dir.string(), "test");
      model.make_checkpoint().save((out / (std::string(r.name) + ".ckpt")).string());
      json row;
      row["variant"] = r.name;
      row["init_from_stage1"] = r.init;
      row["aux_weight"] = r.w;
      row["val_auc"] = res.best_val_auc;
      row["test_auc"] = auc_of(test);
      table.push_back(row);
      std::cout << r.name << "  test AUC " << auc_of(test) << "\n";
    }
  } else {
    throw std::invalid_argument("unknown ablation grid '" + grid + "'");
  }
  write_text_file((out / (grid + ".json")).string(), table.dump(2) + "\n");
  return 0;
}

int cmd_plots(const Args& args) {
  const fs::path report_dir = args.require("report");
  const fs::path out = resolve_out(args.require("out"));
  fs::create_directories(out);
  bool made_any = false;
  const fs::path robustness = report_dir / "robustness.json";
  if (fs::exists(robustness)) {
    MetricReport report =
        MetricReport::from_json(json::parse(read_text_file(robustness.string())));
    render_severity_curves(report, out);
    made_any = true;
  }
  for (const auto& entry : fs::directory_iterator(report_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 10 && name.substr(name.size() - 10) == ".log.jsonl") {
      std::istringstream ss(read_text_file(entry.path().string()));
      PlotSeries loss{"loss", {}};
      std::string line;
      while (std::getline(ss, line)) {
        if (line.empty()) continue;
        json l = json::parse(line);
        loss.points.push_back({l.at("epoch").get<double>(), l.at("loss").get<double>()});
      }
      if (!loss.points.empty()) {
        const std::string stem = name.substr(0, name.size() - 10);
        write_line_chart((out / (stem + ".loss.svg")).string(), "training loss: " + stem,
                         "epoch", "loss", {loss});
        made_any = true;
      }
    }
  }
  if (!made_any) throw std::runtime_error("plots: nothing renderable in " + report_dir.string());
  std::cout << "plots in " << out << "\n";
  return 0;
}

int cmd_verify(const Args& args) {
  const fs::path run_dir = args.require("run");
  RunRecord rec = RunRecord::load(run_dir.string());
  int failures = 0;
  auto report = [&](const std::string& name, bool ok, const std::string& note = "") {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << name;
    if (!note.empty()) std::cout << "  (" << note << ")";
    std::cout << "\n";
    if (!ok) ++failures;
  };

  // EMA algebra (pure closed-form replay)
  {
    double psi = -1.0;
    const double mu = 0.999, theta = 4.0;
    for (int k = 0; k < 100; ++k) psi = mu * psi + (1 - mu) * theta;
    const double expect = theta + std::pow(mu, 100) * (-1.0 - theta);
    report("ema-algebra", std::abs(psi - expect) < 1e-9);
  }
  // AUC oracle spot check
  {
    const double auc = roc_auc({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0});
    report("auc-oracle", auc == 1.0);
  }
  // loss bounds on constructed unit rows
  {
    Tensor z = Tensor::zeros({1, 5, 4});
    Tensor p = Tensor::zeros({1, 5, 4}, true);
    for (int t = 0; t < 5; ++t) {
      z.value()[t * 4] = 1.0;
      p.value()[t * 4 + 1] = 1.0;
    }
    const double l = prediction_loss(z, z, p, p).item();
    report("loss-bounds", l >= 0.0 && l <= 4.0 * 5 && std::abs(l - 10.0) < 1e-9);
  }
  // teacher hash + stop-gradient against stored checkpoints
  const auto& artifacts = rec.artifacts();
  if (artifacts.count("stage1_ckpt")) {
    try {
      Checkpoint c = Checkpoint::load(artifacts.at("stage1_ckpt"));
      const bool ok = c.meta.count("video_teacher_hash") &&
                      c.meta.at("video_teacher_hash") ==
                          std::to_string(group_hash(c, "teacher_v"));
      report("stage1-teacher-hash", ok);
    } catch (const std::exception& e) {
      report("stage1-teacher-hash", false, e.what());
    }
  }
  if (artifacts.count("stage2_ckpt")) {
    try {
      Checkpoint c = Checkpoint::load(artifacts.at("stage2_ckpt"));
      const bool hash_ok = c.meta.count("video_teacher_hash") &&
                           c.meta.at("video_teacher_hash") ==
                               std::to_string(group_hash(c, "teacher_v"));
      report("stage2-teacher-hash", hash_ok);
      DetectorModel m = DetectorModel::load(c);
      report("stage2-teacher-frozen",
             std::to_string(m.teacher_hash()) == c.meta.at("video_teacher_hash"));
      const double w = rec.config().contains("stage2")
                           ? rec.config().at("stage2").value("aux_weight", 1.0)
                           : 1.0;
      if (w == 0.0)
        std::cout << "[N/A ] aux-loss invariants (aux weight 0)\n";
    } catch (const std::exception& e) {
      report("stage2-teacher-hash", false, e.what());
    }
  }
  std::cout << (failures == 0 ? "verification passed" : "verification FAILED") << "\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << kUsage;
    return 2;
  }
  const std::string cmd = argv[1];
  try {
    Args args = parse_args(argc, argv, 2);
    if (cmd == "generate-data") return cmd_generate_data(args);
    if (cmd == "pretrain") return cmd_pretrain(args);
    if (cmd == "train") return cmd_train(args);
    if (cmd == "evaluate") return cmd_evaluate(args);
    if (cmd == "ablate") return cmd_ablate(args);
    if (cmd == "plots") return cmd_plots(args);
    if (cmd == "verify") return cmd_verify(args);
    if (cmd == "--help" || cmd == "help") {
      std::cout << kUsage;
      return 0;
    }
    std::cerr << "unknown command '" << cmd << "'\n" << kUsage;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "avforge " << cmd << ": " << e.what() << "\n";
    return 1;
  }
}
