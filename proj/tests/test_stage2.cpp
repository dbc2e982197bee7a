#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "avf/metrics.hpp"
#include "avf/stage1.hpp"
#include "avf/stage2.hpp"

using namespace avf;

namespace {

Checkpoint tiny_stage1_checkpoint() {
  Stage1Config cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.warmup_epochs = 0;
  cfg.seed = 3;
  Stage1Trainer trainer(NetworkSpec::tiny(), cfg);
  std::vector<AvSample> data;
  for (int i = 0; i < 2; ++i) {
    auto [clip, spec] = generate_real(77, i, 25, 48, 0.01);
    data.push_back(AvSample{std::move(clip), std::move(spec)});
  }
  trainer.step(data, 1e-3, nullptr);
  return trainer.make_checkpoint();
}

struct TempCorpus {
  std::filesystem::path dir;
  CorpusManifest manifest;
  TempCorpus() {
    dir = std::filesystem::temp_directory_path() / "avf_stage2_corpus";
    std::filesystem::remove_all(dir);
    CorpusConfig cfg;
    cfg.seed = 9;
    cfg.frame_size = 48;
    cfg.real_counts = {4, 2, 2};
    cfg.fake_per_family = {2, 1, 1};
    cfg.families = {Family::desync};
    manifest = build_corpus(cfg, dir);
  }
  ~TempCorpus() { std::filesystem::remove_all(dir); }
};

VideoClip tiny_clip(std::uint64_t seed, int frames = 25) {
  auto [clip, spec] = generate_real(seed, 0, std::max(frames, 25), 48, 0.01);
  clip.T = frames;
  clip.data.resize(static_cast<std::size_t>(frames) * clip.H * clip.W * 3);
  return clip;
}

}  // namespace

TEST_CASE("supervised loss closed forms at cos = 0") {
  // adjusted, pi = 1/9: every logit is ln(1/8), score 1/9
  const double logit = std::log(1.0 / 8.0);
  Tensor adj = Tensor::full({9}, logit, true);
  std::vector<int> labels{1, 0, 0, 0, 0, 0, 0, 0, 0};
  const double expect = (std::log(9.0) + 8.0 * std::log(9.0 / 8.0)) / 9.0;
  CHECK(supervised_loss(adj, labels).item() == doctest::Approx(expect).epsilon(1e-9));

  // unadjusted: logits 0 -> score 0.5 -> ln 2 regardless of labels
  Tensor flat = Tensor::zeros({9}, true);
  CHECK(supervised_loss(flat, labels).item() == doctest::Approx(std::log(2.0)));

  // near-perfect predictions -> loss near 0
  Tensor sharp = Tensor::zeros({2}, true);
  sharp.value()[0] = 30.0;
  sharp.value()[1] = -30.0;
  CHECK(supervised_loss(sharp, {1, 0}).item() < 1e-9);

  CHECK_THROWS_AS(supervised_loss(flat, {2, 0, 0, 0, 0, 0, 0, 0, 0}),
                  std::invalid_argument);
}

TEST_CASE("logit adjustment is a constant shift: ranking unchanged") {
  Checkpoint s1 = tiny_stage1_checkpoint();
  DetectorModel model(NetworkSpec::tiny(), s1, true, 4);
  std::vector<VideoClip> clips;
  for (int i = 0; i < 3; ++i) clips.push_back(tiny_clip(100 + i));
  NoGradGuard ng;
  Tensor x = pack_clips(clips);
  const double pi = 32.0 / 288.0;
  Tensor on = model.clip_logits(x, pi, true, false);
  Tensor off = model.clip_logits(x, pi, false, false);
  const double shift = std::log(pi / (1.0 - pi));
  for (int i = 0; i < 3; ++i)
    CHECK(on.value()[i] - off.value()[i] == doctest::Approx(shift).epsilon(1e-9));
}

TEST_CASE("aux loss: batched value equals the mean of per-sample values") {
  Checkpoint s1 = tiny_stage1_checkpoint();
  DetectorModel model(NetworkSpec::tiny(), s1, true, 4);
  std::vector<VideoClip> clips{tiny_clip(201), tiny_clip(202)};
  NoGradGuard ng;
  const double batched = model.aux_loss(pack_clips(clips), false).item();
  const double a = model.aux_loss(pack_clips({clips[0]}), false).item();
  const double b = model.aux_loss(pack_clips({clips[1]}), false).item();
  CHECK(batched == doctest::Approx(0.5 * (a + b)).epsilon(1e-6));
  CHECK(batched >= 0.0);
}

TEST_CASE("aux loss rejects fake-labelled samples") {
  Checkpoint s1 = tiny_stage1_checkpoint();
  DetectorModel model(NetworkSpec::tiny(), s1, true, 4);
  Tensor x = pack_clips({tiny_clip(300)});
  CHECK_THROWS_AS(aux_loss_checked(model, x, {1}, false), std::invalid_argument);
  CHECK(aux_loss_checked(model, x, {0}, false).item() >= 0.0);
}

TEST_CASE("loss additivity: total = L_s + w * L_a for w in {0,1,2}") {
  Checkpoint s1 = tiny_stage1_checkpoint();
  DetectorModel model(NetworkSpec::tiny(), s1, true, 4);
  NoGradGuard ng;
  Tensor x = pack_clips({tiny_clip(400), tiny_clip(401)});
  const double ls = supervised_loss(model.clip_logits(x, 0.25, true, false), {0, 0}).item();
  const double la = model.aux_loss(x, false).item();
  for (double w : {0.0, 1.0, 2.0}) {
    const double total =
        supervised_loss(model.clip_logits(x, 0.25, true, false), {0, 0}).item() +
        w * model.aux_loss(x, false).item();
    CHECK(total == doctest::Approx(ls + w * la).epsilon(1e-9));
  }
}

TEST_CASE("video scoring follows the clip-partition contract") {
  Checkpoint s1 = tiny_stage1_checkpoint();
  DetectorModel model(NetworkSpec::tiny(), s1, true, 4);

  SUBCASE("110 frames -> mean of 4 clip scores") {
    auto [long_clip, sg] = generate_real(55, 0, 110, 48, 0.01);
    const double video_score = score_video(model, long_clip);
    double mean = 0.0;
    for (int c = 0; c < 4; ++c) {
      VideoClip sub;
      sub.T = 25;
      sub.H = long_clip.H;
      sub.W = long_clip.W;
      sub.data.assign(
          long_clip.data.begin() + static_cast<std::size_t>(c) * 25 * 48 * 48 * 3,
          long_clip.data.begin() + static_cast<std::size_t>(c + 1) * 25 * 48 * 48 * 3);
      mean += score_video(model, sub);
    }
    mean /= 4.0;
    CHECK(video_score == doctest::Approx(mean).epsilon(1e-9));
    CHECK(video_score >= 0.0);
    CHECK(video_score <= 1.0);
  }

  SUBCASE("10 frames loop-pad to one 25-frame clip") {
    VideoClip short_clip = tiny_clip(66, 10);
    const double s = score_video(model, short_clip);
    // explicit loop-pad oracle
    VideoClip padded;
    padded.T = 25;
    padded.H = short_clip.H;
    padded.W = short_clip.W;
    padded.data.resize(static_cast<std::size_t>(25) * 48 * 48 * 3);
    for (int t = 0; t < 25; ++t)
      std::copy_n(short_clip.data.begin() + static_cast<std::size_t>(t % 10) * 48 * 48 * 3,
                  48 * 48 * 3,
                  padded.data.begin() + static_cast<std::size_t>(t) * 48 * 48 * 3);
    CHECK(s == doctest::Approx(score_video(model, padded)).epsilon(1e-9));
  }

  SUBCASE("empty video is an error") {
    VideoClip empty;
    empty.T = 0;
    CHECK_THROWS_AS(score_video(model, empty), std::invalid_argument);
  }
}

TEST_CASE("hand-corrupted teacher weights abort construction") {
  Checkpoint s1 = tiny_stage1_checkpoint();
  auto it = s1.arrays.lower_bound("teacher_v/");
  REQUIRE(it != s1.arrays.end());
  it->second[0] += 1.0;
  CHECK_THROWS_WITH_AS(DetectorModel(NetworkSpec::tiny(), s1, true, 4),
                       doctest::Contains("teacher hash mismatch"), std::runtime_error);
}

TEST_CASE("config validation and json round-trip") {
  Stage2Config c;
  c.validate();
  c.batch_fake = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = Stage2Config{};
  c.aux_weight = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = Stage2Config{};
  CHECK(c.prior_pi() == doctest::Approx(32.0 / 288.0));
  json j = c.to_json();
  j["extra"] = true;
  CHECK_THROWS_AS(Stage2Config::from_json(j), std::invalid_argument);
  j.erase("extra");
  j["aux_weight"] = 2.5;
  CHECK(Stage2Config::from_json(j).aux_weight == doctest::Approx(2.5));
}

TEST_CASE("end-to-end training smoke: frozen teacher, sane logs, stable scores") {
  TempCorpus corpus;
  Checkpoint s1 = tiny_stage1_checkpoint();
  Stage2Config cfg;
  cfg.epochs = 2;
  cfg.warmup_epochs = 0;
  cfg.batch_fake = 2;
  cfg.batch_real = 4;
  cfg.patience = 5;
  cfg.seed = 8;
  DetectorModel model;
  Stage2Result res = train_stage2(corpus.manifest, corpus.dir.string(), s1,
                                  NetworkSpec::tiny(), cfg, model);
  REQUIRE(res.logs.size() == 2);
  for (const Stage2EpochLog& l : res.logs) {
    CHECK(std::isfinite(l.loss));
    CHECK(l.val_auc >= 0.0);
    CHECK(l.val_auc <= 1.0);
  }
  CHECK(res.best_epoch >= 0);

  // checkpoint round-trip preserves scores exactly
  std::vector<ScoredVideo> test_scores =
      score_split(model, corpus.manifest, corpus.dir.string(), "test");
  Checkpoint ckpt = model.make_checkpoint();
  DetectorModel reloaded = DetectorModel::load(ckpt);
  std::vector<ScoredVideo> again =
      score_split(reloaded, corpus.manifest, corpus.dir.string(), "test");
  REQUIRE(test_scores.size() == again.size());
  for (std::size_t i = 0; i < test_scores.size(); ++i)
    CHECK(test_scores[i].score == doctest::Approx(again[i].score).epsilon(1e-12));
}
