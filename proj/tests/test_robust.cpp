#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "avf/metrics.hpp"
#include "avf/occlusion.hpp"
#include "avf/report.hpp"
#include "avf/stage1.hpp"

using namespace avf;

namespace {

VideoClip small_clip(std::uint64_t seed) {
  auto [clip, spec] = generate_real(seed, 0, 25, 32, 0.01);
  return clip;
}

Checkpoint tiny_stage1_checkpoint() {
  Stage1Config cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.warmup_epochs = 0;
  cfg.seed = 21;
  Stage1Trainer trainer(NetworkSpec::tiny(), cfg);
  std::vector<AvSample> data;
  for (int i = 0; i < 2; ++i) {
    auto [clip, spec] = generate_real(31, i, 25, 48, 0.01);
    data.push_back(AvSample{std::move(clip), std::move(spec)});
  }
  trainer.step(data, 1e-3, nullptr);
  return trainer.make_checkpoint();
}

}  // namespace

TEST_CASE("severity 0 is the identity for every family") {
  VideoClip clip = small_clip(1);
  for (CorruptionFamily f : all_corruption_families()) {
    Rng rng(7);
    VideoClip out = corrupt(clip, CorruptionSpec{f, 0}, rng);
    REQUIRE(out.data == clip.data);
  }
}

TEST_CASE("distortion grows monotonically with severity") {
  const int n_clips = (true) ? 10 : 0;
  for (CorruptionFamily f : all_corruption_families()) {
    std::array<double, 6> dev{};
    for (int c = 0; c < n_clips; ++c) {
      VideoClip clip = small_clip(100 + c);
      for (int s = 0; s <= 5; ++s) {
        Rng rng(static_cast<std::uint64_t>(1000 * c + s));
        dev[s] += mean_abs_deviation(clip, corrupt(clip, CorruptionSpec{f, s}, rng));
      }
    }
    CHECK(dev[0] == 0.0);
    for (int s = 1; s <= 5; ++s) {
      INFO("family ", to_string(f), " severity ", s);
      CHECK(dev[s] > dev[s - 1]);
    }
  }
}

TEST_CASE("noise severity 5 beats severity 1 on 50 clips") {
  int wins = 0;
  for (int c = 0; c < 50; ++c) {
    VideoClip clip = small_clip(500 + c);
    Rng r1(c), r5(c);
    const double d1 = mean_abs_deviation(clip, corrupt(clip, {CorruptionFamily::noise, 1}, r1));
    const double d5 = mean_abs_deviation(clip, corrupt(clip, {CorruptionFamily::noise, 5}, r5));
    if (d5 > d1) ++wins;
  }
  CHECK(wins == 50);
}

TEST_CASE("block corruption: time-constant opaque squares within budget") {
  VideoClip clip = small_clip(2);
  Rng rng(3);
  const int severity = 3;
  VideoClip out = corrupt(clip, {CorruptionFamily::block, severity}, rng);
  const int side = std::max(2, clip.H / 6);
  std::set<std::pair<int, int>> changed;
  for (int y = 0; y < clip.H; ++y)
    for (int x = 0; x < clip.W; ++x)
      for (int t = 0; t < clip.T; ++t)
        for (int ch = 0; ch < 3; ++ch)
          if (out.at(t, y, x, ch) != clip.at(t, y, x, ch)) {
            changed.insert({y, x});
            CHECK(out.at(t, y, x, ch) == 0.0);  // opaque fill
          }
  CHECK(static_cast<int>(changed.size()) <= 6 * side * side);
  // occluded region is identical in every frame
  for (auto [y, x] : changed)
    for (int t = 1; t < clip.T; ++t)
      REQUIRE(out.at(t, y, x, 0) == out.at(0, y, x, 0));
}

TEST_CASE("all corruptions preserve shape and the [0,1] range") {
  VideoClip clip = small_clip(4);
  for (CorruptionFamily f : all_corruption_families())
    for (int s = 1; s <= 5; ++s) {
      Rng rng(11);
      VideoClip out = corrupt(clip, CorruptionSpec{f, s}, rng);
      REQUIRE(out.T == clip.T);
      REQUIRE(out.H == clip.H);
      REQUIRE(out.W == clip.W);
      for (double v : out.data) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
      }
    }
}

TEST_CASE("corruption is deterministic given the rng seed") {
  VideoClip clip = small_clip(5);
  for (CorruptionFamily f : {CorruptionFamily::noise, CorruptionFamily::block}) {
    Rng a(42), b(42);
    CHECK(corrupt(clip, {f, 4}, a).data == corrupt(clip, {f, 4}, b).data);
  }
  CHECK_THROWS_AS(
      [&] {
        Rng rng(0);
        return corrupt(clip, {CorruptionFamily::noise, 6}, rng);
      }(),
      std::invalid_argument);
}

TEST_CASE("metric report averages re-derive from the raw records") {
  MetricReport r;
  for (int s = 0; s <= 5; ++s) r.auc["noise"][s] = 0.5 + 0.05 * s;
  for (int s = 0; s <= 5; ++s) r.auc["blur"][s] = 0.9;
  for (int s = 0; s <= 5; ++s) {
    r.acc["noise"][s] = 0.5;
    r.acc["blur"][s] = 0.5;
  }
  CHECK(r.family_mean_auc("noise") == doctest::Approx((0.55 + 0.6 + 0.65 + 0.7 + 0.75) / 5));
  CHECK(r.family_mean_auc("blur") == doctest::Approx(0.9));
  CHECK(r.grand_mean_auc() ==
        doctest::Approx(0.5 * (r.family_mean_auc("noise") + r.family_mean_auc("blur"))));
  MetricReport back = MetricReport::from_json(r.to_json());
  CHECK(back.auc == r.auc);
  CHECK(back.acc == r.acc);
  CHECK_THROWS_AS(r.family_mean_auc("saturation"), std::invalid_argument);
}

TEST_CASE("sweep: clean column matches uncorrupted evaluation; deterministic") {
  auto dir = std::filesystem::temp_directory_path() / "avf_robust_corpus";
  std::filesystem::remove_all(dir);
  CorpusConfig ccfg;
  ccfg.seed = 13;
  ccfg.frame_size = 48;
  ccfg.real_counts = {2, 1, 2};
  ccfg.fake_per_family = {1, 1, 1};
  ccfg.families = {Family::desync};
  CorpusManifest manifest = build_corpus(ccfg, dir);

  Checkpoint s1 = tiny_stage1_checkpoint();
  DetectorModel model(NetworkSpec::tiny(), s1, true, 6);
  MetricReport report = robustness_sweep(model, manifest, dir.string(), 99);

  // clean column equals plain split scoring
  std::vector<ScoredVideo> plain = score_split(model, manifest, dir.string(), "test");
  std::vector<double> scores;
  std::vector<int> labels;
  for (const ScoredVideo& v : plain) {
    scores.push_back(v.score);
    labels.push_back(v.label);
  }
  const double clean_auc = roc_auc(scores, labels);
  for (CorruptionFamily f : all_corruption_families())
    CHECK(report.auc.at(to_string(f)).at(0) == doctest::Approx(clean_auc));

  MetricReport again = robustness_sweep(model, manifest, dir.string(), 99);
  CHECK(again.to_json() == report.to_json());
  std::filesystem::remove_all(dir);
}

TEST_CASE("occlusion: tiling case and bounds") {
  Checkpoint s1 = tiny_stage1_checkpoint();
  DetectorModel model(NetworkSpec::tiny(), s1, true, 6);
  VideoClip clip = small_clip(77);  // 32x32

  OcclusionConfig cfg;
  cfg.window = 16;
  cfg.stride = 16;  // exact tiling: 2x2 windows
  cfg.normalize = false;
  Heatmap map = occlusion_sensitivity(model, clip, cfg);
  REQUIRE(map.H == 32);
  REQUIRE(map.W == 32);
  // every pixel covered exactly once -> map is constant within each tile
  for (int ty = 0; ty < 2; ++ty)
    for (int tx = 0; tx < 2; ++tx) {
      const double ref = map.at(ty * 16, tx * 16);
      CHECK(ref >= 0.0);
      CHECK(ref <= 1.0);
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
          REQUIRE(map.at(ty * 16 + y, tx * 16 + x) == ref);
    }

  OcclusionConfig norm_cfg = cfg;
  norm_cfg.normalize = true;
  Heatmap norm = occlusion_sensitivity(model, clip, norm_cfg);
  const auto [lo, hi] = std::minmax_element(norm.data.begin(), norm.data.end());
  CHECK(*lo >= 0.0);
  CHECK(*hi <= 1.0);

  OcclusionConfig too_big;
  too_big.window = 40;  // larger than the 32-pixel frame
  CHECK_THROWS_AS(occlusion_sensitivity(model, clip, too_big), std::invalid_argument);
}
