#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "avf/augment.hpp"
#include "avf/corpus.hpp"

using namespace avf;

namespace {
VideoClip make_clip(int T = 25, int S = 112, double fill = 0.5) {
  VideoClip c;
  c.T = T;
  c.H = c.W = S;
  c.data.assign(static_cast<std::size_t>(T) * S * S * 3, fill);
  return c;
}
}  // namespace

TEST_CASE("erase_prob=0 is the identity") {
  VideoClip c = make_clip();
  MaskSpec spec;
  spec.erase_prob = 0.0;
  Rng rng(0);
  CHECK(spatial_erase(c, spec, rng).data == c.data);
}

TEST_CASE("erase zeroes the same pixel set in every frame") {
  VideoClip c = make_clip();
  MaskSpec spec;
  spec.erase_prob = 1.0;
  Rng rng(1);
  VideoClip e = spatial_erase(c, spec, rng);
  std::vector<char> mask0(static_cast<std::size_t>(c.H) * c.W, 0);
  std::size_t zeroed = 0;
  for (int y = 0; y < c.H; ++y)
    for (int x = 0; x < c.W; ++x)
      if (e.at(0, y, x, 0) == 0.0) {
        mask0[static_cast<std::size_t>(y) * c.W + x] = 1;
        ++zeroed;
      }
  CHECK(zeroed > 0);
  for (int t = 1; t < c.T; ++t)
    for (int y = 0; y < c.H; ++y)
      for (int x = 0; x < c.W; ++x)
        REQUIRE((e.at(t, y, x, 0) == 0.0) ==
                static_cast<bool>(mask0[static_cast<std::size_t>(y) * c.W + x]));
}

TEST_CASE("10,000 erase draws stay inside the configured area bounds") {
  VideoClip c = make_clip(2, 112);
  MaskSpec spec;
  spec.erase_prob = 1.0;
  Rng rng(7);
  const double hw = static_cast<double>(c.H) * c.W;
  for (int i = 0; i < 10000; ++i) {
    VideoClip e = spatial_erase(c, spec, rng);
    std::size_t zeroed = 0;
    for (int y = 0; y < c.H; ++y)
      for (int x = 0; x < c.W; ++x)
        if (e.at(0, y, x, 0) == 0.0) ++zeroed;
    double frac = zeroed / hw;
    REQUIRE(frac >= spec.erase_scale_lo);
    REQUIRE(frac <= spec.erase_scale_hi);
  }
}

TEST_CASE("temporal mask zeroes a contiguous run of frames") {
  VideoClip c = make_clip();
  MaskSpec spec;
  spec.time_mask_prob = 1.0;
  bool saw_full12 = false;
  for (int seed = 0; seed < 200 && !saw_full12; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    VideoClip m = temporal_mask(c, spec, rng);
    std::vector<int> zero_frames;
    for (int t = 0; t < c.T; ++t) {
      bool all_zero = true;
      for (int y = 0; y < c.H && all_zero; ++y)
        for (int x = 0; x < c.W && all_zero; ++x)
          if (m.at(t, y, x, 0) != 0.0) all_zero = false;
      if (all_zero) zero_frames.push_back(t);
    }
    REQUIRE(static_cast<int>(zero_frames.size()) <= spec.max_video_frames_erased);
    for (std::size_t i = 1; i < zero_frames.size(); ++i)
      REQUIRE(zero_frames[i] == zero_frames[i - 1] + 1);  // contiguous
    if (zero_frames.size() == 12) saw_full12 = true;
  }
  CHECK(saw_full12);
}

TEST_CASE("audio mask zeroes one contiguous band of width <= 27") {
  Spectrogram s;
  s.T = 100;
  s.L = 80;
  s.data.assign(8000, 1.0);
  MaskSpec spec;
  spec.time_mask_prob = 1.0;
  Rng rng(3);
  Spectrogram m = audio_mask(s, spec, rng);
  std::vector<int> zero_bins;
  for (int l = 0; l < s.L; ++l) {
    int zero_t = 0;
    for (int t = 0; t < s.T; ++t)
      if (m.at(t, l) == 0.0) ++zero_t;
    if (zero_t == s.T) zero_bins.push_back(l);
  }
  CHECK(static_cast<int>(zero_bins.size()) <= spec.max_mel_bins_erased);
  for (std::size_t i = 1; i < zero_bins.size(); ++i)
    CHECK(zero_bins[i] == zero_bins[i - 1] + 1);
}

TEST_CASE("eval transform is deterministic; grayscale equalises channels") {
  auto [clip, spec] = generate_real(0, 0, 25, 78);
  MaskSpec ms;
  Rng r1(1), r2(2);
  VideoClip e1 = train_transform(clip, TransformMode::eval, ms, r1);
  VideoClip e2 = train_transform(clip, TransformMode::eval, ms, r2);
  CHECK(e1.data == e2.data);

  Rng r3(3);
  VideoClip g = train_transform(clip, TransformMode::eval_gray, ms, r3);
  for (int t = 0; t < g.T; ++t)
    for (int y = 0; y < g.H; ++y)
      for (int x = 0; x < g.W; ++x) {
        REQUIRE(g.at(t, y, x, 0) == g.at(t, y, x, 1));
        REQUIRE(g.at(t, y, x, 1) == g.at(t, y, x, 2));
      }
}

TEST_CASE("augmentations preserve shape and value range") {
  auto [clip, sp] = generate_real(5, 2, 25, 78);
  MaskSpec ms;
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    VideoClip out = train_transform(clip, TransformMode::stage1_student, ms, rng);
    TransformGeometry g = TransformGeometry::for_source(clip.H);
    REQUIRE(out.T == clip.T);
    REQUIRE(out.H == g.out_size);
    for (double v : out.data) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }
}

TEST_CASE("shared view: teacher path sees the student's geometry unmasked") {
  auto [clip, sp] = generate_real(8, 4, 25, 78);
  MaskSpec ms;
  ms.erase_prob = 1.0;
  ms.time_mask_prob = 1.0;
  Rng rng(11);
  TransformGeometry geom = TransformGeometry::for_source(clip.H);
  GeomAug g = sample_geom(TransformMode::stage1_student, clip.H, geom.crop_size, rng);
  VideoClip teacher_view = apply_geom(clip, g, geom);
  VideoClip student_view = temporal_mask(spatial_erase(teacher_view, ms, rng), ms, rng);
  // teacher view differs only where the student was masked
  std::size_t masked = 0;
  for (std::size_t i = 0; i < teacher_view.data.size(); ++i) {
    if (student_view.data[i] != teacher_view.data[i]) {
      REQUIRE(student_view.data[i] == 0.0);
      ++masked;
    }
  }
  CHECK(masked > 0);
}

TEST_CASE("mask spec validation catches bad configurations") {
  MaskSpec ms;
  ms.erase_prob = 1.5;
  CHECK_THROWS(ms.validate(25, 100, 80));
  ms = MaskSpec{};
  ms.max_video_frames_erased = 25;
  CHECK_THROWS(ms.validate(25, 100, 80));
  ms = MaskSpec{};
  CHECK_NOTHROW(ms.validate(25, 100, 80));
  CHECK(MaskSpec::from_json(ms.to_json()).erase_scale_hi == ms.erase_scale_hi);
}
