#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "avf/corpus.hpp"
#include "avf/io.hpp"

using namespace avf;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

CorpusConfig small_config() {
  CorpusConfig c;
  c.frame_size = 48;
  c.real_counts = {6, 3, 3};
  c.fake_per_family = {2, 1, 1};
  return c;
}
}  // namespace

TEST_CASE("generate_real is deterministic under a fixed seed") {
  auto [c1, s1] = generate_real(0, 0, 25, 64);
  auto [c2, s2] = generate_real(0, 0, 25, 64);
  CHECK(c1.data == c2.data);
  CHECK(s1.data == s2.data);
  CHECK(s1.T == 4 * c1.T);
  CHECK(s1.L == 80);
  for (double v : c1.data) {
    REQUIRE(std::isfinite(v));
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("different seeds give visibly different clips") {
  auto [c1, s1] = generate_real(0, 0, 25, 64);
  auto [c2, s2] = generate_real(1, 0, 25, 64);
  std::size_t diff = 0;
  for (std::size_t i = 0; i < c1.data.size(); ++i)
    if (c1.data[i] != c2.data[i]) ++diff;
  CHECK(diff >= c1.data.size() / 100);
}

TEST_CASE("invalid duration is rejected") {
  CHECK_THROWS_AS(generate_real(0, 0, 24, 64), std::invalid_argument);
}

TEST_CASE("constant aperture leaves only noise variance in the band energy") {
  GenOptions opts;
  opts.constant_aperture = true;
  const double noise = 0.01;
  auto [clip, spec] = generate_real(0, 0, 25, 48, noise, opts);
  // any single mel bin over time should vary only by the noise floor
  for (int l : {10, 30, 60}) {
    double m = 0, v = 0;
    for (int t = 0; t < spec.T; ++t) m += spec.at(t, l);
    m /= spec.T;
    for (int t = 0; t < spec.T; ++t) v += std::pow(spec.at(t, l) - m, 2);
    v /= spec.T;
    CHECK(std::sqrt(v) < 3 * noise);
  }
}

TEST_CASE("mouth and audio track each other on real clips") {
  auto [clip, spec] = generate_real(7, 3, 25, 64);
  double r = pearson(estimate_aperture_series(clip), spectrogram_centroid_series(spec));
  CHECK(r > 0.8);
}

TEST_CASE("frozen fake holds the mouth region fixed") {
  auto [clip, spec] = generate_real(0, 0, 25, 64);
  VideoClip fake = generate_fake(clip, Family::frozen, 0);
  auto r = mouth_rect(fake.H, fake.W);
  for (int t = 1; t < fake.T; ++t)
    for (int y = r[0]; y < r[1]; ++y)
      for (int x = r[2]; x < r[3]; ++x)
        for (int c = 0; c < 3; ++c)
          REQUIRE(fake.at(t, y, x, c) == fake.at(0, y, x, c));
  // and pixels outside the rect are untouched
  CHECK(fake.at(2, 5, 5, 0) == clip.at(2, 5, 5, 0));
}

TEST_CASE("desync lowers mouth/audio correlation (100 pairs)") {
  int lower = 0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    auto [clip, spec] = generate_real(42, i, 25, 48);
    VideoClip fake = generate_fake(clip, Family::desync, static_cast<std::uint64_t>(i));
    auto cent = spectrogram_centroid_series(spec);
    double r_real = pearson(estimate_aperture_series(clip), cent);
    double r_fake = pearson(estimate_aperture_series(fake), cent);
    if (r_fake < r_real) ++lower;
  }
  CHECK(lower >= 95);
}

TEST_CASE("requesting family 'none' is an error") {
  auto [clip, spec] = generate_real(0, 0, 25, 48);
  CHECK_THROWS_AS(generate_fake(clip, Family::none, 0), std::invalid_argument);
}

TEST_CASE("swap and seam change pixels but preserve range") {
  auto [clip, spec] = generate_real(3, 1, 25, 48);
  for (Family f : {Family::swap, Family::seam}) {
    VideoClip fake = generate_fake(clip, f, 5);
    CHECK(fake.data != clip.data);
    for (double v : fake.data) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }
}

TEST_CASE("build_corpus: manifest invariants, round trips, leave-one-out") {
  fs::path dir = temp_dir("avf_corpus_test");
  CorpusConfig cfg = small_config();
  cfg.leave_out_family = "swap";
  CorpusManifest m = build_corpus(cfg, dir);
  m.validate();

  SUBCASE("leave-out family absent from train/val, present in test") {
    for (const auto& r : m.records) {
      if (r.family == Family::swap) CHECK(r.split == "test");
    }
    bool swap_in_test = false;
    for (const auto* r : m.split_records("test"))
      if (r->family == Family::swap) swap_in_test = true;
    CHECK(swap_in_test);
  }

  SUBCASE("manifest round-trips through disk") {
    CorpusManifest m2 = load_manifest(dir);
    CHECK(m2.to_json() == m.to_json());
  }

  SUBCASE("sample load round-trips bit-exactly") {
    auto [clip, spec, label] = load_sample(dir, m, "train_real_0000");
    fs::path tmp = dir / "roundtrip.vid";
    save_clip(tmp, clip);
    VideoClip clip2 = load_clip(tmp);
    CHECK(clip.data == clip2.data);
    CHECK(label == Label::real);
  }

  SUBCASE("fake samples share their source spectrogram file") {
    for (const auto& r : m.records)
      if (r.label == Label::fake) {
        const SampleRecord* src = m.find(r.source_id);
        REQUIRE(src != nullptr);
        CHECK(r.spec_path == src->spec_path);
      }
  }

  SUBCASE("corrupted file is caught by checksum") {
    const SampleRecord* r = m.find("train_real_0001");
    fs::path p = dir / r->clip_path;
    auto bytes = read_text_file(p);
    bytes[bytes.size() / 2] ^= 1;
    write_text_file(p, bytes);
    CHECK_THROWS(load_sample(dir, m, "train_real_0001"));
  }

  SUBCASE("unknown id rejected") { CHECK_THROWS(load_sample(dir, m, "nope")); }

  fs::remove_all(dir);
}

TEST_CASE("validate rejects identities straddling splits") {
  fs::path dir = temp_dir("avf_corpus_bad");
  CorpusManifest m = build_corpus(small_config(), dir);
  m.records[0].identity_id = m.split_records("test")[0]->identity_id;
  CHECK_THROWS(m.validate());
  fs::remove_all(dir);
}

TEST_CASE("corpus generation is reproducible byte-for-byte") {
  fs::path d1 = temp_dir("avf_corpus_r1"), d2 = temp_dir("avf_corpus_r2");
  CorpusConfig cfg = small_config();
  CorpusManifest m1 = build_corpus(cfg, d1);
  CorpusManifest m2 = build_corpus(cfg, d2);
  for (std::size_t i = 0; i < m1.records.size(); ++i) {
    CHECK(m1.records[i].clip_checksum == m2.records[i].clip_checksum);
    CHECK(m1.records[i].spec_checksum == m2.records[i].spec_checksum);
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}
