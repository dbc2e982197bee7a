#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "avf/rng.hpp"

namespace avf {

using json = nlohmann::ordered_json;

/// Fixed-length sequence of face-crop frames, layout [T,H,W,3], values in [0,1].
struct VideoClip {
  int T = 0, H = 0, W = 0;
  double frame_rate = 25.0;
  std::vector<double> data;

  double& at(int t, int y, int x, int c) {
    return data[((static_cast<std::size_t>(t) * H + y) * W + x) * 3 + c];
  }
  double at(int t, int y, int x, int c) const {
    return data[((static_cast<std::size_t>(t) * H + y) * W + x) * 3 + c];
  }
};

/// Log-mel band energies, layout [T_a, L]. T_a = 4 * T_v for aligned pairs.
struct Spectrogram {
  int T = 0, L = 80;
  std::vector<double> data;

  double& at(int t, int l) { return data[static_cast<std::size_t>(t) * L + l]; }
  double at(int t, int l) const { return data[static_cast<std::size_t>(t) * L + l]; }
};

enum class Label { real, fake };
enum class Family { none, desync, swap, seam, frozen };

std::string to_string(Label l);
std::string to_string(Family f);
Label label_from_string(const std::string& s);
Family family_from_string(const std::string& s);

struct SampleRecord {
  std::string sample_id;
  Label label = Label::real;
  Family family = Family::none;
  int identity_id = -1;
  std::string split;
  std::string clip_path, spec_path;
  std::uint64_t clip_checksum = 0, spec_checksum = 0;
  std::string source_id;  // for fakes: the real sample they were derived from
};

struct SplitCounts {
  int train = 0, val = 0, test = 0;
  int get(const std::string& split) const;
};

struct CorpusConfig {
  std::uint64_t seed = 0;
  int frame_size = 156;       // source frames; train-time crop/resize comes later
  int duration_frames = 25;
  double noise_amp = 0.01;    // spectrogram noise floor
  SplitCounts real_counts{500, 40, 40};
  SplitCounts fake_per_family{100, 10, 25};
  std::vector<Family> families{Family::desync, Family::swap, Family::seam,
                               Family::frozen};
  std::string leave_out_family;  // excluded from train/val, kept in test

  json to_json() const;
  static CorpusConfig from_json(const json& j);
};

struct CorpusManifest {
  std::vector<SampleRecord> records;
  std::uint64_t generator_seed = 0;
  std::string generator_version;
  json config_json;

  json to_json() const;
  static CorpusManifest from_json(const json& j);
  const SampleRecord* find(const std::string& sample_id) const;
  std::vector<const SampleRecord*> split_records(const std::string& split) const;
  /// Throws on any violated manifest invariant.
  void validate() const;
};

struct GenOptions {
  bool constant_aperture = false;
  double aperture_value = 0.5;
};

/// Renders one synthetic talking-face clip and its aligned spectrogram from a
/// shared latent trajectory, so the two modalities carry per-frame mutual
/// information. Deterministic in (seed, identity_id, duration_frames).
std::pair<VideoClip, Spectrogram> generate_real(std::uint64_t seed, int identity_id,
                                                int duration_frames,
                                                int frame_size = 156,
                                                double noise_amp = 0.01,
                                                const GenOptions& opts = {});

/// Visual-only manipulation of a real clip; audio is untouched by contract.
VideoClip generate_fake(const VideoClip& real, Family family, std::uint64_t seed);

/// Mouth-region rectangle used by the frozen/desync manipulations,
/// as {row_begin, row_end, col_begin, col_end} in pixel coords.
std::array<int, 4> mouth_rect(int H, int W);

// Cross-modal probes used by tests and the corpus self-checks.
std::vector<double> estimate_aperture_series(const VideoClip& clip);
std::vector<double> spectrogram_centroid_series(const Spectrogram& spec);
double pearson(const std::vector<double>& a, const std::vector<double>& b);

/// Generates every sample file under out_dir and writes manifest.json.
CorpusManifest build_corpus(const CorpusConfig& cfg,
                            const std::filesystem::path& out_dir);

CorpusManifest load_manifest(const std::filesystem::path& corpus_dir);
void save_manifest(const CorpusManifest& m, const std::filesystem::path& corpus_dir);

/// Checksum-verified load of one sample's arrays.
std::tuple<VideoClip, Spectrogram, Label> load_sample(
    const std::filesystem::path& corpus_dir, const CorpusManifest& manifest,
    const std::string& sample_id);

void save_clip(const std::filesystem::path& path, const VideoClip& clip);
VideoClip load_clip(const std::filesystem::path& path);
void save_spectrogram(const std::filesystem::path& path, const Spectrogram& spec);
Spectrogram load_spectrogram(const std::filesystem::path& path);

}  // namespace avf
