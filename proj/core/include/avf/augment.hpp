#pragma once

#include "avf/corpus.hpp"
#include "avf/rng.hpp"

namespace avf {

/// Masking knobs applied to student inputs only; teachers see clean views.
struct MaskSpec {
  double erase_prob = 0.5;
  double erase_scale_lo = 0.02, erase_scale_hi = 0.33;  // area fraction
  double erase_ratio_lo = 0.3, erase_ratio_hi = 3.3;    // aspect
  int max_video_frames_erased = 12;
  int max_audio_frames_erased = 48;
  int max_mel_bins_erased = 27;
  double time_mask_prob = 0.5;

  void validate(int video_frames, int audio_frames, int mel_bins) const;
  json to_json() const;
  static MaskSpec from_json(const json& j);
};

enum class TransformMode {
  stage1_student,   // crop/flip/gray + all masking
  stage2,           // same pipeline (masking toggled by the trainer)
  eval,             // deterministic centre crop
  eval_gray,        // centre crop + grayscale (robustness protocol)
  robustness_train  // grayscale, flip + random crop only
};

/// Geometric view parameters, sampled once so a student/teacher pair can share
/// the exact same view while only the student gets masked.
struct GeomAug {
  int off_y = 0, off_x = 0;
  bool flip = false;
  bool gray = false;
};

struct TransformGeometry {
  int crop_size = 140, out_size = 112;
  static TransformGeometry for_source(int frame_size);
};

GeomAug sample_geom(TransformMode mode, int frame_size, int crop_size, Rng& rng);
VideoClip apply_geom(const VideoClip& clip, const GeomAug& g,
                     const TransformGeometry& geom);

VideoClip spatial_erase(const VideoClip& clip, const MaskSpec& spec, Rng& rng);
VideoClip temporal_mask(const VideoClip& clip, const MaskSpec& spec, Rng& rng);
Spectrogram audio_mask(const Spectrogram& spec_in, const MaskSpec& spec, Rng& rng);

/// One-shot pipeline: samples its own view, applies masks per mode.
VideoClip train_transform(const VideoClip& clip, TransformMode mode,
                          const MaskSpec& spec, Rng& rng);

VideoClip resize_bilinear(const VideoClip& clip, int out_size);
VideoClip to_grayscale(const VideoClip& clip);

}  // namespace avf
