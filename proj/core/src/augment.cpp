#include "avf/augment.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace avf {

void MaskSpec::validate(int video_frames, int audio_frames, int mel_bins) const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(erase_prob) || !prob(time_mask_prob))
    throw std::invalid_argument("MaskSpec: probabilities must lie in [0,1]");
  if (erase_scale_lo > erase_scale_hi || erase_ratio_lo > erase_ratio_hi)
    throw std::invalid_argument("MaskSpec: intervals must be ordered");
  if (max_video_frames_erased < 0 || max_video_frames_erased >= video_frames ||
      max_audio_frames_erased < 0 || max_audio_frames_erased >= audio_frames ||
      max_mel_bins_erased < 0 || max_mel_bins_erased >= mel_bins)
    throw std::invalid_argument("MaskSpec: mask maxima out of range");
}

json MaskSpec::to_json() const {
  return json{{"erase_prob", erase_prob},
              {"erase_scale", {erase_scale_lo, erase_scale_hi}},
              {"erase_ratio", {erase_ratio_lo, erase_ratio_hi}},
              {"max_video_frames_erased", max_video_frames_erased},
              {"max_audio_frames_erased", max_audio_frames_erased},
              {"max_mel_bins_erased", max_mel_bins_erased},
              {"time_mask_prob", time_mask_prob}};
}

MaskSpec MaskSpec::from_json(const json& j) {
  static const std::set<std::string> known = {
      "erase_prob", "erase_scale", "erase_ratio", "max_video_frames_erased",
      "max_audio_frames_erased", "max_mel_bins_erased", "time_mask_prob"};
  for (auto& [k, v] : j.items())
    if (!known.count(k)) throw std::invalid_argument("mask spec: unknown key '" + k + "'");
  MaskSpec m;
  m.erase_prob = j.value("erase_prob", m.erase_prob);
  if (j.contains("erase_scale")) {
    m.erase_scale_lo = j["erase_scale"][0];
    m.erase_scale_hi = j["erase_scale"][1];
  }
  if (j.contains("erase_ratio")) {
    m.erase_ratio_lo = j["erase_ratio"][0];
    m.erase_ratio_hi = j["erase_ratio"][1];
  }
  m.max_video_frames_erased = j.value("max_video_frames_erased", m.max_video_frames_erased);
  m.max_audio_frames_erased = j.value("max_audio_frames_erased", m.max_audio_frames_erased);
  m.max_mel_bins_erased = j.value("max_mel_bins_erased", m.max_mel_bins_erased);
  m.time_mask_prob = j.value("time_mask_prob", m.time_mask_prob);
  return m;
}

TransformGeometry TransformGeometry::for_source(int frame_size) {
  TransformGeometry g;
  g.crop_size = std::max(1, static_cast<int>(std::lround(frame_size * 140.0 / 156.0)));
  g.out_size = std::max(1, static_cast<int>(std::lround(frame_size * 112.0 / 156.0)));
  return g;
}

GeomAug sample_geom(TransformMode mode, int frame_size, int crop_size, Rng& rng) {
  GeomAug g;
  const int slack = frame_size - crop_size;
  switch (mode) {
    case TransformMode::stage1_student:
    case TransformMode::stage2:
      g.off_y = rng.uniform_int(0, slack);
      g.off_x = rng.uniform_int(0, slack);
      g.flip = rng.bernoulli(0.5);
      g.gray = rng.bernoulli(0.5);
      break;
    case TransformMode::robustness_train:
      g.off_y = rng.uniform_int(0, slack);
      g.off_x = rng.uniform_int(0, slack);
      g.flip = rng.bernoulli(0.5);
      g.gray = true;
      break;
    case TransformMode::eval:
      g.off_y = g.off_x = slack / 2;
      break;
    case TransformMode::eval_gray:
      g.off_y = g.off_x = slack / 2;
      g.gray = true;
      break;
  }
  return g;
}

VideoClip resize_bilinear(const VideoClip& clip, int out_size) {
  if (out_size == clip.H && out_size == clip.W) return clip;
  VideoClip out;
  out.T = clip.T;
  out.H = out.W = out_size;
  out.frame_rate = clip.frame_rate;
  out.data.assign(static_cast<std::size_t>(out.T) * out_size * out_size * 3, 0.0);
  const double sy = static_cast<double>(clip.H) / out_size;
  const double sx = static_cast<double>(clip.W) / out_size;
  for (int t = 0; t < clip.T; ++t)
    for (int y = 0; y < out_size; ++y) {
      double fy = (y + 0.5) * sy - 0.5;
      int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, clip.H - 1);
      int y1 = std::min(y0 + 1, clip.H - 1);
      double wy = std::clamp(fy - y0, 0.0, 1.0);
      for (int x = 0; x < out_size; ++x) {
        double fx = (x + 0.5) * sx - 0.5;
        int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, clip.W - 1);
        int x1 = std::min(x0 + 1, clip.W - 1);
        double wx = std::clamp(fx - x0, 0.0, 1.0);
        for (int c = 0; c < 3; ++c) {
          double v = (1 - wy) * ((1 - wx) * clip.at(t, y0, x0, c) + wx * clip.at(t, y0, x1, c)) +
                     wy * ((1 - wx) * clip.at(t, y1, x0, c) + wx * clip.at(t, y1, x1, c));
          out.at(t, y, x, c) = v;
        }
      }
    }
  return out;
}

VideoClip to_grayscale(const VideoClip& clip) {
  VideoClip out = clip;
  for (int t = 0; t < clip.T; ++t)
    for (int y = 0; y < clip.H; ++y)
      for (int x = 0; x < clip.W; ++x) {
        double g = (clip.at(t, y, x, 0) + clip.at(t, y, x, 1) + clip.at(t, y, x, 2)) / 3.0;
        for (int c = 0; c < 3; ++c) out.at(t, y, x, c) = g;
      }
  return out;
}

VideoClip apply_geom(const VideoClip& clip, const GeomAug& g,
                     const TransformGeometry& geom) {
  if (geom.crop_size > clip.H || geom.crop_size > clip.W)
    throw std::invalid_argument("apply_geom: crop larger than source frame");
  VideoClip cropped;
  cropped.T = clip.T;
  cropped.H = cropped.W = geom.crop_size;
  cropped.frame_rate = clip.frame_rate;
  cropped.data.assign(static_cast<std::size_t>(clip.T) * geom.crop_size * geom.crop_size * 3, 0.0);
  for (int t = 0; t < clip.T; ++t)
    for (int y = 0; y < geom.crop_size; ++y)
      for (int x = 0; x < geom.crop_size; ++x) {
        int sx = g.flip ? geom.crop_size - 1 - x : x;
        for (int c = 0; c < 3; ++c)
          cropped.at(t, y, x, c) = clip.at(t, g.off_y + y, g.off_x + sx, c);
      }
  VideoClip out = resize_bilinear(cropped, geom.out_size);
  if (g.gray) out = to_grayscale(out);
  return out;
}

VideoClip spatial_erase(const VideoClip& clip, const MaskSpec& spec, Rng& rng) {
  if (!rng.bernoulli(spec.erase_prob)) return clip;
  const int H = clip.H, W = clip.W;
  const double hw = static_cast<double>(H) * W;
  int eh = 0, ew = 0;
  bool found = false;
  for (int attempt = 0; attempt < 100 && !found; ++attempt) {
    double area = rng.uniform(spec.erase_scale_lo, spec.erase_scale_hi) * hw;
    double ratio = std::exp(rng.uniform(std::log(spec.erase_ratio_lo),
                                        std::log(spec.erase_ratio_hi)));
    eh = std::max(1, static_cast<int>(std::lround(std::sqrt(area * ratio))));
    ew = std::max(1, static_cast<int>(std::lround(std::sqrt(area / ratio))));
    double frac = eh * ew / hw;
    found = eh <= H && ew <= W && frac >= spec.erase_scale_lo && frac <= spec.erase_scale_hi;
  }
  if (!found) return clip;
  int y0 = rng.uniform_int(0, H - eh);
  int x0 = rng.uniform_int(0, W - ew);
  VideoClip out = clip;
  // same rectangle in every frame of the clip
  for (int t = 0; t < clip.T; ++t)
    for (int y = y0; y < y0 + eh; ++y)
      for (int x = x0; x < x0 + ew; ++x)
        for (int c = 0; c < 3; ++c) out.at(t, y, x, c) = 0.0;
  return out;
}

VideoClip temporal_mask(const VideoClip& clip, const MaskSpec& spec, Rng& rng) {
  if (!rng.bernoulli(spec.time_mask_prob)) return clip;
  int len = rng.uniform_int(0, std::min(spec.max_video_frames_erased, clip.T));
  if (len == 0) return clip;
  int start = rng.uniform_int(0, clip.T - len);
  VideoClip out = clip;
  std::fill(out.data.begin() + static_cast<std::ptrdiff_t>(start) * clip.H * clip.W * 3,
            out.data.begin() + static_cast<std::ptrdiff_t>(start + len) * clip.H * clip.W * 3,
            0.0);
  return out;
}

Spectrogram audio_mask(const Spectrogram& spec_in, const MaskSpec& spec, Rng& rng) {
  Spectrogram out = spec_in;
  if (rng.bernoulli(spec.time_mask_prob)) {
    int len = rng.uniform_int(0, std::min(spec.max_audio_frames_erased, out.T));
    if (len > 0) {
      int start = rng.uniform_int(0, out.T - len);
      for (int t = start; t < start + len; ++t)
        for (int l = 0; l < out.L; ++l) out.at(t, l) = 0.0;
    }
  }
  if (rng.bernoulli(spec.time_mask_prob)) {
    int len = rng.uniform_int(0, std::min(spec.max_mel_bins_erased, out.L));
    if (len > 0) {
      int start = rng.uniform_int(0, out.L - len);
      for (int t = 0; t < out.T; ++t)
        for (int l = start; l < start + len; ++l) out.at(t, l) = 0.0;
    }
  }
  return out;
}

VideoClip train_transform(const VideoClip& clip, TransformMode mode,
                          const MaskSpec& spec, Rng& rng) {
  TransformGeometry geom = TransformGeometry::for_source(clip.H);
  GeomAug g = sample_geom(mode, clip.H, geom.crop_size, rng);
  VideoClip out = apply_geom(clip, g, geom);
  if (mode == TransformMode::stage1_student || mode == TransformMode::stage2) {
    out = spatial_erase(out, spec, rng);
    out = temporal_mask(out, spec, rng);
  }
  return out;
}

}  // namespace avf
