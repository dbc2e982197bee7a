#pragma once

#include <string>
#include <vector>

#include "avf/corpus.hpp"
#include "avf/rng.hpp"

namespace avf {

enum class CorruptionFamily {
  saturation,
  contrast,
  block,
  noise,
  blur,
  pixelation,
  compression
};

std::string to_string(CorruptionFamily f);
CorruptionFamily corruption_from_string(const std::string& s);
const std::vector<CorruptionFamily>& all_corruption_families();

/// Severity 0 is the identity everywhere; 1..5 escalate distortion
/// monotonically (measured as mean absolute per-pixel deviation).
struct CorruptionSpec {
  CorruptionFamily family = CorruptionFamily::noise;
  int severity = 1;
  void validate() const;
};

/// Visual-only by construction: audio never passes through here.
VideoClip corrupt(const VideoClip& clip, const CorruptionSpec& spec, Rng& rng);

// Per-severity parameter tables (index 0 = identity, 1..5 = severities).
double noise_sigma(int severity);        // {0,.02,.04,.08,.12,.16}
double saturation_factor(int severity);  // toward grayscale
double contrast_factor(int severity);    // toward mid-gray
int block_count(int severity);           // opaque squares
int blur_radius(int severity);           // gaussian kernel radius
int pixelation_factor(int severity);     // down/up-sample factor
double compression_qstep(int severity);  // DCT quantisation step

/// Mean |out - in| over all pixels; the monotonicity measure.
double mean_abs_deviation(const VideoClip& a, const VideoClip& b);

}  // namespace avf
