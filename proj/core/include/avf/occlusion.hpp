#pragma once

#include <string>
#include <vector>

#include "avf/corpus.hpp"
#include "avf/stage2.hpp"

namespace avf {

struct OcclusionConfig {
  int window = 40;  // spatial occluder side; temporal extent is the full clip
  int stride = 8;
  std::string fill = "noise";  // "noise" (uniform random) or "gray" (0.5);
                               // gray avoids the occluder itself reading as a
                               // high-frequency artifact on small frames
  bool normalize = true;  // per-video min-max to [0,1], inverted: 1 = pixels
                          // whose occlusion suppresses the fake score most
  std::uint64_t seed = 0;
};

struct Heatmap {
  int H = 0, W = 0;
  std::vector<double> data;  // row-major
  double& at(int y, int x) { return data[static_cast<std::size_t>(y) * W + x]; }
  double at(int y, int x) const { return data[static_cast<std::size_t>(y) * W + x]; }
};

/// Slides a window x window x T noise occluder over the video, scores each
/// occluded variant, and assigns every pixel the mean fake-probability over
/// the windows covering it. With normalize, the map is min-max scaled per
/// video (a constant map becomes all 0.5).
Heatmap occlusion_sensitivity(DetectorModel& model, const VideoClip& video,
                              const OcclusionConfig& cfg = {});

}  // namespace avf
