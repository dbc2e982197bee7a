#include "avf/occlusion.hpp"

#include <algorithm>
#include <stdexcept>

namespace avf {

Heatmap occlusion_sensitivity(DetectorModel& model, const VideoClip& video,
                              const OcclusionConfig& cfg) {
  if (cfg.window <= 0 || cfg.stride <= 0)
    throw std::invalid_argument("occlusion: window and stride must be positive");
  if (cfg.fill != "noise" && cfg.fill != "gray")
    throw std::invalid_argument("occlusion: unknown fill '" + cfg.fill + "'");
  if (video.H < cfg.window || video.W < cfg.window)
    throw std::invalid_argument("occlusion: video smaller than the occluder");

  std::vector<int> ys, xs;
  for (int y = 0; y + cfg.window <= video.H; y += cfg.stride) ys.push_back(y);
  for (int x = 0; x + cfg.window <= video.W; x += cfg.stride) xs.push_back(x);
  // make sure the borders are covered even when stride doesn't divide evenly
  if (ys.back() + cfg.window < video.H) ys.push_back(video.H - cfg.window);
  if (xs.back() + cfg.window < video.W) xs.push_back(video.W - cfg.window);

  Rng rng(Rng::mix(cfg.seed, 0x0cc1ULL));
  std::vector<double> sum(static_cast<std::size_t>(video.H) * video.W, 0.0);
  std::vector<int> count(sum.size(), 0);
  for (int y0 : ys)
    for (int x0 : xs) {
      VideoClip occluded = video;
      for (int t = 0; t < video.T; ++t)
        for (int y = y0; y < y0 + cfg.window; ++y)
          for (int x = x0; x < x0 + cfg.window; ++x)
            for (int ch = 0; ch < 3; ++ch)
              occluded.at(t, y, x, ch) = cfg.fill == "gray" ? 0.5 : rng.uniform();
      const double prob = score_video(model, occluded);
      for (int y = y0; y < y0 + cfg.window; ++y)
        for (int x = x0; x < x0 + cfg.window; ++x) {
          sum[static_cast<std::size_t>(y) * video.W + x] += prob;
          ++count[static_cast<std::size_t>(y) * video.W + x];
        }
    }

  Heatmap map;
  map.H = video.H;
  map.W = video.W;
  map.data.resize(sum.size(), 0.0);
  for (std::size_t i = 0; i < sum.size(); ++i)
    map.data[i] = count[i] ? sum[i] / count[i] : 0.0;

  if (cfg.normalize) {
    // Inverted min-max: pixels whose occlusion suppresses the fake
    // probability the most are the evidence the model relies on, so they map
    // to 1 in the overlay; a constant map degenerates to 0.5.
    const auto [lo_it, hi_it] = std::minmax_element(map.data.begin(), map.data.end());
    const double hi = *hi_it, range = *hi_it - *lo_it;
    for (double& v : map.data) v = range > 1e-12 ? (hi - v) / range : 0.5;
  }
  return map;
}

}  // namespace avf
