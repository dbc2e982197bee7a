#include "avf/corrupt.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

namespace avf {

std::string to_string(CorruptionFamily f) {
  switch (f) {
    case CorruptionFamily::saturation: return "saturation";
    case CorruptionFamily::contrast: return "contrast";
    case CorruptionFamily::block: return "block";
    case CorruptionFamily::noise: return "noise";
    case CorruptionFamily::blur: return "blur";
    case CorruptionFamily::pixelation: return "pixelation";
    case CorruptionFamily::compression: return "compression";
  }
  throw std::logic_error("to_string: bad corruption family");
}

CorruptionFamily corruption_from_string(const std::string& s) {
  for (CorruptionFamily f : all_corruption_families())
    if (to_string(f) == s) return f;
  throw std::invalid_argument("unknown corruption family '" + s + "'");
}

const std::vector<CorruptionFamily>& all_corruption_families() {
  static const std::vector<CorruptionFamily> families{
      CorruptionFamily::saturation, CorruptionFamily::contrast,
      CorruptionFamily::block,      CorruptionFamily::noise,
      CorruptionFamily::blur,       CorruptionFamily::pixelation,
      CorruptionFamily::compression};
  return families;
}

void CorruptionSpec::validate() const {
  if (severity < 0 || severity > 5)
    throw std::invalid_argument("CorruptionSpec: severity must lie in 0..5");
}

namespace {
template <typename T>
T table(int severity, std::initializer_list<T> values) {
  return *(values.begin() + severity);
}
}  // namespace

double noise_sigma(int s) { return table(s, {0.0, 0.02, 0.04, 0.08, 0.12, 0.16}); }
double saturation_factor(int s) { return table(s, {1.0, 0.8, 0.6, 0.4, 0.25, 0.1}); }
double contrast_factor(int s) { return table(s, {1.0, 0.8, 0.6, 0.45, 0.3, 0.18}); }
int block_count(int s) { return table(s, {0, 2, 4, 6, 8, 10}); }
int blur_radius(int s) { return table(s, {0, 1, 2, 3, 4, 5}); }
int pixelation_factor(int s) { return table(s, {1, 2, 3, 4, 6, 8}); }
double compression_qstep(int s) { return table(s, {0.0, 0.05, 0.1, 0.2, 0.35, 0.6}); }

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

VideoClip apply_saturation(VideoClip c, double f) {
  for (int t = 0; t < c.T; ++t)
    for (int y = 0; y < c.H; ++y)
      for (int x = 0; x < c.W; ++x) {
        const double gray = (c.at(t, y, x, 0) + c.at(t, y, x, 1) + c.at(t, y, x, 2)) / 3.0;
        for (int ch = 0; ch < 3; ++ch)
          c.at(t, y, x, ch) = clamp01(gray + f * (c.at(t, y, x, ch) - gray));
      }
  return c;
}

VideoClip apply_contrast(VideoClip c, double f) {
  for (double& v : c.data) v = clamp01(0.5 + f * (v - 0.5));
  return c;
}

VideoClip apply_block(VideoClip c, int count, Rng& rng) {
  const int side = std::max(2, c.H / 6);
  for (int b = 0; b < count; ++b) {
    const int y0 = static_cast<int>(rng.uniform_int(0, std::max(0, c.H - side)));
    const int x0 = static_cast<int>(rng.uniform_int(0, std::max(0, c.W - side)));
    for (int t = 0; t < c.T; ++t)
      for (int y = y0; y < std::min(c.H, y0 + side); ++y)
        for (int x = x0; x < std::min(c.W, x0 + side); ++x)
          for (int ch = 0; ch < 3; ++ch) c.at(t, y, x, ch) = 0.0;
  }
  return c;
}

VideoClip apply_noise(VideoClip c, double sigma, Rng& rng) {
  if (sigma == 0.0) return c;
  for (double& v : c.data) v = clamp01(v + sigma * rng.normal());
  return c;
}

VideoClip apply_blur(const VideoClip& c, int radius) {
  if (radius == 0) return c;
  const double sigma = radius / 2.0;
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += kernel[i + radius];
  }
  for (double& k : kernel) k /= ksum;

  VideoClip tmp = c, out = c;
  for (int t = 0; t < c.T; ++t)
    for (int ch = 0; ch < 3; ++ch) {
      for (int y = 0; y < c.H; ++y)  // horizontal pass
        for (int x = 0; x < c.W; ++x) {
          double acc = 0.0;
          for (int i = -radius; i <= radius; ++i)
            acc += kernel[i + radius] * c.at(t, y, std::clamp(x + i, 0, c.W - 1), ch);
          tmp.at(t, y, x, ch) = acc;
        }
      for (int y = 0; y < c.H; ++y)  // vertical pass
        for (int x = 0; x < c.W; ++x) {
          double acc = 0.0;
          for (int i = -radius; i <= radius; ++i)
            acc += kernel[i + radius] * tmp.at(t, std::clamp(y + i, 0, c.H - 1), x, ch);
          out.at(t, y, x, ch) = acc;
        }
    }
  return out;
}

VideoClip apply_pixelation(VideoClip c, int factor) {
  if (factor <= 1) return c;
  for (int t = 0; t < c.T; ++t)
    for (int ch = 0; ch < 3; ++ch)
      for (int by = 0; by < c.H; by += factor)
        for (int bx = 0; bx < c.W; bx += factor) {
          const int yh = std::min(c.H, by + factor), xh = std::min(c.W, bx + factor);
          double acc = 0.0;
          for (int y = by; y < yh; ++y)
            for (int x = bx; x < xh; ++x) acc += c.at(t, y, x, ch);
          acc /= static_cast<double>((yh - by) * (xh - bx));
          for (int y = by; y < yh; ++y)
            for (int x = bx; x < xh; ++x) c.at(t, y, x, ch) = acc;
        }
  return c;
}

const Eigen::MatrixXd& dct_matrix(int n) {
  static Eigen::MatrixXd cache[9];
  if (cache[n].size() == 0) {
    Eigen::MatrixXd m(n, n);
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        m(k, i) = std::sqrt((k == 0 ? 1.0 : 2.0) / n) *
                  std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
    cache[n] = m;
  }
  return cache[n];
}

/// Block-DCT quantisation proxy for video compression: 8x8 orthonormal DCT
/// per frame/channel, coefficients rounded to multiples of qstep.
VideoClip apply_compression(VideoClip c, double qstep) {
  if (qstep == 0.0) return c;
  constexpr int B = 8;
  for (int t = 0; t < c.T; ++t)
    for (int ch = 0; ch < 3; ++ch)
      for (int by = 0; by < c.H; by += B)
        for (int bx = 0; bx < c.W; bx += B) {
          const int h = std::min(B, c.H - by), w = std::min(B, c.W - bx);
          Eigen::MatrixXd block(h, w);
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) block(y, x) = c.at(t, by + y, bx + x, ch);
          const Eigen::MatrixXd& dr = dct_matrix(h);
          const Eigen::MatrixXd& dc = dct_matrix(w);
          Eigen::MatrixXd coef = dr * block * dc.transpose();
          coef = (coef / qstep).array().round() * qstep;
          block = dr.transpose() * coef * dc;
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
              c.at(t, by + y, bx + x, ch) = clamp01(block(y, x));
        }
  return c;
}

}  // namespace

VideoClip corrupt(const VideoClip& clip, const CorruptionSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.severity == 0) return clip;
  switch (spec.family) {
    case CorruptionFamily::saturation:
      return apply_saturation(clip, saturation_factor(spec.severity));
    case CorruptionFamily::contrast:
      return apply_contrast(clip, contrast_factor(spec.severity));
    case CorruptionFamily::block:
      return apply_block(clip, block_count(spec.severity), rng);
    case CorruptionFamily::noise:
      return apply_noise(clip, noise_sigma(spec.severity), rng);
    case CorruptionFamily::blur:
      return apply_blur(clip, blur_radius(spec.severity));
    case CorruptionFamily::pixelation:
      return apply_pixelation(clip, pixelation_factor(spec.severity));
    case CorruptionFamily::compression:
      return apply_compression(clip, compression_qstep(spec.severity));
  }
  throw std::logic_error("corrupt: bad family");
}

double mean_abs_deviation(const VideoClip& a, const VideoClip& b) {
  if (a.data.size() != b.data.size())
    throw std::invalid_argument("mean_abs_deviation: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
  return acc / static_cast<double>(a.data.size());
}

}  // namespace avf
