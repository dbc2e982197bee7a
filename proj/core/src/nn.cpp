#include "avf/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "avf/io.hpp"

namespace avf {

std::int64_t ParamMap::total_size() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : items) n += t.size();
  return n;
}

void ema_update(ParamMap& teacher, const ParamMap& student, Scalar mu) {
  if (teacher.items.size() != student.items.size())
    throw std::invalid_argument("ema_update: parameter sets not congruent");
  for (std::size_t i = 0; i < teacher.items.size(); ++i) {
    Tensor& t = teacher.items[i].second;
    const Tensor& s = student.items[i].second;
    if (t.size() != s.size())
      throw std::invalid_argument("ema_update: size mismatch at " +
                                  teacher.items[i].first);
    t.value() = mu * t.value() + (1.0 - mu) * s.value();
  }
}

void ema_update_buffers(BufMap& teacher, const BufMap& student, Scalar mu) {
  if (teacher.items.size() != student.items.size())
    throw std::invalid_argument("ema_update_buffers: buffer sets not congruent");
  for (std::size_t i = 0; i < teacher.items.size(); ++i) {
    Vec& t = *teacher.items[i].second;
    const Vec& s = *student.items[i].second;
    if (t.size() != s.size())
      throw std::invalid_argument("ema_update_buffers: size mismatch");
    t = mu * t + (1.0 - mu) * s;
  }
}

void copy_params(ParamMap& dst, const ParamMap& src) {
  if (dst.items.size() != src.items.size())
    throw std::invalid_argument("copy_params: sets not congruent");
  for (std::size_t i = 0; i < dst.items.size(); ++i)
    dst.items[i].second.value() = src.items[i].second.value();
}

void copy_buffers(BufMap& dst, const BufMap& src) {
  if (dst.items.size() != src.items.size())
    throw std::invalid_argument("copy_buffers: sets not congruent");
  for (std::size_t i = 0; i < dst.items.size(); ++i)
    *dst.items[i].second = *src.items[i].second;
}

std::uint64_t params_hash(const ParamMap& params, const BufMap& buffers) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : params.items) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(t.value().data(), static_cast<std::size_t>(t.size()) * sizeof(Scalar), h);
  }
  for (const auto& [name, v] : buffers.items) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(v->data(), static_cast<std::size_t>(v->size()) * sizeof(Scalar), h);
  }
  return h;
}

Tensor init_fan_in(Shape shape, std::int64_t fan_in, Rng& rng, Scalar gain) {
  Tensor t(std::move(shape), true);
  const Scalar sd = std::sqrt(gain / static_cast<Scalar>(std::max<std::int64_t>(fan_in, 1)));
  for (Eigen::Index i = 0; i < t.value().size(); ++i) t.value()[i] = rng.normal(0, sd);
  return t;
}

Conv3dLayer::Conv3dLayer(int cin, int cout, std::array<int, 3> kernel,
                         std::array<int, 3> stride, std::array<int, 3> pad, int groups,
                         bool bias, Rng& rng) {
  dims.stride_t = stride[0];
  dims.stride_h = stride[1];
  dims.stride_w = stride[2];
  dims.pad_t = pad[0];
  dims.pad_h = pad[1];
  dims.pad_w = pad[2];
  dims.groups = groups;
  const std::int64_t fan_in =
      static_cast<std::int64_t>(cin / groups) * kernel[0] * kernel[1] * kernel[2];
  w = init_fan_in({cout, cin / groups, kernel[0], kernel[1], kernel[2]}, fan_in, rng);
  if (bias) b = Tensor::zeros({cout}, true);
}

Tensor Conv3dLayer::forward(const Tensor& x) const { return conv3d(x, w, b, dims); }

void Conv3dLayer::collect(const std::string& prefix, ParamMap& params) {
  params.add(prefix + ".w", w);
  if (b.defined()) params.add(prefix + ".b", b);
}

LinearLayer::LinearLayer(int cin, int cout, Rng& rng, bool bias, Scalar gain) {
  w = init_fan_in({cout, cin}, cin, rng, gain);
  if (bias) b = Tensor::zeros({cout}, true);
}

Tensor LinearLayer::forward(const Tensor& x) const { return linear(x, w, b); }

void LinearLayer::collect(const std::string& prefix, ParamMap& params) {
  params.add(prefix + ".w", w);
  if (b.defined()) params.add(prefix + ".b", b);
}

BatchNormLayer::BatchNormLayer(int channels) {
  gamma = Tensor::full({channels}, 1.0, true);
  beta = Tensor::zeros({channels}, true);
  running_mean = Vec::Zero(channels);
  running_var = Vec::Ones(channels);
}

Tensor BatchNormLayer::forward_channel1(const Tensor& x, bool training) {
  return batchnorm_channel1(x, gamma, beta, running_mean, running_var, training);
}

Tensor BatchNormLayer::forward_rows(const Tensor& x, bool training) {
  return batchnorm_rows(x, gamma, beta, running_mean, running_var, training);
}

void BatchNormLayer::collect(const std::string& prefix, ParamMap& params,
                             BufMap& buffers) {
  params.add(prefix + ".gamma", gamma);
  params.add(prefix + ".beta", beta);
  buffers.add(prefix + ".running_mean", &running_mean);
  buffers.add(prefix + ".running_var", &running_var);
}

LayerNormLayer::LayerNormLayer(int channels) {
  gamma = Tensor::full({channels}, 1.0, true);
  beta = Tensor::zeros({channels}, true);
}

Tensor LayerNormLayer::forward(const Tensor& x) const {
  return layernorm_lastdim(x, gamma, beta);
}

void LayerNormLayer::collect(const std::string& prefix, ParamMap& params) {
  params.add(prefix + ".gamma", gamma);
  params.add(prefix + ".beta", beta);
}

}  // namespace avf
