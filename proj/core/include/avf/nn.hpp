#pragma once

#include <array>
#include <string>
#include <vector>

#include "avf/rng.hpp"
#include "avf/tensor.hpp"

namespace avf {

/// Named trainable parameters, in a stable registration order.
struct ParamMap {
  std::vector<std::pair<std::string, Tensor>> items;
  void add(const std::string& name, const Tensor& t) { items.emplace_back(name, t); }
  std::int64_t total_size() const;
};

/// Named non-trainable state (batch-norm running statistics).
struct BufMap {
  std::vector<std::pair<std::string, Vec*>> items;
  void add(const std::string& name, Vec* v) { items.emplace_back(name, v); }
};

/// ψ' = μψ + (1−μ)θ elementwise over congruent parameter/buffer sets.
void ema_update(ParamMap& teacher, const ParamMap& student, Scalar mu);
void ema_update_buffers(BufMap& teacher, const BufMap& student, Scalar mu);

/// Copy values student -> teacher (used at initialisation).
void copy_params(ParamMap& dst, const ParamMap& src);
void copy_buffers(BufMap& dst, const BufMap& src);

/// FNV hash over all parameter and buffer bytes, for freeze verification.
std::uint64_t params_hash(const ParamMap& params, const BufMap& buffers);

Tensor init_fan_in(Shape shape, std::int64_t fan_in, Rng& rng, Scalar gain = 2.0);

class Conv3dLayer {
 public:
  Conv3dLayer() = default;
  Conv3dLayer(int cin, int cout, std::array<int, 3> kernel, std::array<int, 3> stride,
              std::array<int, 3> pad, int groups, bool bias, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamMap& params);

  Tensor w, b;
  Conv3dDims dims;
};

class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(int cin, int cout, Rng& rng, bool bias = true, Scalar gain = 1.0);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamMap& params);

  Tensor w, b;
};

class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  explicit BatchNormLayer(int channels);
  /// For [N,C,...] conv layouts.
  Tensor forward_channel1(const Tensor& x, bool training);
  /// For [...,C] token layouts (rows are all leading dims collapsed).
  Tensor forward_rows(const Tensor& x, bool training);
  void collect(const std::string& prefix, ParamMap& params, BufMap& buffers);

  Tensor gamma, beta;
  Vec running_mean, running_var;
};

class LayerNormLayer {
 public:
  LayerNormLayer() = default;
  explicit LayerNormLayer(int channels);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamMap& params);

  Tensor gamma, beta;
};

}  // namespace avf
