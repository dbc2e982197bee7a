#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "avf/nn.hpp"

namespace avf {

/// Architecture description for every network in the bundle. The paper
/// profile follows the published stage tables; the desk profile quarters the
/// widths and shrinks the stage repeats so CPU training stays in minutes;
/// the tiny profile exists for gradient checks and training-loop tests.
struct NetworkSpec {
  std::string profile = "desk";
  // video backbone (channel-separated 3-D conv net, no temporal subsampling)
  int video_stem_width = 16;
  std::vector<int> video_repeats{1, 1, 2, 1};
  std::vector<int> video_widths{64, 128, 256, 512};  // stage output widths
  // audio backbone (2-D resnet over time x mel, time subsampled by 4 in stem)
  int audio_stem_width = 32;
  std::vector<int> audio_repeats{2, 2, 2, 2};
  std::vector<int> audio_widths{32, 64, 128, 256};
  // shared embedding
  int embed_dim = 64;
  std::string projector_kind = "linear_bn";  // linear_bn | mlp
  std::string predictor_kind = "transformer";  // transformer | mlp
  int heads = 4, head_dim = 16;
  int predictor_mlp_dim = 256;   // transformer block MLP width
  int projector_hidden = 256;    // mlp projector hidden width
  int predictor_hidden = 128;    // mlp predictor hidden width

  static NetworkSpec paper();
  static NetworkSpec desk();
  static NetworkSpec tiny();
  static NetworkSpec by_name(const std::string& profile);

  int video_out_width() const { return video_widths.back(); }
  int audio_out_width() const { return audio_widths.back(); }
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static NetworkSpec from_json(const nlohmann::ordered_json& j);
};

/// CSN-style bottleneck: 1x1x1 reduce, 3x3x3 depthwise, 1x1x1 expand.
struct CsnBottleneck {
  Conv3dLayer reduce, dw, expand;
  BatchNormLayer bn1, bn2, bn3;
  std::optional<Conv3dLayer> shortcut;
  std::optional<BatchNormLayer> shortcut_bn;

  CsnBottleneck() = default;
  CsnBottleneck(int cin, int cout, int spatial_stride, Rng& rng);
  Tensor forward(const Tensor& x, bool training);
  void collect(const std::string& prefix, ParamMap& params, BufMap& buffers);
};

class VideoBackbone {
 public:
  VideoBackbone() = default;
  VideoBackbone(const NetworkSpec& spec, Rng& rng);
  /// x is [N,3,T,H,W]; returns dense features [N,T,D]. T is never subsampled.
  Tensor forward(const Tensor& x, bool training);
  void collect(const std::string& prefix, ParamMap& params, BufMap& buffers);

 private:
  Conv3dLayer stem_;
  BatchNormLayer stem_bn_;
  std::vector<CsnBottleneck> blocks_;
};

/// Basic residual block over [N,C,T,F,1]; stride applies to the mel axis only.
struct AudioBasicBlock {
  Conv3dLayer conv1, conv2;
  BatchNormLayer bn1, bn2;
  std::optional<Conv3dLayer> shortcut;
  std::optional<BatchNormLayer> shortcut_bn;

  AudioBasicBlock() = default;
  AudioBasicBlock(int cin, int cout, int freq_stride, Rng& rng);
  Tensor forward(const Tensor& x, bool training);
  void collect(const std::string& prefix, ParamMap& params, BufMap& buffers);
};

class AudioBackbone {
 public:
  AudioBackbone() = default;
  AudioBackbone(const NetworkSpec& spec, Rng& rng);
  /// x is [N,1,T_a,L]; requires T_a % 4 == 0; returns [N, T_a/4, D].
  Tensor forward(const Tensor& x, bool training);
  void collect(const std::string& prefix, ParamMap& params, BufMap& buffers);

 private:
  Conv3dLayer stem_;
  BatchNormLayer stem_bn_;
  std::vector<AudioBasicBlock> blocks_;
};

/// Per-time-step map D -> C; caller applies l2 row normalisation.
class Projector {
 public:
  Projector() = default;
  Projector(const NetworkSpec& spec, int in_dim, Rng& rng);
  Tensor forward(const Tensor& features, bool training);  // [N,T,D] -> [N,T,C]
  void collect(const std::string& prefix, ParamMap& params, BufMap& buffers);

 private:
  std::string kind_;
  LinearLayer l1_, l2_, l3_;
  BatchNormLayer bn1_, bn2_, bn3_;
};

/// One transformer encoder block with batch norm before the MLP, or a 2-layer
/// MLP, over the projected sequence. Output is unnormalised; callers l2-norm.
class Predictor {
 public:
  Predictor() = default;
  Predictor(const NetworkSpec& spec, Rng& rng);
  Tensor forward(const Tensor& x, bool training);  // [N,T,C] -> [N,T,C]
  void collect(const std::string& prefix, ParamMap& params, BufMap& buffers);

  /// Attention weights of the last forward, rows summing to 1 ([N*h,T,T]).
  const Tensor& last_attention() const { return last_attn_; }

 private:
  std::string kind_;
  int heads_ = 0, head_dim_ = 0;
  LayerNormLayer ln_;
  LinearLayer q_, k_, v_, attn_out_, fc1_, fc2_;
  BatchNormLayer mlp_bn_;
  Tensor last_attn_;
};

/// Scaled cosine-similarity logits with an optional class-prior adjustment:
/// s * cos(w, e) + log(pi / (1 - pi)). Bias is fixed at zero.
Tensor cosine_logits(const Tensor& features, const Tensor& head_weight, Scalar scale,
                     Scalar prior_pi, bool adjust);

/// Backbone + projector; the unit that students and teachers share.
struct VideoEncoder {
  VideoBackbone backbone;
  Projector projector;
  VideoEncoder() = default;
  VideoEncoder(const NetworkSpec& spec, Rng& rng);
  /// Unnormalised projections [N,T,C].
  Tensor forward(const Tensor& clip_batch, bool training);
  void collect(const std::string& prefix, ParamMap& params, BufMap& buffers);
};

struct AudioEncoder {
  AudioBackbone backbone;
  Projector projector;
  AudioEncoder() = default;
  AudioEncoder(const NetworkSpec& spec, Rng& rng);
  Tensor forward(const Tensor& spec_batch, bool training);
  void collect(const std::string& prefix, ParamMap& params, BufMap& buffers);
};

/// The four stage-1 networks plus the students' predictors. Teachers start as
/// copies of the students and are updated only by EMA; their parameters never
/// require gradients.
struct ModelBundle {
  NetworkSpec spec;
  bool visual_only = false;
  VideoEncoder video_student, video_teacher;
  Predictor video_predictor;
  std::shared_ptr<AudioEncoder> audio_student, audio_teacher;  // null if visual_only
  std::shared_ptr<Predictor> audio_predictor;

  static ModelBundle create(const NetworkSpec& spec, std::uint64_t seed,
                            bool visual_only = false);

  ParamMap student_params();           // everything gradient-trained
  ParamMap student_encoder_params();   // backbone+projector only (EMA source)
  ParamMap predictor_params();
  ParamMap teacher_params();
  BufMap student_buffers();            // encoder buffers (EMA source)
  BufMap teacher_buffers();
  BufMap predictor_buffers();
};

}  // namespace avf
