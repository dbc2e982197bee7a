#include "avf/backbones.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace avf {

using njson = nlohmann::ordered_json;

NetworkSpec NetworkSpec::paper() {
  NetworkSpec s;
  s.profile = "paper";
  s.video_stem_width = 64;
  s.video_repeats = {3, 4, 23, 3};
  s.video_widths = {256, 512, 1024, 2048};
  s.audio_stem_width = 64;
  s.audio_repeats = {2, 2, 2, 2};
  s.audio_widths = {64, 128, 256, 512};
  s.embed_dim = 256;
  s.heads = 8;
  s.head_dim = 64;
  s.predictor_mlp_dim = 2048;
  s.projector_hidden = 2048;
  s.predictor_hidden = 512;
  return s;
}

NetworkSpec NetworkSpec::desk() { return NetworkSpec{}; }

NetworkSpec NetworkSpec::tiny() {
  NetworkSpec s;
  s.profile = "tiny";
  s.video_stem_width = 8;
  s.video_repeats = {1, 1, 1, 1};
  s.video_widths = {16, 24, 32, 48};
  s.audio_stem_width = 8;
  s.audio_repeats = {1, 1, 1, 1};
  s.audio_widths = {8, 12, 16, 24};
  s.embed_dim = 16;
  s.heads = 2;
  s.head_dim = 8;
  s.predictor_mlp_dim = 32;
  s.projector_hidden = 32;
  s.predictor_hidden = 32;
  return s;
}

NetworkSpec NetworkSpec::by_name(const std::string& profile) {
  if (profile == "paper") return paper();
  if (profile == "desk") return desk();
  if (profile == "tiny") return tiny();
  throw std::invalid_argument("unknown network profile: " + profile);
}

void NetworkSpec::validate() const {
  if (video_repeats.size() != 4 || video_widths.size() != 4 ||
      audio_repeats.size() != 4 || audio_widths.size() != 4)
    throw std::invalid_argument("NetworkSpec: expected 4 stages per backbone");
  for (int w : video_widths)
    if (w % 4 != 0) throw std::invalid_argument("NetworkSpec: video widths must be divisible by 4");
  if (projector_kind != "linear_bn" && projector_kind != "mlp")
    throw std::invalid_argument("NetworkSpec: bad projector_kind " + projector_kind);
  if (predictor_kind != "transformer" && predictor_kind != "mlp")
    throw std::invalid_argument("NetworkSpec: bad predictor_kind " + predictor_kind);
}

njson NetworkSpec::to_json() const {
  njson j;
  j["profile"] = profile;
  j["video_stem_width"] = video_stem_width;
  j["video_repeats"] = video_repeats;
  j["video_widths"] = video_widths;
  j["audio_stem_width"] = audio_stem_width;
  j["audio_repeats"] = audio_repeats;
  j["audio_widths"] = audio_widths;
  j["embed_dim"] = embed_dim;
  j["projector_kind"] = projector_kind;
  j["predictor_kind"] = predictor_kind;
  j["heads"] = heads;
  j["head_dim"] = head_dim;
  j["predictor_mlp_dim"] = predictor_mlp_dim;
  j["projector_hidden"] = projector_hidden;
  j["predictor_hidden"] = predictor_hidden;
  return j;
}

NetworkSpec NetworkSpec::from_json(const njson& j) {
  static const std::set<std::string> known = {
      "profile", "video_stem_width", "video_repeats", "video_widths",
      "audio_stem_width", "audio_repeats", "audio_widths", "embed_dim",
      "projector_kind", "predictor_kind", "heads", "head_dim",
      "predictor_mlp_dim", "projector_hidden", "predictor_hidden"};
  for (auto& [k, v] : j.items())
    if (!known.count(k)) throw std::invalid_argument("network spec: unknown key '" + k + "'");
  NetworkSpec s = j.contains("profile") ? by_name(j["profile"]) : NetworkSpec{};
  auto get_vec = [&](const char* key, std::vector<int>& out) {
    if (j.contains(key)) out = j[key].get<std::vector<int>>();
  };
  s.video_stem_width = j.value("video_stem_width", s.video_stem_width);
  get_vec("video_repeats", s.video_repeats);
  get_vec("video_widths", s.video_widths);
  s.audio_stem_width = j.value("audio_stem_width", s.audio_stem_width);
  get_vec("audio_repeats", s.audio_repeats);
  get_vec("audio_widths", s.audio_widths);
  s.embed_dim = j.value("embed_dim", s.embed_dim);
  s.projector_kind = j.value("projector_kind", s.projector_kind);
  s.predictor_kind = j.value("predictor_kind", s.predictor_kind);
  s.heads = j.value("heads", s.heads);
  s.head_dim = j.value("head_dim", s.head_dim);
  s.predictor_mlp_dim = j.value("predictor_mlp_dim", s.predictor_mlp_dim);
  s.projector_hidden = j.value("projector_hidden", s.projector_hidden);
  s.predictor_hidden = j.value("predictor_hidden", s.predictor_hidden);
  s.validate();
  return s;
}

// ---------------- video backbone ----------------

CsnBottleneck::CsnBottleneck(int cin, int cout, int spatial_stride, Rng& rng) {
  const int mid = cout / 4;
  reduce = Conv3dLayer(cin, mid, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, 1, false, rng);
  bn1 = BatchNormLayer(mid);
  dw = Conv3dLayer(mid, mid, {3, 3, 3}, {1, spatial_stride, spatial_stride},
                   {1, 1, 1}, mid, false, rng);
  bn2 = BatchNormLayer(mid);
  expand = Conv3dLayer(mid, cout, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, 1, false, rng);
  bn3 = BatchNormLayer(cout);
  if (cin != cout || spatial_stride != 1) {
    shortcut = Conv3dLayer(cin, cout, {1, 1, 1}, {1, spatial_stride, spatial_stride},
                           {0, 0, 0}, 1, false, rng);
    shortcut_bn = BatchNormLayer(cout);
  }
}

Tensor CsnBottleneck::forward(const Tensor& x, bool training) {
  Tensor y = relu(bn1.forward_channel1(reduce.forward(x), training));
  y = relu(bn2.forward_channel1(dw.forward(y), training));
  y = bn3.forward_channel1(expand.forward(y), training);
  Tensor res = shortcut ? shortcut_bn->forward_channel1(shortcut->forward(x), training)
                        : x;
  return relu(add(y, res));
}

void CsnBottleneck::collect(const std::string& p, ParamMap& params, BufMap& buffers) {
  reduce.collect(p + ".reduce", params);
  bn1.collect(p + ".bn1", params, buffers);
  dw.collect(p + ".dw", params);
  bn2.collect(p + ".bn2", params, buffers);
  expand.collect(p + ".expand", params);
  bn3.collect(p + ".bn3", params, buffers);
  if (shortcut) {
    shortcut->collect(p + ".shortcut", params);
    shortcut_bn->collect(p + ".shortcut_bn", params, buffers);
  }
}

VideoBackbone::VideoBackbone(const NetworkSpec& spec, Rng& rng) {
  stem_ = Conv3dLayer(3, spec.video_stem_width, {3, 7, 7}, {1, 2, 2}, {1, 3, 3}, 1,
                      false, rng);
  stem_bn_ = BatchNormLayer(spec.video_stem_width);
  int cin = spec.video_stem_width;
  for (int stage = 0; stage < 4; ++stage) {
    for (int block = 0; block < spec.video_repeats[static_cast<std::size_t>(stage)];
         ++block) {
      int stride = (stage > 0 && block == 0) ? 2 : 1;
      int cout = spec.video_widths[static_cast<std::size_t>(stage)];
      blocks_.emplace_back(cin, cout, stride, rng);
      cin = cout;
    }
  }
}

Tensor VideoBackbone::forward(const Tensor& x, bool training) {
  if (x.ndim() != 5 || x.dim(1) != 3)
    throw std::invalid_argument("video backbone expects [N,3,T,H,W], got " +
                                shape_str(x.shape()));
  Tensor y = relu(stem_bn_.forward_channel1(stem_.forward(x), training));
  y = maxpool3d(y, 1, 3, 3, 1, 2, 2, 0, 1, 1);
  for (auto& b : blocks_) y = b.forward(y, training);
  return permute(avgpool_spatial(y), {0, 2, 1});  // [N,T,D]
}

void VideoBackbone::collect(const std::string& p, ParamMap& params, BufMap& buffers) {
  stem_.collect(p + ".stem", params);
  stem_bn_.collect(p + ".stem_bn", params, buffers);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].collect(p + ".block" + std::to_string(i), params, buffers);
}

// ---------------- audio backbone ----------------

AudioBasicBlock::AudioBasicBlock(int cin, int cout, int freq_stride, Rng& rng) {
  conv1 = Conv3dLayer(cin, cout, {3, 3, 1}, {1, freq_stride, 1}, {1, 1, 0}, 1, false, rng);
  bn1 = BatchNormLayer(cout);
  conv2 = Conv3dLayer(cout, cout, {3, 3, 1}, {1, 1, 1}, {1, 1, 0}, 1, false, rng);
  bn2 = BatchNormLayer(cout);
  if (cin != cout || freq_stride != 1) {
    shortcut = Conv3dLayer(cin, cout, {1, 1, 1}, {1, freq_stride, 1}, {0, 0, 0}, 1,
                           false, rng);
    shortcut_bn = BatchNormLayer(cout);
  }
}

Tensor AudioBasicBlock::forward(const Tensor& x, bool training) {
  Tensor y = relu(bn1.forward_channel1(conv1.forward(x), training));
  y = bn2.forward_channel1(conv2.forward(y), training);
  Tensor res = shortcut ? shortcut_bn->forward_channel1(shortcut->forward(x), training)
                        : x;
  return relu(add(y, res));
}

void AudioBasicBlock::collect(const std::string& p, ParamMap& params, BufMap& buffers) {
  conv1.collect(p + ".conv1", params);
  bn1.collect(p + ".bn1", params, buffers);
  conv2.collect(p + ".conv2", params);
  bn2.collect(p + ".bn2", params, buffers);
  if (shortcut) {
    shortcut->collect(p + ".shortcut", params);
    shortcut_bn->collect(p + ".shortcut_bn", params, buffers);
  }
}

AudioBackbone::AudioBackbone(const NetworkSpec& spec, Rng& rng) {
  stem_ = Conv3dLayer(1, spec.audio_stem_width, {7, 7, 1}, {2, 2, 1}, {3, 3, 0}, 1,
                      false, rng);
  stem_bn_ = BatchNormLayer(spec.audio_stem_width);
  int cin = spec.audio_stem_width;
  for (int stage = 0; stage < 4; ++stage) {
    for (int block = 0; block < spec.audio_repeats[static_cast<std::size_t>(stage)];
         ++block) {
      int stride = (stage > 0 && block == 0) ? 2 : 1;
      int cout = spec.audio_widths[static_cast<std::size_t>(stage)];
      blocks_.emplace_back(cin, cout, stride, rng);
      cin = cout;
    }
  }
}

Tensor AudioBackbone::forward(const Tensor& x, bool training) {
  if (x.ndim() != 4 || x.dim(1) != 1)
    throw std::invalid_argument("audio backbone expects [N,1,T,L], got " +
                                shape_str(x.shape()));
  if (x.dim(2) % 4 != 0)
    throw std::invalid_argument("audio frame count must be divisible by 4, got " +
                                std::to_string(x.dim(2)));
  // add a trailing singleton so the shared conv3d machinery applies
  Tensor y = reshape(x, {x.dim(0), 1, x.dim(2), x.dim(3), 1});
  y = relu(stem_bn_.forward_channel1(stem_.forward(y), training));
  y = maxpool3d(y, 3, 3, 1, 2, 2, 1, 1, 1, 0);
  for (auto& b : blocks_) y = b.forward(y, training);
  return permute(avgpool_spatial(y), {0, 2, 1});  // global freq pool -> [N,T/4,D]
}

void AudioBackbone::collect(const std::string& p, ParamMap& params, BufMap& buffers) {
  stem_.collect(p + ".stem", params);
  stem_bn_.collect(p + ".stem_bn", params, buffers);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].collect(p + ".block" + std::to_string(i), params, buffers);
}

// ---------------- projector / predictor ----------------

Projector::Projector(const NetworkSpec& spec, int in_dim, Rng& rng)
    : kind_(spec.projector_kind) {
  const int c = spec.embed_dim;
  if (kind_ == "linear_bn") {
    l1_ = LinearLayer(in_dim, c, rng);
    bn1_ = BatchNormLayer(c);
  } else {
    const int h = spec.projector_hidden;
    l1_ = LinearLayer(in_dim, h, rng);
    bn1_ = BatchNormLayer(h);
    l2_ = LinearLayer(h, h, rng);
    bn2_ = BatchNormLayer(h);
    l3_ = LinearLayer(h, c, rng);
    bn3_ = BatchNormLayer(c);
  }
}

Tensor Projector::forward(const Tensor& features, bool training) {
  if (kind_ == "linear_bn")
    return bn1_.forward_rows(l1_.forward(features), training);
  Tensor y = relu(bn1_.forward_rows(l1_.forward(features), training));
  y = relu(bn2_.forward_rows(l2_.forward(y), training));
  return bn3_.forward_rows(l3_.forward(y), training);
}

void Projector::collect(const std::string& p, ParamMap& params, BufMap& buffers) {
  l1_.collect(p + ".l1", params);
  bn1_.collect(p + ".bn1", params, buffers);
  if (kind_ == "mlp") {
    l2_.collect(p + ".l2", params);
    bn2_.collect(p + ".bn2", params, buffers);
    l3_.collect(p + ".l3", params);
    bn3_.collect(p + ".bn3", params, buffers);
  }
}

Predictor::Predictor(const NetworkSpec& spec, Rng& rng)
    : kind_(spec.predictor_kind), heads_(spec.heads), head_dim_(spec.head_dim) {
  const int c = spec.embed_dim;
  if (kind_ == "transformer") {
    const int inner = heads_ * head_dim_;
    ln_ = LayerNormLayer(c);
    q_ = LinearLayer(c, inner, rng);
    k_ = LinearLayer(c, inner, rng);
    v_ = LinearLayer(c, inner, rng);
    attn_out_ = LinearLayer(inner, c, rng);
    mlp_bn_ = BatchNormLayer(c);
    fc1_ = LinearLayer(c, spec.predictor_mlp_dim, rng);
    fc2_ = LinearLayer(spec.predictor_mlp_dim, c, rng);
  } else {
    fc1_ = LinearLayer(c, spec.predictor_hidden, rng);
    mlp_bn_ = BatchNormLayer(spec.predictor_hidden);
    fc2_ = LinearLayer(spec.predictor_hidden, c, rng);
  }
}

Tensor Predictor::forward(const Tensor& x, bool training) {
  if (kind_ == "mlp")
    return fc2_.forward(relu(mlp_bn_.forward_rows(fc1_.forward(x), training)));
  const int n = x.dim(0), t = x.dim(1), c = x.dim(2);
  const int h = heads_, hd = head_dim_;
  Tensor xn = ln_.forward(x);
  auto split_heads = [&](const Tensor& m) {
    // [N,T,h*hd] -> [N*h, T, hd]
    return reshape(permute(reshape(m, {n, t, h, hd}), {0, 2, 1, 3}), {n * h, t, hd});
  };
  Tensor q = split_heads(q_.forward(xn));
  Tensor k = split_heads(k_.forward(xn));
  Tensor v = split_heads(v_.forward(xn));
  Tensor attn = softmax_lastdim(
      scale(bmm(q, permute(k, {0, 2, 1})), 1.0 / std::sqrt(static_cast<Scalar>(hd))));
  last_attn_ = attn.detach();
  Tensor ctx = bmm(attn, v);  // [N*h, T, hd]
  ctx = reshape(permute(reshape(ctx, {n, h, t, hd}), {0, 2, 1, 3}), {n, t, h * hd});
  Tensor y = add(x, attn_out_.forward(ctx));
  Tensor m = mlp_bn_.forward_rows(y, training);
  m = fc2_.forward(gelu(fc1_.forward(m)));
  return add(y, m);
}

void Predictor::collect(const std::string& p, ParamMap& params, BufMap& buffers) {
  if (kind_ == "transformer") {
    ln_.collect(p + ".ln", params);
    q_.collect(p + ".q", params);
    k_.collect(p + ".k", params);
    v_.collect(p + ".v", params);
    attn_out_.collect(p + ".attn_out", params);
    mlp_bn_.collect(p + ".mlp_bn", params, buffers);
    fc1_.collect(p + ".fc1", params);
    fc2_.collect(p + ".fc2", params);
  } else {
    fc1_.collect(p + ".fc1", params);
    mlp_bn_.collect(p + ".mlp_bn", params, buffers);
    fc2_.collect(p + ".fc2", params);
  }
}

Tensor cosine_logits(const Tensor& features, const Tensor& head_weight, Scalar scale_s,
                     Scalar prior_pi, bool adjust) {
  if (head_weight.value().norm() < 1e-12)
    throw std::invalid_argument("cosine_logits: zero-norm head weight");
  const int n = features.dim(0), d = features.dim(1);
  for (int i = 0; i < n; ++i)
    if (features.value().segment(static_cast<std::int64_t>(i) * d, d).norm() < 1e-12)
      throw std::invalid_argument("cosine_logits: zero-norm feature row");
  Tensor e = l2_normalize_lastdim(features);
  Tensor w = l2_normalize_lastdim(reshape(head_weight, {1, d}));
  Tensor logits = reshape(linear(e, w, Tensor{}), {n});  // cos similarity
  logits = scale(logits, scale_s);
  if (adjust) {
    if (prior_pi <= 0.0 || prior_pi >= 1.0)
      throw std::invalid_argument("cosine_logits: prior must lie in (0,1)");
    logits = add_scalar(logits, std::log(prior_pi / (1.0 - prior_pi)));
  }
  return logits;
}

// ---------------- encoders and bundle ----------------

VideoEncoder::VideoEncoder(const NetworkSpec& spec, Rng& rng)
    : backbone(spec, rng), projector(spec, spec.video_out_width(), rng) {}

Tensor VideoEncoder::forward(const Tensor& clip_batch, bool training) {
  return projector.forward(backbone.forward(clip_batch, training), training);
}

void VideoEncoder::collect(const std::string& p, ParamMap& params, BufMap& buffers) {
  backbone.collect(p + ".backbone", params, buffers);
  projector.collect(p + ".projector", params, buffers);
}

AudioEncoder::AudioEncoder(const NetworkSpec& spec, Rng& rng)
    : backbone(spec, rng), projector(spec, spec.audio_out_width(), rng) {}

Tensor AudioEncoder::forward(const Tensor& spec_batch, bool training) {
  return projector.forward(backbone.forward(spec_batch, training), training);
}

void AudioEncoder::collect(const std::string& p, ParamMap& params, BufMap& buffers) {
  backbone.collect(p + ".backbone", params, buffers);
  projector.collect(p + ".projector", params, buffers);
}

ModelBundle ModelBundle::create(const NetworkSpec& spec, std::uint64_t seed,
                                bool visual_only) {
  spec.validate();
  ModelBundle b;
  b.spec = spec;
  b.visual_only = visual_only;
  Rng rng(Rng::mix(seed, 0xB00D1E5ULL));
  b.video_student = VideoEncoder(spec, rng);
  b.video_teacher = VideoEncoder(spec, rng);
  b.video_predictor = Predictor(spec, rng);
  if (!visual_only) {
    b.audio_student = std::make_shared<AudioEncoder>(spec, rng);
    b.audio_teacher = std::make_shared<AudioEncoder>(spec, rng);
    b.audio_predictor = std::make_shared<Predictor>(spec, rng);
  }
  // teachers start as copies of the students, and never see gradients
  ParamMap sp, tp;
  BufMap sb, tb;
  b.video_student.collect("v", sp, sb);
  b.video_teacher.collect("v", tp, tb);
  if (!visual_only) {
    b.audio_student->collect("a", sp, sb);
    b.audio_teacher->collect("a", tp, tb);
  }
  copy_params(tp, sp);
  copy_buffers(tb, sb);
  for (auto& [name, t] : tp.items) t.set_requires_grad(false);
  return b;
}

ParamMap ModelBundle::student_params() {
  ParamMap p;
  BufMap b;
  video_student.collect("video_student", p, b);
  video_predictor.collect("video_predictor", p, b);
  if (!visual_only) {
    audio_student->collect("audio_student", p, b);
    audio_predictor->collect("audio_predictor", p, b);
  }
  return p;
}

ParamMap ModelBundle::student_encoder_params() {
  ParamMap p;
  BufMap b;
  video_student.collect("video_student", p, b);
  if (!visual_only) audio_student->collect("audio_student", p, b);
  return p;
}

ParamMap ModelBundle::predictor_params() {
  ParamMap p;
  BufMap b;
  video_predictor.collect("video_predictor", p, b);
  if (!visual_only) audio_predictor->collect("audio_predictor", p, b);
  return p;
}

ParamMap ModelBundle::teacher_params() {
  ParamMap p;
  BufMap b;
  video_teacher.collect("video_teacher", p, b);
  if (!visual_only) audio_teacher->collect("audio_teacher", p, b);
  return p;
}

BufMap ModelBundle::student_buffers() {
  ParamMap p;
  BufMap b;
  video_student.collect("video_student", p, b);
  if (!visual_only) audio_student->collect("audio_student", p, b);
  return b;
}

BufMap ModelBundle::teacher_buffers() {
  ParamMap p;
  BufMap b;
  video_teacher.collect("video_teacher", p, b);
  if (!visual_only) audio_teacher->collect("audio_teacher", p, b);
  return b;
}

BufMap ModelBundle::predictor_buffers() {
  ParamMap p;
  BufMap b;
  video_predictor.collect("video_predictor", p, b);
  if (!visual_only) audio_predictor->collect("audio_predictor", p, b);
  return b;
}

}  // namespace avf
