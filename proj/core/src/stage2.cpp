#include "avf/stage2.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "avf/metrics.hpp"
#include "avf/stage1.hpp"

namespace avf {

void Stage2Config::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("Stage2Config: lr must be positive");
  if (epochs <= 0) throw std::invalid_argument("Stage2Config: epochs must be positive");
  if (warmup_epochs < 0 || warmup_epochs > epochs)
    throw std::invalid_argument("Stage2Config: warmup_epochs must lie in [0, epochs]");
  if (patience <= 0) throw std::invalid_argument("Stage2Config: patience must be positive");
  if (batch_fake <= 0 || batch_real <= 0)
    throw std::invalid_argument("Stage2Config: batch composition counts must be positive");
  if (aux_weight < 0.0) throw std::invalid_argument("Stage2Config: aux_weight must be >= 0");
  if (scale <= 0.0) throw std::invalid_argument("Stage2Config: scale must be positive");
  const double pi = prior_pi();
  if (pi <= 0.0 || pi >= 1.0)
    throw std::invalid_argument("Stage2Config: prior must lie in (0,1)");
  OptimConfig oc;
  oc.kind = optimizer;
  oc.lr = lr;
  oc.weight_decay = weight_decay;
  oc.validate();
}

json Stage2Config::to_json() const {
  json j;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["epochs"] = epochs;
  j["warmup_epochs"] = warmup_epochs;
  j["patience"] = patience;
  j["batch_fake"] = batch_fake;
  j["batch_real"] = batch_real;
  j["aux_weight"] = aux_weight;
  j["scale"] = scale;
  j["init_from_stage1"] = init_from_stage1;
  j["aux_loss_on"] = aux_loss_on;
  j["logit_adjustment_on"] = logit_adjustment_on;
  j["optimizer"] = optimizer;
  j["seed"] = seed;
  j["mask"] = mask.to_json();
  return j;
}

Stage2Config Stage2Config::from_json(const json& j) {
  Stage2Config c;
  json known = c.to_json();
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key()))
      throw std::invalid_argument("Stage2Config: unknown key '" + it.key() + "'");
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.patience = j.value("patience", c.patience);
  c.batch_fake = j.value("batch_fake", c.batch_fake);
  c.batch_real = j.value("batch_real", c.batch_real);
  c.aux_weight = j.value("aux_weight", c.aux_weight);
  c.scale = j.value("scale", c.scale);
  c.init_from_stage1 = j.value("init_from_stage1", c.init_from_stage1);
  c.aux_loss_on = j.value("aux_loss_on", c.aux_loss_on);
  c.logit_adjustment_on = j.value("logit_adjustment_on", c.logit_adjustment_on);
  c.optimizer = j.value("optimizer", c.optimizer);
  c.seed = j.value("seed", c.seed);
  if (j.contains("mask")) c.mask = MaskSpec::from_json(j.at("mask"));
  c.validate();
  return c;
}

namespace {

std::uint64_t hash_teacher(VideoEncoder& teacher) {
  ParamMap p;
  BufMap b;
  teacher.collect("video_teacher", p, b);
  Checkpoint tmp;
  tmp.put_params("teacher_v", p);
  return group_hash(tmp, "teacher_v");
}

}  // namespace

DetectorModel::DetectorModel(const NetworkSpec& spec, const Checkpoint& stage1,
                             bool init_from_stage1, std::uint64_t seed) {
  spec_ = spec;
  Rng rng(Rng::mix(seed, 0x57a6e2ULL));
  backbone_ = VideoBackbone(spec, rng);
  const int D = spec.video_out_width();
  head_weight_ = Tensor::zeros({D}, true);
  for (int i = 0; i < D; ++i) head_weight_.value()[i] = rng.normal() / std::sqrt(D);
  aux_projector_ = Projector(spec, D, rng);
  aux_predictor_ = Predictor(spec, rng);
  teacher_ = VideoEncoder(spec, rng);

  // The frozen teacher always comes from stage 1; the backbone does too when
  // init_from_stage1 (the "only CSN" baseline keeps its random init).
  {
    ParamMap tp;
    BufMap tb;
    teacher_.collect("video_teacher", tp, tb);
    stage1.get_params("teacher_v", tp);
    stage1.get_buffers("teacher_v_buf", tb);
    for (auto& [n, t] : tp.items) t.set_requires_grad(false);
  }
  if (stage1.meta.count("video_teacher_hash")) {
    expected_teacher_hash_ = std::stoull(stage1.meta.at("video_teacher_hash"));
    if (teacher_hash() != expected_teacher_hash_)
      throw std::runtime_error("stage2: teacher hash mismatch against stage-1 checkpoint");
  } else {
    expected_teacher_hash_ = teacher_hash();
  }
  if (init_from_stage1) {
    ParamMap bp;
    BufMap bb;
    backbone_.collect("video_teacher.backbone", bp, bb);
    stage1.get_params("teacher_v", bp);
    stage1.get_buffers("teacher_v_buf", bb);
  }
}

Tensor DetectorModel::features(const Tensor& clips, bool training) {
  return backbone_.forward(clips, training);
}

Tensor DetectorModel::clip_logits_from_features(const Tensor& feats, double pi,
                                                bool adjust) {
  return cosine_logits(mean_dim1(feats), head_weight_, head_scale, pi, adjust);
}

Tensor DetectorModel::clip_logits(const Tensor& clips, double pi, bool adjust,
                                  bool training) {
  return clip_logits_from_features(features(clips, training), pi, adjust);
}

Tensor DetectorModel::aux_loss(const Tensor& real_clips, bool training) {
  const int N = real_clips.dim(0);
  Tensor feats = features(real_clips, training);
  Tensor q = l2_normalize_lastdim(
      aux_predictor_.forward(aux_projector_.forward(feats, training), training));
  Tensor target;
  {
    NoGradGuard ng;
    target = l2_normalize_lastdim(teacher_.forward(real_clips, false));
  }
  Tensor d = sub(target, q);
  return scale(sum(mul(d, d)), 1.0 / static_cast<double>(N));
}

ParamMap DetectorModel::trainable_params() {
  ParamMap p;
  BufMap b;
  backbone_.collect("backbone", p, b);
  p.add("head.w", head_weight_);
  aux_projector_.collect("aux_projector", p, b);
  aux_predictor_.collect("aux_predictor", p, b);
  return p;
}

std::uint64_t DetectorModel::teacher_hash() { return hash_teacher(teacher_); }

void DetectorModel::collect_all(ParamMap& p, BufMap& b, ParamMap& tp, BufMap& tb) {
  backbone_.collect("backbone", p, b);
  p.add("head.w", head_weight_);
  aux_projector_.collect("aux_projector", p, b);
  aux_predictor_.collect("aux_predictor", p, b);
  teacher_.collect("video_teacher", tp, tb);
}

Checkpoint DetectorModel::make_checkpoint() {
  Checkpoint ckpt;
  ckpt.spec = spec_;
  ckpt.meta["stage"] = "2";
  ckpt.meta["profile"] = spec_.profile;
  ParamMap p, tp;
  BufMap b, tb;
  collect_all(p, b, tp, tb);
  ckpt.put_params("detector", p);
  ckpt.put_buffers("detector_buf", b);
  ckpt.put_params("teacher_v", tp);
  ckpt.put_buffers("teacher_v_buf", tb);
  ckpt.meta["video_teacher_hash"] = std::to_string(group_hash(ckpt, "teacher_v"));
  ckpt.meta["head_scale"] = std::to_string(head_scale);
  return ckpt;
}

DetectorModel DetectorModel::load(const Checkpoint& ckpt) {
  // teacher groups double as the stage-1 source for construction
  DetectorModel m(ckpt.spec, ckpt, false, 0);
  ParamMap p, tp;
  BufMap b, tb;
  m.collect_all(p, b, tp, tb);
  ckpt.get_params("detector", p);
  ckpt.get_buffers("detector_buf", b);
  if (ckpt.meta.count("head_scale")) m.head_scale = std::stod(ckpt.meta.at("head_scale"));
  return m;
}

Tensor supervised_loss(const Tensor& logits, const std::vector<int>& labels) {
  std::vector<Scalar> targets(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw std::invalid_argument("supervised_loss: labels must be 0/1");
    targets[i] = static_cast<Scalar>(labels[i]);
  }
  return bce_with_logits(logits, targets);
}

Tensor aux_loss_checked(DetectorModel& model, const Tensor& clips,
                        const std::vector<int>& labels, bool training) {
  if (static_cast<int>(labels.size()) != clips.dim(0))
    throw std::invalid_argument("aux_loss: label count mismatch");
  for (int l : labels)
    if (l != 0) throw std::invalid_argument("aux_loss: fake sample in real-only batch");
  return model.aux_loss(clips, training);
}

double score_video(DetectorModel& model, const VideoClip& video) {
  if (video.T < 1) throw std::invalid_argument("score_video: empty video");
  const int clip_len = 25;
  const int n_clips = std::max(1, video.T / clip_len);
  const TransformGeometry geom = TransformGeometry::for_source(video.H);
  Rng rng(0);  // eval transform is deterministic; rng is unused entropy
  NoGradGuard ng;
  double acc = 0.0;
  for (int c = 0; c < n_clips; ++c) {
    VideoClip sub;
    sub.T = clip_len;
    sub.H = video.H;
    sub.W = video.W;
    sub.frame_rate = video.frame_rate;
    sub.data.resize(static_cast<std::size_t>(clip_len) * video.H * video.W * 3);
    for (int t = 0; t < clip_len; ++t) {
      // loop-pad when the tail (or the whole video) is shorter than one clip
      const int src_t = (c * clip_len + t) % video.T;
      std::copy_n(video.data.begin() +
                      static_cast<std::size_t>(src_t) * video.H * video.W * 3,
                  static_cast<std::size_t>(video.H) * video.W * 3,
                  sub.data.begin() + static_cast<std::size_t>(t) * video.H * video.W * 3);
    }
    VideoClip view = train_transform(sub, TransformMode::eval, MaskSpec{}, rng);
    Tensor x = pack_clips({view});
    const double logit = model.clip_logits(x, 0.5, /*adjust=*/false, false).value()[0];
    acc += 1.0 / (1.0 + std::exp(-logit));
  }
  return acc / n_clips;
}

json Stage2EpochLog::to_json() const {
  json j;
  j["epoch"] = epoch;
  j["loss"] = loss;
  j["supervised"] = supervised;
  j["aux"] = aux;
  j["val_auc"] = val_auc;
  return j;
}

std::vector<ScoredVideo> score_split(DetectorModel& model, const CorpusManifest& manifest,
                                     const std::string& corpus_dir,
                                     const std::string& split) {
  std::vector<ScoredVideo> out;
  for (const SampleRecord* r : manifest.split_records(split)) {
    auto [clip, sg, label] = load_sample(corpus_dir, manifest, r->sample_id);
    ScoredVideo s;
    s.video_id = r->sample_id;
    s.label = (label == Label::fake) ? 1 : 0;
    s.score = score_video(model, clip);
    out.push_back(std::move(s));
  }
  return out;
}

Stage2Result train_stage2(const CorpusManifest& manifest, const std::string& corpus_dir,
                          const Checkpoint& stage1, const NetworkSpec& spec,
                          const Stage2Config& cfg, DetectorModel& out_model,
                          const std::string& log_path) {
  cfg.validate();
  DetectorModel model(spec, stage1, cfg.init_from_stage1, cfg.seed);
  model.head_scale = cfg.scale;
  const std::uint64_t teacher_before = model.teacher_hash();

  // In-memory clip cache; stage 2 is visual-only so spectrograms stay on disk.
  std::vector<VideoClip> fake_clips, real_clips;
  for (const SampleRecord* r : manifest.split_records("train")) {
    auto [clip, sg, label] = load_sample(corpus_dir, manifest, r->sample_id);
    (label == Label::fake ? fake_clips : real_clips).push_back(std::move(clip));
  }
  if (fake_clips.empty() || real_clips.empty())
    throw std::runtime_error("stage2: training split must contain both classes");

  OptimConfig oc;
  oc.kind = cfg.optimizer;
  oc.lr = cfg.lr;
  oc.weight_decay = cfg.weight_decay;
  Optimizer opt(oc, model.trainable_params());
  Rng rng(Rng::mix(cfg.seed, 0x57a6e3ULL));
  const double pi = cfg.prior_pi();
  const int steps = std::max(
      1, static_cast<int>(fake_clips.size() + real_clips.size()) /
             (cfg.batch_fake + cfg.batch_real));

  Stage2Result result;
  std::vector<Vec> best_params;
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0, sup_sum = 0.0, aux_sum = 0.0;
    for (int s = 0; s < steps; ++s) {
      std::vector<VideoClip> batch;
      std::vector<int> labels;
      std::vector<VideoClip> batch_reals;
      for (int i = 0; i < cfg.batch_fake; ++i) {
        const VideoClip& c =
            fake_clips[rng.uniform_int(0, static_cast<int>(fake_clips.size()) - 1)];
        batch.push_back(train_transform(c, TransformMode::stage2, cfg.mask, rng));
        labels.push_back(1);
      }
      for (int i = 0; i < cfg.batch_real; ++i) {
        const VideoClip& c =
            real_clips[rng.uniform_int(0, static_cast<int>(real_clips.size()) - 1)];
        VideoClip view = train_transform(c, TransformMode::stage2, cfg.mask, rng);
        batch_reals.push_back(view);
        batch.push_back(std::move(view));
        labels.push_back(0);
      }
      Tensor x = pack_clips(batch);
      Tensor logits = model.clip_logits(x, pi, cfg.logit_adjustment_on, true);
      Tensor l_s = supervised_loss(logits, labels);
      Tensor total = l_s;
      double aux_val = 0.0;
      if (cfg.aux_loss_on && cfg.aux_weight > 0.0) {
        std::vector<int> real_labels(batch_reals.size(), 0);
        Tensor l_a = aux_loss_checked(model, pack_clips(batch_reals), real_labels, true);
        aux_val = l_a.item();
        total = add(l_s, scale(l_a, cfg.aux_weight));
      }
      const double loss_val = total.item();
      if (!std::isfinite(loss_val))
        throw std::runtime_error("stage2: non-finite loss encountered");
      opt.zero_grad();
      total.backward();
      const double frac = static_cast<double>(epoch) + static_cast<double>(s) / steps;
      opt.step(scheduled_lr(cfg.lr, frac, cfg.warmup_epochs, cfg.epochs));
      loss_sum += loss_val;
      sup_sum += l_s.item();
      aux_sum += aux_val;
    }

    std::vector<ScoredVideo> val = score_split(model, manifest, corpus_dir, "val");
    std::vector<double> scores;
    std::vector<int> labels;
    for (const ScoredVideo& v : val) {
      scores.push_back(v.score);
      labels.push_back(v.label);
    }
    const double val_auc = roc_auc(scores, labels);

    Stage2EpochLog log;
    log.epoch = epoch;
    log.loss = loss_sum / steps;
    log.supervised = sup_sum / steps;
    log.aux = aux_sum / steps;
    log.val_auc = val_auc;
    result.logs.push_back(log);

    if (val_auc > result.best_val_auc || result.best_epoch < 0) {
      result.best_val_auc = val_auc;
      result.best_epoch = epoch;
      since_best = 0;
      best_params.clear();
      ParamMap p = model.trainable_params();
      for (auto& [n, t] : p.items) best_params.push_back(t.value());
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  // restore the early-stopping winner
  if (!best_params.empty()) {
    ParamMap p = model.trainable_params();
    for (std::size_t i = 0; i < p.items.size(); ++i)
      p.items[i].second.value() = best_params[i];
  }
  if (model.teacher_hash() != teacher_before)
    throw std::runtime_error("stage2: frozen teacher changed during training");
  if (!log_path.empty()) {
    std::ofstream f(log_path, std::ios::trunc);
    for (const Stage2EpochLog& l : result.logs) f << l.to_json().dump() << "\n";
  }
  out_model = std::move(model);
  return result;
}

}  // namespace avf
