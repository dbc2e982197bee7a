#pragma once

#include <optional>
#include <string>
#include <vector>

#include "avf/augment.hpp"
#include "avf/backbones.hpp"
#include "avf/checkpoint.hpp"
#include "avf/corpus.hpp"
#include "avf/optim.hpp"

namespace avf {

struct Stage2Config {
  double lr = 3e-4;
  double weight_decay = 1e-2;
  int epochs = 150;
  int warmup_epochs = 20;
  int patience = 10;  // early-stopping patience on validation video AUC
  int batch_fake = 32;
  int batch_real = 256;
  double aux_weight = 1.0;  // w in the combined objective
  double scale = 64.0;      // cosine-classifier scale s
  bool init_from_stage1 = true;
  bool aux_loss_on = true;
  bool logit_adjustment_on = true;
  std::string optimizer = "adamp";
  std::uint64_t seed = 0;
  MaskSpec mask;

  double prior_pi() const {
    return static_cast<double>(batch_fake) / static_cast<double>(batch_fake + batch_real);
  }
  void validate() const;
  json to_json() const;
  static Stage2Config from_json(const json& j);
};

/// Shared backbone f, a single-vector cosine classifier, a fresh auxiliary
/// projector+predictor, and the frozen stage-1 video teacher.
class DetectorModel {
 public:
  DetectorModel() = default;
  /// Fresh model; backbone and teacher are taken from the stage-1 checkpoint
  /// when init_from_stage1 (teacher always is — the aux loss needs it).
  DetectorModel(const NetworkSpec& spec, const Checkpoint& stage1,
                bool init_from_stage1, std::uint64_t seed);

  /// Dense backbone features [N,T,D].
  Tensor features(const Tensor& clips, bool training);
  /// Per-clip logits [N]: s*cos(w, mean_t f(x)) (+ log-prior when adjusted).
  Tensor clip_logits(const Tensor& clips, double pi, bool adjust, bool training);
  Tensor clip_logits_from_features(const Tensor& feats, double pi, bool adjust);
  /// Eq.-3 auxiliary loss on a real-only batch of clips.
  Tensor aux_loss(const Tensor& real_clips, bool training);

  ParamMap trainable_params();
  std::uint64_t teacher_hash();  // over the frozen teacher's parameters
  const NetworkSpec& spec() const { return spec_; }

  double head_scale = 64.0;  // cosine-classifier scale s

  Checkpoint make_checkpoint();
  static DetectorModel load(const Checkpoint& ckpt);

 private:
  NetworkSpec spec_;
  VideoBackbone backbone_;
  Tensor head_weight_;
  Projector aux_projector_;
  Predictor aux_predictor_;
  VideoEncoder teacher_;
  std::uint64_t expected_teacher_hash_ = 0;
  void collect_all(ParamMap& p, BufMap& b, ParamMap& tp, BufMap& tb);
  friend struct DetectorAccess;
};

/// Mean BCE over the batch against {real=0, fake=1}; logits must already
/// carry the π adjustment when enabled.
Tensor supervised_loss(const Tensor& logits, const std::vector<int>& labels);

/// Contract wrapper for the auxiliary loss: rejects any fake-labelled sample.
Tensor aux_loss_checked(DetectorModel& model, const Tensor& clips,
                        const std::vector<int>& labels, bool training);

/// Video-level score: partition into floor(N/25) non-overlapping 25-frame
/// clips (loop-pad to one clip if shorter), sigmoid of the unadjusted cosine
/// logit per clip, mean. Frames are centre-cropped per the eval transform.
double score_video(DetectorModel& model, const VideoClip& video);

struct Stage2EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double supervised = 0.0;
  double aux = 0.0;
  double val_auc = 0.0;
  json to_json() const;
};

struct Stage2Result {
  std::vector<Stage2EpochLog> logs;
  double best_val_auc = 0.0;
  int best_epoch = -1;
};

struct ScoredVideo {
  std::string video_id;
  int label = 0;  // fake=1
  double score = 0.0;
};

/// Scores every record of a split at the video level.
std::vector<ScoredVideo> score_split(DetectorModel& model, const CorpusManifest& manifest,
                                     const std::string& corpus_dir,
                                     const std::string& split);

Stage2Result train_stage2(const CorpusManifest& manifest, const std::string& corpus_dir,
                          const Checkpoint& stage1, const NetworkSpec& spec,
                          const Stage2Config& cfg, DetectorModel& out_model,
                          const std::string& log_path = "");

}  // namespace avf
