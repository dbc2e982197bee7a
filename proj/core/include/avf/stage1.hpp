#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "avf/augment.hpp"
#include "avf/backbones.hpp"
#include "avf/checkpoint.hpp"
#include "avf/corpus.hpp"
#include "avf/optim.hpp"

namespace avf {

/// Stage-1 pretraining configuration. The variant flags span the ablation
/// grid: {dense|global} embeddings, InfoNCE negatives (queue + temperature),
/// predictor on/off, and the visual-only two-view baseline.
struct Stage1Config {
  double lr = 7e-4;
  double weight_decay = 1e-2;
  int epochs = 150;
  int warmup_epochs = 20;
  bool predictor_lr_fixed = true;
  double ema_momentum = 0.999;
  int batch_size = 32;
  std::string embedding = "dense";  // "dense" | "global"
  bool negatives = false;
  int queue_size = 65536;
  double temperature = 0.07;
  bool shuffle_bn = true;  // only active with negatives
  bool predictor = true;
  bool visual_only = false;
  std::string optimizer = "adamp";
  double collapse_factor = 0.01;  // threshold = collapse_factor / sqrt(C)
  int collapse_patience = 3;      // consecutive epochs below threshold
  std::uint64_t seed = 0;
  MaskSpec mask;

  void validate() const;
  json to_json() const;
  static Stage1Config from_json(const json& j);
};

/// Declares collapse when the mean (over channels) across-batch standard
/// deviation of the normalised embeddings stays below threshold for
/// `patience` consecutive epochs.
class CollapseMonitor {
 public:
  CollapseMonitor(double threshold, int patience)
      : threshold_(threshold), patience_(patience) {}
  void observe(double epoch_std);
  bool collapsed() const { return collapsed_; }
  double threshold() const { return threshold_; }

 private:
  double threshold_;
  int patience_;
  int below_ = 0;
  bool collapsed_ = false;
};

/// Mean over channels of the across-batch std of embedding rows [rows x C].
double embedding_std(const MatRM& rows);

/// Dense collapse statistic: rows are sample-major [N*T x C]; the std is
/// taken across the N samples at each (t, channel) and averaged. Temporal
/// structure alone therefore does not register as batch variance.
double embedding_std(const MatRM& rows, int samples);

/// Eq.-1 symmetric dense prediction loss. Targets must be detached
/// (no-grad) unit-row embeddings of shape [N,T,C]; predictions likewise
/// unit-row but carrying gradient. Returns the batch-mean loss.
Tensor prediction_loss(const Tensor& z_v_t, const Tensor& z_a_t, const Tensor& p_v,
                       const Tensor& p_a);

struct AvSample {
  VideoClip clip;
  Spectrogram spec;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double embed_std = 0.0;
  bool collapse_flag = false;
  json to_json() const;
};

struct Stage1Result {
  bool collapsed = false;
  std::vector<EpochLog> logs;
};

/// Owns the four networks and the optimisation loop. In-memory dataset for
/// desk-scale corpora; `train_stage1` below wires it to a corpus directory.
class Stage1Trainer {
 public:
  Stage1Trainer(const NetworkSpec& spec, const Stage1Config& cfg);

  Stage1Result fit(const std::vector<AvSample>& reals);
  /// One optimisation step over the given batch; returns (loss, embed rows).
  double step(const std::vector<AvSample>& batch, double lr, MatRM* embed_rows);

  ModelBundle& bundle() { return bundle_; }
  const Stage1Config& config() const { return cfg_; }
  Checkpoint make_checkpoint() const;

 private:
  NetworkSpec spec_;
  Stage1Config cfg_;
  mutable ModelBundle bundle_;
  std::optional<Optimizer> opt_encoder_, opt_predictor_;
  mutable Rng rng_;
  std::deque<Vec> queue_v_, queue_a_;  // InfoNCE ring buffers of target rows
};

/// Loads the real training split (fakes rejected by construction: only real
/// records are read), trains, writes the checkpoint and a JSONL log.
Stage1Result train_stage1(const CorpusManifest& manifest, const std::string& corpus_dir,
                          const NetworkSpec& spec, const Stage1Config& cfg,
                          const std::string& out_ckpt, const std::string& log_path);

/// Batch packing: clips [N,3,T,H,W]; spectrograms [N,1,T,L]. All clips (resp.
/// spectrograms) must agree in shape.
Tensor pack_clips(const std::vector<VideoClip>& clips);
Tensor pack_spectrograms(const std::vector<Spectrogram>& specs);

}  // namespace avf
