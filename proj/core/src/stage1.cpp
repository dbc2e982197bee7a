#include "avf/stage1.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace avf {

void Stage1Config::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("Stage1Config: lr must be positive");
  if (epochs <= 0) throw std::invalid_argument("Stage1Config: epochs must be positive");
  if (warmup_epochs < 0 || warmup_epochs > epochs)
    throw std::invalid_argument("Stage1Config: warmup_epochs must lie in [0, epochs]");
  if (ema_momentum < 0.0 || ema_momentum >= 1.0)
    throw std::invalid_argument("Stage1Config: ema_momentum must lie in [0,1)");
  if (batch_size <= 0) throw std::invalid_argument("Stage1Config: batch_size must be positive");
  if (embedding != "dense" && embedding != "global")
    throw std::invalid_argument("Stage1Config: embedding must be 'dense' or 'global'");
  if (negatives && queue_size <= batch_size)
    throw std::invalid_argument("Stage1Config: queue_size must exceed batch_size");
  if (temperature <= 0.0)
    throw std::invalid_argument("Stage1Config: temperature must be positive");
  if (collapse_factor <= 0.0 || collapse_patience <= 0)
    throw std::invalid_argument("Stage1Config: collapse settings must be positive");
  if (negatives && visual_only)
    throw std::invalid_argument("Stage1Config: negatives variant is cross-modal only");
  OptimConfig oc;
  oc.kind = optimizer;
  oc.lr = lr;
  oc.weight_decay = weight_decay;
  oc.validate();
}

json Stage1Config::to_json() const {
  json j;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["epochs"] = epochs;
  j["warmup_epochs"] = warmup_epochs;
  j["predictor_lr_fixed"] = predictor_lr_fixed;
  j["ema_momentum"] = ema_momentum;
  j["batch_size"] = batch_size;
  j["embedding"] = embedding;
  j["negatives"] = negatives;
  j["queue_size"] = queue_size;
  j["temperature"] = temperature;
  j["shuffle_bn"] = shuffle_bn;
  j["predictor"] = predictor;
  j["visual_only"] = visual_only;
  j["optimizer"] = optimizer;
  j["collapse_factor"] = collapse_factor;
  j["collapse_patience"] = collapse_patience;
  j["seed"] = seed;
  j["mask"] = mask.to_json();
  return j;
}

Stage1Config Stage1Config::from_json(const json& j) {
  Stage1Config c;
  json known = c.to_json();
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key()))
      throw std::invalid_argument("Stage1Config: unknown key '" + it.key() + "'");
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.predictor_lr_fixed = j.value("predictor_lr_fixed", c.predictor_lr_fixed);
  c.ema_momentum = j.value("ema_momentum", c.ema_momentum);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.embedding = j.value("embedding", c.embedding);
  c.negatives = j.value("negatives", c.negatives);
  c.queue_size = j.value("queue_size", c.queue_size);
  c.temperature = j.value("temperature", c.temperature);
  c.shuffle_bn = j.value("shuffle_bn", c.shuffle_bn);
  c.predictor = j.value("predictor", c.predictor);
  c.visual_only = j.value("visual_only", c.visual_only);
  c.optimizer = j.value("optimizer", c.optimizer);
  c.collapse_factor = j.value("collapse_factor", c.collapse_factor);
  c.collapse_patience = j.value("collapse_patience", c.collapse_patience);
  c.seed = j.value("seed", c.seed);
  if (j.contains("mask")) c.mask = MaskSpec::from_json(j.at("mask"));
  c.validate();
  return c;
}

void CollapseMonitor::observe(double epoch_std) {
  if (epoch_std < threshold_) {
    if (++below_ >= patience_) collapsed_ = true;
  } else {
    below_ = 0;
  }
}

double embedding_std(const MatRM& rows) {
  if (rows.rows() < 2) throw std::invalid_argument("embedding_std: need >= 2 rows");
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Eigen::RowVectorXd var =
      (rows.rowwise() - mean).array().square().colwise().mean();
  return var.cwiseSqrt().mean();
}

double embedding_std(const MatRM& rows, int samples) {
  if (samples < 2) throw std::invalid_argument("embedding_std: need >= 2 samples");
  if (rows.rows() % samples != 0)
    throw std::invalid_argument("embedding_std: rows not divisible by sample count");
  const Eigen::Index T = rows.rows() / samples;
  double acc = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    MatRM group(samples, rows.cols());
    for (int n = 0; n < samples; ++n) group.row(n) = rows.row(n * T + t);
    acc += embedding_std(group);
  }
  return acc / static_cast<double>(T);
}

Tensor prediction_loss(const Tensor& z_v_t, const Tensor& z_a_t, const Tensor& p_v,
                       const Tensor& p_a) {
  const Shape& s = z_v_t.shape();
  if (s.size() != 3 || z_a_t.shape() != s || p_v.shape() != s || p_a.shape() != s)
    throw std::invalid_argument("prediction_loss: all inputs must share shape [N,T,C]");
  if (z_v_t.requires_grad() || z_a_t.requires_grad())
    throw std::invalid_argument("prediction_loss: targets must be detached");
  const double n = static_cast<double>(s[0]);
  Tensor d1 = sub(z_v_t, p_a);
  Tensor d2 = sub(z_a_t, p_v);
  Tensor l = add(sum(mul(d1, d1)), sum(mul(d2, d2)));
  return scale(l, 0.5 / n);
}

json EpochLog::to_json() const {
  json j;
  j["epoch"] = epoch;
  j["loss"] = loss;
  j["lr"] = lr;
  j["embed_std"] = embed_std;
  j["collapse_flag"] = collapse_flag;
  return j;
}

Tensor pack_clips(const std::vector<VideoClip>& clips) {
  if (clips.empty()) throw std::invalid_argument("pack_clips: empty batch");
  const int N = static_cast<int>(clips.size());
  const int T = clips[0].T, H = clips[0].H, W = clips[0].W;
  Tensor out = Tensor::zeros({N, 3, T, H, W});
  Vec& v = out.value();
  const std::int64_t plane = static_cast<std::int64_t>(T) * H * W;
  for (int n = 0; n < N; ++n) {
    const VideoClip& c = clips[n];
    if (c.T != T || c.H != H || c.W != W)
      throw std::invalid_argument("pack_clips: ragged batch");
    for (int t = 0; t < T; ++t)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int ch = 0; ch < 3; ++ch)
            v[(static_cast<std::int64_t>(n) * 3 + ch) * plane +
              (static_cast<std::int64_t>(t) * H + y) * W + x] = c.at(t, y, x, ch);
  }
  return out;
}

Tensor pack_spectrograms(const std::vector<Spectrogram>& specs) {
  if (specs.empty()) throw std::invalid_argument("pack_spectrograms: empty batch");
  const int N = static_cast<int>(specs.size());
  const int T = specs[0].T, L = specs[0].L;
  Tensor out = Tensor::zeros({N, 1, T, L});
  Vec& v = out.value();
  for (int n = 0; n < N; ++n) {
    const Spectrogram& s = specs[n];
    if (s.T != T || s.L != L)
      throw std::invalid_argument("pack_spectrograms: ragged batch");
    for (int t = 0; t < T; ++t)
      for (int l = 0; l < L; ++l)
        v[(static_cast<std::int64_t>(n) * T + t) * L + l] = s.at(t, l);
  }
  return out;
}

namespace {

/// [N,T,C] -> [N,1,C] by mean over time (global-embedding variant).
Tensor pool_time(const Tensor& x) {
  return reshape(mean_dim1(x), {x.dim(0), 1, x.dim(2)});
}

/// Gathers one row per sample at the given time indices: [N,T,C] -> [N,C].
/// Built from a constant one-hot mask so gradients flow to the picked rows.
Tensor gather_time(const Tensor& x, const std::vector<int>& ts) {
  const int N = x.dim(0), T = x.dim(1), C = x.dim(2);
  Tensor mask = Tensor::zeros(x.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      mask.value()[(static_cast<std::int64_t>(n) * T + ts[n]) * C + c] = 1.0;
  return scale(mean_dim1(mul(x, mask)), static_cast<double>(T));
}

MatRM queue_to_matrix(const std::deque<Vec>& q, int C) {
  MatRM m(static_cast<Eigen::Index>(q.size()), C);
  for (std::size_t i = 0; i < q.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = q[i];
  return m;
}

void push_rows(std::deque<Vec>& q, const Tensor& rows, int limit) {
  const int N = rows.dim(0), C = rows.dim(1);
  for (int n = 0; n < N; ++n) {
    q.push_back(rows.value().segment(static_cast<std::int64_t>(n) * C, C));
    while (static_cast<int>(q.size()) > limit) q.pop_front();
  }
}

/// Forward a batch through a teacher encoder. With shuffle_bn the batch is
/// forwarded in a permuted order under batch statistics (training-mode BN)
/// and the outputs are unpermuted afterwards, so per-sample statistics cannot
/// encode batch alignment.
template <typename Encoder>
Tensor teacher_forward(Encoder& enc, const Tensor& x, bool shuffle_bn, Rng& rng) {
  NoGradGuard ng;
  if (!shuffle_bn) return enc.forward(x, false);
  const int N = x.dim(0);
  std::vector<int> perm(N);
  for (int i = 0; i < N; ++i) perm[i] = i;
  rng.shuffle(perm.begin(), perm.end());
  const std::int64_t stride = x.size() / N;
  Tensor shuffled = Tensor::zeros(x.shape());
  for (int i = 0; i < N; ++i)
    shuffled.value().segment(i * stride, stride) =
        x.value().segment(static_cast<std::int64_t>(perm[i]) * stride, stride);
  Tensor y = enc.forward(shuffled, true);
  const std::int64_t ostride = y.size() / N;
  Tensor out = Tensor::zeros(y.shape());
  for (int i = 0; i < N; ++i)
    out.value().segment(static_cast<std::int64_t>(perm[i]) * ostride, ostride) =
        y.value().segment(i * ostride, ostride);
  return out;
}

}  // namespace

Stage1Trainer::Stage1Trainer(const NetworkSpec& spec, const Stage1Config& cfg)
    : spec_(spec),
      cfg_(cfg),
      bundle_(ModelBundle::create(spec, Rng::mix(cfg.seed, 0x51a6e1), cfg.visual_only)),
      rng_(Rng::mix(cfg.seed, 0x51a6e2)) {
  cfg_.validate();
  spec_.validate();
  OptimConfig oc;
  oc.kind = cfg_.optimizer;
  oc.lr = cfg_.lr;
  oc.weight_decay = cfg_.weight_decay;
  opt_encoder_.emplace(oc, bundle_.student_encoder_params());
  if (cfg_.predictor) opt_predictor_.emplace(oc, bundle_.predictor_params());
  if (cfg_.negatives) {
    // Warm-start the ring buffers with random unit rows so the first steps
    // have negatives to contrast against.
    Rng qrng(Rng::mix(cfg.seed, 0x51a6e3));
    const int C = spec_.embed_dim;
    const int warm = std::min(cfg_.queue_size, 4 * cfg_.batch_size);
    for (int i = 0; i < warm; ++i) {
      Vec v(C), w(C);
      for (int c = 0; c < C; ++c) {
        v[c] = qrng.normal();
        w[c] = qrng.normal();
      }
      queue_v_.push_back(v / v.norm());
      queue_a_.push_back(w / w.norm());
    }
  }
}

double Stage1Trainer::step(const std::vector<AvSample>& batch, double lr,
                           MatRM* embed_rows) {
  if (batch.empty()) throw std::invalid_argument("Stage1Trainer::step: empty batch");
  const int N = static_cast<int>(batch.size());
  const int src = batch[0].clip.H;
  const TransformGeometry geom = TransformGeometry::for_source(src);

  std::vector<VideoClip> v_student, v_teacher;
  std::vector<Spectrogram> a_student, a_teacher;
  v_student.reserve(N);
  v_teacher.reserve(N);
  for (const AvSample& s : batch) {
    GeomAug g = sample_geom(TransformMode::stage1_student, src, geom.crop_size, rng_);
    VideoClip view = apply_geom(s.clip, g, geom);
    v_teacher.push_back(view);
    v_student.push_back(temporal_mask(spatial_erase(view, cfg_.mask, rng_), cfg_.mask, rng_));
    if (!cfg_.visual_only) {
      a_teacher.push_back(s.spec);
      a_student.push_back(audio_mask(s.spec, cfg_.mask, rng_));
    }
  }

  Tensor z_v_t, z_a_t, p_v, p_a;
  const bool dense = (cfg_.embedding == "dense");
  auto finish_target = [&](Tensor h) {
    if (!dense) h = pool_time(h);
    return l2_normalize_lastdim(h);
  };
  auto finish_pred = [&](Tensor h, Predictor* pred) {
    if (!dense) h = pool_time(h);
    if (cfg_.predictor && pred) h = pred->forward(h, true);
    return l2_normalize_lastdim(h);
  };

  if (cfg_.visual_only) {
    // Two augmented views of the same clips; one student-teacher pair.
    std::vector<VideoClip> v2_teacher, v2_student;
    for (const AvSample& s : batch) {
      GeomAug g2 = sample_geom(TransformMode::stage1_student, src, geom.crop_size, rng_);
      VideoClip view2 = apply_geom(s.clip, g2, geom);
      v2_teacher.push_back(view2);
      v2_student.push_back(
          temporal_mask(spatial_erase(view2, cfg_.mask, rng_), cfg_.mask, rng_));
    }
    Tensor x1s = pack_clips(v_student), x2s = pack_clips(v2_student);
    Tensor x1t = pack_clips(v_teacher), x2t = pack_clips(v2_teacher);
    {
      NoGradGuard ng;
      z_v_t = finish_target(bundle_.video_teacher.forward(x2t, false));
      z_a_t = finish_target(bundle_.video_teacher.forward(x1t, false));
    }
    p_v = finish_pred(bundle_.video_student.forward(x1s, true), &bundle_.video_predictor);
    p_a = finish_pred(bundle_.video_student.forward(x2s, true), &bundle_.video_predictor);
  } else {
    Tensor xv_s = pack_clips(v_student);
    Tensor xv_t = pack_clips(v_teacher);
    Tensor xa_s = pack_spectrograms(a_student);
    Tensor xa_t = pack_spectrograms(a_teacher);
    const bool sbn = cfg_.negatives && cfg_.shuffle_bn;
    z_v_t = finish_target(teacher_forward(bundle_.video_teacher, xv_t, sbn, rng_));
    z_a_t = finish_target(teacher_forward(*bundle_.audio_teacher, xa_t, sbn, rng_));
    p_v = finish_pred(bundle_.video_student.forward(xv_s, true), &bundle_.video_predictor);
    p_a = finish_pred(bundle_.audio_student->forward(xa_s, true),
                      bundle_.audio_predictor.get());
  }

  Tensor loss;
  if (!cfg_.negatives) {
    loss = prediction_loss(z_v_t, z_a_t, p_v, p_a);
  } else {
    // One random time step per sample feeds the anchors and the queue.
    const int T = p_v.dim(1);
    std::vector<int> ts(N);
    for (int n = 0; n < N; ++n)
      ts[n] = static_cast<int>(rng_.uniform_int(0, T - 1));
    Tensor av = gather_time(p_a, ts), zv = gather_time(z_v_t, ts);
    Tensor aa = gather_time(p_v, ts), za = gather_time(z_a_t, ts);
    MatRM qv = queue_to_matrix(queue_v_, spec_.embed_dim);
    MatRM qa = queue_to_matrix(queue_a_, spec_.embed_dim);
    loss = scale(add(info_nce(av, zv, qv, cfg_.temperature),
                     info_nce(aa, za, qa, cfg_.temperature)),
                 0.5);
    push_rows(queue_v_, zv, cfg_.queue_size);
    push_rows(queue_a_, za, cfg_.queue_size);
  }

  const double loss_val = loss.item();
  if (!std::isfinite(loss_val))
    throw std::runtime_error("stage1: non-finite loss encountered");

  if (embed_rows) {
    const int C = p_v.dim(2);
    const std::int64_t rows = p_v.size() / C;
    *embed_rows = Eigen::Map<const MatRM>(p_v.value().data(), rows, C);
  }

  opt_encoder_->zero_grad();
  if (opt_predictor_) opt_predictor_->zero_grad();
  loss.backward();
  opt_encoder_->step(lr);
  if (opt_predictor_)
    opt_predictor_->step(cfg_.predictor_lr_fixed ? cfg_.lr : lr);

  ParamMap tp = bundle_.teacher_params();
  ParamMap sp = bundle_.student_encoder_params();
  ema_update(tp, sp, cfg_.ema_momentum);
  BufMap tb = bundle_.teacher_buffers();
  BufMap sb = bundle_.student_buffers();
  ema_update_buffers(tb, sb, cfg_.ema_momentum);
  return loss_val;
}

Stage1Result Stage1Trainer::fit(const std::vector<AvSample>& reals) {
  if (reals.empty()) throw std::invalid_argument("stage1: no training samples");
  const int n = static_cast<int>(reals.size());
  const int steps = std::max(1, n / cfg_.batch_size);
  CollapseMonitor monitor(cfg_.collapse_factor / std::sqrt(static_cast<double>(spec_.embed_dim)),
                          cfg_.collapse_patience);
  Stage1Result result;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    double loss_sum = 0.0, std_sum = 0.0, lr_last = 0.0;
    for (int s = 0; s < steps; ++s) {
      std::vector<AvSample> batch;
      batch.reserve(cfg_.batch_size);
      for (int b = 0; b < cfg_.batch_size; ++b)
        batch.push_back(reals[rng_.uniform_int(0, n - 1)]);
      const double frac = static_cast<double>(epoch) + static_cast<double>(s) / steps;
      lr_last = scheduled_lr(cfg_.lr, frac, cfg_.warmup_epochs, cfg_.epochs);
      MatRM rows;
      loss_sum += step(batch, lr_last, &rows);
      std_sum += embedding_std(rows, static_cast<int>(batch.size()));
    }
    EpochLog log;
    log.epoch = epoch;
    log.loss = loss_sum / steps;
    log.lr = lr_last;
    log.embed_std = std_sum / steps;
    monitor.observe(log.embed_std);
    log.collapse_flag = monitor.collapsed();
    result.logs.push_back(log);
  }
  result.collapsed = monitor.collapsed();
  return result;
}

Checkpoint Stage1Trainer::make_checkpoint() const {
  Checkpoint ckpt;
  ckpt.spec = spec_;
  ckpt.rng_state = rng_.next();
  ckpt.meta["stage"] = "1";
  ckpt.meta["profile"] = spec_.profile;
  ckpt.meta["visual_only"] = cfg_.visual_only ? "1" : "0";

  ParamMap sp = bundle_.student_params();
  ckpt.put_params("student", sp);
  BufMap sb = bundle_.student_buffers();
  ckpt.put_buffers("student_buf", sb);
  BufMap pb = bundle_.predictor_buffers();
  ckpt.put_buffers("student_buf", pb);

  ParamMap vt;
  BufMap vtb;
  bundle_.video_teacher.collect("video_teacher", vt, vtb);
  ckpt.put_params("teacher_v", vt);
  ckpt.put_buffers("teacher_v_buf", vtb);
  if (bundle_.audio_teacher) {
    ParamMap at;
    BufMap atb;
    bundle_.audio_teacher->collect("audio_teacher", at, atb);
    ckpt.put_params("teacher_a", at);
    ckpt.put_buffers("teacher_a_buf", atb);
  }
  ckpt.meta["video_teacher_hash"] = std::to_string(group_hash(ckpt, "teacher_v"));
  return ckpt;
}

Stage1Result train_stage1(const CorpusManifest& manifest, const std::string& corpus_dir,
                          const NetworkSpec& spec, const Stage1Config& cfg,
                          const std::string& out_ckpt, const std::string& log_path) {
  std::vector<AvSample> reals;
  for (const SampleRecord* r : manifest.split_records("train")) {
    if (r->label != Label::real) continue;  // fakes never enter stage 1
    auto [clip, sg, label] = load_sample(corpus_dir, manifest, r->sample_id);
    reals.push_back(AvSample{std::move(clip), std::move(sg)});
  }
  Stage1Trainer trainer(spec, cfg);
  Stage1Result result;
  try {
    result = trainer.fit(reals);
  } catch (const std::runtime_error&) {
    // State dump for post-mortem, then propagate the abort.
    trainer.make_checkpoint().save(out_ckpt + ".nan_dump");
    throw;
  }
  trainer.make_checkpoint().save(out_ckpt);
  if (!log_path.empty()) {
    std::ofstream f(log_path, std::ios::trunc);
    for (const EpochLog& l : result.logs) f << l.to_json().dump() << "\n";
  }
  return result;
}

}  // namespace avf
