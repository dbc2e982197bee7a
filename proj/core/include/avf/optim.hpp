#pragma once

#include <string>
#include <vector>

#include "avf/nn.hpp"

namespace avf {

/// Adaptive-moment optimiser with decoupled weight decay. Two rules are
/// available:
///  - "adamw": plain decoupled-decay Adam.
///  - "adamp": AdamP — when a weight and its gradient are nearly orthogonal
///    (the signature of a scale-invariant weight living in front of a
///    normalisation layer), the update is projected onto the tangent space of
///    the weight's norm sphere and the decay on that weight is damped by
///    wd_ratio. This suppresses the effective-step inflation caused by norm
///    growth.
///
/// Weight decay is never applied to normalisation affines or biases
/// (parameter names ending in ".gamma", ".beta" or ".b").
struct OptimConfig {
  std::string kind = "adamp";  // "adamp" | "adamw"
  double lr = 7e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
  double delta = 0.1;      // adamp orthogonality threshold, scaled by 1/sqrt(dim)
  double wd_ratio = 0.1;   // adamp decay damping for projected weights

  void validate() const;
};

class Optimizer {
 public:
  Optimizer(const OptimConfig& cfg, ParamMap params);

  /// One update step over all parameters using the given learning rate.
  /// (Schedules live outside the optimiser; pass the current lr each step.)
  void step(double lr);

  void zero_grad();

  const OptimConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return step_; }

  /// Serialisable moment state, ordered as the parameters were registered.
  std::vector<Vec>& moments_m() { return m_; }
  std::vector<Vec>& moments_v() { return v_; }
  void set_step_count(std::int64_t s) { step_ = s; }

 private:
  OptimConfig cfg_;
  ParamMap params_;
  std::vector<Vec> m_, v_;
  std::vector<bool> decay_;  // weight decay enabled for this parameter?
  std::int64_t step_ = 0;
};

/// True when weight decay applies to a parameter with this name.
bool decay_applies(const std::string& name);

/// Learning-rate schedule shared by both stages: linear warmup from 0 over
/// warmup_epochs, then cosine decay to 0 at total_epochs. `epoch` may be
/// fractional for per-step schedules.
double scheduled_lr(double base_lr, double epoch, int warmup_epochs, int total_epochs);

}  // namespace avf
