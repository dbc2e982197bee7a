#include "avf/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace avf {

void OptimConfig::validate() const {
  if (kind != "adamp" && kind != "adamw")
    throw std::invalid_argument("OptimConfig: unknown kind '" + kind + "'");
  if (lr <= 0.0) throw std::invalid_argument("OptimConfig: lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw std::invalid_argument("OptimConfig: betas must lie in [0,1)");
  if (eps <= 0.0) throw std::invalid_argument("OptimConfig: eps must be positive");
  if (weight_decay < 0.0)
    throw std::invalid_argument("OptimConfig: weight_decay must be non-negative");
}

bool decay_applies(const std::string& name) {
  auto ends_with = [&](const char* suffix) {
    std::string s(suffix);
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  return !(ends_with(".gamma") || ends_with(".beta") || ends_with(".b"));
}

Optimizer::Optimizer(const OptimConfig& cfg, ParamMap params)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  m_.reserve(params_.items.size());
  v_.reserve(params_.items.size());
  for (auto& [name, t] : params_.items) {
    if (!t.requires_grad())
      throw std::invalid_argument("Optimizer: parameter '" + name + "' does not require grad");
    m_.push_back(Vec::Zero(t.size()));
    v_.push_back(Vec::Zero(t.size()));
    decay_.push_back(decay_applies(name));
  }
}

void Optimizer::zero_grad() {
  for (auto& [name, t] : params_.items) t.grad().setZero();
}

void Optimizer::step(double lr) {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.items.size(); ++i) {
    Tensor& t = params_.items[i].second;
    const Vec& g = t.grad();
    Vec& m = m_[i];
    Vec& v = v_[i];
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Vec update =
        (m / bc1).cwiseQuotient(((v / bc2).cwiseSqrt().array() + cfg_.eps).matrix());

    double wd = decay_[i] ? cfg_.weight_decay : 0.0;
    if (cfg_.kind == "adamp" && decay_[i]) {
      const Vec& w = t.value();
      const double wn = w.norm();
      const double gn = g.norm();
      if (wn > 0.0 && gn > 0.0) {
        const double cosine = std::abs(w.dot(g)) / (wn * gn);
        const double thresh = cfg_.delta / std::sqrt(static_cast<double>(w.size()));
        if (cosine < thresh) {
          // Scale-invariant weight: drop the radial component of the update
          // and damp its decay.
          update -= (w.dot(update) / (wn * wn)) * w;
          wd *= cfg_.wd_ratio;
        }
      }
    }
    if (wd > 0.0) t.value() *= (1.0 - lr * wd);
    t.value() -= lr * update;
  }
}

double scheduled_lr(double base_lr, double epoch, int warmup_epochs, int total_epochs) {
  if (total_epochs <= 0) throw std::invalid_argument("scheduled_lr: total_epochs must be positive");
  if (warmup_epochs < 0 || warmup_epochs > total_epochs)
    throw std::invalid_argument("scheduled_lr: warmup must lie in [0, total_epochs]");
  if (epoch < 0.0) epoch = 0.0;
  if (epoch >= static_cast<double>(total_epochs)) return 0.0;
  if (epoch < static_cast<double>(warmup_epochs))
    return base_lr * epoch / static_cast<double>(warmup_epochs);
  const double progress = (epoch - warmup_epochs) / static_cast<double>(total_epochs - warmup_epochs);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace avf
