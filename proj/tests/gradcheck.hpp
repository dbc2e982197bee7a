#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "avf/rng.hpp"
#include "avf/tensor.hpp"

namespace avf::testutil {

inline Tensor randn(Shape s, Rng& rng, bool requires_grad = true, double sd = 1.0) {
  Tensor t(std::move(s), requires_grad);
  for (Eigen::Index i = 0; i < t.value().size(); ++i) t.value()[i] = rng.normal(0, sd);
  return t;
}

/// Central finite differences vs autodiff on every input coordinate.
/// Returns the max relative error, with abs floor to tame tiny gradients.
inline double gradcheck(const std::function<Tensor(std::vector<Tensor>&)>& f,
                        std::vector<Tensor>& inputs, double h = 1e-5,
                        double abs_floor = 1e-8) {
  Tensor loss = f(inputs);
  for (auto& in : inputs) in.zero_grad();
  loss.backward();
  double worst = 0.0;
  for (auto& in : inputs) {
    for (Eigen::Index i = 0; i < in.value().size(); ++i) {
      const double orig = in.value()[i];
      in.value()[i] = orig + h;
      double lp = f(inputs).item();
      in.value()[i] = orig - h;
      double lm = f(inputs).item();
      in.value()[i] = orig;
      const double num = (lp - lm) / (2 * h);
      const double ana = in.grad()[i];
      const double rel = std::abs(num - ana) /
                         std::max({std::abs(num), std::abs(ana), abs_floor});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace avf::testutil
