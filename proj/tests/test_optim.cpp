#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "avf/optim.hpp"
#include "gradcheck.hpp"

using namespace avf;
using testutil::randn;

TEST_CASE("adamw single step matches the hand-computed oracle") {
  // w=1, g=0.5, lr=0.1, wd=0: m_hat=0.5, v_hat=0.25, update=0.5/(0.5+eps)~1
  Tensor w = Tensor::from_data({1}, {1.0}, true);
  w.grad()[0] = 0.5;
  OptimConfig cfg;
  cfg.kind = "adamw";
  cfg.weight_decay = 0.0;
  ParamMap p;
  p.add("layer.w", w);
  Optimizer opt(cfg, p);
  opt.step(0.1);
  CHECK(w.value()[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("decay applies to weights but not biases or norm affines") {
  CHECK(decay_applies("stage0.conv.w"));
  CHECK_FALSE(decay_applies("stage0.conv.b"));
  CHECK_FALSE(decay_applies("stage0.bn.gamma"));
  CHECK_FALSE(decay_applies("stage0.bn.beta"));
}

TEST_CASE("decoupled decay shrinks weights geometrically; affines exempt") {
  Tensor w = Tensor::from_data({1}, {2.0}, true);
  Tensor gamma = Tensor::from_data({1}, {2.0}, true);
  OptimConfig cfg;
  cfg.kind = "adamw";
  cfg.weight_decay = 0.01;
  ParamMap p;
  p.add("l.w", w);
  p.add("l.gamma", gamma);
  Optimizer opt(cfg, p);
  for (int i = 0; i < 10; ++i) opt.step(0.1);  // zero gradients throughout
  CHECK(w.value()[0] == doctest::Approx(2.0 * std::pow(1.0 - 0.1 * 0.01, 10)).epsilon(1e-12));
  CHECK(gamma.value()[0] == 2.0);
}

TEST_CASE("adamp projects near-orthogonal updates off the radial direction") {
  // cos(w,g) ~ 0.05 < 0.1/sqrt(2): projection fires, leaving w[0] untouched.
  Tensor w = Tensor::from_data({2}, {1.0, 0.0}, true);
  w.grad() = Vec::Map(std::vector<double>{0.05, 1.0}.data(), 2);
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  ParamMap p;
  p.add("l.w", w);
  Optimizer opt(cfg, p);
  opt.step(0.1);
  CHECK(std::abs(w.value()[0] - 1.0) < 1e-6);
  CHECK(w.value()[1] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adamp leaves clearly aligned gradients unprojected") {
  Tensor w = Tensor::from_data({2}, {1.0, 0.0}, true);
  w.grad() = Vec::Map(std::vector<double>{1.0, 0.0}.data(), 2);
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  ParamMap p;
  p.add("l.w", w);
  Optimizer opt(cfg, p);
  opt.step(0.1);
  CHECK(w.value()[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("both rules drive a quadratic to its minimum") {
  for (const char* kind : {"adamw", "adamp"}) {
    Rng rng(11);
    Tensor w = randn({8}, rng, true);
    Vec target = randn({8}, rng, false).value();
    OptimConfig cfg;
    cfg.kind = kind;
    cfg.weight_decay = 0.0;
    ParamMap p;
    p.add("w", w);
    Optimizer opt(cfg, p);
    for (int i = 0; i < 400; ++i) {
      opt.zero_grad();
      Tensor diff = sub(w, Tensor::from_data({8}, std::vector<double>(target.data(), target.data() + 8)));
      Tensor loss = mean(mul(diff, diff));
      loss.backward();
      opt.step(0.05);
    }
    CHECK((w.value() - target).cwiseAbs().maxCoeff() < 1e-2);
  }
}

TEST_CASE("schedule: linear warmup then cosine decay to zero") {
  CHECK(scheduled_lr(7e-4, 0.0, 20, 150) == 0.0);
  CHECK(scheduled_lr(7e-4, 10.0, 20, 150) == doctest::Approx(3.5e-4));
  CHECK(scheduled_lr(7e-4, 20.0, 20, 150) == doctest::Approx(7e-4));
  CHECK(scheduled_lr(7e-4, 85.0, 20, 150) == doctest::Approx(3.5e-4));
  CHECK(scheduled_lr(7e-4, 150.0, 20, 150) == 0.0);
  double prev = scheduled_lr(7e-4, 20.0, 20, 150);
  for (double e = 21.0; e <= 150.0; e += 1.0) {
    double cur = scheduled_lr(7e-4, e, 20, 150);
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("schedule rejects warmup longer than training") {
  CHECK_THROWS_AS(scheduled_lr(1e-3, 0.0, 200, 150), std::invalid_argument);
  CHECK_THROWS_AS(scheduled_lr(1e-3, 0.0, 5, 0), std::invalid_argument);
}

TEST_CASE("config validation and frozen-parameter rejection") {
  OptimConfig bad;
  bad.kind = "sgd";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = OptimConfig{};
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = OptimConfig{};
  bad.beta2 = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  Tensor frozen = Tensor::from_data({1}, {1.0}, false);
  ParamMap p;
  p.add("t.w", frozen);
  CHECK_THROWS_AS(Optimizer(OptimConfig{}, p), std::invalid_argument);
}
