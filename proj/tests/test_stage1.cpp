#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "avf/stage1.hpp"
#include "gradcheck.hpp"

using namespace avf;
using testutil::randn;

namespace {

Tensor unit_rows(int n, int t, int c, Rng& rng, bool grad) {
  Tensor x = randn({n, t, c}, rng, false);
  Tensor y = l2_normalize_lastdim(x);
  Tensor out = Tensor::zeros({n, t, c}, grad);
  out.value() = y.value();
  return out;
}

std::vector<AvSample> tiny_dataset(int n, int frame_size) {
  std::vector<AvSample> out;
  for (int i = 0; i < n; ++i) {
    auto [clip, spec] = generate_real(1234, i, 25, frame_size, 0.01);
    out.push_back(AvSample{std::move(clip), std::move(spec)});
  }
  return out;
}

Stage1Config tiny_config() {
  Stage1Config cfg;
  cfg.epochs = 1;
  cfg.warmup_epochs = 0;
  cfg.batch_size = 2;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("prediction loss: identity, negation, orthogonality oracles") {
  Rng rng(0);
  const int T = 25, C = 8;
  Tensor z_v = unit_rows(2, T, C, rng, false);
  Tensor z_a = unit_rows(2, T, C, rng, false);
  SUBCASE("predictions equal targets -> 0") {
    Tensor p_v = Tensor::zeros({2, T, C}, true);
    p_v.value() = z_a.value();
    Tensor p_a = Tensor::zeros({2, T, C}, true);
    p_a.value() = z_v.value();
    CHECK(prediction_loss(z_v, z_a, p_v, p_a).item() == doctest::Approx(0.0));
  }
  SUBCASE("negated rows -> 4*T per sample") {
    Tensor p_v = Tensor::zeros({2, T, C}, true);
    p_v.value() = -z_a.value();
    Tensor p_a = Tensor::zeros({2, T, C}, true);
    p_a.value() = -z_v.value();
    CHECK(prediction_loss(z_v, z_a, p_v, p_a).item() == doctest::Approx(4.0 * T));
  }
  SUBCASE("pairwise orthogonal rows -> 2*T per sample") {
    // use coordinate axes: target e0, prediction e1
    Tensor zt = Tensor::zeros({1, T, 4});
    Tensor p = Tensor::zeros({1, T, 4}, true);
    for (int t = 0; t < T; ++t) {
      zt.value()[t * 4 + 0] = 1.0;
      p.value()[t * 4 + 1] = 1.0;
    }
    CHECK(prediction_loss(zt, zt, p, p).item() == doctest::Approx(2.0 * T));
  }
}

TEST_CASE("prediction loss rejects gradient-carrying targets and bad shapes") {
  Rng rng(1);
  Tensor z = unit_rows(1, 3, 4, rng, false);
  Tensor zg = unit_rows(1, 3, 4, rng, true);
  Tensor p = unit_rows(1, 3, 4, rng, true);
  CHECK_THROWS_AS(prediction_loss(zg, z, p, p), std::invalid_argument);
  Tensor bad = unit_rows(1, 4, 4, rng, true);
  CHECK_THROWS_AS(prediction_loss(z, z, p, bad), std::invalid_argument);
}

TEST_CASE("loss stays within the unit-row bound [0, 4T]") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const int T = 5;
    Tensor z_v = unit_rows(3, T, 6, rng, false);
    Tensor z_a = unit_rows(3, T, 6, rng, false);
    Tensor p_v = unit_rows(3, T, 6, rng, true);
    Tensor p_a = unit_rows(3, T, 6, rng, true);
    const double l = prediction_loss(z_v, z_a, p_v, p_a).item();
    CHECK(l >= 0.0);
    CHECK(l <= 4.0 * T + 1e-9);
  }
}

TEST_CASE("ema closed form over 100 steps") {
  const double mu = 0.97, theta = 4.0, psi0 = -1.0;
  Tensor t = Tensor::from_data({1}, {psi0}, false);
  Tensor s = Tensor::from_data({1}, {theta}, true);
  ParamMap tp, sp;
  tp.add("w", t);
  sp.add("w", s);
  for (int k = 0; k < 100; ++k) ema_update(tp, sp, mu);
  const double expect = theta + std::pow(mu, 100) * (psi0 - theta);
  CHECK(t.value()[0] == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("collapse monitor needs three consecutive epochs below threshold") {
  CollapseMonitor m(0.01, 3);
  m.observe(0.005);
  m.observe(0.005);
  CHECK_FALSE(m.collapsed());
  m.observe(0.5);  // recovery resets the streak
  m.observe(0.005);
  m.observe(0.005);
  CHECK_FALSE(m.collapsed());
  m.observe(0.005);
  CHECK(m.collapsed());
  m.observe(0.5);  // collapse is sticky
  CHECK(m.collapsed());
}

TEST_CASE("embedding std: zero for identical rows, exact for a hand case") {
  MatRM constant = MatRM::Ones(8, 4);
  CHECK(embedding_std(constant) == doctest::Approx(0.0));
  MatRM two(2, 1);
  two << 0.0, 1.0;  // population std of {0,1} = 0.5
  CHECK(embedding_std(two) == doctest::Approx(0.5));
  CHECK_THROWS_AS(embedding_std(MatRM::Ones(1, 4)), std::invalid_argument);
}

TEST_CASE("grouped embedding std ignores purely temporal structure") {
  // Two samples, two time steps, one channel; rows are sample-major [n*T+t].
  MatRM rows(4, 1);
  // Both samples trace the identical temporal pattern {0, 1}: the batch is
  // collapsed even though the pooled row spread is large.
  rows << 0.0, 1.0, 0.0, 1.0;
  CHECK(embedding_std(rows, 2) == doctest::Approx(0.0));
  CHECK(embedding_std(rows) == doctest::Approx(0.5));
  // Samples differing by a constant offset at every t: std across n is 0.5.
  rows << 0.0, 1.0, 1.0, 2.0;
  CHECK(embedding_std(rows, 2) == doctest::Approx(0.5));
  CHECK_THROWS_AS(embedding_std(rows, 3), std::invalid_argument);
  CHECK_THROWS_AS(embedding_std(rows, 1), std::invalid_argument);
}

TEST_CASE("config validation matches the documented invariants") {
  Stage1Config c;
  c.validate();  // defaults fine
  c.warmup_epochs = c.epochs + 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = Stage1Config{};
  c.ema_momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = Stage1Config{};
  c.negatives = true;
  c.queue_size = c.batch_size;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = Stage1Config{};
  c.embedding = "sparse";
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  json j = Stage1Config{}.to_json();
  j["mystery"] = 1;
  CHECK_THROWS_AS(Stage1Config::from_json(j), std::invalid_argument);
  j.erase("mystery");
  j["embedding"] = "global";
  CHECK(Stage1Config::from_json(j).embedding == "global");
}

TEST_CASE("one training step: finite loss, frozen teachers, EMA movement") {
  auto data = tiny_dataset(2, 48);
  Stage1Trainer trainer(NetworkSpec::tiny(), tiny_config());

  ParamMap tp = trainer.bundle().teacher_params();
  std::vector<Vec> before;
  for (auto& [n, t] : tp.items) {
    CHECK_FALSE(t.requires_grad());
    before.push_back(t.value());
  }

  MatRM rows;
  const double loss = trainer.step(data, 1e-3, &rows);
  CHECK(std::isfinite(loss));
  CHECK(loss > 0.0);
  CHECK(rows.rows() == 2 * 25);
  CHECK(embedding_std(rows) > 0.0);

  // teachers moved by EMA only (toward the students), never by gradients
  bool any_moved = false;
  for (std::size_t i = 0; i < tp.items.size(); ++i)
    if ((tp.items[i].second.value() - before[i]).cwiseAbs().maxCoeff() > 0.0)
      any_moved = true;
  CHECK(any_moved);
}

TEST_CASE("fixed seeds give identical loss trajectories") {
  auto data = tiny_dataset(2, 48);
  Stage1Trainer a(NetworkSpec::tiny(), tiny_config());
  Stage1Trainer b(NetworkSpec::tiny(), tiny_config());
  for (int s = 0; s < 2; ++s) {
    const double la = a.step(data, 1e-3, nullptr);
    const double lb = b.step(data, 1e-3, nullptr);
    REQUIRE(la == lb);
  }
}

TEST_CASE("visual-only variant never constructs audio networks") {
  auto data = tiny_dataset(2, 48);
  Stage1Config cfg = tiny_config();
  cfg.visual_only = true;
  Stage1Trainer trainer(NetworkSpec::tiny(), cfg);
  CHECK(trainer.bundle().audio_student == nullptr);
  CHECK(trainer.bundle().audio_teacher == nullptr);
  const double loss = trainer.step(data, 1e-3, nullptr);
  CHECK(std::isfinite(loss));
}

TEST_CASE("negatives variant: finite InfoNCE loss and bounded queue") {
  auto data = tiny_dataset(2, 48);
  Stage1Config cfg = tiny_config();
  cfg.negatives = true;
  cfg.queue_size = 16;
  Stage1Trainer trainer(NetworkSpec::tiny(), cfg);
  for (int s = 0; s < 3; ++s) {
    const double loss = trainer.step(data, 1e-3, nullptr);
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
  }
}

TEST_CASE("global variant pools time before the loss") {
  auto data = tiny_dataset(2, 48);
  Stage1Config cfg = tiny_config();
  cfg.embedding = "global";
  Stage1Trainer trainer(NetworkSpec::tiny(), cfg);
  MatRM rows;
  const double loss = trainer.step(data, 1e-3, &rows);
  CHECK(std::isfinite(loss));
  CHECK(rows.rows() == 2);  // one pooled row per sample
}

TEST_CASE("checkpoint carries students, teachers, and a teacher hash") {
  auto data = tiny_dataset(2, 48);
  Stage1Trainer trainer(NetworkSpec::tiny(), tiny_config());
  trainer.step(data, 1e-3, nullptr);
  Checkpoint ckpt = trainer.make_checkpoint();
  CHECK(ckpt.has_group("student"));
  CHECK(ckpt.has_group("teacher_v"));
  CHECK(ckpt.has_group("teacher_a"));
  CHECK(ckpt.meta.at("video_teacher_hash") ==
        std::to_string(group_hash(ckpt, "teacher_v")));
}
