// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "vdsh/errors.hpp"
#include "vdsh/model_io.hpp"
#include "vdsh/synthetic.hpp"
#include "vdsh/trainer.hpp"

using namespace vdsh;
using namespace vdsh::trainer;
using model::ParamId;
using Catch::Approx;

namespace {

model::ParamSet scalar_set(double v) {
  model::ParamSet s;
  s[ParamId::b1] = math::Matrix(1, 1, v);
  return s;
}

const corpus::Corpus& synthetic_corpus() {
  static const corpus::Corpus c = [] {
    const auto raw = synthetic::topic_corpus({});
    return corpus::preprocess(raw, {});
  }();
  return c;
}

}  // namespace

TEST_CASE("first Adam step matches the hand computation") {
  for (double g : {0.5, -3.0, 1e-3}) {
    auto params = scalar_set(1.0);
    auto state = AdamState::for_params(params);
    adam_step(params, scalar_set(g), state, 0.001);
    // m_hat = g, v_hat = g^2
    const double expected = 1.0 - 0.001 * g / (std::abs(g) + 1e-8);
    CHECK(params[ParamId::b1](0, 0) == Approx(expected).epsilon(1e-15));
    CHECK(state.t == 1);
    CHECK(state.m[ParamId::b1](0, 0) == Approx(0.1 * g).epsilon(1e-15));
    CHECK(state.v[ParamId::b1](0, 0) == Approx(0.001 * g * g).epsilon(1e-15));
  }
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  auto params = scalar_set(2.5);
  auto state = AdamState::for_params(params);
  adam_step(params, scalar_set(0.0), state, 0.1);
  adam_step(params, scalar_set(0.0), state, 0.1);
  CHECK(params[ParamId::b1](0, 0) == 2.5);
  CHECK(state.t == 2);
}

TEST_CASE("constant gradient keeps every step within the learning rate") {
  auto params = scalar_set(0.0);
  auto state = AdamState::for_params(params);
  double prev = 0.0;
  for (int i = 0; i < 500; ++i) {
    adam_step(params, scalar_set(7.0), state, 0.01);
    const double now = params[ParamId::b1](0, 0);
    CHECK(std::abs(now - prev) <= 0.01 * (1.0 + 1e-9));
    prev = now;
  }
}

TEST_CASE("non-finite updates raise a divergence error") {
  auto params = scalar_set(0.0);
  auto state = AdamState::for_params(params);
  CHECK_THROWS_AS(adam_step(params, scalar_set(NAN), state, 0.01), DivergenceError);
  model::ParamSet wrong;
  wrong[ParamId::b1] = math::Matrix(2, 1);
  CHECK_THROWS_AS(adam_step(params, wrong, state, 0.01), ConfigError);
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(validate(c));
  auto bad = c;
  bad.bits = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.keep_prob = 0.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.keep_prob = 1.01;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.clip_norm = -1.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("one full-batch epoch is one optimizer step") {
  const auto& c = synthetic_corpus();
  TrainConfig cfg;
  cfg.bits = 4;
  cfg.hidden = 8;
  cfg.epochs = 1;
  cfg.batch_size = 100000;
  const auto r = train(cfg, c);
  CHECK(r.report.total_steps == 1);
  REQUIRE(r.report.epochs.size() == 1);
  CHECK(r.report.epochs[0].steps == 1);

  cfg.batch_size = 7;
  cfg.epochs = 2;
  const auto r2 = train(cfg, c);
  const auto n = c.indices(corpus::Split::Train).size();
  CHECK(r2.report.total_steps == 2 * ((n + 6) / 7));
}

TEST_CASE("training is reproducible and thread-count stable") {
  const auto& c = synthetic_corpus();
  TrainConfig cfg;
  cfg.variant = model::Variant::VdshSP;
  cfg.bits = 6;
  cfg.hidden = 24;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.seed = 99;
  const auto a = train(cfg, c);
  const auto b = train(cfg, c);
  CHECK(model::serialize(a.model) == model::serialize(b.model));

  cfg.threads = 3;
  const auto t = train(cfg, c);
  for (std::size_t i = 0; i < model::kNumParams; ++i) {
    const auto id = static_cast<ParamId>(i);
    const auto x = a.model.weights[id].values();
    const auto y = t.model.weights[id].values();
    REQUIRE(x.size() == y.size());
    for (std::size_t j = 0; j < x.size(); ++j) CHECK(std::abs(x[j] - y[j]) <= 1e-10);
  }

  cfg.threads = 1;
  cfg.seed = 100;
  CHECK(model::serialize(train(cfg, c).model) != model::serialize(a.model));
}

TEST_CASE("training raises the ELBO on the topic corpus") {
  const auto& c = synthetic_corpus();
  for (auto v : {model::Variant::Vdsh, model::Variant::VdshS}) {
    TrainConfig cfg;
    cfg.variant = v;
    cfg.bits = 8;
    cfg.epochs = 20;
    cfg.seed = 3;
    const auto r = train(cfg, c);
    const auto& e = r.report.epochs;
    REQUIRE(e.size() == 20);
    CHECK(e.back().train_elbo > e.front().train_elbo);
    // 5-epoch moving average may not fall by more than 1 nat.
    for (std::size_t i = 5; i < e.size(); ++i) {
      double prev = 0.0, now = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        prev += e[i - 1 - j].train_elbo / 5.0;
        now += e[i - j].train_elbo / 5.0;
      }
      CHECK(now >= prev - 1.0);
    }
    for (const auto& s : e) {
      CHECK(std::isfinite(s.train_elbo));
      REQUIRE(s.validation_elbo);
      CHECK(std::isfinite(*s.validation_elbo));
    }
    // Returned model is the best validation epoch.
    std::uint32_t best = 0;
    double best_val = -INFINITY;
    for (const auto& s : e) {
      if (*s.validation_elbo > best_val) {
        best_val = *s.validation_elbo;
        best = s.epoch;
      }
    }
    CHECK(r.report.best_epoch == best);
    REQUIRE(r.model.median_thresholds);
    CHECK(r.model.median_thresholds->size() == 8);
  }
}

TEST_CASE("checkpoints and report") {
  const auto& c = synthetic_corpus();
  const auto dir = std::filesystem::temp_directory_path() / "vdsh_test_ckpt";
  std::filesystem::remove_all(dir);
  TrainConfig cfg;
  cfg.bits = 4;
  cfg.hidden = 8;
  cfg.epochs = 3;
  cfg.checkpoint_dir = dir;
  const auto r = train(cfg, c);
  CHECK(std::filesystem::exists(dir / "last.bin"));
  CHECK(std::filesystem::exists(dir / "best.bin"));
  const auto best = model::load_model(dir / "best.bin");
  CHECK(best.weights == r.model.weights);
  const auto j = r.report.to_json();
  CHECK(j["epochs"].size() == 3);
  CHECK(j["best_epoch"] == r.report.best_epoch);
}

TEST_CASE("supervised training needs labels") {
  std::vector<corpus::RawDocument> raw;
  for (int i = 0; i < 20; ++i) {
    raw.push_back(corpus::make_raw_document("d" + std::to_string(i), "alpha beta gamma delta", {}));
  }
  const auto c = corpus::preprocess(raw, {});
  TrainConfig cfg;
  cfg.variant = model::Variant::VdshS;
  cfg.hidden = 4;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(cfg, c), DataError);
  cfg.variant = model::Variant::Vdsh;
  CHECK_NOTHROW(train(cfg, c));
}

TEST_CASE("gradient clipping bounds the update direction") {
  const auto& c = synthetic_corpus();
  TrainConfig cfg;
  cfg.bits = 4;
  cfg.hidden = 8;
  cfg.epochs = 1;
  cfg.clip_norm = 5.0;
  const auto r = train(cfg, c);
  CHECK(std::isfinite(r.report.epochs[0].train_elbo));
}
