// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "vdsh/errors.hpp"
#include "vdsh/model.hpp"

using namespace vdsh;
using namespace vdsh::model;
using Catch::Approx;

namespace {

const Variant kAll[] = {Variant::Vdsh, Variant::VdshS, Variant::VdshSP};

corpus::Document doc_with(corpus::CountVector counts, std::vector<std::uint32_t> labels = {}) {
  corpus::Document d;
  d.counts = counts;
  for (auto [t, c] : counts) {
    d.weighted.emplace_back(t, static_cast<double>(c));
    d.token_count += c;
  }
  d.labels = std::move(labels);
  return d;
}

std::vector<NoiseDraw> zero_draws(const ModelParams& p) {
  NoiseDraw d;
  d.eps_s.assign(p.dims.K, 0.0);
  if (p.variant == Variant::VdshSP) d.eps_v.assign(p.dims.K, 0.0);
  return {d};
}

}  // namespace

TEST_CASE("variant names and parameter layout") {
  CHECK(parse_variant("vdsh") == Variant::Vdsh);
  CHECK(parse_variant("vdsh-s") == Variant::VdshS);
  CHECK(parse_variant("vdsh-sp") == Variant::VdshSP);
  CHECK_THROWS_AS(parse_variant("vae"), ConfigError);
  for (auto v : kAll) CHECK(parse_variant(to_string(v)) == v);

  const Dims dims{4, 7, 5, 3};
  CHECK(param_shape(ParamId::W1, dims) == std::pair<std::size_t, std::size_t>{5, 7});
  CHECK(param_shape(ParamId::W2, dims) == std::pair<std::size_t, std::size_t>{5, 5});
  CHECK(param_shape(ParamId::W3, dims) == std::pair<std::size_t, std::size_t>{4, 5});
  CHECK(param_shape(ParamId::G, dims) == std::pair<std::size_t, std::size_t>{4, 7});
  CHECK(param_shape(ParamId::bw, dims) == std::pair<std::size_t, std::size_t>{7, 1});
  CHECK(param_shape(ParamId::U, dims) == std::pair<std::size_t, std::size_t>{3, 4});

  CHECK_FALSE(uses_param(Variant::Vdsh, ParamId::U));
  CHECK(uses_param(Variant::VdshS, ParamId::U));
  CHECK_FALSE(uses_param(Variant::VdshS, ParamId::W3p));
  CHECK(uses_param(Variant::VdshSP, ParamId::W4p));

  for (auto v : kAll) {
    const auto p = zero_params(v, dims);
    for (std::size_t i = 0; i < kNumParams; ++i) {
      const auto id = static_cast<ParamId>(i);
      CHECK(p.weights.has(id) == uses_param(v, id));
    }
    CHECK_NOTHROW(validate(p));
  }
  CHECK_THROWS_AS(zero_params(Variant::VdshS, Dims{4, 7, 5, 0}), ConfigError);
  CHECK_THROWS_AS(zero_params(Variant::VdshSP, Dims{4, 7, 5, 0}), ConfigError);
  CHECK_NOTHROW(zero_params(Variant::Vdsh, Dims{4, 7, 5, 0}));
}

TEST_CASE("init_params: Glorot weights and zero biases") {
  math::Rng rng(1);
  const Dims dims{8, 30, 20, 4};
  const auto p = init_params(Variant::VdshSP, dims, rng);
  for (auto id : {ParamId::b1, ParamId::b2, ParamId::b3, ParamId::b4, ParamId::bw, ParamId::c,
                  ParamId::b3p, ParamId::b4p}) {
    for (double v : p.weights[id].values()) CHECK(v == 0.0);
  }
  for (auto id : {ParamId::W1, ParamId::W2, ParamId::W3, ParamId::W4, ParamId::G, ParamId::U,
                  ParamId::W3p, ParamId::W4p}) {
    const auto& m = p.weights[id];
    const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (double v : m.values()) CHECK(std::abs(v) <= a);
  }
}

TEST_CASE("validate rejects bad shapes and values") {
  auto p = zero_params(Variant::VdshS, Dims{2, 3, 4, 2});
  p.weights[ParamId::W1](0, 0) = NAN;
  CHECK_THROWS(validate(p));
  auto q = zero_params(Variant::VdshS, Dims{2, 3, 4, 2});
  q.weights[ParamId::W3p] = math::Matrix(2, 4);
  CHECK_THROWS(validate(q));
  auto r = zero_params(Variant::Vdsh, Dims{2, 3, 4, 0});
  r.weights[ParamId::G] = math::Matrix(3, 2);
  CHECK_THROWS(validate(r));
}

TEST_CASE("encode worked examples") {
  SECTION("zero network") {
    const auto p = zero_params(Variant::VdshSP, Dims{3, 5, 4, 2});
    const auto e = encode(p, {{0, 2.0}, {3, 1.0}});
    CHECK(e.shared.mu == std::vector<double>(3, 0.0));
    CHECK(e.shared.log_sigma == std::vector<double>(3, 0.0));
    REQUIRE(e.private_part);
    CHECK(e.private_part->mu == std::vector<double>(3, 0.0));
  }
  SECTION("empty input uses the bias-only path") {
    const auto p = oracle::random_params(Variant::Vdsh, Dims{2, 6, 4, 0}, 3, 0.7);
    const auto e = encode(p, {});
    const auto ref = oracle::forward(p, std::vector<double>(6, 0.0));
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(e.shared.mu[k] == Approx(ref.mu[k]).epsilon(1e-13));
      CHECK(e.shared.log_sigma[k] == Approx(ref.ls[k]).epsilon(1e-13));
    }
  }
  SECTION("random small instance matches the dense oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      for (auto v : kAll) {
        const auto p = oracle::random_params(v, Dims{2, 6, 4, 2}, seed, 1.0);
        std::mt19937_64 rng(seed);
        const auto d = oracle::random_document(6, 2, 4, rng);
        math::Rng mrng(seed);
        const DropoutMasks masks{math::dropout_mask(4, 0.7, mrng), math::dropout_mask(4, 0.7, mrng)};
        for (const DropoutMasks* m : {static_cast<const DropoutMasks*>(nullptr), &masks}) {
          const auto e = encode(p, d.weighted, m);
          const auto ref = oracle::forward(p, oracle::dense(d.weighted, 6),
                                           m ? &m->hidden1 : nullptr, m ? &m->hidden2 : nullptr);
          for (std::size_t k = 0; k < 2; ++k) {
            CHECK(e.shared.mu[k] == Approx(ref.mu[k]).epsilon(1e-12).margin(1e-14));
            CHECK(e.shared.log_sigma[k] == Approx(ref.ls[k]).epsilon(1e-12).margin(1e-14));
            if (v == Variant::VdshSP) {
              CHECK(e.private_part->mu[k] == Approx(ref.mu_v[k]).epsilon(1e-12).margin(1e-14));
              CHECK(e.private_part->log_sigma[k] ==
                    Approx(ref.ls_v[k]).epsilon(1e-12).margin(1e-14));
            }
          }
        }
      }
    }
  }
  SECTION("log sigma is clamped") {
    auto p = zero_params(Variant::Vdsh, Dims{2, 3, 2, 0});
    p.weights[ParamId::b4](0, 0) = 50.0;
    p.weights[ParamId::b4](1, 0) = -50.0;
    const auto e = encode(p, {{0, 1.0}});
    CHECK(e.shared.log_sigma == std::vector<double>{10.0, -10.0});
  }
  SECTION("out-of-range term ids are rejected") {
    const auto p = zero_params(Variant::Vdsh, Dims{2, 3, 2, 0});
    CHECK_THROWS_AS(encode(p, {{3, 1.0}}), DataError);
  }
}

TEST_CASE("reparameterize") {
  const GaussianPosterior post{{1.0, -2.0}, {0.0, std::log(0.5)}};
  const auto a = reparameterize(post, std::vector{0.0, 0.0});
  CHECK(a.s == post.mu);
  const GaussianPosterior unit{{1.0, -2.0}, {0.0, 0.0}};
  const auto b = reparameterize(unit, std::vector{0.3, -0.7});
  CHECK(b.s[0] == 1.3);
  CHECK(b.s[1] == -2.7);
  CHECK(b.epsilon == std::vector{0.3, -0.7});

  math::Rng rng(21);
  const int n = 100000;
  std::vector<double> mean(2, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto s = reparameterize(post, math::standard_normal(2, rng)).s;
    for (int k = 0; k < 2; ++k) mean[k] += s[k] / n;
  }
  const double se0 = 1.0 / std::sqrt(n), se1 = 0.5 / std::sqrt(n);
  CHECK(std::abs(mean[0] - 1.0) <= 3 * se0);
  CHECK(std::abs(mean[1] + 2.0) <= 3 * se1);
}

TEST_CASE("word log likelihood worked examples") {
  auto p = zero_params(Variant::Vdsh, Dims{2, 4, 3, 0});
  CHECK(word_log_likelihood(p, std::vector{0.3, -0.1}, {{0, 2}}) ==
        Approx(2.0 * std::log(0.25)).epsilon(1e-14));
  CHECK(2.0 * std::log(0.25) == Approx(-2.7726).margin(1e-4));

  p.weights[ParamId::bw](1, 0) = 1000.0;
  CHECK(word_log_likelihood(p, std::vector{0.0, 0.0}, {{1, 1}}) == Approx(0.0).margin(1e-12));

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto q = oracle::random_params(Variant::Vdsh, Dims{2, 5, 3, 0}, seed, 1.0);
    const std::vector<double> z{0.4 * seed - 1.0, 0.7};
    const corpus::CountVector counts{{0, 1}, {2, 3}, {4, 2}};
    CHECK(word_log_likelihood(q, z, counts) ==
          Approx(oracle::word_ll(q, z, counts)).epsilon(1e-12));
  }
}

TEST_CASE("word likelihood sign symmetry") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = oracle::random_params(Variant::Vdsh, Dims{3, 8, 3, 0}, seed, 1.0);
    const std::vector<double> z{0.5, -1.0, 2.0};
    const corpus::CountVector counts{{1, 2}, {5, 1}};
    const double before = word_log_likelihood(p, z, counts);
    for (auto& g : p.weights[ParamId::G].values()) g = -g;
    const std::vector<double> nz{-0.5, 1.0, -2.0};
    CHECK(word_log_likelihood(p, nz, counts) == Approx(before).epsilon(1e-14));
  }
}

TEST_CASE("label log likelihood worked examples") {
  auto p = zero_params(Variant::VdshS, Dims{2, 4, 3, 3});
  CHECK(label_log_likelihood(p, std::vector{1.0, 2.0}, std::vector<std::uint32_t>{0, 2}) ==
        Approx(3.0 * std::log(0.5)).epsilon(1e-14));
  CHECK(3.0 * std::log(0.5) == Approx(-2.0794).margin(1e-4));

  for (std::size_t j = 0; j < 3; ++j) p.weights[ParamId::c](j, 0) = -100.0;
  CHECK(label_log_likelihood(p, std::vector{0.0, 0.0}, std::vector<std::uint32_t>{}) ==
        Approx(0.0).margin(1e-40));

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto q = oracle::random_params(Variant::VdshS, Dims{3, 4, 3, 4}, seed, 1.0);
    const std::vector<double> s{0.2, -0.4, 1.1};
    const std::vector<std::uint32_t> y{1, 3};
    CHECK(label_log_likelihood(q, s, y) == Approx(oracle::label_ll(q, s, y)).epsilon(1e-12));
    CHECK(label_log_likelihood(q, s, y, LabelMode::PositivesOnly) ==
          Approx(oracle::label_ll(q, s, y, true)).epsilon(1e-12));
  }

  const auto u = zero_params(Variant::Vdsh, Dims{2, 4, 3, 0});
  CHECK_THROWS_AS(label_log_likelihood(u, std::vector{0.0, 0.0}, std::vector<std::uint32_t>{}),
                  ConfigError);
  CHECK_THROWS_AS(label_log_likelihood(p, std::vector{0.0, 0.0}, std::vector<std::uint32_t>{3}),
                  DataError);
}

TEST_CASE("KL worked examples and nonnegativity") {
  CHECK(kl_to_standard_normal({{0.0, 0.0}, {0.0, 0.0}}) == 0.0);
  CHECK(kl_to_standard_normal({{1.0}, {0.0}}) == 0.5);
  const double sigma2 = kl_to_standard_normal({{0.0}, {std::log(2.0)}});
  CHECK(sigma2 == Approx(0.5 * (4.0 - 1.0 - std::log(4.0))).epsilon(1e-14));
  CHECK(sigma2 == Approx(0.8069).margin(1e-4));

  math::Rng rng(8);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    GaussianPosterior post{{n(rng), n(rng)}, {n(rng), n(rng)}};
    const double v = kl_to_standard_normal(post);
    CHECK(v >= 0.0);
    CHECK(v == Approx(oracle::kl(post.mu, post.log_sigma)).epsilon(1e-12).margin(1e-14));
  }
  CHECK(kl_to_standard_normal({{1e-3}, {0.0}}) > 0.0);
  CHECK(kl_to_standard_normal({{0.0}, {1e-3}}) > 0.0);
}

TEST_CASE("KL matches a Monte Carlo estimate for sigma = 2") {
  math::Rng rng(13);
  const int n = 1000000;
  const double sigma = 2.0;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double eps = math::standard_normal(1, rng)[0];
    const double s = sigma * eps;
    // log q(s) - log p(s)
    total += (-0.5 * eps * eps - std::log(sigma)) - (-0.5 * s * s);
  }
  CHECK(std::abs(total / n - kl_to_standard_normal({{0.0}, {std::log(sigma)}})) <= 3e-2);
}

TEST_CASE("elbo worked examples") {
  const auto zero = zero_params(Variant::Vdsh, Dims{2, 4, 3, 0});
  const auto d = doc_with({{0, 1}});
  CHECK(elbo(zero, observe(d), zero_draws(zero)) == Approx(std::log(0.25)).epsilon(1e-14));

  SECTION("VDSH-SP with zero private heads and zero private noise equals VDSH-S") {
    const Dims dims{3, 6, 4, 2};
    const auto sp_rand = oracle::random_params(Variant::VdshSP, dims, 5, 0.8);
    auto s = zero_params(Variant::VdshS, dims);
    auto sp = sp_rand;
    for (auto id : {ParamId::W3p, ParamId::b3p, ParamId::W4p, ParamId::b4p}) {
      sp.weights[id].fill(0.0);
    }
    for (std::size_t i = 0; i < kNumParams; ++i) {
      const auto id = static_cast<ParamId>(i);
      if (s.weights.has(id)) s.weights[id] = sp.weights[id];
    }
    std::mt19937_64 rng(5);
    const auto doc = oracle::random_document(6, 2, 4, rng);
    NoiseDraw draw{{0.3, -0.2, 1.0}, {0.0, 0.0, 0.0}};
    std::vector<NoiseDraw> draws{draw};
    CHECK(elbo(sp, observe(doc), draws) == Approx(elbo(s, observe(doc), draws)).epsilon(1e-14));
  }

  SECTION("random instances equal the sum of independently computed parts") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      for (auto v : kAll) {
        const Dims dims{3, 12, 5, 3};
        const auto p = oracle::random_params(v, dims, seed, 0.6);
        std::mt19937_64 rng(seed + 100);
        const auto doc = oracle::random_document(12, 3, 5, rng);
        math::Rng mrng(seed);
        const auto draws = draw_noise(p, 3, mrng);
        const DropoutMasks masks{math::dropout_mask(5, 0.8, mrng), math::dropout_mask(5, 0.8, mrng)};
        CHECK(std::abs(elbo(p, observe(doc), draws) - oracle::elbo(p, doc, draws)) <= 1e-10);
        CHECK(std::abs(elbo(p, observe(doc), draws, &masks) -
                       oracle::elbo(p, doc, draws, &masks)) <= 1e-10);
        if (v != Variant::Vdsh) {
          const ElboOptions pos{LabelMode::PositivesOnly};
          CHECK(std::abs(elbo(p, observe(doc), draws, nullptr, pos) -
                         oracle::elbo(p, doc, draws, nullptr, true)) <= 1e-10);
        }
      }
    }
  }

  SECTION("supervised variants need labels") {
    const auto p = zero_params(Variant::VdshS, Dims{2, 4, 3, 2});
    Observation obs{&d.weighted, &d.counts, nullptr};
    CHECK_THROWS_AS(elbo(p, obs, zero_draws(p)), DataError);
    CHECK_THROWS_AS(elbo(p, observe(d), std::vector<NoiseDraw>{}), ConfigError);
  }
}

TEST_CASE("encoder output does not depend on labels") {
  const Dims dims{4, 10, 6, 5};
  for (auto v : {Variant::VdshS, Variant::VdshSP}) {
    const auto p = oracle::random_params(v, dims, 3, 0.7);
    std::mt19937_64 rng(3);
    auto doc = oracle::random_document(10, 5, 5, rng);
    const auto before = encode(p, doc.weighted);
    math::Rng mrng(4);
    const auto draws = draw_noise(p, 1, mrng);
    const double e1 = elbo(p, observe(doc), draws);
    doc.labels = {4};
    const auto after = encode(p, doc.weighted);
    CHECK(after.shared.mu == before.shared.mu);
    CHECK(after.shared.log_sigma == before.shared.log_sigma);
    if (v == Variant::VdshSP) CHECK(after.private_part->mu == before.private_part->mu);
    CHECK(elbo(p, observe(doc), draws) != e1);
  }
}

TEST_CASE("gradients match central differences for every variant") {
  const Dims dims{5, 30, 10, 3};
  for (auto v : kAll) {
    for (bool use_masks : {false, true}) {
      for (auto mode : {LabelMode::Full, LabelMode::PositivesOnly}) {
        if (v == Variant::Vdsh && mode == LabelMode::PositivesOnly) continue;
        const auto p = oracle::random_params(v, dims, 42, 0.3);
        std::mt19937_64 rng(7);
        std::vector<corpus::Document> docs;
        for (int i = 0; i < 3; ++i) docs.push_back(oracle::random_document(30, 3, 8, rng));
        math::Rng mrng(11);
        std::vector<Perturbation> perturb(docs.size());
        std::vector<Observation> batch;
        for (std::size_t i = 0; i < docs.size(); ++i) {
          perturb[i].draws = draw_noise(p, 1, mrng);
          if (use_masks) {
            perturb[i].masks = DropoutMasks{math::dropout_mask(10, 0.8, mrng),
                                            math::dropout_mask(10, 0.8, mrng)};
          }
          batch.push_back(observe(docs[i]));
        }
        const ElboOptions opts{mode};
        const auto g = elbo_gradients(p, batch, perturb, opts);
        auto f = [&](const ModelParams& q) {
          double total = 0.0;
          for (std::size_t i = 0; i < docs.size(); ++i) {
            total += elbo(q, batch[i], perturb[i].draws,
                          perturb[i].masks ? &*perturb[i].masks : nullptr, opts);
          }
          return total / static_cast<double>(docs.size());
        };
        CHECK(g.mean_elbo == Approx(f(p)).epsilon(1e-13));
        const auto check = oracle::check_gradient(p, g.grad, f);
        INFO(to_string(v) << " masks=" << use_masks << " worst " << check.worst_param);
        CHECK(check.worst_relative <= 1e-4);
        CHECK(check.checked == p.weights.num_values());
      }
    }
  }
}

TEST_CASE("gradient of the word bias sums to zero") {
  for (auto v : kAll) {
    const auto p = oracle::random_params(v, Dims{4, 20, 6, 2}, 9, 0.5);
    std::mt19937_64 rng(9);
    const auto doc = oracle::random_document(20, 2, 7, rng);
    math::Rng mrng(1);
    ParamSet grad = p.weights.zeros_like();
    accumulate_elbo_gradient(p, observe(doc), draw_noise(p, 1, mrng), nullptr, 1.0, grad);
    double total = 0.0;
    for (double x : grad[ParamId::bw].values()) total += x;
    CHECK(std::abs(total) <= 1e-12);
  }
}

TEST_CASE("with a flat decoder the head gradients are the KL derivatives") {
  auto p = oracle::random_params(Variant::VdshS, Dims{4, 10, 6, 2}, 2, 0.5);
  p.weights[ParamId::G].fill(0.0);
  p.weights[ParamId::U].fill(0.0);
  std::mt19937_64 rng(2);
  const auto doc = oracle::random_document(10, 2, 4, rng);
  math::Rng mrng(3);
  ParamSet grad = p.weights.zeros_like();
  accumulate_elbo_gradient(p, observe(doc), draw_noise(p, 1, mrng), nullptr, 1.0, grad);
  const auto e = encode(p, doc.weighted);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(grad[ParamId::b3](k, 0) == Approx(-e.shared.mu[k]).epsilon(1e-12));
    const double s2 = std::exp(2.0 * e.shared.log_sigma[k]);
    CHECK(grad[ParamId::b4](k, 0) == Approx(1.0 - s2).epsilon(1e-12).margin(1e-14));
  }
}

TEST_CASE("clamped log sigma passes no gradient to its head") {
  auto p = oracle::random_params(Variant::Vdsh, Dims{2, 6, 3, 0}, 4, 0.3);
  p.weights[ParamId::b4](0, 0) = 40.0;
  std::mt19937_64 rng(4);
  const auto doc = oracle::random_document(6, 0, 3, rng);
  math::Rng mrng(4);
  ParamSet grad = p.weights.zeros_like();
  accumulate_elbo_gradient(p, observe(doc), draw_noise(p, 1, mrng), nullptr, 1.0, grad);
  CHECK(grad[ParamId::b4](0, 0) == 0.0);
  CHECK(grad[ParamId::b4](1, 0) != 0.0);
}

TEST_CASE("estimator variance shrinks as 1/M") {
  const auto p = oracle::random_params(Variant::VdshS, Dims{3, 15, 6, 2}, 6, 0.6);
  std::mt19937_64 rng(6);
  const auto doc = oracle::random_document(15, 2, 6, rng);
  math::Rng mrng(77);
  auto variance = [&](std::size_t M) {
    const int reps = 2000;
    std::vector<double> xs(reps);
    for (auto& x : xs) x = elbo(p, observe(doc), draw_noise(p, M, mrng));
    double mean = 0.0;
    for (double x : xs) mean += x / reps;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean) / (reps - 1);
    return var;
  };
  const double v1 = variance(1), v10 = variance(10), v100 = variance(100);
  // Sample variances of 2000 draws are within ~15% of the truth at 5 sigma.
  CHECK(v1 / v10 == Approx(10.0).epsilon(0.25));
  CHECK(v1 / v100 == Approx(100.0).epsilon(0.25));
}

TEST_CASE("non-finite gradients name the parameter") {
  auto p = zero_params(Variant::VdshS, Dims{2, 3, 2, 2});
  auto g = p.weights.zeros_like();
  g[ParamId::U](1, 0) = NAN;
  CHECK_THROWS_AS(require_finite(g, "gradient"), DivergenceError);
  CHECK_THROWS_WITH(require_finite(g, "gradient"), Catch::Matchers::ContainsSubstring("U"));
}
