// SPDX-License-Identifier: Apache-2.0
#include "vdsh/trainer.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>

#include "vdsh/errors.hpp"
#include "vdsh/hashing.hpp"
#include "vdsh/model_io.hpp"
#include "vdsh/parallel.hpp"

namespace vdsh::trainer {

using model::ModelParams;
using model::ParamSet;

namespace {

// splitmix64, used to derive independent stream seeds from the run seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

enum Stream : std::uint64_t { kInit = 0, kShuffle = 1, kNoise = 2, kDropout = 3, kValidation = 4 };

std::vector<std::size_t> trainable(const corpus::Corpus& corpus, corpus::Split split) {
  std::vector<std::size_t> out;
  for (auto i : corpus.indices(split)) {
    if (corpus.docs[i].token_count > 0) out.push_back(i);
  }
  return out;
}

}  // namespace

void validate(const TrainConfig& c) {
  if (c.bits < 1) throw ConfigError("bits must be at least 1");
  if (c.hidden < 1) throw ConfigError("hidden size must be at least 1");
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (!(c.keep_prob > 0.0) || c.keep_prob > 1.0) {
    throw ConfigError("keep probability must be in (0, 1]");
  }
  if (c.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (c.batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (c.samples < 1) throw ConfigError("sample count must be at least 1");
  if (c.threads < 1) throw ConfigError("threads must be at least 1");
  if (c.clip_norm && !(*c.clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
}

AdamState AdamState::for_params(const ParamSet& params) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void adam_step(ParamSet& params, const ParamSet& loss_grad, AdamState& state,
               double learning_rate) {
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < model::kNumParams; ++i) {
    const auto id = static_cast<model::ParamId>(i);
    auto p = params[id].values();
    const auto g = loss_grad[id].values();
    auto m = state.m[id].values();
    auto v = state.v[id].values();
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
      throw ConfigError("adam: shape mismatch for parameter " + std::string(model::param_name(id)));
    }
    bool finite = true;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
      finite = finite && std::isfinite(p[j]);
    }
    if (!finite) {
      throw DivergenceError("non-finite update for parameter " +
                            std::string(model::param_name(id)));
    }
  }
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : epochs) {
    rows.push_back({{"epoch", e.epoch},
                    {"train_elbo", e.train_elbo},
                    {"validation_elbo", e.validation_elbo ? nlohmann::json(*e.validation_elbo)
                                                          : nlohmann::json(nullptr)},
                    {"seconds", e.seconds},
                    {"steps", e.steps}});
  }
  return {{"epochs", rows}, {"best_epoch", best_epoch}, {"total_steps", total_steps}};
}

double mean_elbo(const ModelParams& params, const corpus::Corpus& corpus,
                 std::span<const std::size_t> indices, std::uint64_t seed,
                 const model::ElboOptions& options, unsigned threads) {
  std::vector<std::size_t> docs;
  for (auto i : indices) {
    if (corpus.docs.at(i).token_count > 0) docs.push_back(i);
  }
  if (docs.empty()) throw DataError("no documents with tokens to score");
  math::Rng rng(seed);
  std::vector<std::vector<model::NoiseDraw>> noise;
  noise.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) noise.push_back(model::draw_noise(params, 1, rng));
  std::vector<double> values(docs.size());
  parallel_chunks(docs.size(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      values[i] = model::elbo(params, model::observe(corpus.docs[docs[i]]), noise[i], nullptr,
                              options);
    }
  });
  return math::compensated_sum(values) / static_cast<double>(docs.size());
}

TrainResult train(const TrainConfig& config, const corpus::Corpus& corpus) {
  validate(config);
  const auto train_docs = trainable(corpus, corpus::Split::Train);
  const auto val_docs = trainable(corpus, corpus::Split::Validation);
  if (train_docs.empty()) throw DataError("corpus has no training documents with tokens");

  model::Dims dims{config.bits, static_cast<std::uint32_t>(corpus.vocab.size()), config.hidden,
                   static_cast<std::uint32_t>(corpus.labels.size())};
  if (model::is_supervised(config.variant) && dims.L == 0) {
    throw DataError(std::string(model::to_string(config.variant)) +
                    " needs a labeled training split");
  }
  math::Rng init_rng(mix_seed(config.seed, kInit));
  math::Rng shuffle_rng(mix_seed(config.seed, kShuffle));
  math::Rng noise_rng(mix_seed(config.seed, kNoise));
  math::Rng dropout_rng(mix_seed(config.seed, kDropout));
  const auto validation_seed = mix_seed(config.seed, kValidation);

  ModelParams params = model::init_params(config.variant, dims, init_rng);
  AdamState adam = AdamState::for_params(params.weights);
  const model::ElboOptions options{config.label_mode};

  const std::size_t n = train_docs.size();
  const std::size_t batch = std::min<std::size_t>(config.batch_size, n);
  const std::size_t workers = chunk_count(batch, config.threads);
  std::vector<ParamSet> worker_grads(workers, params.weights.zeros_like());

  TrainResult result;
  ModelParams best = params;
  double best_val = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order = train_docs;

  for (std::uint32_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    for (std::size_t i = n - 1; i > 0; --i) {
      std::swap(order[i], order[static_cast<std::size_t>(shuffle_rng() % (i + 1))]);
    }
    std::vector<double> batch_elbos;
    std::uint64_t steps = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      const std::size_t b = end - start;
      // Noise and masks are drawn up front, in document order, so the
      // result does not depend on the number of workers' scheduling.
      std::vector<model::Perturbation> perturb(b);
      for (std::size_t i = 0; i < b; ++i) {
        perturb[i].draws = model::draw_noise(params, config.samples, noise_rng);
        perturb[i].masks = model::DropoutMasks{
            math::dropout_mask(dims.D, config.keep_prob, dropout_rng),
            math::dropout_mask(dims.D, config.keep_prob, dropout_rng)};
      }
      const double scale = 1.0 / static_cast<double>(b);
      std::vector<double> values(b);
      const std::size_t used = chunk_count(b, config.threads);
      parallel_chunks(b, config.threads, [&](std::size_t w, std::size_t lo, std::size_t hi) {
        auto& g = worker_grads[w];
        g.set_zero();
        for (std::size_t i = lo; i < hi; ++i) {
          const auto& doc = corpus.docs[order[start + i]];
          values[i] = model::accumulate_elbo_gradient(params, model::observe(doc),
                                                      perturb[i].draws, &*perturb[i].masks,
                                                      scale, g, options);
        }
      });
      // Fixed-order reduction into worker 0.
      auto& grad = worker_grads[0];
      for (std::size_t w = 1; w < used; ++w) grad.add_scaled(worker_grads[w], 1.0);

      const double value = math::compensated_sum(values) * scale;
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite ELBO at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(steps + 1));
      }
      model::require_finite(grad, "gradient");
      grad.scale(-1.0);  // descend on -ELBO
      if (config.clip_norm) {
        const double norm = std::sqrt(grad.squared_norm());
        if (norm > *config.clip_norm) grad.scale(*config.clip_norm / norm);
      }
      try {
        adam_step(params.weights, grad, adam, config.learning_rate);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(steps + 1));
      }
      batch_elbos.push_back(value * static_cast<double>(b));
      ++steps;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.steps = steps;
    stats.train_elbo = math::compensated_sum(batch_elbos) / static_cast<double>(n);
    if (!val_docs.empty()) {
      stats.validation_elbo =
          mean_elbo(params, corpus, val_docs, validation_seed, options, config.threads);
    }
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.report.total_steps += steps;

    const double score = stats.validation_elbo.value_or(static_cast<double>(epoch));
    const bool improved = !val_docs.empty() ? score > best_val : true;
    if (improved) {
      best_val = score;
      best = params;
      result.report.best_epoch = epoch;
    }
    if (!config.checkpoint_dir.empty()) {
      model::save_model(params, config.checkpoint_dir / "last.bin");
      if (improved) model::save_model(params, config.checkpoint_dir / "best.bin");
    }
    if (config.verbose) {
      std::cerr << "epoch " << epoch << "  train elbo " << stats.train_elbo;
      if (stats.validation_elbo) std::cerr << "  validation elbo " << *stats.validation_elbo;
      std::cerr << "  (" << stats.seconds << " s)\n";
    }
    result.report.epochs.push_back(stats);
  }

  const auto means = model::encode_means(best, corpus, train_docs, config.threads);
  best.median_thresholds =
      hashing::fit_thresholds(means, hashing::ThresholdMode::Median, dims.K).values;
  result.model = std::move(best);
  return result;
}

}  // namespace vdsh::trainer
