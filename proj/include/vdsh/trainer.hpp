// SPDX-License-Identifier: Apache-2.0
//
// Minibatch Adam on the negative ELBO with inverted dropout on the two hidden
// layers. One Monte Carlo sample per document and step by default.
//
// Cost per document is dominated by the first hidden layer and the softmax
// over the vocabulary: roughly O(nnz(d) D + D^2 + K V), i.e. O(B D^2 + D S V)
// per minibatch of B documents with S the number of sampled latents.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdsh/corpus.hpp"
#include "vdsh/model.hpp"

namespace vdsh::trainer {

struct TrainConfig {
  model::Variant variant = model::Variant::Vdsh;
  std::uint32_t bits = 32;
  std::uint32_t hidden = 1000;
  double learning_rate = 0.001;
  double keep_prob = 0.8;
  std::uint32_t epochs = 30;
  std::uint32_t batch_size = 100;
  std::uint32_t samples = 1;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::optional<double> clip_norm;  // global gradient-norm clip, e.g. 5.0
  model::LabelMode label_mode = model::LabelMode::Full;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  bool verbose = false;
};

// Throws ConfigError on out-of-range settings.
void validate(const TrainConfig& config);

struct AdamState {
  model::ParamSet m;
  model::ParamSet v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const model::ParamSet& params);
};

// One bias-corrected Adam update that descends `loss_grad`. Throws
// DivergenceError if any updated parameter is non-finite.
void adam_step(model::ParamSet& params, const model::ParamSet& loss_grad, AdamState& state,
               double learning_rate);

struct EpochStats {
  std::uint32_t epoch = 0;
  double train_elbo = 0.0;
  std::optional<double> validation_elbo;
  double seconds = 0.0;
  std::uint64_t steps = 0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::uint32_t best_epoch = 0;
  std::uint64_t total_steps = 0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  model::ModelParams model;
  TrainReport report;
};

// Mean per-document ELBO in evaluation mode (no dropout) with noise from
// `seed`. Documents without tokens are skipped.
double mean_elbo(const model::ModelParams& params, const corpus::Corpus& corpus,
                 std::span<const std::size_t> indices, std::uint64_t seed,
                 const model::ElboOptions& options = {}, unsigned threads = 1);

// Trains on the training split and returns the epoch with the best
// validation ELBO (the last epoch when there is no validation split), with
// median thresholds fitted on the training means.
TrainResult train(const TrainConfig& config, const corpus::Corpus& corpus);

}  // namespace vdsh::trainer
