// SPDX-License-Identifier: Apache-2.0
//
// End-to-end runs (preprocess -> train -> encode -> eval) driven by a
// line-oriented `key = value` config, plus the CSV table emitters.
//
// Config keys (lists are comma separated; every combination is run):
//   dataset input out stopwords scheme* min_df max_vocab variant* bits*
//   hidden epochs batch lr keep_prob samples clip_norm label_mode
//   threshold* topk radius pool seed threads
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vdsh/corpus.hpp"
#include "vdsh/eval.hpp"
#include "vdsh/hashing.hpp"
#include "vdsh/model.hpp"
#include "vdsh/trainer.hpp"

namespace vdsh::pipeline {

struct RunConfig {
  std::string dataset = "corpus";
  std::filesystem::path input;
  std::filesystem::path out = "vdsh-run";
  std::filesystem::path stopwords;
  std::vector<corpus::WeightScheme> schemes{corpus::WeightScheme::Tfidf};
  std::uint32_t min_df = 1;
  std::size_t max_vocab = 0;
  std::vector<model::Variant> variants{model::Variant::Vdsh};
  std::vector<std::uint32_t> bits{32};
  std::uint32_t hidden = 1000;
  std::uint32_t epochs = 30;
  std::uint32_t batch = 100;
  double lr = 0.001;
  double keep_prob = 0.8;
  std::uint32_t samples = 1;
  double clip_norm = 0.0;  // 0 disables clipping
  model::LabelMode label_mode = model::LabelMode::Full;
  std::vector<hashing::ThresholdMode> thresholds{hashing::ThresholdMode::Median};
  std::size_t topk = 100;
  std::uint32_t radius = 2;
  eval::Pool pool = eval::Pool::Train;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Every accepted key, in file order.
const std::vector<std::string>& config_keys();

// Assigns one key; throws ConfigError for unknown keys or bad values.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& config, std::string_view key);

RunConfig parse_config(std::string_view text);
std::string format_config(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

// Range checks shared by every subcommand.
void validate(const RunConfig& config);

trainer::TrainConfig train_config(const RunConfig& config, model::Variant variant,
                                  std::uint32_t bits);
corpus::PreprocessOptions preprocess_options(const RunConfig& config,
                                             corpus::WeightScheme scheme);

// Codes for the documents of `splits` (all splits when empty), in corpus order.
hashing::CodesFile encode_corpus(const model::ModelParams& params, const corpus::Corpus& corpus,
                                 hashing::ThresholdMode mode,
                                 std::span<const corpus::Split> splits = {},
                                 unsigned threads = 1);

struct RunRecord {
  std::string dataset;
  model::Variant variant = model::Variant::Vdsh;
  std::uint32_t bits = 0;
  corpus::WeightScheme scheme = corpus::WeightScheme::Tfidf;
  hashing::ThresholdMode threshold = hashing::ThresholdMode::Median;
  eval::EvalReport report;
};

std::string csv_header(std::size_t topk, std::uint32_t radius);
std::string csv_row(const RunRecord& record);

// Writes, under `dir`:
//   bits_sweep.csv      precision@k per (dataset, variant, scheme, threshold), one column per K
//   radius_sweep.csv    same layout for radius precision
//   threshold.csv       median vs sign per (dataset, variant, bits, scheme)
//   weighting.csv       binary / tf / tfidf per (dataset, variant, bits, threshold)
// Returns the written paths.
std::vector<std::filesystem::path> emit_tables(std::span<const RunRecord> records,
                                               const std::filesystem::path& dir);

struct PipelineResult {
  std::vector<RunRecord> runs;
  std::filesystem::path results_csv;
};

// Runs every (scheme, variant, bits, threshold) combination. Output layout:
//   out/<scheme>/corpus/                         preprocessed corpus
//   out/<scheme>/<variant>-<bits>/model.bin      trained model
//   out/<scheme>/<variant>-<bits>/train_report.json
//   out/<scheme>/<variant>-<bits>/codes-<threshold>.bin
//   out/<scheme>/<variant>-<bits>/eval-<threshold>.json
//   out/results.csv, out/tables/*.csv, out/config.txt
// Errors are rethrown with the failing stage name prefixed.
PipelineResult run_pipeline(const RunConfig& config, bool verbose = false);

}  // namespace vdsh::pipeline
