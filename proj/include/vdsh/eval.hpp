// SPDX-License-Identifier: Apache-2.0
//
// Retrieval metrics. Every labeled test document is a query against the
// retrieval pool (the training split by default). A retrieved document is
// relevant when it shares at least one label with the query.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vdsh/corpus.hpp"
#include "vdsh/hashing.hpp"
#include "vdsh/model.hpp"
#include "vdsh/search.hpp"

namespace vdsh::eval {

enum class Pool : std::uint8_t { Train, TrainValidation };

Pool parse_pool(std::string_view name);  // "train", "train+validation"
std::string_view to_string(Pool pool);

struct Protocol {
  std::size_t topk = 100;
  std::uint32_t radius = 2;
  Pool pool = Pool::Train;
  hashing::ThresholdMode threshold = hashing::ThresholdMode::Median;
  unsigned threads = 1;
};

inline constexpr std::string_view kTieBreak = "distance, then retrieval-pool insertion order";

bool is_relevant(const search::LabelSet& query, const search::LabelSet& doc);

// Relevant fraction of the first min(k, |hits|) hits. Throws on empty hits.
double precision_at_k(std::span<const search::Hit> hits, const search::LabelSet& query,
                      const search::HashIndex& index, std::size_t k);

// Relevant fraction of everything within the radius; 0 when nothing is retrieved.
double radius_precision(std::span<const search::Hit> hits, const search::LabelSet& query,
                        const search::HashIndex& index);

struct Query {
  std::string id;
  hashing::BinaryCode code;
  search::LabelSet labels;
};

struct QueryResult {
  std::string id;
  double precision_at_k = 0.0;
  double radius_precision = 0.0;
  std::size_t radius_hits = 0;
};

struct EvalReport {
  std::size_t bits = 0;
  std::string variant;
  std::string scheme;
  hashing::ThresholdMode threshold = hashing::ThresholdMode::Median;
  Pool pool = Pool::Train;
  std::size_t topk = 100;
  std::uint32_t radius = 2;
  std::size_t pool_size = 0;
  std::size_t query_count = 0;
  std::size_t excluded_queries = 0;  // test documents without labels
  double mean_precision_at_k = 0.0;
  double mean_radius_precision = 0.0;
  std::vector<QueryResult> queries;

  nlohmann::json to_json() const;
  // Inverse of to_json; throws DataError on missing or mistyped fields.
  static EvalReport from_json(const nlohmann::json& j);
};

// Queries with an empty label set are skipped and counted as excluded.
EvalReport evaluate_codes(const search::HashIndex& index, std::span<const Query> queries,
                          const Protocol& protocol);

// Encodes pool and test documents with the model and runs evaluate_codes.
EvalReport evaluate(const model::ModelParams& params, const corpus::Corpus& corpus,
                    const Protocol& protocol);

// Thresholds for `mode`: stored medians (refitted on the training split if
// the model has none) or sign.
hashing::ThresholdVector model_thresholds(const model::ModelParams& params,
                                          const corpus::Corpus& corpus,
                                          hashing::ThresholdMode mode, unsigned threads = 1);

}  // namespace vdsh::eval
