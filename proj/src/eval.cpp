// SPDX-License-Identifier: Apache-2.0
#include "vdsh/eval.hpp"

#include "vdsh/errors.hpp"
#include "vdsh/parallel.hpp"

namespace vdsh::eval {

Pool parse_pool(std::string_view name) {
  if (name == "train") return Pool::Train;
  if (name == "train+validation") return Pool::TrainValidation;
  throw ConfigError("unknown retrieval pool '" + std::string(name) +
                    "' (expected train or train+validation)");
}

std::string_view to_string(Pool pool) {
  return pool == Pool::Train ? "train" : "train+validation";
}

bool is_relevant(const search::LabelSet& query, const search::LabelSet& doc) {
  return query.intersects(doc);
}

double precision_at_k(std::span<const search::Hit> hits, const search::LabelSet& query,
                      const search::HashIndex& index, std::size_t k) {
  if (hits.empty()) throw DataError("precision@k is undefined without retrieved documents");
  if (k < 1) throw ConfigError("precision@k needs k >= 1");
  const std::size_t n = std::min(k, hits.size());
  std::size_t relevant = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_relevant(query, index.labels(hits[i].index))) ++relevant;
  }
  return static_cast<double>(relevant) / static_cast<double>(n);
}

double radius_precision(std::span<const search::Hit> hits, const search::LabelSet& query,
                        const search::HashIndex& index) {
  if (hits.empty()) return 0.0;
  std::size_t relevant = 0;
  for (const auto& h : hits) {
    if (is_relevant(query, index.labels(h.index))) ++relevant;
  }
  return static_cast<double>(relevant) / static_cast<double>(hits.size());
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per_query = nlohmann::json::array();
  for (const auto& q : queries) {
    per_query.push_back({{"id", q.id},
                         {"precision_at_k", q.precision_at_k},
                         {"radius_precision", q.radius_precision},
                         {"radius_hits", q.radius_hits}});
  }
  return {{"config",
           {{"bits", bits},
            {"variant", variant},
            {"scheme", scheme},
            {"threshold", hashing::to_string(threshold)},
            {"pool", to_string(pool)},
            {"topk", topk},
            {"radius", radius},
            {"tie_break", kTieBreak}}},
          {"summary",
           {{"mean_precision_at_k", mean_precision_at_k},
            {"mean_radius_precision", mean_radius_precision},
            {"query_count", query_count},
            {"excluded_queries", excluded_queries},
            {"pool_size", pool_size}}},
          {"queries", per_query}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    const auto& cfg = j.at("config");
    const auto& sum = j.at("summary");
    r.bits = cfg.at("bits").get<std::size_t>();
    r.variant = cfg.at("variant").get<std::string>();
    r.scheme = cfg.at("scheme").get<std::string>();
    r.threshold = hashing::parse_threshold_mode(cfg.at("threshold").get<std::string>());
    r.pool = parse_pool(cfg.at("pool").get<std::string>());
    r.topk = cfg.at("topk").get<std::size_t>();
    r.radius = cfg.at("radius").get<std::uint32_t>();
    r.mean_precision_at_k = sum.at("mean_precision_at_k").get<double>();
    r.mean_radius_precision = sum.at("mean_radius_precision").get<double>();
    r.query_count = sum.at("query_count").get<std::size_t>();
    r.excluded_queries = sum.at("excluded_queries").get<std::size_t>();
    r.pool_size = sum.at("pool_size").get<std::size_t>();
    for (const auto& q : j.value("queries", nlohmann::json::array())) {
      r.queries.push_back({q.at("id").get<std::string>(), q.at("precision_at_k").get<double>(),
                           q.at("radius_precision").get<double>(),
                           q.at("radius_hits").get<std::size_t>()});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed eval report: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed eval report: ") + e.what());
  }
}

EvalReport evaluate_codes(const search::HashIndex& index, std::span<const Query> queries,
                          const Protocol& protocol) {
  if (queries.empty()) throw DataError("no query documents to evaluate");
  if (index.empty()) throw DataError("retrieval pool is empty");
  EvalReport report;
  report.bits = index.bits();
  report.threshold = protocol.threshold;
  report.pool = protocol.pool;
  report.topk = protocol.topk;
  report.radius = protocol.radius;
  report.pool_size = index.size();

  std::vector<const Query*> active;
  for (const auto& q : queries) {
    if (q.labels.empty()) {
      ++report.excluded_queries;
    } else {
      active.push_back(&q);
    }
  }
  if (active.empty()) throw DataError("every query document has an empty label set");

  report.queries.resize(active.size());
  parallel_chunks(active.size(), protocol.threads,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    for (std::size_t i = begin; i < end; ++i) {
                      const auto& q = *active[i];
                      const auto top = index.topk(q.code, protocol.topk);
                      const auto near = index.within_radius(q.code, protocol.radius);
                      report.queries[i] = {q.id, precision_at_k(top, q.labels, index, protocol.topk),
                                           radius_precision(near, q.labels, index), near.size()};
                    }
                  });

  std::vector<double> pk, pr;
  pk.reserve(active.size());
  pr.reserve(active.size());
  for (const auto& r : report.queries) {
    pk.push_back(r.precision_at_k);
    pr.push_back(r.radius_precision);
  }
  report.query_count = active.size();
  const double n = static_cast<double>(active.size());
  report.mean_precision_at_k = math::compensated_sum(pk) / n;
  report.mean_radius_precision = math::compensated_sum(pr) / n;
  return report;
}

hashing::ThresholdVector model_thresholds(const model::ModelParams& params,
                                          const corpus::Corpus& corpus,
                                          hashing::ThresholdMode mode, unsigned threads) {
  if (mode == hashing::ThresholdMode::Sign) return hashing::sign_thresholds(params.dims.K);
  if (params.median_thresholds) {
    return {hashing::ThresholdMode::Median, *params.median_thresholds};
  }
  const auto train = corpus.indices(corpus::Split::Train);
  const auto means = model::encode_means(params, corpus, train, threads);
  return hashing::fit_thresholds(means, mode, params.dims.K);
}

EvalReport evaluate(const model::ModelParams& params, const corpus::Corpus& corpus,
                    const Protocol& protocol) {
  if (params.dims.V != corpus.vocab.size()) {
    throw DataError("model vocabulary size " + std::to_string(params.dims.V) +
                    " does not match corpus vocabulary size " +
                    std::to_string(corpus.vocab.size()));
  }
  const auto thresholds = model_thresholds(params, corpus, protocol.threshold, protocol.threads);

  std::vector<corpus::Split> pool_splits{corpus::Split::Train};
  if (protocol.pool == Pool::TrainValidation) pool_splits.push_back(corpus::Split::Validation);
  const auto pool_idx = corpus.indices(pool_splits);
  const auto test_idx = corpus.indices(corpus::Split::Test);
  if (test_idx.empty()) throw DataError("corpus has an empty test split");

  const auto L = corpus.labels.size();
  const auto pool_mu = model::encode_means(params, corpus, pool_idx, protocol.threads);
  search::HashIndex index(params.dims.K);
  for (std::size_t i = 0; i < pool_idx.size(); ++i) {
    const auto& doc = corpus.docs[pool_idx[i]];
    index.add(doc.id, hashing::binarize(pool_mu[i], thresholds), search::LabelSet(L, doc.labels));
  }

  const auto test_mu = model::encode_means(params, corpus, test_idx, protocol.threads);
  std::vector<Query> queries;
  queries.reserve(test_idx.size());
  for (std::size_t i = 0; i < test_idx.size(); ++i) {
    const auto& doc = corpus.docs[test_idx[i]];
    queries.push_back({doc.id, hashing::binarize(test_mu[i], thresholds),
                       search::LabelSet(L, doc.labels)});
  }

  auto report = evaluate_codes(index, queries, protocol);
  report.variant = std::string(model::to_string(params.variant));
  report.scheme = std::string(corpus::to_string(corpus.scheme));
  return report;
}

}  // namespace vdsh::eval
