// SPDX-License-Identifier: Apache-2.0
//
// Corpus ingestion: tokenization, vocabulary construction, term weighting and
// deterministic train/validation/test splits.
//
// On-disk layout of a preprocessed corpus directory:
//   corpus.jsonl  {"id", "split", "vec": [[term_id, weight], ...],
//                  "counts": [[term_id, count], ...], "labels": [label_id, ...]}
//   vocab.tsv     "term\tdoc_freq" per line, line number = term id
//   labels.txt    one label per line, line number = label id
//   meta.json     weighting scheme, dimensions and ingestion settings
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vdsh/mathcore.hpp"

namespace vdsh::corpus {

enum class WeightScheme : std::uint8_t { Binary, Tf, Tfidf };
enum class Split : std::uint8_t { Train, Validation, Test };

// Throws ConfigError("unknown weighting scheme ...") for anything else.
WeightScheme parse_scheme(std::string_view name);
std::string_view to_string(WeightScheme scheme);
Split parse_split(std::string_view name);
std::string_view to_string(Split split);

// Lowercased ASCII alphanumeric runs; tokens made only of digits are dropped.
std::vector<std::string> tokenize(std::string_view text);

using TermCounts = std::vector<std::pair<std::string, std::uint32_t>>;

// A document before it is mapped onto a vocabulary.
struct RawDocument {
  std::string id;
  TermCounts term_counts;  // sorted by term, counts > 0
  std::vector<std::string> labels;
};

RawDocument make_raw_document(std::string id, std::string_view text,
                              std::vector<std::string> labels);
RawDocument make_raw_document(std::string id, std::span<const std::string> tokens,
                              std::vector<std::string> labels);

// Accepts both {"id","text","labels"} and {"id","counts":{term:int},"labels"}.
std::vector<RawDocument> read_jsonl(const std::filesystem::path& path);
std::vector<RawDocument> parse_jsonl(std::string_view contents);

// Counts form, one document per line; parse_jsonl reads it back unchanged.
std::string format_jsonl(std::span<const RawDocument> docs);
void write_jsonl(std::span<const RawDocument> docs, const std::filesystem::path& path);

std::unordered_set<std::string> read_stopwords(const std::filesystem::path& path);

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> terms, std::vector<std::uint32_t> doc_freq,
             std::uint32_t total_docs);

  std::size_t size() const { return terms_.size(); }
  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<std::uint32_t>& doc_freq() const { return doc_freq_; }
  std::uint32_t total_docs() const { return total_docs_; }
  std::optional<std::uint32_t> find(std::string_view term) const;

  // ln(total_docs / doc_freq[t]); zero for terms present in every document.
  double idf(std::uint32_t term) const;

 private:
  std::vector<std::string> terms_;
  std::vector<std::uint32_t> doc_freq_;
  std::uint32_t total_docs_ = 0;
  std::unordered_map<std::string, std::uint32_t> index_;
};

// Terms with document frequency >= min_df that are not stopwords, ordered by
// descending document frequency then lexicographically. max_terms > 0 keeps
// only the first max_terms of that order. Throws ConfigError if nothing
// survives.
Vocabulary build_vocabulary(std::span<const RawDocument> docs,
                            const std::unordered_set<std::string>& stopwords,
                            std::uint32_t min_df, std::size_t max_terms = 0);
Vocabulary build_vocabulary(std::span<const std::vector<std::string>> tokenized_docs,
                            const std::unordered_set<std::string>& stopwords,
                            std::uint32_t min_df, std::size_t max_terms = 0);

class LabelSpace {
 public:
  LabelSpace() = default;
  explicit LabelSpace(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  std::optional<std::uint32_t> find(std::string_view label) const;

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

using CountVector = std::vector<std::pair<std::uint32_t, std::uint32_t>>;

math::SparseVector weight_terms(const CountVector& counts, WeightScheme scheme,
                                const Vocabulary& vocab);

struct Document {
  std::string id;
  CountVector counts;             // sorted by term id
  math::SparseVector weighted;    // encoder input d, same support as counts
  std::vector<std::uint32_t> labels;  // sorted label ids
  Split split = Split::Train;
  std::uint64_t token_count = 0;
};

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

// Seeded shuffle followed by rounding of n * ratio for train and validation;
// the test split receives the remainder.
std::vector<Split> split_corpus(std::size_t num_docs, SplitRatios ratios, std::uint64_t seed);

struct Corpus {
  Vocabulary vocab;
  LabelSpace labels;
  WeightScheme scheme = WeightScheme::Tfidf;
  std::vector<Document> docs;

  std::vector<std::size_t> indices(Split split) const;
  std::vector<std::size_t> indices(std::span<const Split> splits) const;
};

struct PreprocessOptions {
  WeightScheme scheme = WeightScheme::Tfidf;
  std::uint32_t min_df = 1;
  std::size_t max_vocab = 0;
  std::uint64_t seed = 0;
  SplitRatios ratios;
  std::unordered_set<std::string> stopwords;
};

// Splits first, then builds the vocabulary and label space from the training
// split only. Labels not seen in training are dropped with a warning.
Corpus preprocess(std::span<const RawDocument> raw, const PreprocessOptions& options);

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace vdsh::corpus
