// SPDX-License-Identifier: Apache-2.0
#include "vdsh/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vdsh/errors.hpp"

namespace vdsh::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

WeightScheme parse_scheme(std::string_view name) {
  if (name == "binary") return WeightScheme::Binary;
  if (name == "tf") return WeightScheme::Tf;
  if (name == "tfidf") return WeightScheme::Tfidf;
  throw ConfigError("unknown weighting scheme '" + std::string(name) +
                    "' (expected binary, tf or tfidf)");
}

std::string_view to_string(WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::Binary: return "binary";
    case WeightScheme::Tf: return "tf";
    case WeightScheme::Tfidf: return "tfidf";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "validation") return Split::Validation;
  if (name == "test") return Split::Test;
  throw DataError("unknown split '" + std::string(name) + "'");
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  bool has_alpha = false;
  auto flush = [&] {
    if (!current.empty() && has_alpha) tokens.push_back(current);
    current.clear();
    has_alpha = false;
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isalnum(c)) {
      if (std::isalpha(c)) has_alpha = true;
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

RawDocument make_raw_document(std::string id, std::span<const std::string> tokens,
                              std::vector<std::string> labels) {
  std::map<std::string, std::uint32_t> counts;
  for (const auto& t : tokens) ++counts[t];
  RawDocument doc{std::move(id), {counts.begin(), counts.end()}, std::move(labels)};
  return doc;
}

RawDocument make_raw_document(std::string id, std::string_view text,
                              std::vector<std::string> labels) {
  const auto tokens = tokenize(text);
  return make_raw_document(std::move(id), std::span<const std::string>(tokens),
                           std::move(labels));
}

namespace {

RawDocument parse_raw_line(const json& obj, std::size_t line_no) {
  const auto where = "line " + std::to_string(line_no);
  if (!obj.is_object()) throw DataError(where + ": expected a JSON object");
  if (!obj.contains("id") || !obj["id"].is_string()) {
    throw DataError(where + ": missing string field \"id\"");
  }
  std::vector<std::string> labels;
  if (obj.contains("labels")) {
    if (!obj["labels"].is_array()) throw DataError(where + ": \"labels\" must be an array");
    for (const auto& l : obj["labels"]) {
      if (!l.is_string()) throw DataError(where + ": labels must be strings");
      labels.push_back(l.get<std::string>());
    }
  }
  auto id = obj["id"].get<std::string>();
  if (obj.contains("text")) {
    if (!obj["text"].is_string()) throw DataError(where + ": \"text\" must be a string");
    return make_raw_document(std::move(id), obj["text"].get<std::string>(), std::move(labels));
  }
  if (obj.contains("counts")) {
    if (!obj["counts"].is_object()) throw DataError(where + ": \"counts\" must be an object");
    std::map<std::string, std::uint32_t> merged;
    for (const auto& [raw_term, count] : obj["counts"].items()) {
      if (!count.is_number_integer() || count.get<std::int64_t>() < 0) {
        throw DataError(where + ": counts must be nonnegative integers");
      }
      // Pre-counted terms go through the same normalization as raw text.
      for (const auto& term : tokenize(raw_term)) {
        merged[term] += count.get<std::uint32_t>();
      }
    }
    RawDocument doc{std::move(id), {}, std::move(labels)};
    for (const auto& [term, c] : merged) {
      if (c > 0) doc.term_counts.emplace_back(term, c);
    }
    return doc;
  }
  throw DataError(where + ": needs either \"text\" or \"counts\"");
}

}  // namespace

std::vector<RawDocument> parse_jsonl(std::string_view contents) {
  std::vector<RawDocument> docs;
  std::istringstream in{std::string(contents)};
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    auto doc = parse_raw_line(obj, line_no);
    if (!seen.insert(doc.id).second) {
      throw DataError("line " + std::to_string(line_no) + ": duplicate id '" + doc.id + "'");
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << contents;
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

std::vector<RawDocument> read_jsonl(const fs::path& path) { return parse_jsonl(read_file(path)); }

std::string format_jsonl(std::span<const RawDocument> docs) {
  std::string out;
  for (const auto& d : docs) {
    json counts = json::object();
    for (const auto& [term, c] : d.term_counts) counts[term] = c;
    out += json{{"id", d.id}, {"counts", counts}, {"labels", d.labels}}.dump() + '\n';
  }
  return out;
}

void write_jsonl(std::span<const RawDocument> docs, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, format_jsonl(docs));
}

std::unordered_set<std::string> read_stopwords(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stopword file " + path.string());
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& t : tokenize(line)) words.insert(std::move(t));
  }
  return words;
}

Vocabulary::Vocabulary(std::vector<std::string> terms, std::vector<std::uint32_t> doc_freq,
                       std::uint32_t total_docs)
    : terms_(std::move(terms)), doc_freq_(std::move(doc_freq)), total_docs_(total_docs) {
  if (terms_.size() != doc_freq_.size()) throw DataError("vocabulary size mismatch");
  index_.reserve(terms_.size());
  for (std::uint32_t i = 0; i < terms_.size(); ++i) {
    if (doc_freq_[i] == 0 || doc_freq_[i] > total_docs_) {
      throw DataError("document frequency out of range for term '" + terms_[i] + "'");
    }
    if (!index_.emplace(terms_[i], i).second) {
      throw DataError("duplicate vocabulary term '" + terms_[i] + "'");
    }
  }
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view term) const {
  const auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

double Vocabulary::idf(std::uint32_t term) const {
  return std::log(static_cast<double>(total_docs_) / static_cast<double>(doc_freq_.at(term)));
}

Vocabulary build_vocabulary(std::span<const RawDocument> docs,
                            const std::unordered_set<std::string>& stopwords,
                            std::uint32_t min_df, std::size_t max_terms) {
  if (docs.empty()) throw ConfigError("cannot build a vocabulary from zero documents");
  if (min_df < 1) throw ConfigError("min_df must be at least 1");
  std::unordered_map<std::string, std::uint32_t> df;
  for (const auto& doc : docs) {
    for (const auto& [term, count] : doc.term_counts) {
      if (count > 0 && !stopwords.contains(term)) ++df[term];
    }
  }
  std::vector<std::pair<std::string, std::uint32_t>> kept;
  for (auto& [term, f] : df) {
    if (f >= min_df) kept.emplace_back(term, f);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (max_terms > 0 && kept.size() > max_terms) kept.resize(max_terms);
  if (kept.empty()) {
    throw ConfigError("empty vocabulary: no terms survive stopword removal and min_df=" +
                      std::to_string(min_df));
  }
  std::vector<std::string> terms;
  std::vector<std::uint32_t> freqs;
  terms.reserve(kept.size());
  freqs.reserve(kept.size());
  for (auto& [term, f] : kept) {
    terms.push_back(std::move(term));
    freqs.push_back(f);
  }
  return Vocabulary(std::move(terms), std::move(freqs), static_cast<std::uint32_t>(docs.size()));
}

Vocabulary build_vocabulary(std::span<const std::vector<std::string>> tokenized_docs,
                            const std::unordered_set<std::string>& stopwords,
                            std::uint32_t min_df, std::size_t max_terms) {
  std::vector<RawDocument> raw;
  raw.reserve(tokenized_docs.size());
  for (std::size_t i = 0; i < tokenized_docs.size(); ++i) {
    raw.push_back(make_raw_document(std::to_string(i),
                                    std::span<const std::string>(tokenized_docs[i]), {}));
  }
  return build_vocabulary(raw, stopwords, min_df, max_terms);
}

LabelSpace::LabelSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
  for (std::uint32_t i = 0; i < labels_.size(); ++i) {
    if (!index_.emplace(labels_[i], i).second) {
      throw DataError("duplicate label '" + labels_[i] + "'");
    }
  }
}

std::optional<std::uint32_t> LabelSpace::find(std::string_view label) const {
  const auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

math::SparseVector weight_terms(const CountVector& counts, WeightScheme scheme,
                                const Vocabulary& vocab) {
  math::SparseVector out;
  out.reserve(counts.size());
  for (const auto& [term, count] : counts) {
    if (term >= vocab.size()) {
      throw DataError("term id " + std::to_string(term) + " outside vocabulary");
    }
    if (count == 0) continue;
    double w = 0.0;
    switch (scheme) {
      case WeightScheme::Binary: w = 1.0; break;
      case WeightScheme::Tf: w = static_cast<double>(count); break;
      case WeightScheme::Tfidf: w = static_cast<double>(count) * vocab.idf(term); break;
    }
    out.emplace_back(term, w);
  }
  return out;
}

std::vector<Split> split_corpus(std::size_t num_docs, SplitRatios ratios, std::uint64_t seed) {
  if (num_docs < 3) throw DataError("need at least 3 documents to split, got " +
                                    std::to_string(num_docs));
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be nonnegative and sum to 1");
  }
  std::vector<std::size_t> order(num_docs);
  for (std::size_t i = 0; i < num_docs; ++i) order[i] = i;
  // Fisher-Yates on the raw engine output so the assignment depends only on
  // the (fully specified) mt19937_64 sequence.
  math::Rng rng(seed);
  for (std::size_t i = num_docs - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  const double n = static_cast<double>(num_docs);
  const auto n_train = static_cast<std::size_t>(std::llround(n * ratios.train));
  const auto n_val = std::min(num_docs - n_train,
                              static_cast<std::size_t>(std::llround(n * ratios.validation)));
  std::vector<Split> splits(num_docs, Split::Test);
  for (std::size_t i = 0; i < num_docs; ++i) {
    if (i < n_train) {
      splits[order[i]] = Split::Train;
    } else if (i < n_train + n_val) {
      splits[order[i]] = Split::Validation;
    }
  }
  return splits;
}

std::vector<std::size_t> Corpus::indices(Split split) const {
  const Split one[] = {split};
  return indices(one);
}

std::vector<std::size_t> Corpus::indices(std::span<const Split> splits) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (std::find(splits.begin(), splits.end(), docs[i].split) != splits.end()) {
      out.push_back(i);
    }
  }
  return out;
}

Corpus preprocess(std::span<const RawDocument> raw, const PreprocessOptions& options) {
  const auto splits = split_corpus(raw.size(), options.ratios, options.seed);

  std::vector<RawDocument> train_docs;
  std::set<std::string> train_labels;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (splits[i] != Split::Train) continue;
    train_docs.push_back(raw[i]);
    train_labels.insert(raw[i].labels.begin(), raw[i].labels.end());
  }

  Corpus corpus;
  corpus.scheme = options.scheme;
  corpus.vocab = build_vocabulary(train_docs, options.stopwords, options.min_df, options.max_vocab);
  corpus.labels = LabelSpace({train_labels.begin(), train_labels.end()});

  std::size_t dropped_labels = 0;
  corpus.docs.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    Document doc;
    doc.id = raw[i].id;
    doc.split = splits[i];
    for (const auto& [term, count] : raw[i].term_counts) {
      const auto id = corpus.vocab.find(term);
      if (!id || count == 0) continue;
      doc.counts.emplace_back(*id, count);
      doc.token_count += count;
    }
    std::sort(doc.counts.begin(), doc.counts.end());
    doc.weighted = weight_terms(doc.counts, corpus.scheme, corpus.vocab);
    for (const auto& label : raw[i].labels) {
      if (const auto id = corpus.labels.find(label)) {
        doc.labels.push_back(*id);
      } else {
        ++dropped_labels;
      }
    }
    std::sort(doc.labels.begin(), doc.labels.end());
    doc.labels.erase(std::unique(doc.labels.begin(), doc.labels.end()), doc.labels.end());
    corpus.docs.push_back(std::move(doc));
  }
  if (dropped_labels > 0) {
    warn("dropped " + std::to_string(dropped_labels) +
         " label occurrence(s) not present in the training split");
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);

  std::string lines;
  for (const auto& doc : corpus.docs) {
    json vec = json::array();
    for (const auto& [t, w] : doc.weighted) vec.push_back({t, w});
    json counts = json::array();
    for (const auto& [t, c] : doc.counts) counts.push_back({t, c});
    json obj = {{"id", doc.id},
                {"split", to_string(doc.split)},
                {"vec", std::move(vec)},
                {"counts", std::move(counts)},
                {"labels", doc.labels}};
    lines += obj.dump();
    lines += '\n';
  }
  write_file_atomic(dir / "corpus.jsonl", lines);

  std::string vocab;
  for (std::size_t i = 0; i < corpus.vocab.size(); ++i) {
    vocab += corpus.vocab.terms()[i] + '\t' + std::to_string(corpus.vocab.doc_freq()[i]) + '\n';
  }
  write_file_atomic(dir / "vocab.tsv", vocab);

  std::string labels;
  for (const auto& l : corpus.labels.labels()) labels += l + '\n';
  write_file_atomic(dir / "labels.txt", labels);

  json meta = {{"format", "vdsh-corpus"},
               {"version", 1},
               {"scheme", to_string(corpus.scheme)},
               {"vocab_size", corpus.vocab.size()},
               {"label_count", corpus.labels.size()},
               {"total_docs", corpus.vocab.total_docs()},
               {"num_docs", corpus.docs.size()}};
  write_file_atomic(dir / "meta.json", meta.dump(2) + '\n');
}

Corpus load_corpus(const fs::path& dir) {
  Corpus corpus;
  json meta;
  try {
    meta = json::parse(read_file(dir / "meta.json"));
    corpus.scheme = parse_scheme(meta.at("scheme").get<std::string>());
  } catch (const json::exception& e) {
    throw DataError("bad meta.json in " + dir.string() + ": " + e.what());
  }

  {
    std::istringstream in(read_file(dir / "vocab.tsv"));
    std::vector<std::string> terms;
    std::vector<std::uint32_t> df;
    std::string line;
    while (std::getline(in, line)) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw DataError("malformed vocab.tsv line: " + line);
      terms.push_back(line.substr(0, tab));
      df.push_back(static_cast<std::uint32_t>(std::stoul(line.substr(tab + 1))));
    }
    corpus.vocab = Vocabulary(std::move(terms), std::move(df),
                              meta.at("total_docs").get<std::uint32_t>());
  }
  {
    std::istringstream in(read_file(dir / "labels.txt"));
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(in, line)) labels.push_back(line);
    corpus.labels = LabelSpace(std::move(labels));
  }

  const std::size_t V = corpus.vocab.size();
  const std::size_t L = corpus.labels.size();
  std::istringstream in(read_file(dir / "corpus.jsonl"));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto obj = json::parse(line);
      Document doc;
      doc.id = obj.at("id").get<std::string>();
      doc.split = parse_split(obj.at("split").get<std::string>());
      for (const auto& e : obj.at("vec")) {
        doc.weighted.emplace_back(e.at(0).get<std::uint32_t>(), e.at(1).get<double>());
      }
      for (const auto& e : obj.at("counts")) {
        const auto c = e.at(1).get<std::uint32_t>();
        doc.counts.emplace_back(e.at(0).get<std::uint32_t>(), c);
        doc.token_count += c;
      }
      doc.labels = obj.at("labels").get<std::vector<std::uint32_t>>();
      for (const auto& [t, c] : doc.counts) {
        if (t >= V) throw DataError("term id out of range");
      }
      for (const auto& [t, w] : doc.weighted) {
        if (t >= V) throw DataError("term id out of range");
      }
      for (auto l : doc.labels) {
        if (l >= L) throw DataError("label id out of range");
      }
      corpus.docs.push_back(std::move(doc));
    } catch (const json::exception& e) {
      throw DataError("corpus.jsonl line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("corpus.jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

}  // namespace vdsh::corpus
