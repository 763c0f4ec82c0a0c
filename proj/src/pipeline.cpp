// SPDX-License-Identifier: Apache-2.0
#include "vdsh/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "vdsh/byteio.hpp"
#include "vdsh/errors.hpp"
#include "vdsh/model_io.hpp"

namespace vdsh::pipeline {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = value.find(',', start);
    auto item = trim(value.substr(start, comma == std::string_view::npos ? value.npos
                                                                          : comma - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  const auto text = trim(value);
  T out{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T, typename Fn>
std::string join(const std::vector<T>& items, Fn&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += fmt(items[i]);
  }
  return out;
}

template <typename T, typename Fn>
std::vector<T> parse_list(std::string_view key, std::string_view value, Fn&& parse) {
  std::vector<T> out;
  for (const auto& item : split_list(value)) out.push_back(parse(item));
  if (out.empty()) throw ConfigError("empty list for " + std::string(key));
  return out;
}

model::LabelMode parse_label_mode(std::string_view v) {
  if (v == "full") return model::LabelMode::Full;
  if (v == "positives") return model::LabelMode::PositivesOnly;
  throw ConfigError("unknown label_mode '" + std::string(v) + "' (expected full or positives)");
}

std::string_view to_string(model::LabelMode m) {
  return m == model::LabelMode::Full ? "full" : "positives";
}

struct Field {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> f;
    auto add = [&](std::string key, Field field) { f.emplace_back(std::move(key), std::move(field)); };
    add("dataset", {[](RunConfig& c, std::string_view v) { c.dataset = trim(v); },
                    [](const RunConfig& c) { return c.dataset; }});
    add("input", {[](RunConfig& c, std::string_view v) { c.input = trim(v); },
                  [](const RunConfig& c) { return c.input.string(); }});
    add("out", {[](RunConfig& c, std::string_view v) { c.out = trim(v); },
                [](const RunConfig& c) { return c.out.string(); }});
    add("stopwords", {[](RunConfig& c, std::string_view v) { c.stopwords = trim(v); },
                      [](const RunConfig& c) { return c.stopwords.string(); }});
    add("scheme",
        {[](RunConfig& c, std::string_view v) {
           c.schemes = parse_list<corpus::WeightScheme>(
               "scheme", v, [](const std::string& s) { return corpus::parse_scheme(s); });
         },
         [](const RunConfig& c) {
           return join(c.schemes, [](auto s) { return std::string(corpus::to_string(s)); });
         }});
    add("min_df", {[](RunConfig& c, std::string_view v) {
                     c.min_df = parse_number<std::uint32_t>("min_df", v);
                   },
                   [](const RunConfig& c) { return std::to_string(c.min_df); }});
    add("max_vocab", {[](RunConfig& c, std::string_view v) {
                        c.max_vocab = parse_number<std::size_t>("max_vocab", v);
                      },
                      [](const RunConfig& c) { return std::to_string(c.max_vocab); }});
    add("variant",
        {[](RunConfig& c, std::string_view v) {
           c.variants = parse_list<model::Variant>(
               "variant", v, [](const std::string& s) { return model::parse_variant(s); });
         },
         [](const RunConfig& c) {
           return join(c.variants, [](auto s) { return std::string(model::to_string(s)); });
         }});
    add("bits",
        {[](RunConfig& c, std::string_view v) {
           c.bits = parse_list<std::uint32_t>(
               "bits", v, [](const std::string& s) { return parse_number<std::uint32_t>("bits", s); });
         },
         [](const RunConfig& c) { return join(c.bits, [](auto b) { return std::to_string(b); }); }});
    add("hidden", {[](RunConfig& c, std::string_view v) {
                     c.hidden = parse_number<std::uint32_t>("hidden", v);
                   },
                   [](const RunConfig& c) { return std::to_string(c.hidden); }});
    add("epochs", {[](RunConfig& c, std::string_view v) {
                     c.epochs = parse_number<std::uint32_t>("epochs", v);
                   },
                   [](const RunConfig& c) { return std::to_string(c.epochs); }});
    add("batch", {[](RunConfig& c, std::string_view v) {
                    c.batch = parse_number<std::uint32_t>("batch", v);
                  },
                  [](const RunConfig& c) { return std::to_string(c.batch); }});
    add("lr", {[](RunConfig& c, std::string_view v) { c.lr = parse_number<double>("lr", v); },
               [](const RunConfig& c) { return format_double(c.lr); }});
    add("keep_prob", {[](RunConfig& c, std::string_view v) {
                        c.keep_prob = parse_number<double>("keep_prob", v);
                      },
                      [](const RunConfig& c) { return format_double(c.keep_prob); }});
    add("samples", {[](RunConfig& c, std::string_view v) {
                      c.samples = parse_number<std::uint32_t>("samples", v);
                    },
                    [](const RunConfig& c) { return std::to_string(c.samples); }});
    add("clip_norm", {[](RunConfig& c, std::string_view v) {
                        c.clip_norm = parse_number<double>("clip_norm", v);
                      },
                      [](const RunConfig& c) { return format_double(c.clip_norm); }});
    add("label_mode", {[](RunConfig& c, std::string_view v) { c.label_mode = parse_label_mode(trim(v)); },
                       [](const RunConfig& c) { return std::string(to_string(c.label_mode)); }});
    add("threshold",
        {[](RunConfig& c, std::string_view v) {
           c.thresholds = parse_list<hashing::ThresholdMode>(
               "threshold", v,
               [](const std::string& s) { return hashing::parse_threshold_mode(s); });
         },
         [](const RunConfig& c) {
           return join(c.thresholds, [](auto m) { return std::string(hashing::to_string(m)); });
         }});
    add("topk", {[](RunConfig& c, std::string_view v) {
                   c.topk = parse_number<std::size_t>("topk", v);
                 },
                 [](const RunConfig& c) { return std::to_string(c.topk); }});
    add("radius", {[](RunConfig& c, std::string_view v) {
                     c.radius = parse_number<std::uint32_t>("radius", v);
                   },
                   [](const RunConfig& c) { return std::to_string(c.radius); }});
    add("pool", {[](RunConfig& c, std::string_view v) { c.pool = eval::parse_pool(trim(v)); },
                 [](const RunConfig& c) { return std::string(eval::to_string(c.pool)); }});
    add("seed", {[](RunConfig& c, std::string_view v) {
                   c.seed = parse_number<std::uint64_t>("seed", v);
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    add("threads", {[](RunConfig& c, std::string_view v) {
                      c.threads = parse_number<unsigned>("threads", v);
                    },
                    [](const RunConfig& c) { return std::to_string(c.threads); }});
    return f;
  }();
  return table;
}

const Field& field(std::string_view key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  io::write_binary_file_atomic(path, text);
}

// Rethrows with "<stage>: " prefixed, keeping the error category.
template <typename Fn>
auto stage(std::string_view name, Fn&& fn) -> decltype(fn()) {
  const std::string prefix = std::string(name) + ": ";
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const DivergenceError& e) {
    throw DivergenceError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const fs::filesystem_error& e) {
    throw DataError(prefix + e.what());
  }
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  field(key).set(config, value);
}

std::string get_config_value(const RunConfig& config, std::string_view key) {
  return field(key).get(config);
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set_config_value(config, trim(std::string_view(line).substr(0, eq)),
                       std::string_view(line).substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

std::string format_config(const RunConfig& config) {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + " = " + f.get(config) + '\n';
  return out;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const RunConfig& config, const fs::path& path) {
  write_text(path, format_config(config));
}

void validate(const RunConfig& c) {
  for (auto b : c.bits) {
    if (b < 1) throw ConfigError("bits must be at least 1");
  }
  if (c.min_df < 1) throw ConfigError("min_df must be at least 1");
  if (c.topk < 1) throw ConfigError("topk must be at least 1");
  for (auto b : c.bits) {
    if (c.radius > b) throw ConfigError("radius exceeds the code length " + std::to_string(b));
  }
  if (c.clip_norm < 0.0) throw ConfigError("clip_norm must be nonnegative");
  for (auto v : c.variants) {
    for (auto b : c.bits) trainer::validate(train_config(c, v, b));
  }
}

trainer::TrainConfig train_config(const RunConfig& c, model::Variant variant, std::uint32_t bits) {
  trainer::TrainConfig t;
  t.variant = variant;
  t.bits = bits;
  t.hidden = c.hidden;
  t.learning_rate = c.lr;
  t.keep_prob = c.keep_prob;
  t.epochs = c.epochs;
  t.batch_size = c.batch;
  t.samples = c.samples;
  t.seed = c.seed;
  t.threads = c.threads;
  if (c.clip_norm > 0.0) t.clip_norm = c.clip_norm;
  t.label_mode = c.label_mode;
  return t;
}

corpus::PreprocessOptions preprocess_options(const RunConfig& c, corpus::WeightScheme scheme) {
  corpus::PreprocessOptions o;
  o.scheme = scheme;
  o.min_df = c.min_df;
  o.max_vocab = c.max_vocab;
  o.seed = c.seed;
  if (!c.stopwords.empty()) o.stopwords = corpus::read_stopwords(c.stopwords);
  return o;
}

hashing::CodesFile encode_corpus(const model::ModelParams& params, const corpus::Corpus& corpus,
                                 hashing::ThresholdMode mode,
                                 std::span<const corpus::Split> splits, unsigned threads) {
  if (params.dims.V != corpus.vocab.size()) {
    throw DataError("model vocabulary size does not match the corpus");
  }
  const auto thresholds = eval::model_thresholds(params, corpus, mode, threads);
  std::vector<std::size_t> idx;
  if (splits.empty()) {
    idx.resize(corpus.docs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  } else {
    idx = corpus.indices(splits);
  }
  const auto means = model::encode_means(params, corpus, idx, threads);
  hashing::CodesFile codes;
  codes.bits = params.dims.K;
  codes.entries.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    codes.entries.push_back({corpus.docs[idx[i]].id, hashing::binarize(means[i], thresholds)});
  }
  return codes;
}

std::string csv_header(std::size_t topk, std::uint32_t radius) {
  return "dataset,variant,bits,scheme,threshold,p@" + std::to_string(topk) + ",p@r" +
         std::to_string(radius);
}

std::string csv_row(const RunRecord& r) {
  return r.dataset + ',' + std::string(model::to_string(r.variant)) + ',' +
         std::to_string(r.bits) + ',' + std::string(corpus::to_string(r.scheme)) + ',' +
         std::string(hashing::to_string(r.threshold)) + ',' + fmt4(r.report.mean_precision_at_k) +
         ',' + fmt4(r.report.mean_radius_precision);
}

std::vector<fs::path> emit_tables(std::span<const RunRecord> records, const fs::path& dir) {
  if (records.empty()) throw ConfigError("no reports to tabulate");
  fs::create_directories(dir);
  std::vector<fs::path> written;

  // Precision@k / radius precision against code length.
  std::set<std::uint32_t> all_bits;
  for (const auto& r : records) all_bits.insert(r.bits);
  auto bits_table = [&](const char* name, auto metric) {
    using Key = std::tuple<std::string, std::string, std::string, std::string>;
    std::map<Key, std::map<std::uint32_t, double>> rows;
    for (const auto& r : records) {
      rows[{r.dataset, std::string(model::to_string(r.variant)),
            std::string(corpus::to_string(r.scheme)),
            std::string(hashing::to_string(r.threshold))}][r.bits] = metric(r);
    }
    std::string csv = "dataset,variant,scheme,threshold";
    for (auto b : all_bits) csv += "," + std::to_string(b) + " bits";
    csv += '\n';
    for (const auto& [key, cells] : rows) {
      csv += std::get<0>(key) + ',' + std::get<1>(key) + ',' + std::get<2>(key) + ',' +
             std::get<3>(key);
      for (auto b : all_bits) {
        csv += ',';
        if (const auto it = cells.find(b); it != cells.end()) csv += fmt4(it->second);
      }
      csv += '\n';
    }
    write_text(dir / name, csv);
    written.push_back(dir / name);
  };
  bits_table("bits_sweep.csv", [](const RunRecord& r) { return r.report.mean_precision_at_k; });
  bits_table("radius_sweep.csv", [](const RunRecord& r) { return r.report.mean_radius_precision; });

  {
    using Key = std::tuple<std::string, std::string, std::uint32_t, std::string>;
    std::map<Key, std::map<std::string, double>> rows;
    for (const auto& r : records) {
      rows[{r.dataset, std::string(model::to_string(r.variant)), r.bits,
            std::string(corpus::to_string(r.scheme))}][std::string(hashing::to_string(r.threshold))] =
          r.report.mean_precision_at_k;
    }
    std::string csv = "dataset,variant,bits,scheme,median,sign\n";
    for (const auto& [key, cells] : rows) {
      csv += std::get<0>(key) + ',' + std::get<1>(key) + ',' + std::to_string(std::get<2>(key)) +
             ',' + std::get<3>(key);
      for (const char* mode : {"median", "sign"}) {
        csv += ',';
        if (const auto it = cells.find(mode); it != cells.end()) csv += fmt4(it->second);
      }
      csv += '\n';
    }
    write_text(dir / "threshold.csv", csv);
    written.push_back(dir / "threshold.csv");
  }

  {
    using Key = std::tuple<std::string, std::string, std::uint32_t, std::string>;
    std::map<Key, std::map<std::string, double>> rows;
    for (const auto& r : records) {
      rows[{r.dataset, std::string(model::to_string(r.variant)), r.bits,
            std::string(hashing::to_string(r.threshold))}][std::string(corpus::to_string(r.scheme))] =
          r.report.mean_precision_at_k;
    }
    std::string csv = "dataset,variant,bits,threshold,binary,tf,tfidf\n";
    for (const auto& [key, cells] : rows) {
      csv += std::get<0>(key) + ',' + std::get<1>(key) + ',' + std::to_string(std::get<2>(key)) +
             ',' + std::get<3>(key);
      for (const char* scheme : {"binary", "tf", "tfidf"}) {
        csv += ',';
        if (const auto it = cells.find(scheme); it != cells.end()) csv += fmt4(it->second);
      }
      csv += '\n';
    }
    write_text(dir / "weighting.csv", csv);
    written.push_back(dir / "weighting.csv");
  }
  return written;
}

PipelineResult run_pipeline(const RunConfig& config, bool verbose) {
  stage("config", [&] {
    validate(config);
    if (config.input.empty()) throw ConfigError("no input corpus given");
  });
  fs::create_directories(config.out);
  save_config(config, config.out / "config.txt");

  const auto raw = stage("preprocess", [&] { return corpus::read_jsonl(config.input); });

  PipelineResult result;
  std::string csv = csv_header(config.topk, config.radius) + '\n';
  for (const auto scheme : config.schemes) {
    const auto scheme_dir = config.out / std::string(corpus::to_string(scheme));
    const auto corpus = stage("preprocess", [&] {
      auto c = corpus::preprocess(raw, preprocess_options(config, scheme));
      corpus::save_corpus(c, scheme_dir / "corpus");
      return c;
    });
    for (const auto variant : config.variants) {
      for (const auto bits : config.bits) {
        const auto run_dir =
            scheme_dir / (std::string(model::to_string(variant)) + "-" + std::to_string(bits));
        const auto trained = stage("train", [&] {
          auto t = train_config(config, variant, bits);
          t.verbose = verbose;
          auto r = trainer::train(t, corpus);
          model::save_model(r.model, run_dir / "model.bin");
          write_text(run_dir / "train_report.json", r.report.to_json().dump(2) + '\n');
          return r;
        });
        for (const auto mode : config.thresholds) {
          const std::string suffix(hashing::to_string(mode));
          stage("encode", [&] {
            hashing::save_codes(encode_corpus(trained.model, corpus, mode, {}, config.threads),
                                run_dir / ("codes-" + suffix + ".bin"));
          });
          auto report = stage("eval", [&] {
            eval::Protocol p;
            p.topk = config.topk;
            p.radius = config.radius;
            p.pool = config.pool;
            p.threshold = mode;
            p.threads = config.threads;
            auto rep = eval::evaluate(trained.model, corpus, p);
            write_text(run_dir / ("eval-" + suffix + ".json"), rep.to_json().dump(2) + '\n');
            return rep;
          });
          RunRecord rec{config.dataset, variant, bits, scheme, mode, std::move(report)};
          csv += csv_row(rec) + '\n';
          result.runs.push_back(std::move(rec));
        }
      }
    }
  }
  result.results_csv = config.out / "results.csv";
  write_text(result.results_csv, csv);
  stage("tables", [&] { emit_tables(result.runs, config.out / "tables"); });
  return result;
}

}  // namespace vdsh::pipeline
