// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 ok, 2 config error, 3 data error,
// 4 numerical divergence.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vdsh/corpus.hpp"
#include "vdsh/errors.hpp"
#include "vdsh/eval.hpp"
#include "vdsh/hashing.hpp"
#include "vdsh/model_io.hpp"
#include "vdsh/pipeline.hpp"
#include "vdsh/search.hpp"
#include "vdsh/synthetic.hpp"
#include "vdsh/trainer.hpp"

namespace fs = std::filesystem;
using namespace vdsh;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

std::string flag_name(const std::string& key) {
  std::string f = key;
  std::replace(f.begin(), f.end(), '_', '-');
  return "--" + f;
}

struct SynthArgs {
  synthetic::TopicCorpusOptions opts;
  fs::path out;
};

struct PreprocessArgs {
  fs::path input, out, stopwords;
  std::string scheme = "tfidf";
  std::uint32_t min_df = 1;
  std::size_t max_vocab = 0;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  fs::path corpus, out, checkpoint_dir, report;
  std::string variant = "vdsh";
  std::string label_mode = "full";
  trainer::TrainConfig cfg;
  double clip_norm = 0.0;
  bool quiet = false;
};

struct EncodeArgs {
  fs::path model, corpus, out;
  std::string mode = "median";
  std::vector<std::string> splits;
  unsigned threads = 1;
};

struct IndexArgs {
  fs::path codes;
};

struct SearchArgs {
  fs::path index, queries, out;
  std::optional<std::size_t> topk;
  std::optional<std::uint32_t> radius;
  unsigned threads = 1;
};

struct EvalArgs {
  fs::path model, corpus, out;
  std::optional<std::uint32_t> bits;
  std::string mode = "median";
  std::string pool = "train";
  std::size_t topk = 100;
  std::uint32_t radius = 2;
  unsigned threads = 1;
};

struct PipelineArgs {
  fs::path config, write_config;
  std::map<std::string, std::string> overrides;
  bool quiet = false;
};

struct TablesArgs {
  std::vector<fs::path> reports;
  std::string dataset = "corpus";
  fs::path out;
};

int run_synth(const SynthArgs& a) {
  const auto docs = synthetic::topic_corpus(a.opts);
  corpus::write_jsonl(docs, a.out);
  std::cerr << "wrote " << docs.size() << " documents to " << a.out.string() << '\n';
  return 0;
}

int run_preprocess(const PreprocessArgs& a) {
  corpus::PreprocessOptions o;
  o.scheme = corpus::parse_scheme(a.scheme);
  o.min_df = a.min_df;
  o.max_vocab = a.max_vocab;
  o.seed = a.seed;
  if (o.min_df < 1) throw ConfigError("--min-df must be at least 1");
  if (!a.stopwords.empty()) o.stopwords = corpus::read_stopwords(a.stopwords);
  const auto raw = corpus::read_jsonl(a.input);
  const auto c = corpus::preprocess(raw, o);
  corpus::save_corpus(c, a.out);
  std::cerr << "corpus: " << c.docs.size() << " documents, " << c.vocab.size() << " terms, "
            << c.labels.size() << " labels\n";
  return 0;
}

int run_train(TrainArgs a) {
  a.cfg.variant = model::parse_variant(a.variant);
  if (a.label_mode == "full") {
    a.cfg.label_mode = model::LabelMode::Full;
  } else if (a.label_mode == "positives") {
    a.cfg.label_mode = model::LabelMode::PositivesOnly;
  } else {
    throw ConfigError("unknown label mode '" + a.label_mode + "'");
  }
  if (a.clip_norm > 0.0) a.cfg.clip_norm = a.clip_norm;
  a.cfg.checkpoint_dir = a.checkpoint_dir;
  a.cfg.verbose = !a.quiet;
  trainer::validate(a.cfg);
  const auto c = corpus::load_corpus(a.corpus);
  const auto result = trainer::train(a.cfg, c);
  model::save_model(result.model, a.out);
  const auto report = result.report.to_json().dump(2) + '\n';
  if (!a.report.empty()) {
    write_text(a.report, report);
  } else {
    std::cout << report;
  }
  return 0;
}

int run_encode(const EncodeArgs& a) {
  const auto mode = hashing::parse_threshold_mode(a.mode);
  std::vector<corpus::Split> splits;
  for (const auto& s : a.splits) splits.push_back(corpus::parse_split(s));
  const auto params = model::load_model(a.model);
  const auto c = corpus::load_corpus(a.corpus);
  const auto codes = pipeline::encode_corpus(params, c, mode, splits, a.threads);
  hashing::save_codes(codes, a.out);
  std::cerr << "encoded " << codes.entries.size() << " documents at " << codes.bits << " bits\n";
  return 0;
}

int run_index(const IndexArgs& a) {
  const auto codes = hashing::load_codes(a.codes);
  const auto index = search::build_index(codes);
  std::vector<double> ones(codes.bits, 0.0);
  for (const auto& e : codes.entries) {
    for (std::size_t p = 0; p < codes.bits; ++p) ones[p] += e.code.test(p) ? 1.0 : 0.0;
  }
  nlohmann::json dead = nlohmann::json::array();
  for (std::size_t p = 0; p < codes.bits; ++p) {
    if (!codes.entries.empty()) ones[p] /= static_cast<double>(codes.entries.size());
    if (ones[p] == 0.0 || ones[p] == 1.0) dead.push_back(p);
  }
  nlohmann::json out{{"bits", codes.bits},
                     {"count", index.size()},
                     {"ones_fraction", ones},
                     {"dead_bits", dead}};
  std::cout << out.dump() << '\n';
  return 0;
}

int run_search(const SearchArgs& a) {
  if (a.topk.has_value() == a.radius.has_value()) {
    throw ConfigError("give exactly one of --topk or --radius");
  }
  const auto index = search::build_index(hashing::load_codes(a.index));
  const auto queries = hashing::load_codes(a.queries);
  if (queries.bits != index.bits()) {
    throw DataError("query codes have " + std::to_string(queries.bits) + " bits, index has " +
                    std::to_string(index.bits()));
  }
  std::vector<hashing::BinaryCode> codes;
  codes.reserve(queries.entries.size());
  for (const auto& e : queries.entries) codes.push_back(e.code);
  const auto results = a.topk ? search::topk_batch(index, codes, *a.topk, a.threads)
                              : search::within_radius_batch(index, codes, *a.radius, a.threads);
  std::ostringstream out;
  for (std::size_t q = 0; q < results.size(); ++q) {
    nlohmann::json hits = nlohmann::json::array();
    for (const auto& h : results[q]) hits.push_back({index.id(h.index), h.distance});
    out << nlohmann::json{{"query", queries.entries[q].id}, {"hits", hits}}.dump() << '\n';
  }
  if (a.out.empty()) {
    std::cout << out.str();
  } else {
    write_text(a.out, out.str());
  }
  return 0;
}

int run_eval(const EvalArgs& a) {
  eval::Protocol p;
  p.topk = a.topk;
  p.radius = a.radius;
  p.pool = eval::parse_pool(a.pool);
  p.threshold = hashing::parse_threshold_mode(a.mode);
  p.threads = a.threads;
  const auto params = model::load_model(a.model);
  if (a.bits && *a.bits != params.dims.K) {
    throw ConfigError("--bits " + std::to_string(*a.bits) + " does not match the model's " +
                      std::to_string(params.dims.K) + " bits");
  }
  const auto c = corpus::load_corpus(a.corpus);
  const auto report = eval::evaluate(params, c, p);
  const auto text = report.to_json().dump(2) + '\n';
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_text(a.out, text);
  }
  std::cerr << "precision@" << p.topk << " " << report.mean_precision_at_k << "  radius "
            << p.radius << " precision " << report.mean_radius_precision << '\n';
  return 0;
}

int run_pipeline_cmd(const PipelineArgs& a) {
  auto config = a.config.empty() ? pipeline::RunConfig{} : pipeline::load_config(a.config);
  for (const auto& [key, value] : a.overrides) pipeline::set_config_value(config, key, value);
  if (!a.write_config.empty()) {
    pipeline::validate(config);
    pipeline::save_config(config, a.write_config);
    return 0;
  }
  const auto result = pipeline::run_pipeline(config, !a.quiet);
  std::ifstream in(result.results_csv);
  std::cout << in.rdbuf();
  return 0;
}

int run_tables(const TablesArgs& a) {
  std::vector<pipeline::RunRecord> records;
  for (const auto& path : a.reports) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": " + e.what());
    }
    auto report = eval::EvalReport::from_json(j);
    pipeline::RunRecord r;
    r.dataset = a.dataset;
    r.variant = model::parse_variant(report.variant);
    r.bits = static_cast<std::uint32_t>(report.bits);
    r.scheme = corpus::parse_scheme(report.scheme);
    r.threshold = report.threshold;
    r.report = std::move(report);
    records.push_back(std::move(r));
  }
  for (const auto& p : pipeline::emit_tables(records, a.out)) std::cerr << "wrote " << p.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational deep semantic hashing for text documents"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a labeled topic corpus as JSONL");
  s->add_option("--out", synth.out, "Output JSONL file")->required();
  s->add_option("--docs", synth.opts.docs, "Number of documents")->capture_default_str();
  s->add_option("--vocab", synth.opts.vocab, "Vocabulary size")->capture_default_str();
  s->add_option("--topics", synth.opts.topics, "Number of topics")->capture_default_str();
  s->add_option("--noise", synth.opts.noise, "Fraction of off-topic tokens")->capture_default_str();
  s->add_option("--min-tokens", synth.opts.min_tokens, "Shortest document")->capture_default_str();
  s->add_option("--max-tokens", synth.opts.max_tokens, "Longest document")->capture_default_str();
  s->add_option("--seed", synth.opts.seed, "Random seed")->capture_default_str();

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "Build vocabulary, weights and splits");
  p->add_option("--input", pre.input, "JSONL corpus")->required();
  p->add_option("--out", pre.out, "Output corpus directory")->required();
  p->add_option("--scheme", pre.scheme, "tfidf|tf|binary")->capture_default_str();
  p->add_option("--min-df", pre.min_df, "Minimum document frequency")->capture_default_str();
  p->add_option("--max-vocab", pre.max_vocab, "Keep at most this many terms (0: all)")
      ->capture_default_str();
  p->add_option("--seed", pre.seed, "Split seed")->capture_default_str();
  p->add_option("--stopwords", pre.stopwords, "Stopword file, one or more words per line");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a preprocessed corpus");
  t->add_option("--corpus", tr.corpus, "Corpus directory")->required();
  t->add_option("--out", tr.out, "Output model file")->required();
  t->add_option("--variant", tr.variant, "vdsh|vdsh-s|vdsh-sp")->capture_default_str();
  t->add_option("--bits", tr.cfg.bits, "Code length K")->capture_default_str();
  t->add_option("--hidden", tr.cfg.hidden, "Hidden layer width")->capture_default_str();
  t->add_option("--epochs", tr.cfg.epochs, "Training epochs")->capture_default_str();
  t->add_option("--batch", tr.cfg.batch_size, "Minibatch size")->capture_default_str();
  t->add_option("--lr", tr.cfg.learning_rate, "Adam learning rate")->capture_default_str();
  t->add_option("--keep-prob", tr.cfg.keep_prob, "Dropout keep probability")
      ->capture_default_str();
  t->add_option("--samples", tr.cfg.samples, "Latent samples per document")
      ->capture_default_str();
  t->add_option("--seed", tr.cfg.seed, "Random seed")->capture_default_str();
  t->add_option("--threads", tr.cfg.threads, "Worker threads")->capture_default_str();
  t->add_option("--clip-norm", tr.clip_norm, "Global gradient-norm clip (0: off)")
      ->capture_default_str();
  t->add_option("--label-mode", tr.label_mode, "full|positives")->capture_default_str();
  t->add_option("--checkpoint-dir", tr.checkpoint_dir, "Write last.bin and best.bin here");
  t->add_option("--report", tr.report, "Training report JSON (default: stdout)");
  t->add_flag("--quiet", tr.quiet, "No per-epoch progress on stderr");

  EncodeArgs en;
  auto* e = app.add_subcommand("encode", "Hash documents into binary codes");
  e->add_option("--model", en.model, "Model file")->required();
  e->add_option("--corpus", en.corpus, "Corpus directory")->required();
  e->add_option("--out", en.out, "Output codes file")->required();
  e->add_option("--mode", en.mode, "median|sign")->capture_default_str();
  e->add_option("--split", en.splits, "Only these splits (train, validation, test)");
  e->add_option("--threads", en.threads, "Worker threads")->capture_default_str();

  IndexArgs ix;
  auto* i = app.add_subcommand("index", "Summarize a codes file as a search index");
  i->add_option("--codes", ix.codes, "Codes file")->required();

  SearchArgs se;
  auto* q = app.add_subcommand("search", "Hamming search, one JSON line per query");
  q->add_option("--index", se.index, "Codes file to search")->required();
  q->add_option("--query-codes", se.queries, "Codes file of queries")->required();
  auto* topk_opt = q->add_option("--topk", se.topk, "Return the k nearest codes");
  auto* radius_opt = q->add_option("--radius", se.radius, "Return every code within distance r");
  topk_opt->excludes(radius_opt);
  q->add_option("--out", se.out, "Output file (default: stdout)");
  q->add_option("--threads", se.threads, "Worker threads")->capture_default_str();

  EvalArgs ev;
  auto* v = app.add_subcommand("eval", "Retrieval precision of a model on the test split");
  v->add_option("--model", ev.model, "Model file")->required();
  v->add_option("--corpus", ev.corpus, "Corpus directory")->required();
  v->add_option("--bits", ev.bits, "Expected code length (checked against the model)");
  v->add_option("--topk", ev.topk, "k for precision@k")->capture_default_str();
  v->add_option("--radius", ev.radius, "Hamming radius")->capture_default_str();
  v->add_option("--mode", ev.mode, "median|sign")->capture_default_str();
  v->add_option("--pool", ev.pool, "train|train+validation")->capture_default_str();
  v->add_option("--threads", ev.threads, "Worker threads")->capture_default_str();
  v->add_option("--out", ev.out, "Report JSON (default: stdout)");

  PipelineArgs pl;
  auto* r = app.add_subcommand("pipeline", "Preprocess, train, encode and evaluate from a config");
  r->add_option("--config", pl.config, "Config file of `key = value` lines");
  r->add_option("--write-config", pl.write_config,
                "Write the effective config to this file and exit");
  r->add_flag("--quiet", pl.quiet, "No per-epoch progress on stderr");
  const pipeline::RunConfig defaults;
  std::map<std::string, std::string> override_values;
  std::vector<std::pair<std::string, CLI::Option*>> override_opts;
  for (const auto& key : pipeline::config_keys()) {
    auto* opt = r->add_option(flag_name(key), override_values[key],
                              "Overrides `" + key + "` (default: " +
                                  pipeline::get_config_value(defaults, key) + ")");
    override_opts.emplace_back(key, opt);
  }

  TablesArgs tb;
  auto* b = app.add_subcommand("tables", "Comparison CSVs from eval report files");
  b->add_option("--reports", tb.reports, "Eval report JSON files")->required();
  b->add_option("--dataset", tb.dataset, "Dataset column value")->capture_default_str();
  b->add_option("--out", tb.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitConfig;
  }
  for (const auto& [key, opt] : override_opts) {
    if (opt->count() > 0) pl.overrides[key] = override_values[key];
  }

  try {
    if (*s) return run_synth(synth);
    if (*p) return run_preprocess(pre);
    if (*t) return run_train(tr);
    if (*e) return run_encode(en);
    if (*i) return run_index(ix);
    if (*q) return run_search(se);
    if (*v) return run_eval(ev);
    if (*r) return run_pipeline_cmd(pl);
    if (*b) return run_tables(tb);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitConfig;
  } catch (const DivergenceError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitDivergence;
  } catch (const DataError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitData;
  }
  return kExitConfig;
}
