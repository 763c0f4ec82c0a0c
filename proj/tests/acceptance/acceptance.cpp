// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
// nonzero if any criterion fails.
//
// Environment:
//   VDSH_CLI         path to the vdsh binary (criterion 9 drives it twice)
//   VDSH_20NG_JSONL  20 Newsgroups corpus as JSONL; enables criterion 7
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../support/oracles.hpp"
#include "vdsh/errors.hpp"
#include "vdsh/eval.hpp"
#include "vdsh/hashing.hpp"
#include "vdsh/model.hpp"
#include "vdsh/pipeline.hpp"
#include "vdsh/search.hpp"
#include "vdsh/synthetic.hpp"
#include "vdsh/trainer.hpp"

using namespace vdsh;
namespace fs = std::filesystem;

namespace {

enum class Outcome { Pass, Fail, Skip };

struct Result {
  Outcome outcome;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1. Analytic gradients against central differences.
Result gradient_correctness() {
  const auto t0 = Clock::now();
  const model::Dims dims{5, 30, 10, 3};
  double worst = 0.0;
  std::string where;
  for (auto v : {model::Variant::Vdsh, model::Variant::VdshS, model::Variant::VdshSP}) {
    const auto p = oracle::random_params(v, dims, 2024, 0.3);
    std::mt19937_64 rng(5);
    std::vector<corpus::Document> docs;
    for (int i = 0; i < 4; ++i) docs.push_back(oracle::random_document(30, 3, 10, rng));
    math::Rng mrng(6);
    std::vector<model::Perturbation> perturb(docs.size());
    std::vector<model::Observation> batch;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      perturb[i].draws = model::draw_noise(p, 1, mrng);
      perturb[i].masks = model::DropoutMasks{math::dropout_mask(10, 0.8, mrng),
                                             math::dropout_mask(10, 0.8, mrng)};
      batch.push_back(model::observe(docs[i]));
    }
    const auto g = model::elbo_gradients(p, batch, perturb);
    auto f = [&](const model::ModelParams& q) {
      double total = 0.0;
      for (std::size_t i = 0; i < docs.size(); ++i) {
        total += model::elbo(q, batch[i], perturb[i].draws, &*perturb[i].masks);
      }
      return total / static_cast<double>(docs.size());
    };
    const auto c = oracle::check_gradient(p, g.grad, f, 1e-5);
    if (c.worst_relative > worst) {
      worst = c.worst_relative;
      where = std::string(model::to_string(v)) + " " + c.worst_param;
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = worst <= 1e-4 && secs < 60.0;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "max relative error " + fmt("%.2e", worst) + " at " + where + " (limit 1e-4), " +
              fmt("%.1f", secs) + " s"};
}

// 2. Analytic KL against a Monte Carlo estimate.
Result kl_oracle() {
  const auto t0 = Clock::now();
  const double zero = model::kl_to_standard_normal({math::Vector(8, 0.0), math::Vector(8, 0.0)});
  math::Rng rng(77);
  std::normal_distribution<double> mu_dist(0.0, 1.0);
  std::uniform_real_distribution<double> ls_dist(-1.0, 1.0);
  std::normal_distribution<double> std_normal;
  double worst = 0.0;
  const int samples = 1000000;
  for (int trial = 0; trial < 20; ++trial) {
    model::GaussianPosterior post{math::Vector(8), math::Vector(8)};
    for (int k = 0; k < 8; ++k) {
      post.mu[k] = mu_dist(rng);
      post.log_sigma[k] = ls_dist(rng);
    }
    // E_q[log q(s) - log p(s)]; the 0.5 log(2 pi) terms cancel.
    double total = 0.0;
    for (int i = 0; i < samples; ++i) {
      double term = 0.0;
      for (int k = 0; k < 8; ++k) {
        const double eps = std_normal(rng);
        const double s = post.mu[k] + std::exp(post.log_sigma[k]) * eps;
        term += -0.5 * eps * eps - post.log_sigma[k] + 0.5 * s * s;
      }
      total += term;
    }
    worst = std::max(worst, std::abs(total / samples - model::kl_to_standard_normal(post)));
  }
  const double secs = seconds_since(t0);
  const bool ok = zero == 0.0 && worst <= 3e-2 && secs < 60.0;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "KL(0,1) = " + fmt("%g", zero) + ", max |analytic - MC| " + fmt("%.4f", worst) +
              " over 20 posteriors (limit 0.03), " + fmt("%.1f", secs) + " s"};
}

double log_sum_exp(const std::vector<double>& xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// 3. ELBO never exceeds the quadrature log-evidence.
Result bound_property() {
  const int nodes = 10000;
  const double lo = -8.0, hi = 8.0, step = (hi - lo) / (nodes - 1);
  std::vector<double> grid(nodes), trap(nodes);
  for (int i = 0; i < nodes; ++i) {
    grid[i] = lo + step * i;
    trap[i] = (i == 0 || i == nodes - 1) ? 0.5 * step : step;
  }
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi);
  double worst_gap = -INFINITY;
  int checked = 0;
  for (auto v : {model::Variant::Vdsh, model::Variant::VdshS}) {
    const model::Dims dims{1, 3, 4, v == model::Variant::Vdsh ? 0u : 2u};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto p = oracle::random_params(v, dims, 500 + seed, 1.0);
      corpus::Document doc;
      std::mt19937_64 rng(seed);
      for (std::uint32_t t = 0; t < 3; ++t) {
        const auto c = static_cast<std::uint32_t>(rng() % 4);
        if (c) {
          doc.counts.emplace_back(t, c);
          doc.weighted.emplace_back(t, static_cast<double>(c));
        }
      }
      if (doc.counts.empty()) {
        doc.counts.emplace_back(0, 1);
        doc.weighted.emplace_back(0, 1.0);
      }
      if (v != model::Variant::Vdsh) doc.labels = {static_cast<std::uint32_t>(seed % 2)};

      // Exact ELBO: the expectation over eps by quadrature against phi(eps).
      std::vector<double> w(nodes);
      double wsum = 0.0;
      for (int i = 0; i < nodes; ++i) {
        w[i] = trap[i] * std::exp(log_norm - 0.5 * grid[i] * grid[i]);
        wsum += w[i];
      }
      double elbo = 0.0;
      for (int i = 0; i < nodes; ++i) {
        const std::vector<model::NoiseDraw> draw{{{grid[i]}, {}}};
        elbo += w[i] / wsum * model::elbo(p, model::observe(doc), draw);
      }

      // log p(d, Y) = log of the integral of N(s; 0, 1) p(d | s) p(Y | s) ds.
      std::vector<double> terms(nodes);
      for (int i = 0; i < nodes; ++i) {
        const std::vector<double> s{grid[i]};
        double lp = log_norm - 0.5 * s[0] * s[0] + oracle::word_ll(p, s, doc.counts);
        if (v != model::Variant::Vdsh) lp += oracle::label_ll(p, s, doc.labels);
        terms[i] = lp + std::log(trap[i]);
      }
      const double evidence = log_sum_exp(terms);
      worst_gap = std::max(worst_gap, elbo - evidence);
      ++checked;
    }
  }
  const bool ok = worst_gap <= 1e-6;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "max (elbo - log evidence) " + fmt("%.3e", worst_gap) + " over " +
              std::to_string(checked) + " draws, vdsh and vdsh-s (limit 1e-6)"};
}

hashing::BinaryCode random_code(std::size_t K, std::mt19937_64& rng) {
  std::vector<int> signs(K);
  for (auto& s : signs) s = rng() & 1 ? 1 : -1;
  return hashing::BinaryCode::from_signs(signs);
}

std::uint32_t bit_loop(const hashing::BinaryCode& a, const hashing::BinaryCode& b) {
  std::uint32_t d = 0;
  for (std::size_t p = 0; p < a.bits(); ++p) d += a.test(p) != b.test(p);
  return d;
}

// 4. Exact search against brute force, and metric properties.
Result search_exactness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4242);
  std::vector<hashing::BinaryCode> codes;
  search::HashIndex index(32);
  for (int i = 0; i < 1000; ++i) {
    codes.push_back(random_code(32, rng));
    index.add("d" + std::to_string(i), codes.back());
  }
  int mismatches = 0;
  for (int q = 0; q < 100; ++q) {
    const auto query = random_code(32, rng);
    std::vector<search::Hit> oracle;
    for (std::size_t i = 0; i < codes.size(); ++i) oracle.push_back({i, bit_loop(codes[i], query)});
    std::stable_sort(oracle.begin(), oracle.end(),
                     [](const auto& a, const auto& b) { return a.distance < b.distance; });
    for (std::size_t k : {1u, 10u, 100u, 1000u}) {
      if (index.topk(query, k) != std::vector<search::Hit>(oracle.begin(), oracle.begin() + k)) {
        ++mismatches;
      }
    }
    for (std::uint32_t r : {0u, 2u, 8u, 32u}) {
      std::vector<search::Hit> expected;
      for (const auto& h : oracle) {
        if (h.distance <= r) expected.push_back(h);
      }
      if (index.within_radius(query, r) != expected) ++mismatches;
    }
  }
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_code(32, rng), b = random_code(32, rng), c = random_code(32, rng);
    const auto ab = search::hamming(a, b), ba = search::hamming(b, a);
    if (ab != ba || ab != bit_loop(a, b)) ++violations;
    if (search::hamming(a, a) != 0) ++violations;
    if ((ab == 0) != (a == b)) ++violations;
    if (search::hamming(a, c) > ab + search::hamming(b, c)) ++violations;
  }
  const double secs = seconds_since(t0);
  const bool ok = mismatches == 0 && violations == 0 && secs < 60.0;
  return {ok ? Outcome::Pass : Outcome::Fail,
          std::to_string(mismatches) + " oracle mismatches over 100 queries, " +
              std::to_string(violations) + " metric violations over 10000 triples, " +
              fmt("%.1f", secs) + " s"};
}

// 5. Median thresholds split every bit exactly in half.
Result median_balance() {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const std::size_t K = 32, n = 1000;
  std::vector<math::Vector> mus(n, math::Vector(K));
  for (auto& m : mus) {
    for (auto& v : m) v = u(rng);
  }
  for (std::size_t p = 0; p < K; ++p) {
    std::vector<double> col;
    for (const auto& m : mus) col.push_back(m[p]);
    std::sort(col.begin(), col.end());
    if (std::adjacent_find(col.begin(), col.end()) != col.end()) {
      return {Outcome::Fail, "generated values are not distinct"};
    }
  }
  const auto t = hashing::fit_thresholds(mus, hashing::ThresholdMode::Median, K);
  std::vector<std::size_t> ones(K, 0);
  for (const auto& m : mus) {
    const auto c = hashing::binarize(m, t);
    for (std::size_t p = 0; p < K; ++p) ones[p] += c.test(p);
  }
  const auto [mn, mx] = std::minmax_element(ones.begin(), ones.end());
  const bool ok = *mn == 500 && *mx == 500;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "+1 counts per bit in [" + std::to_string(*mn) + ", " + std::to_string(*mx) +
              "] over 1000 vectors, K = 32 (required exactly 500)"};
}

struct SyntheticRuns {
  double seconds = 0.0;
  double p10 = 0.0;
  // precision@100 for (variant, mode)
  std::vector<std::tuple<std::string, double, double>> p100;
};

const SyntheticRuns& synthetic_runs() {
  static const SyntheticRuns runs = [] {
    SyntheticRuns out;
    const auto raw = synthetic::topic_corpus({});
    const auto c = corpus::preprocess(raw, {});
    for (auto v : {model::Variant::VdshS, model::Variant::Vdsh}) {
      const auto t0 = Clock::now();
      trainer::TrainConfig cfg;
      cfg.variant = v;
      cfg.bits = 8;
      cfg.epochs = 20;
      cfg.seed = 1;
      const auto trained = trainer::train(cfg, c);
      eval::Protocol p;
      p.topk = 10;
      if (v == model::Variant::VdshS) {
        out.p10 = eval::evaluate(trained.model, c, p).mean_precision_at_k;
        out.seconds = seconds_since(t0);
      }
      p.topk = 100;
      p.threshold = hashing::ThresholdMode::Median;
      const double med = eval::evaluate(trained.model, c, p).mean_precision_at_k;
      p.threshold = hashing::ThresholdMode::Sign;
      const double sign = eval::evaluate(trained.model, c, p).mean_precision_at_k;
      out.p100.emplace_back(std::string(model::to_string(v)), med, sign);
    }
    return out;
  }();
  return runs;
}

// 6. Generated two-topic corpus is learned by VDSH-S.
Result synthetic_end_to_end() {
  const auto& r = synthetic_runs();
  const bool ok = r.p10 >= 0.9 && r.seconds < 300.0;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "vdsh-s K=8, 20 epochs: test precision@10 " + fmt("%.4f", r.p10) +
              " (required >= 0.9), train+eval " + fmt("%.1f", r.seconds) + " s"};
}

// 7. Newsgroups reproduction, only when the corpus is provided.
Result newsgroups_reproduction() {
  const char* path = std::getenv("VDSH_20NG_JSONL");
  if (!path || !*path) {
    return {Outcome::Skip,
            "set VDSH_20NG_JSONL to a 20 Newsgroups JSONL file to run (hours on CPU)"};
  }
  pipeline::RunConfig c;
  c.dataset = "20ng";
  c.input = path;
  c.out = fs::temp_directory_path() / "vdsh_acceptance_20ng";
  c.variants = {model::Variant::VdshS, model::Variant::Vdsh};
  c.bits = {32};
  c.thresholds = {hashing::ThresholdMode::Median, hashing::ThresholdMode::Sign};
  if (const char* sw = std::getenv("VDSH_STOPWORDS")) c.stopwords = sw;
  if (const char* mv = std::getenv("VDSH_MAX_VOCAB")) c.max_vocab = std::stoul(mv);
  const auto r = pipeline::run_pipeline(c, true);
  double s = 0.0, u = 0.0, gap_ms = 0.0;
  for (const auto& run : r.runs) {
    if (run.threshold != hashing::ThresholdMode::Median) continue;
    (run.variant == model::Variant::VdshS ? s : u) = run.report.mean_precision_at_k;
  }
  for (const auto& a : r.runs) {
    for (const auto& b : r.runs) {
      if (a.variant == b.variant && a.threshold != b.threshold) {
        gap_ms = std::max(gap_ms, std::abs(a.report.mean_precision_at_k -
                                           b.report.mean_precision_at_k));
      }
    }
  }
  const bool ok = s >= 0.65 && s - u >= 0.15;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "vdsh-s precision@100 " + fmt("%.4f", s) + " (required >= 0.65), vdsh " +
              fmt("%.4f", u) + ", gap " + fmt("%.4f", s - u) + " (required >= 0.15); " +
              "median/sign gap " + fmt("%.4f", gap_ms)};
}

// 8. Median and sign thresholds give nearly the same precision.
Result threshold_insensitivity() {
  const auto& r = synthetic_runs();
  double worst = 0.0;
  std::string detail;
  for (const auto& [variant, med, sign] : r.p100) {
    worst = std::max(worst, std::abs(med - sign));
    detail += variant + " " + fmt("%.4f", med) + "/" + fmt("%.4f", sign) + "  ";
  }
  const bool ok = worst <= 0.05;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "synthetic corpus, precision@100 median/sign: " + detail + "max gap " +
              fmt("%.4f", worst) + " (limit 0.05)"};
}

// 9. Two single-threaded pipeline runs are byte-identical.
Result reproducibility() {
  const auto dir = fs::temp_directory_path() / "vdsh_acceptance_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  synthetic::TopicCorpusOptions o;
  o.docs = 200;
  corpus::write_jsonl(synthetic::topic_corpus(o), dir / "input.jsonl");
  pipeline::RunConfig c;
  c.dataset = "topics";
  c.input = dir / "input.jsonl";
  c.variants = {model::Variant::Vdsh, model::Variant::VdshS, model::Variant::VdshSP};
  c.bits = {8};
  c.hidden = 64;
  c.epochs = 3;
  c.thresholds = {hashing::ThresholdMode::Median, hashing::ThresholdMode::Sign};
  c.threads = 1;
  c.seed = 12345;

  const char* cli = std::getenv("VDSH_CLI");
  std::string how;
  for (const char* run : {"a", "b"}) {
    c.out = dir / run;
    if (cli && *cli) {
      pipeline::save_config(c, dir / (std::string(run) + ".cfg"));
      const std::string cmd = std::string("\"") + cli + "\" pipeline --quiet --threads 1 --config \"" +
                              (dir / (std::string(run) + ".cfg")).string() + "\" > \"" +
                              (dir / (std::string(run) + ".log")).string() + "\" 2>&1";
      if (std::system(cmd.c_str()) != 0) {
        return {Outcome::Fail, "pipeline command failed: " + slurp(dir / (std::string(run) + ".log"))};
      }
      how = "vdsh pipeline --threads 1";
    } else {
      pipeline::run_pipeline(c);
      how = "library pipeline (VDSH_CLI unset)";
    }
  }
  std::size_t compared = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    const auto name = entry.path().filename().string();
    const bool model_file = name == "model.bin";
    const bool report = name.rfind("eval-", 0) == 0 && entry.path().extension() == ".json";
    if (!model_file && !report) continue;
    const auto other = dir / "b" / fs::relative(entry.path(), dir / "a");
    ++compared;
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) ++differing;
  }
  const bool ok = compared == 9 && differing == 0;
  return {ok ? Outcome::Pass : Outcome::Fail,
          how + ": " + std::to_string(compared) + " model/report files compared, " +
              std::to_string(differing) + " differ"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Result()> run;
  };
  const std::vector<Criterion> criteria{
      {"AC1 gradient correctness", gradient_correctness},
      {"AC2 KL oracle", kl_oracle},
      {"AC3 bound property", bound_property},
      {"AC4 search exactness", search_exactness},
      {"AC5 median balance", median_balance},
      {"AC6 synthetic end-to-end", synthetic_end_to_end},
      {"AC7 newsgroups reproduction", newsgroups_reproduction},
      {"AC8 thresholding insensitivity", threshold_insensitivity},
      {"AC9 reproducibility", reproducibility},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Result r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {Outcome::Fail, std::string("error: ") + e.what()};
    }
    const char* tag = r.outcome == Outcome::Pass ? "PASS" : r.outcome == Outcome::Fail ? "FAIL" : "SKIP";
    if (r.outcome == Outcome::Fail) ++failures;
    std::cout << tag << "  " << c.name << ": " << r.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
