// SPDX-License-Identifier: Apache-2.0
// Python bindings for the vdsh core.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vdsh/corpus.hpp"
#include "vdsh/errors.hpp"
#include "vdsh/eval.hpp"
#include "vdsh/hashing.hpp"
#include "vdsh/model.hpp"
#include "vdsh/model_io.hpp"
#include "vdsh/search.hpp"
#include "vdsh/synthetic.hpp"
#include "vdsh/trainer.hpp"

namespace py = pybind11;
using namespace vdsh;

namespace {

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

hashing::BinaryCode code_from_signs(const std::vector<int>& signs) {
  for (int s : signs) {
    if (s != 1 && s != -1) throw ConfigError("code entries must be +1 or -1");
  }
  return hashing::BinaryCode::from_signs(signs);
}

py::list hits_to_python(const search::HashIndex& index, const std::vector<search::Hit>& hits) {
  py::list out;
  for (const auto& h : hits) out.append(py::make_tuple(index.id(h.index), h.distance));
  return out;
}

std::vector<std::size_t> split_indices(const corpus::Corpus& c, const std::string& split) {
  return c.indices(corpus::parse_split(split));
}

}  // namespace

PYBIND11_MODULE(_vdsh, m) {
  m.doc() = "Variational deep semantic hashing";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<DivergenceError>(m, "DivergenceError");

  m.def("tokenize", [](const std::string& text) { return corpus::tokenize(text); });

  m.def(
      "synthetic_jsonl",
      [](std::size_t docs, std::size_t vocab, std::size_t topics, double noise,
         std::uint64_t seed) {
        synthetic::TopicCorpusOptions o;
        o.docs = docs;
        o.vocab = vocab;
        o.topics = topics;
        o.noise = noise;
        o.seed = seed;
        return corpus::format_jsonl(synthetic::topic_corpus(o));
      },
      py::arg("docs") = 400, py::arg("vocab") = 100, py::arg("topics") = 2,
      py::arg("noise") = 0.1, py::arg("seed") = 1,
      "Labeled topic corpus as JSONL text");

  py::class_<corpus::Corpus>(m, "Corpus")
      .def_static(
          "from_jsonl",
          [](const std::string& text, const std::string& scheme, std::uint32_t min_df,
             std::size_t max_vocab, std::uint64_t seed) {
            corpus::PreprocessOptions o;
            o.scheme = corpus::parse_scheme(scheme);
            o.min_df = min_df;
            o.max_vocab = max_vocab;
            o.seed = seed;
            return corpus::preprocess(corpus::parse_jsonl(text), o);
          },
          py::arg("text"), py::arg("scheme") = "tfidf", py::arg("min_df") = 1,
          py::arg("max_vocab") = 0, py::arg("seed") = 0)
      .def_static("load", &corpus::load_corpus)
      .def("save", [](const corpus::Corpus& c, const std::filesystem::path& dir) {
        corpus::save_corpus(c, dir);
      })
      .def_property_readonly("vocab_size", [](const corpus::Corpus& c) { return c.vocab.size(); })
      .def_property_readonly("labels", [](const corpus::Corpus& c) { return c.labels.labels(); })
      .def_property_readonly("scheme",
                             [](const corpus::Corpus& c) { return std::string(to_string(c.scheme)); })
      .def("__len__", [](const corpus::Corpus& c) { return c.docs.size(); })
      .def("split_size", [](const corpus::Corpus& c, const std::string& split) {
        return split_indices(c, split).size();
      });

  py::class_<model::ModelParams>(m, "Model")
      .def_static("load", &model::load_model)
      .def("save", [](const model::ModelParams& p,
                      const std::filesystem::path& path) { model::save_model(p, path); })
      .def_property_readonly("variant",
                             [](const model::ModelParams& p) { return std::string(to_string(p.variant)); })
      .def_property_readonly("bits", [](const model::ModelParams& p) { return p.dims.K; })
      .def_property_readonly("median_thresholds",
                             [](const model::ModelParams& p) { return p.median_thresholds; })
      .def(
          "encode_means",
          [](const model::ModelParams& p, const corpus::Corpus& c, const std::string& split,
             unsigned threads) {
            const auto idx = split_indices(c, split);
            return model::encode_means(p, c, idx, threads);
          },
          py::arg("corpus"), py::arg("split") = "test", py::arg("threads") = 1);

  m.def(
      "train",
      [](const corpus::Corpus& c, const std::string& variant, std::uint32_t bits,
         std::uint32_t hidden, std::uint32_t epochs, std::uint32_t batch, double lr,
         double keep_prob, std::uint64_t seed, unsigned threads) {
        trainer::TrainConfig cfg;
        cfg.variant = model::parse_variant(variant);
        cfg.bits = bits;
        cfg.hidden = hidden;
        cfg.epochs = epochs;
        cfg.batch_size = batch;
        cfg.learning_rate = lr;
        cfg.keep_prob = keep_prob;
        cfg.seed = seed;
        cfg.threads = threads;
        trainer::TrainResult r;
        {
          py::gil_scoped_release release;
          r = trainer::train(cfg, c);
        }
        return py::make_tuple(r.model, to_python(r.report.to_json()));
      },
      py::arg("corpus"), py::arg("variant") = "vdsh", py::arg("bits") = 32,
      py::arg("hidden") = 1000, py::arg("epochs") = 30, py::arg("batch") = 100,
      py::arg("lr") = 0.001, py::arg("keep_prob") = 0.8, py::arg("seed") = 0,
      py::arg("threads") = 1, "Returns (model, report)");

  m.def(
      "evaluate",
      [](const model::ModelParams& p, const corpus::Corpus& c, std::size_t topk,
         std::uint32_t radius, const std::string& mode, const std::string& pool,
         unsigned threads) {
        eval::Protocol pr;
        pr.topk = topk;
        pr.radius = radius;
        pr.threshold = hashing::parse_threshold_mode(mode);
        pr.pool = eval::parse_pool(pool);
        pr.threads = threads;
        return to_python(eval::evaluate(p, c, pr).to_json());
      },
      py::arg("model"), py::arg("corpus"), py::arg("topk") = 100, py::arg("radius") = 2,
      py::arg("mode") = "median", py::arg("pool") = "train", py::arg("threads") = 1);

  m.def(
      "fit_thresholds",
      [](const std::vector<math::Vector>& mus, const std::string& mode) {
        if (mus.empty()) throw DataError("no vectors to fit thresholds on");
        return hashing::fit_thresholds(mus, hashing::parse_threshold_mode(mode), mus[0].size())
            .values;
      },
      py::arg("mus"), py::arg("mode") = "median");

  m.def("binarize", [](const math::Vector& mu, const math::Vector& thresholds) {
    hashing::ThresholdVector t{hashing::ThresholdMode::Median, thresholds};
    return hashing::binarize(mu, t).to_signs();
  });

  m.def("hamming", [](const std::vector<int>& a, const std::vector<int>& b) {
    return search::hamming(code_from_signs(a), code_from_signs(b));
  });

  m.def("kl_to_standard_normal", [](const math::Vector& mu, const math::Vector& log_sigma) {
    if (mu.size() != log_sigma.size()) throw ConfigError("mu and log_sigma sizes differ");
    return model::kl_to_standard_normal({mu, log_sigma});
  });

  py::class_<search::HashIndex>(m, "HashIndex")
      .def(py::init<std::size_t>(), py::arg("bits"))
      .def("add", [](search::HashIndex& ix, std::string id,
                     const std::vector<int>& signs) { ix.add(std::move(id), code_from_signs(signs)); })
      .def("__len__", &search::HashIndex::size)
      .def_property_readonly("bits", &search::HashIndex::bits)
      .def("topk", [](const search::HashIndex& ix, const std::vector<int>& q,
                      std::size_t k) { return hits_to_python(ix, ix.topk(code_from_signs(q), k)); })
      .def("within_radius", [](const search::HashIndex& ix, const std::vector<int>& q,
                               std::uint32_t r) {
        return hits_to_python(ix, ix.within_radius(code_from_signs(q), r));
      });
}
