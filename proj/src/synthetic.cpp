// SPDX-License-Identifier: Apache-2.0
#include "vdsh/synthetic.hpp"

#include <cstdio>
#include <string>

#include "vdsh/errors.hpp"

namespace vdsh::synthetic {

std::vector<corpus::RawDocument> topic_corpus(const TopicCorpusOptions& o) {
  if (o.topics < 1 || o.vocab < o.topics) throw ConfigError("need 1 <= topics <= vocab");
  if (o.noise < 0.0 || o.noise > 1.0) throw ConfigError("noise must be in [0, 1]");
  if (o.min_tokens < 1 || o.max_tokens < o.min_tokens) throw ConfigError("bad token range");
  math::Rng rng(o.seed);
  std::uniform_int_distribution<std::size_t> length(o.min_tokens, o.max_tokens);
  std::uniform_int_distribution<std::size_t> any_term(0, o.vocab - 1);
  std::bernoulli_distribution is_noise(o.noise);

  std::vector<std::string> names(o.vocab);
  for (std::size_t t = 0; t < o.vocab; ++t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "w%03zu", t);
    names[t] = buf;
  }

  std::vector<corpus::RawDocument> docs;
  docs.reserve(o.docs);
  for (std::size_t i = 0; i < o.docs; ++i) {
    const std::size_t topic = i % o.topics;
    const std::size_t lo = topic * o.vocab / o.topics;
    const std::size_t hi = (topic + 1) * o.vocab / o.topics;
    std::uniform_int_distribution<std::size_t> topic_term(lo, hi - 1);
    const std::size_t n = length(rng);
    std::vector<std::string> tokens;
    tokens.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
      tokens.push_back(names[is_noise(rng) ? any_term(rng) : topic_term(rng)]);
    }
    char id[24];
    std::snprintf(id, sizeof id, "doc%05zu", i);
    docs.push_back(corpus::make_raw_document(id, std::span<const std::string>(tokens),
                                             {"topic" + std::to_string(topic)}));
  }
  return docs;
}

}  // namespace vdsh::synthetic
