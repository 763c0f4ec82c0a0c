// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "vdsh/corpus.hpp"

namespace vdsh::synthetic {

// Topic t owns the contiguous term block [t V / T, (t + 1) V / T). Each token
// comes from the document's topic block with probability 1 - noise, otherwise
// uniformly from the whole vocabulary. Documents cycle through the topics and
// are labeled "topic<t>". Terms are named w000, w001, ...
struct TopicCorpusOptions {
  std::size_t docs = 400;
  std::size_t vocab = 100;
  std::size_t topics = 2;
  double noise = 0.1;
  std::size_t min_tokens = 40;
  std::size_t max_tokens = 80;
  std::uint64_t seed = 1;
};

std::vector<corpus::RawDocument> topic_corpus(const TopicCorpusOptions& options);

}  // namespace vdsh::synthetic
