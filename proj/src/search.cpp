// SPDX-License-Identifier: Apache-2.0
#include "vdsh/search.hpp"

#include <algorithm>
#include <bit>

#include "vdsh/errors.hpp"
#include "vdsh/parallel.hpp"

namespace vdsh::search {

LabelSet::LabelSet(std::size_t universe, std::span<const std::uint32_t> ids)
    : words_(hashing::words_for_bits(universe), 0) {
  for (auto id : ids) {
    if (id >= universe) throw DataError("label id out of range");
    words_[id / 64] |= std::uint64_t{1} << (id % 64);
  }
}

bool LabelSet::empty() const {
  return std::all_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w == 0; });
}

bool LabelSet::contains(std::uint32_t id) const {
  return id / 64 < words_.size() && ((words_[id / 64] >> (id % 64)) & 1u);
}

bool LabelSet::intersects(const LabelSet& other) const {
  const auto n = std::min(words_.size(), other.words_.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (words_[i] & other.words_[i]) return true;
  }
  return false;
}

std::uint32_t hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  std::uint32_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::popcount(a[i] ^ b[i]);
  return d;
}

std::uint32_t hamming(const hashing::BinaryCode& a, const hashing::BinaryCode& b) {
  if (a.bits() != b.bits()) {
    throw DataError("cannot compare codes of " + std::to_string(a.bits()) + " and " +
                    std::to_string(b.bits()) + " bits");
  }
  return hamming(a.words(), b.words());
}

void HashIndex::add(std::string id, const hashing::BinaryCode& code, LabelSet labels) {
  if (code.bits() != bits_) throw DataError("code length differs from index K");
  if (!id_set_.insert(id).second) throw DataError("duplicate document id '" + id + "' in index");
  ids_.push_back(std::move(id));
  codes_.insert(codes_.end(), code.words().begin(), code.words().end());
  labels_.push_back(std::move(labels));
}

void HashIndex::check_query(const hashing::BinaryCode& query) const {
  if (query.bits() != bits_) {
    throw DataError("query has " + std::to_string(query.bits()) + " bits, index has " +
                    std::to_string(bits_));
  }
}

std::vector<Hit> HashIndex::topk(const hashing::BinaryCode& query, std::size_t k) const {
  if (k < 1) throw ConfigError("topk needs k >= 1");
  if (empty()) throw DataError("cannot search an empty index");
  check_query(query);
  const std::size_t n = size();
  const auto q = query.words();
  std::vector<std::uint32_t> dist(n);
  std::vector<std::size_t> histogram(bits_ + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = hamming(q, code_words(i));
    ++histogram[dist[i]];
  }
  // Distances are bounded by K, so a counting pass picks the k nearest and
  // keeps insertion order within each distance.
  const std::size_t take = std::min(k, n);
  std::vector<std::size_t> quota(bits_ + 1, 0);
  std::vector<std::size_t> offset(bits_ + 1, 0);
  std::size_t filled = 0;
  for (std::size_t d = 0; d <= bits_ && filled < take; ++d) {
    quota[d] = std::min(histogram[d], take - filled);
    offset[d] = filled;
    filled += quota[d];
  }
  std::vector<Hit> hits(take);
  for (std::size_t i = 0; i < n; ++i) {
    const auto d = dist[i];
    if (quota[d] == 0) continue;
    hits[offset[d]++] = {i, d};
    --quota[d];
  }
  return hits;
}

std::vector<Hit> HashIndex::within_radius(const hashing::BinaryCode& query,
                                          std::uint32_t radius) const {
  check_query(query);
  if (radius > bits_) throw ConfigError("radius exceeds code length");
  const auto q = query.words();
  std::vector<Hit> hits;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto d = hamming(q, code_words(i));
    if (d <= radius) hits.push_back({i, d});
  }
  std::stable_sort(hits.begin(), hits.end(),
                   [](const Hit& a, const Hit& b) { return a.distance < b.distance; });
  return hits;
}

HashIndex build_index(const hashing::CodesFile& codes) {
  HashIndex index(codes.bits);
  for (const auto& e : codes.entries) index.add(e.id, e.code);
  return index;
}

std::vector<std::vector<Hit>> topk_batch(const HashIndex& index,
                                         std::span<const hashing::BinaryCode> queries,
                                         std::size_t k, unsigned threads) {
  std::vector<std::vector<Hit>> out(queries.size());
  parallel_chunks(queries.size(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = index.topk(queries[i], k);
  });
  return out;
}

std::vector<std::vector<Hit>> within_radius_batch(const HashIndex& index,
                                                  std::span<const hashing::BinaryCode> queries,
                                                  std::uint32_t radius, unsigned threads) {
  std::vector<std::vector<Hit>> out(queries.size());
  parallel_chunks(queries.size(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = index.within_radius(queries[i], radius);
  });
  return out;
}

}  // namespace vdsh::search
