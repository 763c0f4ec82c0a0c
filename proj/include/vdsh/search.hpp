// SPDX-License-Identifier: Apache-2.0
//
// Exact Hamming-distance retrieval over packed codes. Distances are computed
// with XOR + popcount per 64-bit word; all queries scan the whole index.
// Ties are broken by insertion order, so results are fully deterministic.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "vdsh/hashing.hpp"

namespace vdsh::search {

// Fixed-size set of label ids backed by 64-bit words.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::size_t universe, std::span<const std::uint32_t> ids);

  bool empty() const;
  bool contains(std::uint32_t id) const;
  bool intersects(const LabelSet& other) const;
  std::span<const std::uint64_t> words() const { return words_; }

 private:
  std::vector<std::uint64_t> words_;
};

std::uint32_t hamming(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);
// Throws DataError if the two codes have different K.
std::uint32_t hamming(const hashing::BinaryCode& a, const hashing::BinaryCode& b);

struct Hit {
  std::size_t index;  // position in the HashIndex (insertion order)
  std::uint32_t distance;

  friend bool operator==(const Hit&, const Hit&) = default;
};

class HashIndex {
 public:
  explicit HashIndex(std::size_t bits) : bits_(bits), stride_(hashing::words_for_bits(bits)) {}

  // Ids must be unique; every code must have K bits.
  void add(std::string id, const hashing::BinaryCode& code, LabelSet labels = {});

  std::size_t bits() const { return bits_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  const LabelSet& labels(std::size_t i) const { return labels_[i]; }
  std::span<const std::uint64_t> code_words(std::size_t i) const {
    return {codes_.data() + i * stride_, stride_};
  }

  // The k nearest codes ordered by (distance, insertion order).
  std::vector<Hit> topk(const hashing::BinaryCode& query, std::size_t k) const;
  // Every code within distance r, ordered by (distance, insertion order).
  std::vector<Hit> within_radius(const hashing::BinaryCode& query, std::uint32_t radius) const;

 private:
  void check_query(const hashing::BinaryCode& query) const;

  std::size_t bits_;
  std::size_t stride_;
  std::vector<std::string> ids_;
  std::vector<std::uint64_t> codes_;
  std::vector<LabelSet> labels_;
  std::unordered_set<std::string> id_set_;
};

HashIndex build_index(const hashing::CodesFile& codes);

// Runs one query per entry, split across `threads` workers. Output order
// matches `queries` regardless of thread count.
std::vector<std::vector<Hit>> topk_batch(const HashIndex& index,
                                         std::span<const hashing::BinaryCode> queries,
                                         std::size_t k, unsigned threads = 1);
std::vector<std::vector<Hit>> within_radius_batch(const HashIndex& index,
                                                  std::span<const hashing::BinaryCode> queries,
                                                  std::uint32_t radius, unsigned threads = 1);

}  // namespace vdsh::search
