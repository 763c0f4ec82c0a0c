// SPDX-License-Identifier: Apache-2.0
#include "vdsh/hashing.hpp"

#include <algorithm>
#include <cmath>

#include "vdsh/byteio.hpp"
#include "vdsh/errors.hpp"

namespace vdsh::hashing {

ThresholdMode parse_threshold_mode(std::string_view name) {
  if (name == "median") return ThresholdMode::Median;
  if (name == "sign") return ThresholdMode::Sign;
  throw ConfigError("unknown threshold mode '" + std::string(name) +
                    "' (expected median or sign)");
}

std::string_view to_string(ThresholdMode mode) {
  return mode == ThresholdMode::Median ? "median" : "sign";
}

BinaryCode::BinaryCode(std::size_t bits, std::vector<std::uint64_t> words)
    : bits_(bits), words_(std::move(words)) {
  if (words_.size() != words_for_bits(bits_)) throw DataError("code word count mismatch");
  if (bits_ % 64 != 0 && !words_.empty()) {
    const std::uint64_t valid = (std::uint64_t{1} << (bits_ % 64)) - 1;
    if (words_.back() & ~valid) throw DataError("code has padding bits set");
  }
}

void BinaryCode::set(std::size_t p, bool on) {
  const std::uint64_t bit = std::uint64_t{1} << (p % 64);
  if (on) {
    words_[p / 64] |= bit;
  } else {
    words_[p / 64] &= ~bit;
  }
}

std::vector<int> BinaryCode::to_signs() const {
  std::vector<int> out(bits_);
  for (std::size_t p = 0; p < bits_; ++p) out[p] = sign(p);
  return out;
}

BinaryCode BinaryCode::from_signs(std::span<const int> signs) {
  BinaryCode code(signs.size());
  for (std::size_t p = 0; p < signs.size(); ++p) {
    if (signs[p] != 1 && signs[p] != -1) throw DataError("code signs must be +1 or -1");
    code.set(p, signs[p] == 1);
  }
  return code;
}

ThresholdVector sign_thresholds(std::size_t bits) {
  return {ThresholdMode::Sign, math::Vector(bits, 0.0)};
}

ThresholdVector fit_thresholds(std::span<const math::Vector> training_mus, ThresholdMode mode,
                               std::size_t bits) {
  if (mode == ThresholdMode::Sign) return sign_thresholds(bits);
  if (training_mus.empty()) throw DataError("median thresholds need at least one training vector");
  const std::size_t n = training_mus.size();
  ThresholdVector out{ThresholdMode::Median, math::Vector(bits)};
  std::vector<double> column(n);
  std::size_t dead = 0;
  for (std::size_t p = 0; p < bits; ++p) {
    for (std::size_t i = 0; i < n; ++i) {
      if (training_mus[i].size() != bits) throw DataError("training vector length mismatch");
      column[i] = training_mus[i][p];
    }
    const auto mid = column.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(column.begin(), mid, column.end());
    double median = *mid;
    if (n % 2 == 0) {
      const double lower = *std::max_element(column.begin(), mid);
      median = 0.5 * (lower + median);
    }
    const auto [lo, hi] = std::minmax_element(column.begin(), column.end());
    if (*lo == *hi) ++dead;
    out.values[p] = median;
  }
  math::require_finite(out.values, "median thresholds");
  if (dead > 0) {
    warn(std::to_string(dead) + " of " + std::to_string(bits) +
         " bit(s) are constant over the training set and will always be -1");
  }
  return out;
}

BinaryCode binarize(std::span<const double> mu, const ThresholdVector& thresholds) {
  if (mu.size() != thresholds.values.size()) {
    throw DataError("latent vector length does not match threshold count");
  }
  BinaryCode code(mu.size());
  for (std::size_t p = 0; p < mu.size(); ++p) {
    const bool on = thresholds.mode == ThresholdMode::Sign ? mu[p] >= 0.0
                                                           : mu[p] > thresholds.values[p];
    code.set(p, on);
  }
  return code;
}

namespace {
constexpr std::string_view kCodesMagic = "VDSC";
}

std::string serialize_codes(const CodesFile& codes) {
  io::Writer w;
  w.bytes(kCodesMagic);
  w.u32(kCodesFormatVersion);
  w.u32(codes.bits);
  w.u64(codes.entries.size());
  for (const auto& e : codes.entries) {
    if (e.code.bits() != codes.bits) throw DataError("code length differs from file K");
    w.u32(static_cast<std::uint32_t>(e.id.size()));
    w.bytes(e.id);
    for (auto word : e.code.words()) w.u64(word);
  }
  return w.take();
}

CodesFile deserialize_codes(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.bytes(4) != kCodesMagic) throw DataError("not a codes file (bad magic)");
  const auto version = r.u32();
  if (version != kCodesFormatVersion) {
    throw DataError("unsupported codes format version " + std::to_string(version));
  }
  CodesFile codes;
  codes.bits = r.u32();
  if (codes.bits == 0) throw DataError("codes file has K = 0");
  const auto count = r.u64();
  const auto n_words = words_for_bits(codes.bits);
  for (std::uint64_t i = 0; i < count; ++i) {
    CodeEntry e;
    const auto len = r.u32();
    e.id = std::string(r.bytes(len));
    std::vector<std::uint64_t> words(n_words);
    for (auto& word : words) word = r.u64();
    e.code = BinaryCode(codes.bits, std::move(words));
    codes.entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw DataError("trailing bytes in codes file");
  return codes;
}

void save_codes(const CodesFile& codes, const std::filesystem::path& path) {
  io::write_binary_file_atomic(path, serialize_codes(codes));
}

CodesFile load_codes(const std::filesystem::path& path) {
  return deserialize_codes(io::read_binary_file(path));
}

}  // namespace vdsh::hashing
