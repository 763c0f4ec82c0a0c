// SPDX-License-Identifier: Apache-2.0
//
// Binarization of encoder means into packed K-bit codes.
//
// Bit p lives in word p / 64 at position p % 64. A set bit means +1, a clear
// bit means -1; bits past K in the last word are always zero.
//
// Codes file, little-endian:
//   "VDSC" | version u32 | K u32 | count u64
//   then per document: id length u32 | id bytes | ceil(K/64) u64 words
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vdsh/mathcore.hpp"

namespace vdsh::hashing {

enum class ThresholdMode : std::uint8_t { Median, Sign };

ThresholdMode parse_threshold_mode(std::string_view name);
std::string_view to_string(ThresholdMode mode);

struct ThresholdVector {
  ThresholdMode mode = ThresholdMode::Median;
  math::Vector values;  // K medians; all zero in sign mode
};

inline std::size_t words_for_bits(std::size_t bits) { return (bits + 63) / 64; }

class BinaryCode {
 public:
  BinaryCode() = default;
  explicit BinaryCode(std::size_t bits) : bits_(bits), words_(words_for_bits(bits), 0) {}
  // Throws if a padding bit is set.
  BinaryCode(std::size_t bits, std::vector<std::uint64_t> words);

  std::size_t bits() const { return bits_; }
  std::span<const std::uint64_t> words() const { return words_; }

  bool test(std::size_t p) const { return (words_[p / 64] >> (p % 64)) & 1u; }
  void set(std::size_t p, bool on);
  // +1 / -1 view of bit p.
  int sign(std::size_t p) const { return test(p) ? 1 : -1; }

  std::vector<int> to_signs() const;
  static BinaryCode from_signs(std::span<const int> signs);

  friend bool operator==(const BinaryCode&, const BinaryCode&) = default;

 private:
  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

// Median mode: per-dimension median (mean of the two central values for an
// even count). Sign mode: zeros; `training_mus` may be empty. Dimensions
// whose training values are all equal are reported as dead bits.
ThresholdVector fit_thresholds(std::span<const math::Vector> training_mus, ThresholdMode mode,
                               std::size_t bits);
ThresholdVector sign_thresholds(std::size_t bits);

// Median mode: +1 iff mu_p > threshold_p. Sign mode: +1 iff mu_p >= 0.
BinaryCode binarize(std::span<const double> mu, const ThresholdVector& thresholds);

struct CodeEntry {
  std::string id;
  BinaryCode code;
};

struct CodesFile {
  std::uint32_t bits = 0;
  std::vector<CodeEntry> entries;
};

inline constexpr std::uint32_t kCodesFormatVersion = 1;

std::string serialize_codes(const CodesFile& codes);
CodesFile deserialize_codes(std::string_view bytes);
void save_codes(const CodesFile& codes, const std::filesystem::path& path);
CodesFile load_codes(const std::filesystem::path& path);

}  // namespace vdsh::hashing
