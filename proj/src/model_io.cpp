// SPDX-License-Identifier: Apache-2.0
#include "vdsh/model_io.hpp"

#include "vdsh/byteio.hpp"
#include "vdsh/errors.hpp"

namespace vdsh::model {

namespace {
constexpr std::string_view kMagic = "VDSH";
}

std::string serialize(const ModelParams& params) {
  validate(params);
  io::Writer w;
  w.bytes(kMagic);
  w.u32(kModelFormatVersion);
  w.u8(static_cast<std::uint8_t>(params.variant));
  w.u32(params.dims.K);
  w.u32(params.dims.V);
  w.u32(params.dims.D);
  w.u32(params.dims.L);
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const auto id = static_cast<ParamId>(i);
    if (!uses_param(params.variant, id)) continue;
    for (double v : params.weights[id].values()) w.f64(v);
  }
  w.u8(params.median_thresholds ? 1 : 0);
  if (params.median_thresholds) {
    for (double v : *params.median_thresholds) w.f64(v);
  }
  w.u32(io::crc32(w.data()));
  return w.take();
}

ModelParams deserialize(const std::string& bytes) {
  if (bytes.size() < 4 + 4 + 4) throw DataError("model file too short");
  const std::string_view body(bytes.data(), bytes.size() - 4);
  io::Reader trailer(std::string_view(bytes).substr(bytes.size() - 4));
  io::Reader r(body);
  if (r.bytes(4) != kMagic) throw DataError("not a model file (bad magic)");
  const auto version = r.u32();
  if (version != kModelFormatVersion) {
    throw DataError("unsupported model format version " + std::to_string(version));
  }
  if (trailer.u32() != io::crc32(body)) throw DataError("model file checksum mismatch");
  const auto tag = r.u8();
  if (tag > 2) throw DataError("unknown model variant tag " + std::to_string(tag));
  Dims dims;
  dims.K = r.u32();
  dims.V = r.u32();
  dims.D = r.u32();
  dims.L = r.u32();
  ModelParams p;
  try {
    p = zero_params(static_cast<Variant>(tag), dims);
  } catch (const ConfigError& e) {
    throw DataError(std::string("invalid model header: ") + e.what());
  }
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const auto id = static_cast<ParamId>(i);
    if (!p.weights.has(id)) continue;
    for (auto& v : p.weights[id].values()) v = r.f64();
  }
  if (r.u8() == 1) {
    math::Vector t(dims.K);
    for (auto& v : t) v = r.f64();
    p.median_thresholds = std::move(t);
  }
  if (r.remaining() != 0) throw DataError("trailing bytes in model file");
  validate(p);
  return p;
}

void save_model(const ModelParams& params, const std::filesystem::path& path) {
  io::write_binary_file_atomic(path, serialize(params));
}

ModelParams load_model(const std::filesystem::path& path) {
  return deserialize(io::read_binary_file(path));
}

}  // namespace vdsh::model
