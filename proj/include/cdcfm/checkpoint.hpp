// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "cdcfm/config.hpp"
#include "cdcfm/error.hpp"
#include "cdcfm/model.hpp"
#include "cdcfm/rten.hpp"

namespace cdcfm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: "CDCM", u32 version, u64 parameter count, float32 parameters,
/// u64 byte length, UTF-8 config echo. All integers little-endian.
inline std::vector<std::uint8_t> encode_checkpoint(const VelocityModel<float>& model, const std::string& config_echo) {
  const auto params = model.parameters();
  std::vector<std::uint8_t> out{'C', 'D', 'C', 'M'};
  out.reserve(24 + 4 * params.size() + config_echo.size());
  le::put_u32(out, kCheckpointVersion);
  le::put_u64(out, params.size());
  for (float p : params) le::put_f32(out, p);
  le::put_u64(out, config_echo.size());
  out.insert(out.end(), config_echo.begin(), config_echo.end());
  return out;
}

struct Checkpoint {
  std::vector<float> parameters;
  std::string config_echo;
  RunConfig config;  // parsed from the echo
  VelocityModel<float> model() const {
    VelocityModel<float> m(config.model());
    m.set_parameters(parameters);
    return m;
  }
};

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  le::Reader r(bytes, "CDCM");
  if (std::memcmp(r.bytes(4).data(), "CDCM", 4) != 0) throw FormatError("CDCM: bad magic");
  if (const auto v = r.u32(); v != kCheckpointVersion) throw FormatError("CDCM: unsupported version " + std::to_string(v));
  const std::uint64_t n = r.u64();
  if (n > r.remaining() / 4) throw FormatError("CDCM: parameter count exceeds file size");
  Checkpoint c;
  c.parameters.resize(n);
  for (float& p : c.parameters) p = r.f32();
  const std::uint64_t len = r.u64();
  if (len != r.remaining()) throw FormatError("CDCM: config echo length mismatch");
  const auto text = r.bytes(len);
  c.config_echo.assign(text.begin(), text.end());
  c.config = parse_config(c.config_echo);
  if (VelocityModel<float>(c.config.model()).parameter_count() != n) {
    throw FormatError("CDCM: parameter count does not match the echoed model config");
  }
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const VelocityModel<float>& model,
                            const RunConfig& config) {
  write_file_bytes(path, encode_checkpoint(model, to_text(config)));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace cdcfm
