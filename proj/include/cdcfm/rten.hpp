// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "cdcfm/error.hpp"
#include "cdcfm/tensor.hpp"

namespace cdcfm {

namespace le {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

/// Bounds-checked little-endian cursor over a byte buffer.
class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  std::uint64_t u64() { return take(8); }
  float f32() { return std::bit_cast<float>(u32()); }

  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw FormatError(what_ + ": truncated");
  }
  std::uint64_t take(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace le

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

/// N-dimensional float32 tensor as stored in an RTEN file.
struct RtenTensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> values;
};

inline constexpr std::uint32_t kRtenVersion = 1;

inline std::vector<std::uint8_t> encode_rten(const RtenTensor& t) {
  if (t.dims.empty()) throw ArgumentError("RTEN tensors need rank >= 1");
  std::uint64_t count = 1;
  for (std::uint64_t d : t.dims) count *= d;
  if (count != t.values.size()) throw ShapeError("RTEN payload length does not match dims");
  std::vector<std::uint8_t> out{'R', 'T', 'E', 'N'};
  out.reserve(16 + 8 * t.dims.size() + 4 * t.values.size());
  le::put_u32(out, kRtenVersion);
  le::put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (std::uint64_t d : t.dims) le::put_u64(out, d);
  le::put_u32(out, 0);  // dtype: float32
  for (float v : t.values) le::put_f32(out, v);
  return out;
}

inline RtenTensor decode_rten(std::span<const std::uint8_t> bytes) {
  le::Reader r(bytes, "RTEN");
  const auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), "RTEN", 4) != 0) throw FormatError("RTEN: bad magic");
  if (const auto v = r.u32(); v != kRtenVersion) throw FormatError("RTEN: unsupported version " + std::to_string(v));
  const std::uint32_t rank = r.u32();
  if (rank == 0) throw FormatError("RTEN: rank must be >= 1");
  RtenTensor t;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    t.dims.push_back(r.u64());
    if (t.dims.back() != 0 && count > r.remaining() / t.dims.back()) throw FormatError("RTEN: dims exceed payload");
    count *= t.dims.back();
  }
  if (const auto dtype = r.u32(); dtype != 0) throw FormatError("RTEN: unsupported dtype " + std::to_string(dtype));
  if (r.remaining() != 4 * count) throw FormatError("RTEN: payload length does not match dims");
  t.values.resize(count);
  for (float& v : t.values) v = r.f32();
  return t;
}

inline void write_rten(const std::filesystem::path& path, const RtenTensor& t) { write_file_bytes(path, encode_rten(t)); }

inline RtenTensor read_rten(const std::filesystem::path& path) { return decode_rten(read_file_bytes(path)); }

/// Images are stored as rank-3 (C, H, W).
inline void write_image(const std::filesystem::path& path, const Image& img) {
  const auto data = img.data();
  write_rten(path, {{static_cast<std::uint64_t>(img.channels()), static_cast<std::uint64_t>(img.height()),
                     static_cast<std::uint64_t>(img.width())},
                    {data.begin(), data.end()}});
}

/// Reads a rank-3 (or rank-2, one channel) tensor as an image tagged with `level`.
inline Image read_image(const std::filesystem::path& path, int level) {
  RtenTensor t = read_rten(path);
  if (t.dims.size() == 2) t.dims.insert(t.dims.begin(), 1);
  if (t.dims.size() != 3) throw FormatError(path.string() + ": expected a (C, H, W) tensor");
  return Image(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]), level,
               std::move(t.values));
}

/// Binary PGM of one channel, mapping [-1, 1] to [0, 255] with clamping.
inline std::vector<std::uint8_t> encode_pgm(const Image& img, int channel = 0) {
  if (channel < 0 || channel >= img.channels()) throw ArgumentError("encode_pgm: channel out of range");
  const std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (float v : img.plane(channel)) {
    const double scaled = std::round((std::clamp(static_cast<double>(v), -1.0, 1.0) + 1.0) * 127.5);
    out.push_back(static_cast<std::uint8_t>(scaled));
  }
  return out;
}

inline void write_pgm(const std::filesystem::path& path, const Image& img, int channel = 0) {
  write_file_bytes(path, encode_pgm(img, channel));
}

}  // namespace cdcfm
