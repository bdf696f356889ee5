#pragma once

// Self-describing binary checkpoints.
//
// Layout (integers little-endian, doubles as IEEE-754 bit patterns):
//   "FRCK" | u32 version | u64 config hash | u32 len + config text
//   u32 tensor count | per tensor: u32 len + name, u8 dtype(0=f64),
//                                  u32 rows, u32 cols, rows*cols f64
//   u32 len + serialized RNG state | u32 CRC-32 of everything before it
//
// Readers verify the checksum before parsing a single field, so a truncated
// or bit-flipped file is rejected without any partially loaded state.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "feedrank/errors.hpp"
#include "feedrank/tensor.hpp"

namespace feedrank {

static_assert(std::numeric_limits<double>::is_iec559, "IEEE-754 doubles required");

inline std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = ~seed;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
  return ~crc;
}

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'F', 'R', 'C', 'K'};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t config_hash = 0;
  std::string config_text;
  std::vector<std::pair<std::string, Tensor>> tensors;  // parameters + optimizer state
  std::string rng_state;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::string& b, double d) { put_u64(b, std::bit_cast<std::uint64_t>(d)); }
inline void put_bytes(std::string& b, const std::string& s) {
  if (s.size() > 0xFFFFFFFFull) throw data_error("checkpoint: string too long");
  put_u32(b, static_cast<std::uint32_t>(s.size()));
  b.append(s);
}

struct Cursor {
  const unsigned char* p;
  std::size_t left;

  void need(std::size_t n) const {
    if (n > left) throw data_error("checkpoint: unexpected end of data");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  unsigned char u8() {
    need(1);
    const unsigned char v = *p;
    ++p;
    --left;
    return v;
  }
  std::string bytes() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    left -= n;
    return s;
  }
};

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string buf;
  buf.reserve(1 << 20);
  buf.append(kCheckpointMagic, 4);
  detail::put_u32(buf, ckpt.version);
  detail::put_u64(buf, ckpt.config_hash);
  detail::put_bytes(buf, ckpt.config_text);
  detail::put_u32(buf, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    detail::put_bytes(buf, name);
    buf.push_back(0);  // dtype: f64
    detail::put_u32(buf, static_cast<std::uint32_t>(t.rows()));
    detail::put_u32(buf, static_cast<std::uint32_t>(t.cols()));
    for (double v : t.values()) detail::put_f64(buf, v);
  }
  detail::put_bytes(buf, ckpt.rng_state);
  detail::put_u32(buf, crc32(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("checkpoint: cannot open '" + path + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw data_error("checkpoint: write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("checkpoint: cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12) throw data_error("checkpoint: '" + path + "' is too short");

  // integrity first: nothing is parsed from a file whose checksum fails
  const std::uint32_t stored = [&] {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[buf.size() - 4 + i]))
           << (8 * i);
    return v;
  }();
  if (crc32(buf.data(), buf.size() - 4) != stored)
    throw data_error("checkpoint: checksum mismatch in '" + path + "' (truncated or corrupt)");

  detail::Cursor c{reinterpret_cast<const unsigned char*>(buf.data()), buf.size() - 4};
  c.need(4);
  if (std::memcmp(c.p, kCheckpointMagic, 4) != 0)
    throw data_error("checkpoint: '" + path + "' is not a checkpoint file");
  c.p += 4;
  c.left -= 4;

  Checkpoint ckpt;
  ckpt.version = c.u32();
  if (ckpt.version != kCheckpointVersion)
    throw data_error("checkpoint: unsupported version " + std::to_string(ckpt.version) +
                     " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  ckpt.config_hash = c.u64();
  ckpt.config_text = c.bytes();
  const std::uint32_t count = c.u32();
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = c.bytes();
    const unsigned char dtype = c.u8();
    if (dtype != 0)
      throw data_error("checkpoint: tensor '" + name + "' has unknown dtype " +
                       std::to_string(dtype));
    const std::uint32_t rows = c.u32();
    const std::uint32_t cols = c.u32();
    if (rows == 0 || cols == 0)
      throw data_error("checkpoint: tensor '" + name + "' has empty shape");
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    for (double& v : data) v = c.f64();
    ckpt.tensors.emplace_back(std::move(name), Tensor::from_data(rows, cols, std::move(data)));
  }
  ckpt.rng_state = c.bytes();
  if (c.left != 0) throw data_error("checkpoint: trailing bytes in '" + path + "'");
  return ckpt;
}

}  // namespace feedrank
