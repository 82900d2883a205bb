#pragma once

// Little-endian byte encoding helpers and whole-file I/O shared by the
// binary formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "langsub/error.hpp"

namespace langsub::bytes {

using Buffer = std::vector<std::uint8_t>;

inline void put_u8(Buffer& out, std::uint8_t v) { out.push_back(v); }

inline void put_u16(Buffer& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFFu));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(Buffer& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFFu));
}

inline void put_f32(Buffer& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void put_raw(Buffer& out, std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }

// Sequential reader over an immutable byte span. Every read is bounds checked
// and reports the byte offset and the expected/actual remaining length.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  void need(std::size_t n, std::string_view what) const {
    if (remaining() < n) {
      fail(ErrorKind::Truncated, std::string(what) + " at offset " + std::to_string(pos_) + ": expected " +
                                     std::to_string(pos_ + n) + " bytes, got " + std::to_string(data_.size()));
    }
  }

  std::uint8_t u8(std::string_view what) {
    need(1, what);
    return data_[pos_++];
  }

  std::uint16_t u16(std::string_view what) {
    need(2, what);
    auto v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }

  std::uint32_t u32(std::string_view what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | data_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }

  float f32(std::string_view what) { return std::bit_cast<float>(u32(what)); }

  std::string str(std::size_t n, std::string_view what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline Buffer read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  Buffer data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::Io, "read failed: " + path.string());
  return data;
}

inline std::string read_text(const std::filesystem::path& path) {
  auto data = read_file(path);
  return std::string(data.begin(), data.end());
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open for writing " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace langsub::bytes
