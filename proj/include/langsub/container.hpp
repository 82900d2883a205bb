#pragma once

// JSON-header + f32-payload container used for decomposition and planted
// ground-truth files.
//
//    magic        4 bytes ("AXDS" decomposition, "AXDP" planted truth)
//    version      u16 = 1
//    header_len   u32
//    header       UTF-8 JSON, header_len bytes
//    count        u32 number of payload floats
//    payload      f32 LE x count

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "langsub/bytes.hpp"
#include "langsub/error.hpp"

namespace langsub::container {

inline constexpr std::uint16_t kVersion = 1;

struct Blob {
  nlohmann::json header;
  std::vector<float> payload;
};

inline bytes::Buffer encode(std::string_view magic, const Blob& blob) {
  bytes::Buffer out;
  const std::string header = blob.header.dump();
  bytes::put_raw(out, magic);
  bytes::put_u16(out, kVersion);
  bytes::put_u32(out, static_cast<std::uint32_t>(header.size()));
  bytes::put_raw(out, header);
  bytes::put_u32(out, static_cast<std::uint32_t>(blob.payload.size()));
  for (float v : blob.payload) bytes::put_f32(out, v);
  return out;
}

inline Blob decode(std::string_view magic, std::span<const std::uint8_t> data) {
  bytes::Reader in(data);
  if (in.remaining() < magic.size() || in.str(magic.size(), "magic") != magic) {
    fail(ErrorKind::BadMagic, "expected magic \"" + std::string(magic) + "\"");
  }
  if (auto v = in.u16("version"); v != kVersion) fail(ErrorKind::BadMagic, "unsupported version " + std::to_string(v));
  auto header_len = in.u32("header length");
  Blob blob;
  try {
    blob.header = nlohmann::json::parse(in.str(header_len, "header"));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Parse, std::string("container header: ") + e.what());
  }
  auto count = in.u32("payload count");
  in.need(static_cast<std::size_t>(count) * 4, "payload");
  blob.payload.resize(count);
  for (auto& v : blob.payload) v = in.f32("payload");
  if (in.remaining() != 0) fail(ErrorKind::TrailingData, std::to_string(in.remaining()) + " bytes after payload");
  return blob;
}

// Row-major append/extract of dense matrices.
inline void append(std::vector<float>& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(static_cast<float>(m(i, j)));
}

inline Eigen::MatrixXd take(std::span<const float>& in, Eigen::Index rows, Eigen::Index cols) {
  const auto n = static_cast<std::size_t>(rows * cols);
  if (in.size() < n) fail(ErrorKind::Truncated, "payload shorter than header shapes");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = in[static_cast<std::size_t>(i * cols + j)];
  in = in.subspan(n);
  return m;
}

}  // namespace langsub::container
