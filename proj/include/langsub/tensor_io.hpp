#pragma once

// AXD activation exchange format.
//
// Binary layout (all integers and floats little-endian):
//
//    magic            "AXD1"                 4 bytes
//    format           u16 = 1
//    d                u32   embedding width
//    layers           u32   captured layer count
//    L                u32   language count
//    per language     u8 code length, UTF-8 code bytes, u32 sample count n
//    payload          f32 values ordered layer -> language -> sample -> component
//
// The manifest is a separate JSON document (model_name, capture_point,
// layer_indices, format_version). Unknown manifest keys are preserved.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "langsub/bytes.hpp"
#include "langsub/error.hpp"

namespace langsub {

inline constexpr std::string_view kAxdMagic = "AXD1";
inline constexpr std::uint16_t kAxdFormat = 1;
inline constexpr std::string_view kManifestVersion = "1";

enum class CapturePoint { FinalPromptToken };

inline std::string_view to_string(CapturePoint) { return "final_prompt_token"; }

inline CapturePoint capture_point_from_string(std::string_view s) {
  if (s == "final_prompt_token") return CapturePoint::FinalPromptToken;
  fail(ErrorKind::Parse, "unknown capture_point '" + std::string(s) + "'");
}

// Per-layer, per-language, per-sample activation vectors. Blocks are stored
// per (layer, language) pair so that merging and splitting by language never
// touch the float payload.
class ActivationDump {
 public:
  ActivationDump() = default;

  ActivationDump(std::uint32_t d, std::uint32_t layers, std::vector<std::string> languages,
                 std::vector<std::uint32_t> counts)
      : d_(d), layers_(layers), languages_(std::move(languages)), counts_(std::move(counts)) {
    if (languages_.size() != counts_.size()) {
      fail(ErrorKind::ShapeMismatch, "languages and counts differ in length");
    }
    blocks_.resize(static_cast<std::size_t>(layers_) * languages_.size());
    for (std::uint32_t layer = 0; layer < layers_; ++layer) {
      for (std::size_t l = 0; l < languages_.size(); ++l) {
        blocks_[layer * languages_.size() + l].assign(static_cast<std::size_t>(counts_[l]) * d_, 0.0f);
      }
    }
  }

  std::uint32_t d() const { return d_; }
  std::uint32_t layers() const { return layers_; }
  std::size_t language_count() const { return languages_.size(); }
  const std::vector<std::string>& languages() const { return languages_; }
  const std::vector<std::uint32_t>& counts() const { return counts_; }

  std::optional<std::size_t> language_index(std::string_view code) const {
    auto it = std::find(languages_.begin(), languages_.end(), code);
    if (it == languages_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - languages_.begin());
  }

  std::span<const float> block(std::size_t layer, std::size_t lang) const { return blocks_.at(index(layer, lang)); }
  std::span<float> block(std::size_t layer, std::size_t lang) { return blocks_.at(index(layer, lang)); }

  std::span<const float> sample(std::size_t layer, std::size_t lang, std::size_t i) const {
    return block(layer, lang).subspan(i * d_, d_);
  }
  std::span<float> sample(std::size_t layer, std::size_t lang, std::size_t i) {
    return block(layer, lang).subspan(i * d_, d_);
  }

  // Throws on the first violated invariant.
  void validate() const {
    if (d_ == 0) fail(ErrorKind::InvalidArgument, "d must be positive");
    if (layers_ == 0) fail(ErrorKind::InvalidArgument, "layer count must be positive");
    if (languages_.empty()) fail(ErrorKind::InvalidArgument, "at least one language is required");
    std::unordered_set<std::string> seen;
    for (std::size_t l = 0; l < languages_.size(); ++l) {
      const auto& code = languages_[l];
      if (code.empty()) fail(ErrorKind::InvalidArgument, "empty language code");
      if (code.size() > 255) fail(ErrorKind::InvalidArgument, "language code longer than 255 bytes");
      if (!seen.insert(code).second) fail(ErrorKind::LanguageOverlap, "duplicate language code '" + code + "'");
      if (counts_[l] == 0) fail(ErrorKind::EmptyLanguage, "language '" + code + "' has no samples");
    }
    for (std::uint32_t layer = 0; layer < layers_; ++layer) {
      for (std::size_t l = 0; l < languages_.size(); ++l) {
        auto blk = block(layer, l);
        if (blk.size() != static_cast<std::size_t>(counts_[l]) * d_) {
          fail(ErrorKind::ShapeMismatch, "block size mismatch at layer " + std::to_string(layer));
        }
        for (std::size_t k = 0; k < blk.size(); ++k) {
          if (!std::isfinite(blk[k])) {
            fail(ErrorKind::NonFinite, "non-finite value at (layer " + std::to_string(layer) + ", language " +
                                           languages_[l] + ", sample " + std::to_string(k / d_) + ", index " +
                                           std::to_string(k % d_) + ")");
          }
        }
      }
    }
  }

  friend bool operator==(const ActivationDump&, const ActivationDump&) = default;

 private:
  std::size_t index(std::size_t layer, std::size_t lang) const {
    if (layer >= layers_ || lang >= languages_.size()) {
      fail(ErrorKind::UnknownLayer, "block (" + std::to_string(layer) + ", " + std::to_string(lang) + ") out of range");
    }
    return layer * languages_.size() + lang;
  }

  std::uint32_t d_ = 0;
  std::uint32_t layers_ = 0;
  std::vector<std::string> languages_;
  std::vector<std::uint32_t> counts_;
  std::vector<std::vector<float>> blocks_;
};

struct Manifest {
  std::string model_name;
  CapturePoint capture_point = CapturePoint::FinalPromptToken;
  std::vector<std::uint32_t> layer_indices;
  std::string format_version{kManifestVersion};
  nlohmann::json extra = nlohmann::json::object();  // keys written by external extractors

  void validate() const {
    for (std::size_t i = 1; i < layer_indices.size(); ++i) {
      if (layer_indices[i] <= layer_indices[i - 1]) {
        fail(ErrorKind::InvalidArgument, "manifest layer_indices must be strictly increasing");
      }
    }
  }

  // Position of a model layer index among the captured layers.
  std::optional<std::size_t> position_of(std::uint32_t model_layer) const {
    auto it = std::lower_bound(layer_indices.begin(), layer_indices.end(), model_layer);
    if (it == layer_indices.end() || *it != model_layer) return std::nullopt;
    return static_cast<std::size_t>(it - layer_indices.begin());
  }

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

inline nlohmann::json to_json(const Manifest& m) {
  nlohmann::json j = m.extra.is_object() ? m.extra : nlohmann::json::object();
  j["model_name"] = m.model_name;
  j["capture_point"] = std::string(to_string(m.capture_point));
  j["layer_indices"] = m.layer_indices;
  j["format_version"] = m.format_version;
  return j;
}

inline Manifest manifest_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::Parse, "manifest must be a JSON object");
  Manifest m;
  try {
    m.model_name = j.at("model_name").get<std::string>();
    m.capture_point = capture_point_from_string(j.at("capture_point").get<std::string>());
    m.layer_indices = j.at("layer_indices").get<std::vector<std::uint32_t>>();
    m.format_version = j.at("format_version").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("manifest field error: ") + e.what());
  }
  for (const char* key : {"model_name", "capture_point", "layer_indices", "format_version"}) j.erase(key);
  m.extra = std::move(j);
  m.validate();
  return m;
}

struct EncodedDump {
  bytes::Buffer axd;
  std::string manifest;
};

inline EncodedDump write_dump(const ActivationDump& dump, const Manifest& manifest) {
  dump.validate();
  manifest.validate();
  if (manifest.layer_indices.size() != dump.layers()) {
    fail(ErrorKind::ManifestMismatch, "manifest lists " + std::to_string(manifest.layer_indices.size()) +
                                          " layers, dump has " + std::to_string(dump.layers()));
  }
  EncodedDump out;
  auto& buf = out.axd;
  std::size_t payload = 0;
  for (auto n : dump.counts()) payload += static_cast<std::size_t>(n) * dump.d();
  buf.reserve(18 + dump.language_count() * 8 + payload * dump.layers() * 4);

  bytes::put_raw(buf, kAxdMagic);
  bytes::put_u16(buf, kAxdFormat);
  bytes::put_u32(buf, dump.d());
  bytes::put_u32(buf, dump.layers());
  bytes::put_u32(buf, static_cast<std::uint32_t>(dump.language_count()));
  for (std::size_t l = 0; l < dump.language_count(); ++l) {
    const auto& code = dump.languages()[l];
    bytes::put_u8(buf, static_cast<std::uint8_t>(code.size()));
    bytes::put_raw(buf, code);
    bytes::put_u32(buf, dump.counts()[l]);
  }
  for (std::uint32_t layer = 0; layer < dump.layers(); ++layer) {
    for (std::size_t l = 0; l < dump.language_count(); ++l) {
      for (float v : dump.block(layer, l)) bytes::put_f32(buf, v);
    }
  }
  out.manifest = to_json(manifest).dump(2) + "\n";
  return out;
}

inline std::pair<ActivationDump, Manifest> read_dump(std::span<const std::uint8_t> axd, std::string_view manifest_json) {
  bytes::Reader in(axd);
  if (in.remaining() < kAxdMagic.size() || in.str(kAxdMagic.size(), "magic") != kAxdMagic) {
    fail(ErrorKind::BadMagic, "not an AXD stream (expected magic \"AXD1\")");
  }
  auto format = in.u16("format");
  if (format != kAxdFormat) fail(ErrorKind::BadMagic, "unsupported AXD format " + std::to_string(format));
  auto d = in.u32("d");
  auto layers = in.u32("layers");
  auto nlang = in.u32("language count");

  std::vector<std::string> languages;
  std::vector<std::uint32_t> counts;
  for (std::uint32_t l = 0; l < nlang; ++l) {
    auto len = in.u8("language code length");
    languages.push_back(in.str(len, "language code"));
    counts.push_back(in.u32("sample count"));
  }

  Manifest manifest = manifest_from_json(manifest_json);
  if (manifest.layer_indices.size() != layers) {
    fail(ErrorKind::ManifestMismatch, "manifest lists " + std::to_string(manifest.layer_indices.size()) +
                                          " layers, header says " + std::to_string(layers));
  }

  std::size_t per_layer = 0;
  for (auto n : counts) per_layer += static_cast<std::size_t>(n) * d;
  const std::size_t payload_bytes = per_layer * layers * 4;
  if (in.remaining() < payload_bytes) {
    fail(ErrorKind::Truncated, "payload truncated: expected " + std::to_string(in.offset() + payload_bytes) +
                                   " bytes, got " + std::to_string(axd.size()));
  }
  if (in.remaining() > payload_bytes) {
    fail(ErrorKind::TrailingData, "expected " + std::to_string(in.offset() + payload_bytes) + " bytes, got " +
                                      std::to_string(axd.size()));
  }

  ActivationDump dump(d, layers, std::move(languages), std::move(counts));
  for (std::uint32_t layer = 0; layer < layers; ++layer) {
    for (std::size_t l = 0; l < dump.language_count(); ++l) {
      for (float& v : dump.block(layer, l)) v = in.f32("payload");
    }
  }
  dump.validate();
  return {std::move(dump), std::move(manifest)};
}

// Sidecar naming: <stem>.axd and <stem>.manifest.json.
inline std::filesystem::path manifest_path_for(const std::filesystem::path& axd_path) {
  auto p = axd_path;
  p.replace_extension(".manifest.json");
  return p;
}

inline void save_dump(const std::filesystem::path& axd_path, const ActivationDump& dump, const Manifest& manifest) {
  auto enc = write_dump(dump, manifest);
  bytes::write_file(axd_path, enc.axd);
  bytes::write_text(manifest_path_for(axd_path), enc.manifest);
}

inline std::pair<ActivationDump, Manifest> load_dump(const std::filesystem::path& axd_path) {
  auto data = bytes::read_file(axd_path);
  auto manifest = bytes::read_text(manifest_path_for(axd_path));
  return read_dump(data, manifest);
}

// Union of two dumps over disjoint language sets; a's languages come first.
inline ActivationDump merge_dumps(const ActivationDump& a, const ActivationDump& b) {
  if (a.d() != b.d()) {
    fail(ErrorKind::ShapeMismatch, "cannot merge d=" + std::to_string(a.d()) + " with d=" + std::to_string(b.d()));
  }
  if (a.layers() != b.layers()) {
    fail(ErrorKind::ShapeMismatch, "cannot merge dumps with different layer counts");
  }
  for (const auto& code : b.languages()) {
    if (a.language_index(code)) fail(ErrorKind::LanguageOverlap, "language '" + code + "' present in both dumps");
  }
  auto languages = a.languages();
  languages.insert(languages.end(), b.languages().begin(), b.languages().end());
  auto counts = a.counts();
  counts.insert(counts.end(), b.counts().begin(), b.counts().end());

  ActivationDump out(a.d(), a.layers(), std::move(languages), std::move(counts));
  for (std::uint32_t layer = 0; layer < a.layers(); ++layer) {
    for (std::size_t l = 0; l < a.language_count(); ++l) {
      std::ranges::copy(a.block(layer, l), out.block(layer, l).begin());
    }
    for (std::size_t l = 0; l < b.language_count(); ++l) {
      std::ranges::copy(b.block(layer, l), out.block(layer, a.language_count() + l).begin());
    }
  }
  return out;
}

// Manifest-aware merge: layer_indices must agree exactly.
inline std::pair<ActivationDump, Manifest> merge_dumps(const ActivationDump& a, const Manifest& am,
                                                       const ActivationDump& b, const Manifest& bm) {
  if (am.layer_indices != bm.layer_indices) fail(ErrorKind::ShapeMismatch, "layer_indices differ between dumps");
  return {merge_dumps(a, b), am};
}

inline ActivationDump select_languages(const ActivationDump& dump, std::span<const std::string> codes) {
  std::vector<std::size_t> picks;
  std::vector<std::uint32_t> counts;
  for (const auto& code : codes) {
    auto idx = dump.language_index(code);
    if (!idx) fail(ErrorKind::InvalidArgument, "language '" + code + "' not in dump");
    picks.push_back(*idx);
    counts.push_back(dump.counts()[*idx]);
  }
  ActivationDump out(dump.d(), dump.layers(), std::vector<std::string>(codes.begin(), codes.end()), std::move(counts));
  for (std::uint32_t layer = 0; layer < dump.layers(); ++layer) {
    for (std::size_t k = 0; k < picks.size(); ++k) {
      std::ranges::copy(dump.block(layer, picks[k]), out.block(layer, k).begin());
    }
  }
  return out;
}

}  // namespace langsub
