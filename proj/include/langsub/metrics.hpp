#pragma once

// Evaluation aggregation (language fidelity, per-language accuracy tables)
// and representation-geometry statistics.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "langsub/bytes.hpp"
#include "langsub/error.hpp"
#include "langsub/subspace.hpp"

namespace langsub {

struct MetricRecord {
  std::string id;
  std::string input_language;
  bool correct = false;
  std::optional<std::string> reasoning_language;  // nullopt = unknown
  std::optional<std::string> response_language;

  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

enum class FidelityChannel { Reasoning, Response };

inline double fidelity(std::span<const MetricRecord> records, FidelityChannel channel) {
  if (records.empty()) fail(ErrorKind::EmptyInput, "fidelity of an empty record set");
  std::size_t matches = 0;
  for (const auto& r : records) {
    const auto& detected = channel == FidelityChannel::Reasoning ? r.reasoning_language : r.response_language;
    if (detected && *detected == r.input_language) ++matches;
  }
  return 100.0 * static_cast<double>(matches) / static_cast<double>(records.size());
}

struct ResourceGroup {
  std::string name;
  std::vector<std::string> languages;
};

inline std::vector<ResourceGroup> default_resource_groups() {
  return {
      {"high", {"en", "es", "fr", "de", "zh", "jp", "ja", "ru"}},
      {"mid", {"th", "te"}},
      {"low", {"bn", "sw"}},
  };
}

struct AccuracyTable {
  std::vector<std::string> languages;
  std::vector<double> accuracy;  // percent, aligned with languages
  double average = 0.0;          // unweighted mean over languages
  double reasoning_fidelity = 0.0;
  double response_fidelity = 0.0;
  std::vector<std::pair<std::string, double>> group_means;  // groups with at least one listed language
};

inline AccuracyTable accuracy_table(std::span<const MetricRecord> records, std::span<const std::string> order,
                                    std::span<const ResourceGroup> groups) {
  if (records.empty()) fail(ErrorKind::EmptyInput, "no records");
  if (order.empty()) fail(ErrorKind::EmptyInput, "no languages listed");
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // correct, total
  for (const auto& r : records) {
    auto& t = tally[r.input_language];
    t.second += 1;
    if (r.correct) t.first += 1;
  }
  AccuracyTable table;
  table.languages.assign(order.begin(), order.end());
  double sum = 0.0;
  for (const auto& code : order) {
    auto it = tally.find(code);
    if (it == tally.end() || it->second.second == 0) {
      fail(ErrorKind::EmptyLanguage, "language '" + code + "' has no records");
    }
    const double acc = 100.0 * static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
    table.accuracy.push_back(acc);
    sum += acc;
  }
  table.average = sum / static_cast<double>(order.size());
  std::vector<MetricRecord> listed;
  for (const auto& r : records) {
    if (std::ranges::find(order, r.input_language) != order.end()) listed.push_back(r);
  }
  table.reasoning_fidelity = fidelity(listed, FidelityChannel::Reasoning);
  table.response_fidelity = fidelity(listed, FidelityChannel::Response);
  for (const auto& g : groups) {
    double gsum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < table.languages.size(); ++i) {
      if (std::ranges::find(g.languages, table.languages[i]) != g.languages.end()) {
        gsum += table.accuracy[i];
        ++count;
      }
    }
    if (count > 0) table.group_means.emplace_back(g.name, gsum / count);
  }
  return table;
}

// ---- record ingestion -----------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline bool parse_bool(std::string_view s, std::size_t line_no) {
  if (s == "1" || s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "0" || s == "false" || s == "False" || s == "FALSE") return false;
  fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": correct must be 0/1/true/false, got '" +
                             std::string(s) + "'");
}

inline std::optional<std::string> detected(std::string s) {
  if (s.empty() || s == "unknown" || s == "und") return std::nullopt;
  return s;
}

}  // namespace detail

// CSV with header id,input_lang,correct,reasoning_lang,response_lang.
// Detected-language cells that are empty, "unknown" or "und" mean unknown.
inline std::vector<MetricRecord> parse_records_csv(std::string_view text) {
  std::vector<MetricRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> col;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line, line_no);
    for (auto& f : fields) f = detail::trim(f);
    if (!header_seen) {
      for (std::size_t i = 0; i < fields.size(); ++i) col[fields[i]] = i;
      for (const char* key : {"id", "input_lang", "correct", "reasoning_lang", "response_lang"}) {
        if (!col.contains(key)) fail(ErrorKind::Parse, "line 1: missing column '" + std::string(key) + "'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != col.size()) {
      fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected " + std::to_string(col.size()) +
                                 " fields, got " + std::to_string(fields.size()));
    }
    MetricRecord r;
    r.id = fields[col["id"]];
    r.input_language = fields[col["input_lang"]];
    if (r.input_language.empty()) fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": empty input_lang");
    r.correct = detail::parse_bool(fields[col["correct"]], line_no);
    r.reasoning_language = detail::detected(fields[col["reasoning_lang"]]);
    r.response_language = detail::detected(fields[col["response_lang"]]);
    out.push_back(std::move(r));
  }
  if (out.empty()) fail(ErrorKind::EmptyInput, "no records");
  return out;
}

// One JSON object per line with the same keys as the CSV header.
inline std::vector<MetricRecord> parse_records_jsonl(std::string_view text) {
  std::vector<MetricRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      MetricRecord r;
      r.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      r.input_language = j.at("input_lang").get<std::string>();
      const auto& c = j.at("correct");
      r.correct = c.is_boolean() ? c.get<bool>() : c.get<int>() != 0;
      auto channel = [&](const char* key) -> std::optional<std::string> {
        if (!j.contains(key) || j[key].is_null()) return std::nullopt;
        return detail::detected(j[key].get<std::string>());
      };
      r.reasoning_language = channel("reasoning_lang");
      r.response_language = channel("response_lang");
      if (r.input_language.empty()) fail(ErrorKind::Parse, "empty input_lang");
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (out.empty()) fail(ErrorKind::EmptyInput, "no records");
  return out;
}

inline std::vector<MetricRecord> load_records(const std::filesystem::path& path) {
  const auto text = bytes::read_text(path);
  const auto ext = path.extension().string();
  try {
    if (ext == ".jsonl" || ext == ".json") return parse_records_jsonl(text);
    return parse_records_csv(text);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

// Languages in order of first appearance.
inline std::vector<std::string> languages_in(std::span<const MetricRecord> records) {
  std::vector<std::string> order;
  for (const auto& r : records) {
    if (std::ranges::find(order, r.input_language) == order.end()) order.push_back(r.input_language);
  }
  return order;
}

// ---- table emission -------------------------------------------------------

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string display_code(std::string_view code) {
  std::string s(code);
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

using LabeledTable = std::pair<std::string, AccuracyTable>;

inline std::string table_csv(std::span<const LabeledTable> rows) {
  if (rows.empty()) return {};
  std::ostringstream out;
  const auto& first = rows.front().second;
  out << "row";
  for (const auto& code : first.languages) out << ',' << code;
  out << ",avg,reasoning_fidelity,response_fidelity";
  for (const auto& [name, _] : first.group_means) out << ",group_" << name;
  out << '\n';
  for (const auto& [label, t] : rows) {
    out << label;
    for (double a : t.accuracy) out << ',' << format_fixed(a, 2);
    out << ',' << format_fixed(t.average, 2) << ',' << format_fixed(t.reasoning_fidelity, 2) << ','
        << format_fixed(t.response_fidelity, 2);
    for (const auto& [_, mean] : t.group_means) out << ',' << format_fixed(mean, 2);
    out << '\n';
  }
  return out.str();
}

// Aligned text: one column per language, then AVG. with fidelity in
// parentheses (reasoning / response channel).
inline std::string table_text(std::span<const LabeledTable> rows) {
  if (rows.empty()) return {};
  const auto& first = rows.front().second;
  std::size_t label_w = 4;
  for (const auto& [label, _] : rows) label_w = std::max(label_w, label.size());
  auto pad_left = [](std::string s, std::size_t w) { return std::string(w > s.size() ? w - s.size() : 0, ' ') + s; };
  auto pad_right = [](std::string s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  std::ostringstream out;
  out << pad_right("", label_w);
  for (const auto& code : first.languages) out << ' ' << pad_left(display_code(code), 6);
  out << "  AVG.\n";
  for (const auto& [label, t] : rows) {
    out << pad_right(label, label_w);
    for (double a : t.accuracy) out << ' ' << pad_left(format_fixed(a, 1), 6);
    out << "  " << format_fixed(t.average, 2) << " (" << format_fixed(t.reasoning_fidelity, 2) << "% / "
        << format_fixed(t.response_fidelity, 2) << "%)\n";
  }
  return out.str();
}

// ---- geometry -------------------------------------------------------------

// Mean distance of non-anchor centroids to the anchor after, divided by the
// same quantity before. Below 1 means the languages moved toward the anchor.
inline double centroid_shift(const MeanEmbeddingMatrix& pre, const MeanEmbeddingMatrix& post, std::string_view anchor) {
  if (pre.M.rows() != post.M.rows()) fail(ErrorKind::ShapeMismatch, "pre and post widths differ");
  auto find = [&](const MeanEmbeddingMatrix& m, std::string_view code) -> std::optional<Eigen::Index> {
    auto it = std::ranges::find(m.languages, code);
    if (it == m.languages.end()) return std::nullopt;
    return static_cast<Eigen::Index>(it - m.languages.begin());
  };
  const auto pre_anchor = find(pre, anchor);
  const auto post_anchor = find(post, anchor);
  if (!pre_anchor || !post_anchor) fail(ErrorKind::InvalidArgument, "anchor '" + std::string(anchor) + "' missing");
  double pre_sum = 0.0;
  double post_sum = 0.0;
  int count = 0;
  for (Eigen::Index l = 0; l < static_cast<Eigen::Index>(pre.languages.size()); ++l) {
    if (l == *pre_anchor) continue;
    const auto other = find(post, pre.languages[static_cast<std::size_t>(l)]);
    if (!other) fail(ErrorKind::InvalidArgument, "language '" + pre.languages[static_cast<std::size_t>(l)] + "' missing from post");
    pre_sum += (pre.M.col(l) - pre.M.col(*pre_anchor)).norm();
    post_sum += (post.M.col(*other) - post.M.col(*post_anchor)).norm();
    ++count;
  }
  if (count == 0) fail(ErrorKind::InvalidArgument, "centroid_shift needs at least one non-anchor language");
  if (!(pre_sum > 0.0)) fail(ErrorKind::Degenerate, "pre-intervention centroids coincide with the anchor");
  return post_sum / pre_sum;
}

struct PcaProjection {
  Matrix coords;      // n x 2
  Matrix components;  // d x 2, orthonormal
  Vector mean;        // d
  Vector singular_values;
};

// Projection onto the top two principal components of the mean-centred
// points (rows of `points`). Each component is sign-fixed so its
// largest-magnitude loading is positive.
inline PcaProjection pca2(const Matrix& points) {
  if (points.rows() < 3) fail(ErrorKind::InvalidArgument, "pca2 needs at least 3 points");
  if (points.cols() < 2) fail(ErrorKind::InvalidArgument, "pca2 needs d >= 2");
  if (!points.allFinite()) fail(ErrorKind::NonFinite, "pca2 input has non-finite entries");
  PcaProjection out;
  out.mean = points.colwise().mean().transpose();
  const Matrix centered = points.rowwise() - out.mean.transpose();
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  out.singular_values = svd.singularValues();
  const double scale = std::max(1.0, points.cwiseAbs().maxCoeff());
  if (out.singular_values(0) <= 1e-12 * scale) fail(ErrorKind::Degenerate, "all points are identical");
  out.components = svd.matrixV().leftCols(2);
  Matrix unused = Matrix::Zero(1, 2);
  detail::fix_signs(out.components, unused);
  out.coords = centered * out.components;
  return out;
}

}  // namespace langsub
