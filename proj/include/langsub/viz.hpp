#pragma once

// Self-contained SVG 1.1 + CSV emitters for PCA scatters and sweep curves.
// Output is a pure function of the input: equal specs give equal bytes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "langsub/error.hpp"
#include "langsub/intervention.hpp"
#include "langsub/metrics.hpp"
#include "langsub/tensor_io.hpp"

namespace langsub {

struct ScatterPoint {
  std::string language;
  std::string condition;  // "pre" / "post"
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const ScatterPoint&, const ScatterPoint&) = default;
};

struct ScatterSpec {
  std::string title;
  std::vector<ScatterPoint> points;

  friend bool operator==(const ScatterSpec&, const ScatterSpec&) = default;
};

struct Artifact {
  std::string svg;
  std::string csv;
};

namespace viz_detail {

inline constexpr double kWidth = 640.0;
inline constexpr double kHeight = 480.0;
inline constexpr double kLeft = 64.0;
inline constexpr double kRight = 150.0;
inline constexpr double kTop = 40.0;
inline constexpr double kBottom = 48.0;

inline const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                 "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
};

// Data range with 5% padding; a degenerate range is widened by 1 each side.
inline Axis padded(double lo, double hi) {
  if (hi - lo <= 0.0) return {lo - 1.0, hi + 1.0};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

struct Frame {
  Axis x;
  Axis y;

  double px(double v) const { return kLeft + (v - x.lo) / (x.hi - x.lo) * (kWidth - kLeft - kRight); }
  double py(double v) const { return kHeight - kBottom - (v - y.lo) / (y.hi - y.lo) * (kHeight - kTop - kBottom); }
};

inline void open_svg(std::ostringstream& out, const Frame& f, std::string_view title) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(kWidth) << "\" height=\""
      << num(kHeight) << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight) << "\" fill=\"#ffffff\"/>\n"
      << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"14\">" << escape(title) << "</text>\n"
      << "<rect class=\"frame\" x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\""
      << num(kWidth - kLeft - kRight) << "\" height=\"" << num(kHeight - kTop - kBottom)
      << "\" fill=\"none\" stroke=\"#333333\"/>\n";
  // axis limit labels
  out << "<text x=\"" << num(kLeft) << "\" y=\"" << num(kHeight - kBottom + 16)
      << "\" font-family=\"sans-serif\" font-size=\"10\">" << num(f.x.lo) << "</text>\n"
      << "<text x=\"" << num(kWidth - kRight) << "\" y=\"" << num(kHeight - kBottom + 16)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << num(f.x.hi) << "</text>\n"
      << "<text x=\"" << num(kLeft - 4) << "\" y=\"" << num(kHeight - kBottom)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << num(f.y.lo) << "</text>\n"
      << "<text x=\"" << num(kLeft - 4) << "\" y=\"" << num(kTop + 10)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << num(f.y.hi) << "</text>\n";
}

inline std::string limits_comment(const Frame& f) {
  return "# xlim=" + exact(f.x.lo) + "," + exact(f.x.hi) + " ylim=" + exact(f.y.lo) + "," + exact(f.y.hi);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": not a number '" + s + "'");
  }
}

}  // namespace viz_detail

inline Artifact emit_scatter(const ScatterSpec& spec) {
  using namespace viz_detail;
  if (spec.points.empty()) fail(ErrorKind::EmptyInput, "scatter needs at least one point");
  std::vector<std::string> languages;
  std::vector<std::string> conditions;
  double xlo = spec.points[0].x, xhi = xlo, ylo = spec.points[0].y, yhi = ylo;
  for (const auto& p : spec.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) fail(ErrorKind::NonFinite, "scatter coordinate is not finite");
    if (std::ranges::find(languages, p.language) == languages.end()) languages.push_back(p.language);
    if (std::ranges::find(conditions, p.condition) == conditions.end()) conditions.push_back(p.condition);
    xlo = std::min(xlo, p.x);
    xhi = std::max(xhi, p.x);
    ylo = std::min(ylo, p.y);
    yhi = std::max(yhi, p.y);
  }
  const Frame f{padded(xlo, xhi), padded(ylo, yhi)};
  auto color = [&](const std::string& lang) {
    auto idx = static_cast<std::size_t>(std::ranges::find(languages, lang) - languages.begin());
    return std::string(kPalette[idx % std::size(kPalette)]);
  };
  auto shape = [&](const std::string& cond) {
    return static_cast<std::size_t>(std::ranges::find(conditions, cond) - conditions.begin()) % 3;
  };

  std::ostringstream svg;
  open_svg(svg, f, spec.title);
  for (const auto& p : spec.points) {
    const double cx = f.px(p.x), cy = f.py(p.y);
    const auto c = color(p.language);
    switch (shape(p.condition)) {
      case 0:
        svg << "<circle class=\"pt\" cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"3.5\" fill=\"" << c
            << "\" fill-opacity=\"0.7\"/>\n";
        break;
      case 1:
        svg << "<rect class=\"pt\" x=\"" << num(cx - 3) << "\" y=\"" << num(cy - 3)
            << "\" width=\"6\" height=\"6\" fill=\"none\" stroke=\"" << c << "\"/>\n";
        break;
      default:
        svg << "<path class=\"pt\" d=\"M " << num(cx) << ' ' << num(cy - 4) << " L " << num(cx + 4) << ' '
            << num(cy + 3) << " L " << num(cx - 4) << ' ' << num(cy + 3) << " Z\" fill=\"" << c << "\"/>\n";
    }
  }
  // legend: text swatches only, so marker counts equal point counts
  double ly = kTop + 12;
  for (const auto& lang : languages) {
    svg << "<text class=\"legend\" x=\"" << num(kWidth - kRight + 12) << "\" y=\"" << num(ly)
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color(lang) << "\">" << escape(lang)
        << "</text>\n";
    ly += 14;
  }
  static const char* kShapeNames[] = {"circle", "square", "triangle"};
  for (const auto& cond : conditions) {
    svg << "<text class=\"legend\" x=\"" << num(kWidth - kRight + 12) << "\" y=\"" << num(ly)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(cond) << ": " << kShapeNames[shape(cond)]
        << "</text>\n";
    ly += 14;
  }
  svg << "</svg>\n";

  std::ostringstream csv;
  csv << limits_comment(f) << '\n' << "language,condition,x,y\n";
  for (const auto& p : spec.points) {
    csv << p.language << ',' << p.condition << ',' << exact(p.x) << ',' << exact(p.y) << '\n';
  }
  return {svg.str(), csv.str()};
}

inline ScatterSpec parse_scatter_csv(std::string_view text, std::string title = {}) {
  using namespace viz_detail;
  ScatterSpec spec{std::move(title), {}};
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "language,condition,x,y") fail(ErrorKind::Parse, "unexpected scatter header '" + line + "'");
      header = true;
      continue;
    }
    auto f = split(line, ',');
    if (f.size() != 4) fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected 4 fields");
    spec.points.push_back({f[0], f[1], parse_double(f[2], line_no), parse_double(f[3], line_no)});
  }
  return spec;
}

struct CurveArtifactInput {
  SweepCurve curve;
  MetricTriple baseline;
  std::string title;
};

inline Artifact emit_curves(const SweepCurve& curve, const MetricTriple& baseline, std::string_view title = {}) {
  using namespace viz_detail;
  if (curve.points.empty()) fail(ErrorKind::EmptyInput, "curve has no points");
  double xlo = curve.points[0].x, xhi = xlo;
  double ylo = baseline.accuracy, yhi = ylo;
  auto widen = [&](double v) {
    if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "curve value is not finite");
    ylo = std::min(ylo, v);
    yhi = std::max(yhi, v);
  };
  widen(baseline.reasoning_fidelity);
  widen(baseline.response_fidelity);
  for (const auto& p : curve.points) {
    if (!std::isfinite(p.x)) fail(ErrorKind::NonFinite, "curve x is not finite");
    xlo = std::min(xlo, p.x);
    xhi = std::max(xhi, p.x);
    widen(p.metrics.accuracy);
    widen(p.metrics.reasoning_fidelity);
    widen(p.metrics.response_fidelity);
  }
  const Frame f{padded(xlo, xhi), padded(ylo, yhi)};

  struct Series {
    const char* name;
    const char* color;
    double MetricTriple::*field;
  };
  const Series series[] = {
      {"accuracy", "#d62728", &MetricTriple::accuracy},
      {"reasoning_fidelity", "#2ca02c", &MetricTriple::reasoning_fidelity},
      {"response_fidelity", "#d4a017", &MetricTriple::response_fidelity},
  };

  std::ostringstream svg;
  open_svg(svg, f, title);
  std::vector<double> ticks;
  for (const auto& p : curve.points) {
    if (std::ranges::find(ticks, p.x) == ticks.end()) ticks.push_back(p.x);
  }
  for (double t : ticks) {
    svg << "<line class=\"xtick\" x1=\"" << num(f.px(t)) << "\" y1=\"" << num(kHeight - kBottom) << "\" x2=\""
        << num(f.px(t)) << "\" y2=\"" << num(kHeight - kBottom + 5) << "\" stroke=\"#333333\"/>\n"
        << "<text x=\"" << num(f.px(t)) << "\" y=\"" << num(kHeight - kBottom + 28)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << num(t) << "</text>\n";
  }
  for (const auto& s : series) {
    const double base = baseline.*(s.field);
    svg << "<line class=\"baseline\" data-series=\"" << s.name << "\" x1=\"" << num(kLeft) << "\" y1=\""
        << num(f.py(base)) << "\" x2=\"" << num(kWidth - kRight) << "\" y2=\"" << num(f.py(base)) << "\" stroke=\""
        << s.color << "\" stroke-dasharray=\"6 4\"/>\n";
    svg << "<path class=\"series\" data-series=\"" << s.name << "\" d=\"";
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
      const auto& p = curve.points[i];
      svg << (i == 0 ? "M " : " L ") << num(f.px(p.x)) << ' ' << num(f.py(p.metrics.*(s.field)));
    }
    svg << "\" fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    for (const auto& p : curve.points) {
      svg << "<circle class=\"pt\" data-series=\"" << s.name << "\" cx=\"" << num(f.px(p.x)) << "\" cy=\""
          << num(f.py(p.metrics.*(s.field))) << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
    }
  }
  double ly = kTop + 12;
  for (const auto& s : series) {
    svg << "<text class=\"legend\" x=\"" << num(kWidth - kRight + 12) << "\" y=\"" << num(ly)
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << s.color << "\">" << s.name << "</text>\n";
    ly += 14;
  }
  svg << "<text x=\"" << num((kLeft + kWidth - kRight) / 2) << "\" y=\"" << num(kHeight - 6)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << escape(curve.x_label)
      << "</text>\n</svg>\n";

  std::ostringstream csv;
  csv << limits_comment(f) << " x_label=" << curve.x_label << " baseline=" << exact(baseline.accuracy) << ','
      << exact(baseline.reasoning_fidelity) << ',' << exact(baseline.response_fidelity) << '\n'
      << "x,accuracy,reasoning_fidelity,response_fidelity\n";
  for (const auto& p : curve.points) {
    csv << exact(p.x) << ',' << exact(p.metrics.accuracy) << ',' << exact(p.metrics.reasoning_fidelity) << ','
        << exact(p.metrics.response_fidelity) << '\n';
  }
  return {svg.str(), csv.str()};
}

// Inverse of the CSV half of emit_curves.
inline CurveArtifactInput parse_curve_csv(std::string_view text, std::string title = {}) {
  using namespace viz_detail;
  CurveArtifactInput out;
  out.title = std::move(title);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      for (const auto& tok : split(line, ' ')) {
        if (tok.rfind("x_label=", 0) == 0) out.curve.x_label = tok.substr(8);
        if (tok.rfind("baseline=", 0) == 0) {
          auto v = split(tok.substr(9), ',');
          if (v.size() != 3) fail(ErrorKind::Parse, "baseline needs 3 values");
          out.baseline = {parse_double(v[0], line_no), parse_double(v[1], line_no), parse_double(v[2], line_no)};
        }
      }
      continue;
    }
    if (!header) {
      if (line != "x,accuracy,reasoning_fidelity,response_fidelity") {
        fail(ErrorKind::Parse, "unexpected curve header '" + line + "'");
      }
      header = true;
      continue;
    }
    auto f = split(line, ',');
    if (f.size() != 4) fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected 4 fields");
    out.curve.points.push_back({parse_double(f[0], line_no),
                                {parse_double(f[1], line_no), parse_double(f[2], line_no), parse_double(f[3], line_no)}});
  }
  return out;
}

// PCA scatter of every sample of one captured layer before and after an
// intervention, projected onto components fitted on the union.
inline ScatterSpec scatter_from_dumps(const ActivationDump& pre, const ActivationDump& post, std::size_t layer,
                                      std::string title = {}) {
  if (pre.d() != post.d() || pre.languages() != post.languages() || pre.counts() != post.counts()) {
    fail(ErrorKind::ShapeMismatch, "pre and post dumps differ in shape");
  }
  std::size_t total = 0;
  for (auto n : pre.counts()) total += n;
  Matrix points(static_cast<Eigen::Index>(2 * total), static_cast<Eigen::Index>(pre.d()));
  std::vector<std::pair<std::string, std::string>> labels;
  Eigen::Index row = 0;
  for (const auto* dump : {&pre, &post}) {
    const char* cond = dump == &pre ? "pre" : "post";
    for (std::size_t l = 0; l < dump->language_count(); ++l) {
      for (std::uint32_t i = 0; i < dump->counts()[l]; ++i, ++row) {
        auto s = dump->sample(layer, l, i);
        for (Eigen::Index k = 0; k < points.cols(); ++k) points(row, k) = s[static_cast<std::size_t>(k)];
        labels.emplace_back(dump->languages()[l], cond);
      }
    }
  }
  const auto proj = pca2(points);
  ScatterSpec spec{std::move(title), {}};
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto& [lang, cond] = labels[static_cast<std::size_t>(i)];
    spec.points.push_back({lang, cond, proj.coords(i, 0), proj.coords(i, 1)});
  }
  return spec;
}

// Per-(condition, language) 2D centroids of a scatter, as mean-embedding
// matrices usable with centroid_shift.
inline MeanEmbeddingMatrix scatter_centroids(const ScatterSpec& spec, std::string_view condition) {
  std::vector<std::string> languages;
  std::vector<std::array<double, 3>> acc;  // x, y, count
  for (const auto& p : spec.points) {
    if (p.condition != condition) continue;
    auto it = std::ranges::find(languages, p.language);
    std::size_t idx = static_cast<std::size_t>(it - languages.begin());
    if (it == languages.end()) {
      languages.push_back(p.language);
      acc.push_back({0.0, 0.0, 0.0});
    }
    acc[idx][0] += p.x;
    acc[idx][1] += p.y;
    acc[idx][2] += 1.0;
  }
  MeanEmbeddingMatrix out{Matrix(2, static_cast<Eigen::Index>(languages.size())), languages};
  for (std::size_t l = 0; l < languages.size(); ++l) {
    out.M(0, static_cast<Eigen::Index>(l)) = acc[l][0] / acc[l][2];
    out.M(1, static_cast<Eigen::Index>(l)) = acc[l][1] / acc[l][2];
  }
  return out;
}

}  // namespace langsub
