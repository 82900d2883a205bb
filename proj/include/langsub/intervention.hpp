#pragma once

// Projection ablation h - lambda * Ms (Ms^T h) and per-layer intervention
// plans. Positive lambda removes the language-specific component, negative
// lambda re-injects (amplifies) it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "langsub/error.hpp"
#include "langsub/subspace.hpp"
#include "langsub/tensor_io.hpp"

namespace langsub {

inline Vector ablate(const Vector& h, const Matrix& Ms, double lambda) {
  if (h.size() != Ms.rows()) {
    fail(ErrorKind::ShapeMismatch, "hidden size " + std::to_string(h.size()) + " does not match basis rows " +
                                       std::to_string(Ms.rows()));
  }
  if (lambda == 0.0) return h;
  const Vector coords = Ms.transpose() * h;
  return h - lambda * (Ms * coords);
}

// In-place variant for float activations; arithmetic in double.
inline void ablate_inplace(std::span<float> h, const Matrix& Ms, double lambda) {
  if (static_cast<Eigen::Index>(h.size()) != Ms.rows()) {
    fail(ErrorKind::ShapeMismatch, "hidden size " + std::to_string(h.size()) + " does not match basis rows " +
                                       std::to_string(Ms.rows()));
  }
  if (lambda == 0.0) return;
  Vector v(Ms.rows());
  for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = h[static_cast<std::size_t>(k)];
  const Vector out = v - lambda * (Ms * (Ms.transpose() * v));
  for (Eigen::Index k = 0; k < v.size(); ++k) h[static_cast<std::size_t>(k)] = static_cast<float>(out(k));
}

enum class TokenScope { PromptTokensOnly, AllTokens };

inline std::string_view to_string(TokenScope s) {
  return s == TokenScope::PromptTokensOnly ? "prompt_tokens_only" : "all_tokens";
}

inline TokenScope token_scope_from_string(std::string_view s) {
  if (s == "prompt_tokens_only") return TokenScope::PromptTokensOnly;
  if (s == "all_tokens") return TokenScope::AllTokens;
  fail(ErrorKind::InvalidArgument, "unknown token scope '" + std::string(s) + "'");
}

struct PlanEntry {
  std::uint32_t layer = 0;
  double lambda = 0.0;
  std::string basis_file;

  friend bool operator==(const PlanEntry&, const PlanEntry&) = default;
};

struct InterventionPlan {
  std::string model_name;
  TokenScope token_scope = TokenScope::PromptTokensOnly;
  std::vector<PlanEntry> entries;

  void validate() const {
    std::set<std::uint32_t> seen;
    for (const auto& e : entries) {
      if (!seen.insert(e.layer).second) {
        fail(ErrorKind::InvalidArgument, "layer " + std::to_string(e.layer) + " appears twice in plan");
      }
      if (!std::isfinite(e.lambda)) fail(ErrorKind::NonFinite, "lambda for layer " + std::to_string(e.layer));
    }
  }

  bool is_identity() const {
    return std::ranges::all_of(entries, [](const PlanEntry& e) { return e.lambda == 0.0; });
  }

  const PlanEntry* find(std::uint32_t layer) const {
    auto it = std::ranges::find(entries, layer, &PlanEntry::layer);
    return it == entries.end() ? nullptr : &*it;
  }

  friend bool operator==(const InterventionPlan&, const InterventionPlan&) = default;
};

struct LayerRange {
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;  // inclusive

  friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

struct LayerRangePreset {
  std::string_view model_name;
  std::uint32_t total_layers = 0;
  LayerRange middle;
  LayerRange higher;
};

// Middle/higher intervention ranges per model.
inline constexpr LayerRangePreset kLayerPresets[] = {
    {"Qwen-2.5-Instruct-3B", 36, {12, 26}, {27, 35}},
    {"Qwen-2.5-Instruct-7B", 28, {10, 19}, {20, 27}},
    {"Qwen-3-1.7B-Thinking", 28, {10, 19}, {20, 27}},
    {"Qwen-3-4B-Thinking", 36, {12, 26}, {27, 35}},
    {"Qwen-3-8B-Thinking", 36, {12, 26}, {27, 35}},
    {"R1-Distill-Qwen-7B", 28, {10, 19}, {20, 27}},
    {"R1-Distill-LLama-8B", 32, {12, 22}, {23, 31}},
    {"R1-Distill-Qwen-14B", 48, {16, 33}, {34, 47}},
    {"GLM-Z1-9B", 40, {12, 30}, {31, 39}},
    {"QwQ-32B", 64, {20, 46}, {47, 63}},
};

inline const LayerRangePreset& find_preset(std::string_view model_name) {
  for (const auto& p : kLayerPresets) {
    if (p.model_name == model_name) return p;
  }
  fail(ErrorKind::UnknownModel, "no layer preset for model '" + std::string(model_name) + "'");
}

// Studied strength grid: middle layers remove, higher layers re-inject.
inline constexpr double kMiddleLambdaMax = 0.4;
inline constexpr double kHigherLambdaMin = -0.4;

inline std::string basis_file_for_layer(std::uint32_t layer) { return "layer" + std::to_string(layer) + ".axdec"; }

struct PlanOptions {
  bool override_grid = false;
  TokenScope token_scope = TokenScope::PromptTokensOnly;
  std::optional<std::string> shared_basis_file;  // every entry uses this basis
};

inline void append_range(InterventionPlan& plan, LayerRange range, double lambda, const PlanOptions& opts) {
  for (std::uint32_t layer = range.lo; layer <= range.hi; ++layer) {
    plan.entries.push_back({layer, lambda, opts.shared_basis_file.value_or(basis_file_for_layer(layer))});
  }
}

inline InterventionPlan preset_plan(std::string_view model_name, double lambda_mid, double lambda_high,
                                    const PlanOptions& opts = {}) {
  const auto& preset = find_preset(model_name);
  if (!std::isfinite(lambda_mid) || !std::isfinite(lambda_high)) fail(ErrorKind::NonFinite, "lambda must be finite");
  if (!opts.override_grid) {
    if (lambda_mid < 0.0 || lambda_mid > kMiddleLambdaMax) {
      fail(ErrorKind::LambdaOutOfGrid, "lambda_mid=" + std::to_string(lambda_mid) + " outside [0, 0.4]");
    }
    if (lambda_high < kHigherLambdaMin || lambda_high > 0.0) {
      fail(ErrorKind::LambdaOutOfGrid, "lambda_high=" + std::to_string(lambda_high) + " outside [-0.4, 0]");
    }
  }
  InterventionPlan plan;
  plan.model_name = std::string(model_name);
  plan.token_scope = opts.token_scope;
  append_range(plan, preset.middle, lambda_mid, opts);
  append_range(plan, preset.higher, lambda_high, opts);
  return plan;
}

// Per-layer states for the tokens in scope, keyed by model layer index.
using LayerStates = std::map<std::uint32_t, std::vector<Vector>>;
// Language-specific basis per model layer index.
using BasisSet = std::map<std::uint32_t, Matrix>;

inline void require_bases(const InterventionPlan& plan, const BasisSet& bases) {
  for (const auto& e : plan.entries) {
    if (!bases.contains(e.layer)) fail(ErrorKind::MissingBasis, "no basis for planned layer " + std::to_string(e.layer));
  }
}

inline LayerStates apply_plan(const LayerStates& states, const InterventionPlan& plan, const BasisSet& bases) {
  plan.validate();
  require_bases(plan, bases);
  LayerStates out = states;
  for (auto& [layer, vectors] : out) {
    const auto* entry = plan.find(layer);
    if (entry == nullptr) continue;
    const auto& Ms = bases.at(layer);
    for (auto& h : vectors) h = ablate(h, Ms, entry->lambda);
  }
  return out;
}

// Applies the plan to every captured sample of a dump. Planned layers that
// were not captured are skipped.
inline ActivationDump apply_plan(const ActivationDump& dump, const Manifest& manifest, const InterventionPlan& plan,
                                 const BasisSet& bases) {
  plan.validate();
  require_bases(plan, bases);
  ActivationDump out = dump;
  for (const auto& e : plan.entries) {
    auto pos = manifest.position_of(e.layer);
    if (!pos) continue;
    const auto& Ms = bases.at(e.layer);
    for (std::size_t l = 0; l < out.language_count(); ++l) {
      for (std::uint32_t i = 0; i < out.counts()[l]; ++i) ablate_inplace(out.sample(*pos, l, i), Ms, e.lambda);
    }
  }
  return out;
}

inline nlohmann::json to_json(const InterventionPlan& plan) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : plan.entries) {
    entries.push_back({{"layer", e.layer}, {"lambda", e.lambda}, {"basis_file", e.basis_file}});
  }
  return {{"model_name", plan.model_name}, {"token_scope", std::string(to_string(plan.token_scope))}, {"entries", entries}};
}

inline InterventionPlan plan_from_json(const nlohmann::json& j) {
  InterventionPlan plan;
  try {
    plan.model_name = j.at("model_name").get<std::string>();
    plan.token_scope = token_scope_from_string(j.at("token_scope").get<std::string>());
    for (const auto& e : j.at("entries")) {
      plan.entries.push_back(
          {e.at("layer").get<std::uint32_t>(), e.at("lambda").get<double>(), e.at("basis_file").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("plan: ") + e.what());
  }
  plan.validate();
  return plan;
}

inline void save_plan(const std::filesystem::path& path, const InterventionPlan& plan) {
  bytes::write_text(path, to_json(plan).dump(2) + "\n");
}

inline InterventionPlan load_plan(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes::read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  return plan_from_json(j);
}

// Loads the basis of every plan entry, resolving basis_file relative to dir.
inline BasisSet load_bases(const InterventionPlan& plan, const std::filesystem::path& dir) {
  BasisSet bases;
  std::map<std::string, Matrix> cache;
  for (const auto& e : plan.entries) {
    auto it = cache.find(e.basis_file);
    if (it == cache.end()) {
      const auto path = dir / e.basis_file;
      if (!std::filesystem::exists(path)) {
        fail(ErrorKind::MissingBasis, "basis file " + path.string() + " for layer " + std::to_string(e.layer));
      }
      it = cache.emplace(e.basis_file, load_decomposition(path).decomposition.Ms).first;
    }
    bases[e.layer] = it->second;
  }
  return bases;
}

// ---- sweeps ---------------------------------------------------------------

struct MetricTriple {
  double accuracy = 0.0;
  double reasoning_fidelity = 0.0;
  double response_fidelity = 0.0;

  friend bool operator==(const MetricTriple&, const MetricTriple&) = default;
};

struct SweepPoint {
  double x = 0.0;
  MetricTriple metrics;

  friend bool operator==(const SweepPoint&, const SweepPoint&) = default;
};

struct SweepCurve {
  std::string x_label;  // "lambda" or "start_layer"
  std::vector<SweepPoint> points;

  friend bool operator==(const SweepCurve&, const SweepCurve&) = default;
};

using Evaluator = std::function<MetricTriple(const InterventionPlan&)>;

namespace detail {

inline void require_sorted_finite(std::span<const double> grid, std::string_view what) {
  if (grid.empty()) fail(ErrorKind::EmptyInput, std::string(what) + " grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid[i])) fail(ErrorKind::NonFinite, std::string(what) + " grid has a non-finite value");
    if (i > 0 && grid[i] <= grid[i - 1]) fail(ErrorKind::InvalidArgument, std::string(what) + " grid must be increasing");
  }
}

inline MetricTriple evaluate_at(const Evaluator& evaluate, const InterventionPlan& plan, std::string_view label,
                                double x) {
  try {
    return evaluate(plan);
  } catch (const std::exception& e) {
    fail(ErrorKind::Callback, "evaluation failed at " + std::string(label) + "=" + std::to_string(x) + ": " + e.what());
  }
}

}  // namespace detail

// One point per strength; each applies lambda over the preset's middle range.
inline SweepCurve sweep_strength(std::span<const double> lambdas, std::string_view model_name,
                                 const Evaluator& evaluate, const PlanOptions& opts = {}) {
  detail::require_sorted_finite(lambdas, "lambda");
  const auto& preset = find_preset(model_name);
  if (!opts.override_grid) {
    for (double lambda : lambdas) {
      if (std::abs(lambda) > kMiddleLambdaMax) {
        fail(ErrorKind::LambdaOutOfGrid, "sweep lambda=" + std::to_string(lambda) + " outside [-0.4, 0.4]");
      }
    }
  }
  SweepCurve curve{"lambda", {}};
  for (double lambda : lambdas) {
    InterventionPlan plan{std::string(model_name), opts.token_scope, {}};
    append_range(plan, preset.middle, lambda, opts);
    curve.points.push_back({lambda, detail::evaluate_at(evaluate, plan, "lambda", lambda)});
  }
  return curve;
}

// One point per start layer; each applies lambda from the start layer through
// the model's final layer. start == total_layers intervenes nowhere.
inline SweepCurve sweep_layers(std::span<const double> starts, double lambda, std::string_view model_name,
                               const Evaluator& evaluate, const PlanOptions& opts = {}) {
  detail::require_sorted_finite(starts, "start layer");
  const auto& preset = find_preset(model_name);
  if (!std::isfinite(lambda)) fail(ErrorKind::NonFinite, "lambda must be finite");
  if (!opts.override_grid && std::abs(lambda) > kMiddleLambdaMax) {
    fail(ErrorKind::LambdaOutOfGrid, "sweep lambda=" + std::to_string(lambda) + " outside [-0.4, 0.4]");
  }
  SweepCurve curve{"start_layer", {}};
  for (double start : starts) {
    if (start < 0 || start > preset.total_layers || start != std::floor(start)) {
      fail(ErrorKind::InvalidArgument, "start layer " + std::to_string(start) + " outside [0, " +
                                           std::to_string(preset.total_layers) + "]");
    }
    InterventionPlan plan{std::string(model_name), opts.token_scope, {}};
    const auto first = static_cast<std::uint32_t>(start);
    if (first < preset.total_layers) append_range(plan, {first, preset.total_layers - 1}, lambda, opts);
    curve.points.push_back({start, detail::evaluate_at(evaluate, plan, "start_layer", start)});
  }
  return curve;
}

}  // namespace langsub
