#pragma once

// Command-line front end: synth, probe, plan, metrics, viz, sweep.
// run() is the whole program; tools/langsub.cpp only forwards argv.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "langsub/langsub.hpp"

namespace langsub::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kValidation = 3,
  kIo = 4,
  kNumerical = 5,
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io:
      return kIo;
    case ErrorKind::Degenerate:
    case ErrorKind::NotOrthonormal:
      return kNumerical;
    case ErrorKind::RankOutOfRange:
    case ErrorKind::LambdaOutOfGrid:
    case ErrorKind::UnknownModel:
      return kUsage;
    default:
      return kValidation;
  }
}

struct RunConfig {
  std::vector<std::string> inputs;
  std::string out = ".";
  std::string layers;
  int rank = 0;  // 0: L - 1
  std::string center = "rowmean";
  double lambda_mid = 0.0;
  double lambda_high = 0.0;
  std::optional<double> lambda;
  std::string grid;
  std::string model;
  std::string token_scope = "prompt_tokens_only";
  std::uint64_t seed = 0;
  bool override_grid = false;
  std::string run_id;
  // metrics
  std::vector<std::string> records;
  std::string tags;
  std::string langs;
  // viz / sweep
  std::string anchor;
  std::string basis;
  std::string curve;
  std::string mode = "strength";
  std::optional<std::uint32_t> shared_basis;
  // synth
  int d = 16;
  int n = 10;
  int layer_count = 1;
  double noise = 0.0;
  std::string zero_row;
};

// ---- small parsers --------------------------------------------------------

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    cur.erase(0, cur.find_first_not_of(" \t"));
    cur.erase(cur.find_last_not_of(" \t") + 1);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline double to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::InvalidArgument, "not a finite number: '" + s + "'");
}

// "10-19,22" -> {10..19, 22}
inline std::vector<std::uint32_t> parse_layers(const std::string& spec) {
  std::set<std::uint32_t> layers;
  for (const auto& part : split_list(spec)) {
    const auto dash = part.find('-');
    try {
      if (dash == std::string::npos) {
        layers.insert(static_cast<std::uint32_t>(std::stoul(part)));
      } else {
        const auto lo = std::stoul(part.substr(0, dash));
        const auto hi = std::stoul(part.substr(dash + 1));
        if (hi < lo) fail(ErrorKind::InvalidArgument, "empty layer range '" + part + "'");
        for (auto l = lo; l <= hi; ++l) layers.insert(static_cast<std::uint32_t>(l));
      }
    } catch (const std::logic_error&) {
      fail(ErrorKind::InvalidArgument, "bad layer spec '" + part + "'");
    }
  }
  return {layers.begin(), layers.end()};
}

// "a,b,c" or "lo:step:hi"
inline std::vector<double> parse_grid(const std::string& spec) {
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::istringstream in(spec);
    for (std::string p; std::getline(in, p, ':');) parts.push_back(p);
    if (parts.size() != 3) fail(ErrorKind::InvalidArgument, "grid range must be lo:step:hi");
    const double lo = to_double(parts[0]), step = to_double(parts[1]), hi = to_double(parts[2]);
    if (!(step > 0.0) || hi < lo) fail(ErrorKind::InvalidArgument, "grid range needs step > 0 and hi >= lo");
    const auto k = static_cast<long>(std::llround((hi - lo) / step));
    std::vector<double> out;
    // snap to 1e-12 so 0.1 steps land on the nearest decimal double
    for (long i = 0; i <= k; ++i) out.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
    return out;
  }
  std::vector<double> out;
  for (const auto& s : split_list(spec)) out.push_back(to_double(s));
  return out;
}

inline std::string exact(double v) { return viz_detail::exact(v); }

inline fs::path ensure_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorKind::Io, "cannot create output directory " + out + ": " + ec.message());
  return fs::path(out);
}

struct Loaded {
  ActivationDump dump;
  Manifest manifest;
};

inline Loaded load_input(const RunConfig& cfg) {
  if (cfg.inputs.empty()) fail(ErrorKind::InvalidArgument, "--input is required");
  auto [dump, manifest] = load_dump(cfg.inputs.front());
  for (std::size_t i = 1; i < cfg.inputs.size(); ++i) {
    auto [more, more_manifest] = load_dump(cfg.inputs[i]);
    std::tie(dump, manifest) = merge_dumps(dump, manifest, more, more_manifest);
  }
  return {std::move(dump), std::move(manifest)};
}

inline std::vector<std::size_t> selected_positions(const Manifest& manifest, const std::string& spec) {
  std::vector<std::size_t> out;
  if (spec.empty()) {
    for (std::size_t i = 0; i < manifest.layer_indices.size(); ++i) out.push_back(i);
    return out;
  }
  for (auto layer : parse_layers(spec)) {
    auto pos = manifest.position_of(layer);
    if (!pos) fail(ErrorKind::UnknownLayer, "layer " + std::to_string(layer) + " was not captured");
    out.push_back(*pos);
  }
  return out;
}

inline int resolve_rank(const RunConfig& cfg, std::size_t L) {
  const int r = cfg.rank > 0 ? cfg.rank : static_cast<int>(L) - 1;
  if (r < 1 || r >= static_cast<int>(L)) {
    fail(ErrorKind::RankOutOfRange, "rank " + std::to_string(r) + " must satisfy 1 <= r < L=" + std::to_string(L));
  }
  return r;
}

// ---- commands -------------------------------------------------------------

inline int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  auto langs = cfg.langs.empty() ? std::vector<std::string>{"en", "es", "fr", "de"} : split_list(cfg.langs);
  const int L = static_cast<int>(langs.size());
  const int r = cfg.rank > 0 ? cfg.rank : L - 1;
  PlantOptions opts;
  opts.languages = langs;
  if (!cfg.zero_row.empty()) {
    auto it = std::ranges::find(langs, cfg.zero_row);
    if (it == langs.end()) fail(ErrorKind::InvalidArgument, "--zero-row language not in --langs");
    opts.zero_gamma_row = static_cast<int>(it - langs.begin());
  }
  std::vector<std::uint32_t> indices;
  if (!cfg.layers.empty()) {
    indices = parse_layers(cfg.layers);
  } else {
    for (int t = 0; t < cfg.layer_count; ++t) indices.push_back(static_cast<std::uint32_t>(t));
  }
  auto [models, dump] = plant_layers(cfg.d, L, r, cfg.noise, cfg.n, cfg.seed, static_cast<int>(indices.size()), opts);
  Manifest manifest;
  manifest.model_name = cfg.model.empty() ? "synthetic" : cfg.model;
  manifest.layer_indices = indices;
  manifest.extra["generator"] = "langsub synth";
  const auto dir = ensure_out(cfg.out);
  const std::string id = cfg.run_id.empty() ? "synth" : cfg.run_id;
  save_dump(dir / (id + ".axd"), dump, manifest);
  bytes::write_file(dir / (id + ".planted.axdp"), encode_planted(models));
  out << "synth: d=" << cfg.d << " L=" << L << " r=" << r << " layers=" << indices.size() << " n=" << cfg.n
      << " noise=" << exact(cfg.noise) << " -> " << (dir / (id + ".axd")).string() << '\n';
  return kOk;
}

inline int cmd_probe(const RunConfig& cfg, std::ostream& out) {
  auto [dump, manifest] = load_input(cfg);
  const int r = resolve_rank(cfg, dump.language_count());
  const auto positions = selected_positions(manifest, cfg.layers);
  const DecomposeOptions opts{center_from_string(cfg.center)};

  struct Row {
    std::uint32_t layer;
    SubspaceDecomposition dec;
  };
  std::vector<Row> rows;
  for (auto pos : positions) {
    const auto layer = manifest.layer_indices[pos];
    try {
      rows.push_back({layer, decompose(mean_embeddings(dump, pos), r, opts)});
    } catch (const Error& e) {
      throw Error(e.kind(), "layer " + std::to_string(layer) + ": " + e.what());
    }
  }
  const auto dir = ensure_out(cfg.out);
  std::ostringstream summary;
  summary << "layer,rank,residual,spectral_gap,tie_warning,basis_file\n";
  for (const auto& row : rows) {
    const auto file = basis_file_for_layer(row.layer);
    save_decomposition(dir / file, row.dec, row.layer);
    summary << row.layer << ',' << row.dec.rank << ',' << exact(row.dec.residual) << ','
            << exact(row.dec.spectral_gap) << ',' << (row.dec.tie_warning ? 1 : 0) << ',' << file << '\n';
    out << "layer " << row.layer << ": residual=" << exact(row.dec.residual)
        << " spectral_gap=" << exact(row.dec.spectral_gap) << (row.dec.tie_warning ? " [tie warning]" : "") << '\n';
  }
  bytes::write_text(dir / "probe_summary.csv", summary.str());
  return kOk;
}

inline int cmd_plan(const RunConfig& cfg, std::ostream& out) {
  if (cfg.model.empty()) fail(ErrorKind::InvalidArgument, "--model is required");
  PlanOptions opts;
  opts.override_grid = cfg.override_grid;
  opts.token_scope = token_scope_from_string(cfg.token_scope);
  if (cfg.shared_basis) opts.shared_basis_file = basis_file_for_layer(*cfg.shared_basis);
  auto plan = preset_plan(cfg.model, cfg.lambda_mid, cfg.lambda_high, opts);
  const fs::path bases = cfg.inputs.empty() ? fs::path(cfg.out) : fs::path(cfg.inputs.front());
  for (const auto& e : plan.entries) {
    if (!fs::exists(bases / e.basis_file)) {
      fail(ErrorKind::MissingBasis, "no probe output " + (bases / e.basis_file).string() + " for layer " +
                                        std::to_string(e.layer));
    }
  }
  const auto dir = ensure_out(cfg.out);
  const std::string id = cfg.run_id.empty() ? "plan" : cfg.run_id;
  save_plan(dir / (id + ".plan.json"), plan);
  const auto& preset = find_preset(cfg.model);
  out << "plan: " << plan.model_name << " middle " << preset.middle.lo << "-" << preset.middle.hi
      << " lambda=" << exact(cfg.lambda_mid) << ", higher " << preset.higher.lo << "-" << preset.higher.hi
      << " lambda=" << exact(cfg.lambda_high) << ", " << plan.entries.size() << " entries"
      << (plan.is_identity() ? " (identity)" : "") << '\n';
  return kOk;
}

inline int cmd_metrics(const RunConfig& cfg, std::ostream& out) {
  if (cfg.records.empty()) fail(ErrorKind::InvalidArgument, "--records is required");
  std::vector<std::vector<MetricRecord>> sets;
  for (const auto& path : cfg.records) sets.push_back(load_records(path));

  std::vector<double> xs;
  if (!cfg.tags.empty()) {
    for (const auto& t : split_list(cfg.tags)) xs.push_back(to_double(t));
    if (xs.size() != sets.size()) fail(ErrorKind::InvalidArgument, "--tags needs one value per --records file");
  } else {
    for (std::size_t i = 0; i < sets.size(); ++i) xs.push_back(static_cast<double>(i));
  }
  const auto order = cfg.langs.empty() ? languages_in(sets.front()) : split_list(cfg.langs);
  const auto groups = default_resource_groups();

  std::vector<LabeledTable> rows;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    std::string label = cfg.tags.empty() ? fs::path(cfg.records[i]).stem().string() : "x=" + split_list(cfg.tags)[i];
    rows.emplace_back(label, accuracy_table(sets[i], order, groups));
  }
  std::optional<Artifact> curve_art;
  if (sets.size() > 1) {
    SweepCurve curve{"x", {}};
    std::vector<std::size_t> idx(sets.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::ranges::stable_sort(idx, [&](auto a, auto b) { return xs[a] < xs[b]; });
    for (auto i : idx) {
      const auto& t = rows[i].second;
      curve.points.push_back({xs[i], {t.average, t.reasoning_fidelity, t.response_fidelity}});
    }
    // baseline: the set tagged 0 if present, else the first set
    std::size_t base = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (xs[i] == 0.0) {
        base = i;
        break;
      }
    }
    const auto& bt = rows[base].second;
    curve_art = emit_curves(curve, {bt.average, bt.reasoning_fidelity, bt.response_fidelity}, "accuracy / fidelity");
  }
  const auto dir = ensure_out(cfg.out);
  const std::string id = cfg.run_id.empty() ? "metrics" : cfg.run_id;
  bytes::write_text(dir / (id + ".table.csv"), table_csv(rows));
  bytes::write_text(dir / (id + ".table.txt"), table_text(rows));
  if (curve_art) {
    bytes::write_text(dir / (id + ".curve.csv"), curve_art->csv);
    bytes::write_text(dir / (id + ".curve.svg"), curve_art->svg);
  }
  out << table_text(rows);
  return kOk;
}

inline int cmd_viz(const RunConfig& cfg, std::ostream& out) {
  const auto dir = ensure_out(cfg.out);
  const std::string id = cfg.run_id.empty() ? "viz" : cfg.run_id;
  if (!cfg.curve.empty()) {
    auto parsed = parse_curve_csv(bytes::read_text(cfg.curve));
    if (parsed.curve.points.empty()) fail(ErrorKind::EmptyInput, cfg.curve + " has no curve rows");
    auto art = emit_curves(parsed.curve, parsed.baseline, id);
    bytes::write_text(dir / (id + ".curves.svg"), art.svg);
    bytes::write_text(dir / (id + ".curves.csv"), art.csv);
    out << "viz: " << parsed.curve.points.size() << " curve points -> " << (dir / (id + ".curves.svg")).string()
        << '\n';
    if (cfg.inputs.empty()) return kOk;
  }
  auto [dump, manifest] = load_input(cfg);
  const auto positions = selected_positions(manifest, cfg.layers);
  const auto pos = positions.front();
  const auto layer = manifest.layer_indices[pos];
  Matrix Ms;
  if (!cfg.basis.empty()) {
    Ms = load_decomposition(cfg.basis).decomposition.Ms;
  } else {
    const int r = resolve_rank(cfg, dump.language_count());
    Ms = decompose(mean_embeddings(dump, pos), r, {center_from_string(cfg.center)}).Ms;
  }
  InterventionPlan plan{manifest.model_name, token_scope_from_string(cfg.token_scope), {{layer, cfg.lambda.value_or(1.0), ""}}};
  const auto post = apply_plan(dump, manifest, plan, BasisSet{{layer, Ms}});
  const auto spec = scatter_from_dumps(dump, post, pos, "layer " + std::to_string(layer) + " lambda=" + exact(cfg.lambda.value_or(1.0)));
  const auto art = emit_scatter(spec);
  bytes::write_text(dir / (id + ".scatter.svg"), art.svg);
  bytes::write_text(dir / (id + ".scatter.csv"), art.csv);
  out << "viz: layer " << layer << ", " << spec.points.size() << " points -> "
      << (dir / (id + ".scatter.svg")).string() << '\n';
  if (!cfg.anchor.empty()) {
    const double shift = centroid_shift(mean_embeddings(dump, pos), mean_embeddings(post, pos), cfg.anchor);
    out << "centroid_shift(anchor=" << cfg.anchor << ") = " << exact(shift) << '\n';
  }
  return kOk;
}

// Proxy evaluator over an activation dump (no model in the loop):
//   accuracy            100 * (1 - mean in-span energy fraction) at measured layers
//   reasoning fidelity  nearest pre-centroid language identification rate at measured layers
//   response fidelity   same at the top captured layer
// Measured layers are the captured layers inside the preset's middle range
// (all captured layers if none are).
class DumpEvaluator {
 public:
  DumpEvaluator(const ActivationDump& dump, const Manifest& manifest, BasisSet bases, const LayerRangePreset& preset)
      : dump_(dump), manifest_(manifest), bases_(std::move(bases)) {
    for (std::size_t p = 0; p < manifest.layer_indices.size(); ++p) {
      const auto layer = manifest.layer_indices[p];
      if (layer >= preset.middle.lo && layer <= preset.middle.hi) measured_.push_back(p);
      centroids_.push_back(mean_embeddings(dump, p).M);
    }
    if (measured_.empty()) {
      for (std::size_t p = 0; p < manifest.layer_indices.size(); ++p) measured_.push_back(p);
    }
  }

  MetricTriple operator()(const InterventionPlan& plan) const {
    InterventionPlan captured = plan;
    std::erase_if(captured.entries, [&](const PlanEntry& e) { return !manifest_.position_of(e.layer); });
    const auto edited = apply_plan(dump_, manifest_, captured, bases_);
    double energy = 0.0, hits = 0.0, total = 0.0;
    for (auto p : measured_) {
      const auto& Ms = bases_.at(manifest_.layer_indices[p]);
      for (std::size_t l = 0; l < edited.language_count(); ++l) {
        for (std::uint32_t i = 0; i < edited.counts()[l]; ++i) {
          const Vector h = to_vector(edited.sample(p, l, i));
          const double hn = h.squaredNorm();
          energy += hn > 0.0 ? (Ms.transpose() * h).squaredNorm() / hn : 0.0;
          hits += nearest(p, h) == l ? 1.0 : 0.0;
          total += 1.0;
        }
      }
    }
    const auto top = manifest_.layer_indices.size() - 1;
    double top_hits = 0.0, top_total = 0.0;
    for (std::size_t l = 0; l < edited.language_count(); ++l) {
      for (std::uint32_t i = 0; i < edited.counts()[l]; ++i) {
        top_hits += nearest(top, to_vector(edited.sample(top, l, i))) == l ? 1.0 : 0.0;
        top_total += 1.0;
      }
    }
    return {100.0 * (1.0 - energy / total), 100.0 * hits / total, 100.0 * top_hits / top_total};
  }

 private:
  static Vector to_vector(std::span<const float> s) {
    Vector v(static_cast<Eigen::Index>(s.size()));
    for (std::size_t k = 0; k < s.size(); ++k) v(static_cast<Eigen::Index>(k)) = s[k];
    return v;
  }

  std::size_t nearest(std::size_t pos, const Vector& h) const {
    const auto& C = centroids_[pos];
    Eigen::Index best = 0;
    (C.colwise() - h).colwise().squaredNorm().minCoeff(&best);
    return static_cast<std::size_t>(best);
  }

  const ActivationDump& dump_;
  const Manifest& manifest_;
  BasisSet bases_;
  std::vector<std::size_t> measured_;
  std::vector<Matrix> centroids_;
};

inline int cmd_sweep(const RunConfig& cfg, std::ostream& out) {
  if (cfg.model.empty()) fail(ErrorKind::InvalidArgument, "--model is required");
  if (cfg.grid.empty()) fail(ErrorKind::InvalidArgument, "--grid is required");
  const auto grid = parse_grid(cfg.grid);
  const auto& preset = find_preset(cfg.model);
  PlanOptions opts;
  opts.override_grid = cfg.override_grid;
  opts.token_scope = token_scope_from_string(cfg.token_scope);
  if (cfg.mode != "strength" && cfg.mode != "layers") {
    fail(ErrorKind::InvalidArgument, "--mode must be strength or layers");
  }
  auto run_sweep = [&](const Evaluator& evaluate) {
    return cfg.mode == "strength" ? sweep_strength(grid, cfg.model, evaluate, opts)
                                  : sweep_layers(grid, cfg.lambda.value_or(0.2), cfg.model, evaluate, opts);
  };
  const std::string id = cfg.run_id.empty() ? "sweep" : cfg.run_id;

  if (cfg.inputs.empty()) {
    // No dump: emit one plan per grid point for an external engine.
    std::vector<InterventionPlan> plans;
    run_sweep([&](const InterventionPlan& plan) {
      plans.push_back(plan);
      return MetricTriple{};
    });
    const auto dir = ensure_out(cfg.out);
    std::ostringstream index;
    index << "x,plan_file\n";
    for (std::size_t i = 0; i < plans.size(); ++i) {
      const auto file = id + ".point" + std::to_string(i) + ".plan.json";
      save_plan(dir / file, plans[i]);
      index << exact(grid[i]) << ',' << file << '\n';
    }
    bytes::write_text(dir / (id + ".index.csv"), index.str());
    out << "sweep: " << plans.size() << " plans -> " << (dir / (id + ".index.csv")).string() << '\n';
    return kOk;
  }

  auto [dump, manifest] = load_input(cfg);
  const int r = resolve_rank(cfg, dump.language_count());
  BasisSet bases;
  for (std::size_t p = 0; p < manifest.layer_indices.size(); ++p) {
    bases[manifest.layer_indices[p]] = decompose(mean_embeddings(dump, p), r, {center_from_string(cfg.center)}).Ms;
  }
  const DumpEvaluator evaluator(dump, manifest, std::move(bases), preset);
  const MetricTriple baseline = evaluator(InterventionPlan{cfg.model, opts.token_scope, {}});
  const auto curve = run_sweep(std::cref(evaluator));
  const auto art = emit_curves(curve, baseline, cfg.model + " " + cfg.mode + " sweep");
  const auto dir = ensure_out(cfg.out);
  bytes::write_text(dir / (id + ".curve.csv"), art.csv);
  bytes::write_text(dir / (id + ".curve.svg"), art.svg);
  out << "sweep: " << curve.points.size() << " points -> " << (dir / (id + ".curve.csv")).string() << '\n';
  return kOk;
}

// ---- entry point ----------------------------------------------------------

// Fills options that were not given on the command line from a JSON config
// object; keys are long flag names with '-' or '_'.
inline void apply_config(CLI::App& sub, const nlohmann::json& config) {
  for (auto* opt : sub.get_options()) {
    if (opt->count() > 0 || opt->get_lnames().empty()) continue;
    const auto& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    std::string snake = name;
    std::ranges::replace(snake, '-', '_');
    const nlohmann::json* value = nullptr;
    if (config.contains(name)) value = &config[name];
    else if (config.contains(snake)) value = &config[snake];
    if (value == nullptr) continue;
    auto as_string = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value->is_array()) {
      for (const auto& v : *value) opt->add_result(as_string(v));
    } else if (value->is_boolean()) {
      if (value->get<bool>()) opt->add_result("true");
    } else {
      opt->add_result(as_string(*value));
    }
    opt->run_callback();
  }
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Language subspace probing and projection interventions for activation dumps", "langsub"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string config_path;

  auto add_shared = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file; command-line flags win");
    sub->add_option("--input", cfg.inputs, "input dump(s) (.axd) or probe directory");
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_option("--layers", cfg.layers, "model layer indices, e.g. 10-19,22");
    sub->add_option("--rank", cfg.rank, "subspace rank r (default L-1)");
    sub->add_option("--lambda-mid", cfg.lambda_mid, "strength at the middle layers");
    sub->add_option("--lambda-high", cfg.lambda_high, "strength at the higher layers");
    sub->add_option("--model", cfg.model, "layer-range preset name");
    sub->add_option("--token-scope", cfg.token_scope, "prompt_tokens_only | all_tokens")
        ->check(CLI::IsMember({"prompt_tokens_only", "all_tokens"}));
    sub->add_option("--seed", cfg.seed, "random seed");
    sub->add_option("--center", cfg.center, "initial center convention")->check(CLI::IsMember({"rowmean", "width"}));
    sub->add_flag("--override-grid", cfg.override_grid, "allow strengths outside the studied grid");
    sub->add_option("--run-id", cfg.run_id, "output file prefix");
  };

  auto* synth = app.add_subcommand("synth", "write a planted-subspace dump with known ground truth");
  add_shared(synth);
  synth->add_option("--dim", cfg.d, "embedding width");
  synth->add_option("--langs", cfg.langs, "comma-separated language codes");
  synth->add_option("--per-lang", cfg.n, "samples per language");
  synth->add_option("--noise", cfg.noise, "Gaussian noise sigma");
  synth->add_option("--layer-count", cfg.layer_count, "captured layers when --layers is not given");
  synth->add_option("--zero-row", cfg.zero_row, "language whose mean equals the agnostic component");

  auto* probe = app.add_subcommand("probe", "decompose per-layer mean embeddings");
  add_shared(probe);

  auto* plan = app.add_subcommand("plan", "write a preset intervention plan");
  add_shared(plan);
  plan->add_option("--shared-basis", cfg.shared_basis, "use this layer's basis for every entry");

  auto* metrics = app.add_subcommand("metrics", "accuracy/fidelity tables from evaluation records");
  add_shared(metrics);
  metrics->add_option("--records", cfg.records, "records file(s), CSV or JSONL");
  metrics->add_option("--tags", cfg.tags, "x value per records file, comma-separated");
  metrics->add_option("--langs", cfg.langs, "language column order");

  auto* viz = app.add_subcommand("viz", "PCA scatter before/after ablation, or curves from a sweep CSV");
  add_shared(viz);
  viz->add_option("--lambda", cfg.lambda, "ablation strength for the scatter (default 1)");
  viz->add_option("--anchor", cfg.anchor, "anchor language for centroid_shift");
  viz->add_option("--basis", cfg.basis, "decomposition file to use instead of probing");
  viz->add_option("--curve", cfg.curve, "curve CSV to re-render");

  auto* sweep = app.add_subcommand("sweep", "strength or start-layer sweep");
  add_shared(sweep);
  sweep->add_option("--mode", cfg.mode, "strength | layers")->check(CLI::IsMember({"strength", "layers"}));
  sweep->add_option("--grid", cfg.grid, "grid values a,b,c or lo:step:hi");
  sweep->add_option("--lambda", cfg.lambda, "fixed strength for layer sweeps (default 0.2)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
    CLI::App* chosen = app.get_subcommands().front();
    if (!config_path.empty()) {
      nlohmann::json config;
      try {
        config = nlohmann::json::parse(bytes::read_text(config_path));
      } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Parse, config_path + ": " + e.what());
      }
      apply_config(*chosen, config);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  }

  try {
    CLI::App* chosen = app.get_subcommands().front();
    const auto name = chosen->get_name();
    if (name == "synth") return cmd_synth(cfg, out);
    if (name == "probe") return cmd_probe(cfg, out);
    if (name == "plan") return cmd_plan(cfg, out);
    if (name == "metrics") return cmd_metrics(cfg, out);
    if (name == "viz") return cmd_viz(cfg, out);
    if (name == "sweep") return cmd_sweep(cfg, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }
  return kUsage;
}

}  // namespace langsub::cli
