#pragma once

// Planted-structure data and an independent alternating-least-squares
// minimiser of ||M - a 1^T - S Gamma^T||_F subject to a orthogonal to S.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "langsub/container.hpp"
#include "langsub/error.hpp"
#include "langsub/subspace.hpp"
#include "langsub/tensor_io.hpp"

namespace langsub {

struct PlantedModel {
  int d = 0;
  int L = 0;
  int r = 0;
  Vector true_Ma;
  Matrix true_Ms;     // d x r orthonormal, columns orthogonal to true_Ma
  Matrix true_Gamma;  // L x r
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  // Column l is true_Ma + true_Ms * true_Gamma.row(l)^T.
  Matrix means() const { return true_Ma * Vector::Ones(L).transpose() + true_Ms * true_Gamma.transpose(); }
};

struct PlantOptions {
  std::vector<std::string> languages;         // defaults to l0, l1, ...
  std::optional<int> zero_gamma_row;          // language whose mean is exactly true_Ma
  double agnostic_scale = 1.0;
  double specific_scale = 1.0;
};

inline Matrix random_gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sigma = 1.0) {
  std::normal_distribution<double> dist(0.0, sigma);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

// Orthonormal basis of a random subspace of the given dimension.
inline Matrix random_orthonormal(std::mt19937_64& rng, Eigen::Index d, Eigen::Index k) {
  Eigen::HouseholderQR<Matrix> qr(random_gaussian(rng, d, k));
  return qr.householderQ() * Matrix::Identity(d, k);
}

// One planted model per captured layer; layer t uses seed + t.
inline std::pair<std::vector<PlantedModel>, ActivationDump> plant_layers(int d, int L, int r, double noise_sigma,
                                                                         int n_per_lang, std::uint64_t seed,
                                                                         int layers, const PlantOptions& opts = {}) {
  if (!(r >= 1 && r < L && L <= d - 1)) {
    fail(ErrorKind::InvalidArgument, "infeasible planted shape: need 1 <= r < L <= d-1 (d=" + std::to_string(d) +
                                         ", L=" + std::to_string(L) + ", r=" + std::to_string(r) + ")");
  }
  if (n_per_lang < 1) fail(ErrorKind::InvalidArgument, "n_per_lang must be >= 1");
  if (layers < 1) fail(ErrorKind::InvalidArgument, "layer count must be >= 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail(ErrorKind::InvalidArgument, "noise_sigma must be >= 0");
  if (opts.zero_gamma_row && (*opts.zero_gamma_row < 0 || *opts.zero_gamma_row >= L)) {
    fail(ErrorKind::InvalidArgument, "zero_gamma_row out of range");
  }
  std::vector<std::string> languages = opts.languages;
  if (languages.empty()) {
    for (int l = 0; l < L; ++l) languages.push_back("l" + std::to_string(l));
  }
  if (static_cast<int>(languages.size()) != L) fail(ErrorKind::InvalidArgument, "language list length differs from L");

  ActivationDump dump(static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(layers), languages,
                      std::vector<std::uint32_t>(static_cast<std::size_t>(L), static_cast<std::uint32_t>(n_per_lang)));
  std::vector<PlantedModel> models;
  for (int layer = 0; layer < layers; ++layer) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(layer));
    PlantedModel pm;
    pm.d = d;
    pm.L = L;
    pm.r = r;
    pm.noise_sigma = noise_sigma;
    pm.seed = seed + static_cast<std::uint64_t>(layer);
    // First column fixes the agnostic direction, the next r span Ms.
    const Matrix q = random_orthonormal(rng, d, r + 1);
    const double a_norm = opts.agnostic_scale * std::sqrt(static_cast<double>(d));
    pm.true_Ma = q.col(0) * a_norm;
    pm.true_Ms = q.middleCols(1, r);
    pm.true_Gamma = random_gaussian(rng, L, r, opts.specific_scale);
    if (opts.zero_gamma_row) pm.true_Gamma.row(*opts.zero_gamma_row).setZero();

    const Matrix means = pm.means();
    std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
    for (int l = 0; l < L; ++l) {
      for (int i = 0; i < n_per_lang; ++i) {
        auto s = dump.sample(static_cast<std::size_t>(layer), static_cast<std::size_t>(l), static_cast<std::size_t>(i));
        for (int k = 0; k < d; ++k) {
          const double eps = noise_sigma > 0.0 ? noise(rng) : 0.0;
          s[static_cast<std::size_t>(k)] = static_cast<float>(means(k, l) + eps);
        }
      }
    }
    models.push_back(std::move(pm));
  }
  return {std::move(models), std::move(dump)};
}

inline std::pair<PlantedModel, ActivationDump> plant(int d, int L, int r, double noise_sigma, int n_per_lang,
                                                     std::uint64_t seed, const PlantOptions& opts = {}) {
  auto [models, dump] = plant_layers(d, L, r, noise_sigma, n_per_lang, seed, 1, opts);
  return {std::move(models.front()), std::move(dump)};
}

// ---- ALS oracle -----------------------------------------------------------

struct OracleOptions {
  int starts = 8;
  int max_iterations = 20000;
  double tolerance = 1e-15;  // stop when the squared objective improves by less than this (relative)
  std::uint64_t seed = 0;
};

struct OracleResult {
  SubspaceDecomposition decomposition;
  double objective = 0.0;  // Frobenius residual of the best start
  int best_start = 0;
  bool converged = false;
  std::vector<double> history;  // per-iteration residual of the best start
};

namespace detail {

struct AlsRun {
  Vector a;
  Matrix S;
  Matrix G;
  double objective = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::vector<double> history;
};

inline double als_objective(const Matrix& M, const Vector& a, const Matrix& S, const Matrix& G) {
  return (M - a * Vector::Ones(M.cols()).transpose() - S * G.transpose()).norm();
}

// Removes the component of `a` inside Span(S) (absorbed into G so the product
// is unchanged) and re-orthonormalises S by QR.
inline void reorthogonalize(Vector& a, Matrix& S, Matrix& G) {
  const Eigen::Index L = G.rows();
  const Eigen::Index r = S.cols();
  Eigen::HouseholderQR<Matrix> qr(S);
  const Matrix Q = qr.householderQ() * Matrix::Identity(S.rows(), r);
  const Matrix R = Q.transpose() * S;  // S = Q R
  G = G * R.transpose();
  S = Q;
  const Vector c = S.transpose() * a;
  a -= S * c;
  G += Vector::Ones(L) * c.transpose();
}

inline AlsRun als_from(const Matrix& M, int r, std::mt19937_64& rng, const OracleOptions& opts) {
  const Eigen::Index d = M.rows();
  const Eigen::Index L = M.cols();
  const Vector ones = Vector::Ones(L);
  AlsRun run;
  run.S = random_orthonormal(rng, d, r);
  run.a = random_gaussian(rng, d, 1);
  run.G = Matrix::Zero(L, r);
  reorthogonalize(run.a, run.S, run.G);
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iterations; ++it) {
    // Coefficients given the column factors: least squares on [a S] with
    // the first coefficient column pinned to 1.
    const Matrix target = M - run.a * ones.transpose();
    run.G = (run.S.transpose() * run.S).ldlt().solve(run.S.transpose() * target).transpose();
    // Column factors given [1 G].
    Matrix Y(L, r + 1);
    Y.col(0) = ones;
    Y.rightCols(r) = run.G;
    const Matrix X = (Y.transpose() * Y).completeOrthogonalDecomposition().solve(Y.transpose() * M.transpose()).transpose();
    run.a = X.col(0);
    run.S = X.rightCols(r);
    reorthogonalize(run.a, run.S, run.G);
    const double obj = als_objective(M, run.a, run.S, run.G);
    run.history.push_back(obj);
    const double sq = obj * obj;
    if (prev - sq <= opts.tolerance * std::max(1.0, sq)) {
      run.converged = true;
      prev = sq;
      break;
    }
    prev = sq;
  }
  run.objective = std::sqrt(prev);
  return run;
}

}  // namespace detail

inline OracleResult oracle_decompose(const Matrix& M, int r, const OracleOptions& opts = {}) {
  const Eigen::Index d = M.rows();
  const Eigen::Index L = M.cols();
  if (d > 16 || L > 8) fail(ErrorKind::InvalidArgument, "oracle_decompose is limited to d <= 16, L <= 8");
  if (r < 1 || r >= L || d < r + 1) fail(ErrorKind::RankOutOfRange, "oracle rank out of range");
  if (!M.allFinite()) fail(ErrorKind::NonFinite, "oracle input has non-finite entries");

  OracleResult best;
  best.objective = std::numeric_limits<double>::infinity();
  for (int start = 0; start < std::max(1, opts.starts); ++start) {
    std::mt19937_64 rng(opts.seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(start + 1));
    auto run = detail::als_from(M, r, rng, opts);
    // (objective, start index) lexicographic: strict improvement only
    if (run.objective < best.objective) {
      best.objective = run.objective;
      best.best_start = start;
      best.converged = run.converged;
      best.history = std::move(run.history);
      auto& dec = best.decomposition;
      dec.Ma = run.a;
      dec.Ms = run.S;
      dec.Gamma = run.G;
      dec.rank = r;
      dec.residual = run.objective;
    }
  }
  return best;
}

// ---- planted truth serialization ------------------------------------------

inline constexpr std::string_view kPlantedMagic = "AXDP";

inline bytes::Buffer encode_planted(const std::vector<PlantedModel>& models) {
  container::Blob blob;
  blob.header["models"] = nlohmann::json::array();
  for (const auto& pm : models) {
    blob.header["models"].push_back(
        {{"d", pm.d}, {"L", pm.L}, {"r", pm.r}, {"noise_sigma", pm.noise_sigma}, {"seed", pm.seed}});
    container::append(blob.payload, pm.true_Ma);
    container::append(blob.payload, pm.true_Ms);
    container::append(blob.payload, pm.true_Gamma);
  }
  return container::encode(kPlantedMagic, blob);
}

inline std::vector<PlantedModel> decode_planted(std::span<const std::uint8_t> data) {
  auto blob = container::decode(kPlantedMagic, data);
  std::vector<PlantedModel> models;
  std::span<const float> rest(blob.payload);
  try {
    for (const auto& h : blob.header.at("models")) {
      PlantedModel pm;
      pm.d = h.at("d").get<int>();
      pm.L = h.at("L").get<int>();
      pm.r = h.at("r").get<int>();
      pm.noise_sigma = h.at("noise_sigma").get<double>();
      pm.seed = h.at("seed").get<std::uint64_t>();
      pm.true_Ma = container::take(rest, pm.d, 1);
      pm.true_Ms = container::take(rest, pm.d, pm.r);
      pm.true_Gamma = container::take(rest, pm.L, pm.r);
      models.push_back(std::move(pm));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("planted header: ") + e.what());
  }
  if (!rest.empty()) fail(ErrorKind::TrailingData, "planted payload longer than header shapes");
  return models;
}

}  // namespace langsub
