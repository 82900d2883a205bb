#pragma once

// Language subspace probing: per-language mean embeddings and the
// decomposition M ~ Ma 1^T + Ms Gamma^T with Span(Ma) orthogonal to Span(Ms).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "langsub/container.hpp"
#include "langsub/error.hpp"
#include "langsub/tensor_io.hpp"

namespace langsub {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct MeanEmbeddingMatrix {
  Matrix M;  // d x L, column l is the mean of language l
  std::vector<std::string> languages;
};

// Initial center for the first low-rank approximation. RowMean is the
// least-squares center (1/L) M 1; Width divides the column sum by d instead.
enum class CenterConvention { RowMean, Width };

inline std::string_view to_string(CenterConvention c) { return c == CenterConvention::RowMean ? "rowmean" : "width"; }

inline CenterConvention center_from_string(std::string_view s) {
  if (s == "rowmean") return CenterConvention::RowMean;
  if (s == "width") return CenterConvention::Width;
  fail(ErrorKind::InvalidArgument, "unknown center convention '" + std::string(s) + "' (expected rowmean|width)");
}

struct SubspaceDecomposition {
  Vector Ma;      // d, language-agnostic component
  Matrix Ms;      // d x r, orthonormal language-specific basis
  Matrix Gamma;   // L x r, per-language coordinates
  int rank = 0;
  double residual = 0.0;      // ||M - Ma 1^T - Ms Gamma^T||_F
  double spectral_gap = 0.0;  // sigma_r - sigma_{r+1} of the centered matrix
  bool tie_warning = false;   // spectral_gap below kTieGap
  CenterConvention center = CenterConvention::RowMean;
  std::vector<std::string> languages;

  Eigen::Index d() const { return Ma.size(); }
  Eigen::Index language_count() const { return Gamma.rows(); }
};

inline constexpr double kTieGap = 1e-9;

struct DecomposeOptions {
  CenterConvention center = CenterConvention::RowMean;
};

// Decomposition plus the intermediates of the probing procedure.
struct ProbeResult {
  SubspaceDecomposition decomposition;
  Vector initial_center;  // Ma'
  Matrix low_rank;        // M' = Ma' 1^T + Ms' Gamma'^T
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline MeanEmbeddingMatrix mean_embeddings(const ActivationDump& dump, std::size_t layer) {
  if (layer >= dump.layers()) {
    fail(ErrorKind::UnknownLayer, "layer position " + std::to_string(layer) + " not captured (dump has " +
                                      std::to_string(dump.layers()) + ")");
  }
  const auto d = static_cast<Eigen::Index>(dump.d());
  MeanEmbeddingMatrix out{Matrix::Zero(d, static_cast<Eigen::Index>(dump.language_count())), dump.languages()};
  for (std::size_t l = 0; l < dump.language_count(); ++l) {
    const auto n = dump.counts()[l];
    if (n == 0) fail(ErrorKind::EmptyLanguage, "language '" + dump.languages()[l] + "' has no samples");
    auto col = out.M.col(static_cast<Eigen::Index>(l));
    for (std::uint32_t i = 0; i < n; ++i) {
      auto s = dump.sample(layer, l, i);
      for (Eigen::Index k = 0; k < d; ++k) col(k) += static_cast<double>(s[static_cast<std::size_t>(k)]);
    }
    col /= static_cast<double>(n);
  }
  if (!all_finite(out.M)) fail(ErrorKind::NonFinite, "mean embedding overflowed");
  return out;
}

namespace detail {

// Flip each column so that its largest-magnitude entry (first on ties) is
// positive; the matching coefficient column flips with it.
inline void fix_signs(Matrix& basis, Matrix& coeffs) {
  for (Eigen::Index j = 0; j < basis.cols(); ++j) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < basis.rows(); ++i) {
      if (std::abs(basis(i, j)) > best) {
        best = std::abs(basis(i, j));
        arg = i;
      }
    }
    if (basis(arg, j) < 0.0) {
      basis.col(j) *= -1.0;
      coeffs.col(j) *= -1.0;
    }
  }
}

// Orthonormalise the columns of `basis` against `anchor` (if non-zero) and
// each other. Columns whose singular value is negligible are replaced by the
// first coordinate vector that survives the projection.
inline void complete_basis(Matrix& basis, const Vector& anchor, const Vector& sigma, double tiny) {
  const Eigen::Index d = basis.rows();
  const double anchor_norm = anchor.norm();
  const Vector a_hat = anchor_norm > 0.0 ? Vector(anchor / anchor_norm) : Vector::Zero(d);
  auto project_out = [&](Vector v, Eigen::Index upto) {
    for (int pass = 0; pass < 2; ++pass) {
      if (anchor_norm > 0.0) v -= a_hat * a_hat.dot(v);
      for (Eigen::Index k = 0; k < upto; ++k) v -= basis.col(k) * basis.col(k).dot(v);
    }
    return v;
  };
  Eigen::Index next_coord = 0;
  for (Eigen::Index j = 0; j < basis.cols(); ++j) {
    Vector v = project_out(basis.col(j), j);
    if (sigma(j) <= tiny || v.norm() < 0.5) {
      for (; next_coord < d; ++next_coord) {
        v = project_out(Vector::Unit(d, next_coord), j);
        if (v.norm() > 1e-3) {
          ++next_coord;
          break;
        }
      }
    }
    basis.col(j) = v / v.norm();
  }
}

}  // namespace detail

// Language subspace probing:
//  1. Ma' = center of M (row mean by default)
//  2. Ms', Gamma' = top-r SVD of M - Ma' 1^T
//  3. M' = Ma' 1^T + Ms' Gamma'^T
//  4. v = (M'^+)^T 1_L, Ma = v / ||v||^2
//  5. Ms, Gamma = top-r SVD of M' - Ma 1^T
inline ProbeResult probe_subspace(const MeanEmbeddingMatrix& mean, int r, const DecomposeOptions& opts = {}) {
  const Matrix& M = mean.M;
  const Eigen::Index d = M.rows();
  const Eigen::Index L = M.cols();
  if (r < 1 || r >= L) {
    fail(ErrorKind::RankOutOfRange, "rank r=" + std::to_string(r) + " must satisfy 1 <= r < L=" + std::to_string(L));
  }
  if (d < r + 1) fail(ErrorKind::RankOutOfRange, "d=" + std::to_string(d) + " must be at least r+1");
  if (!all_finite(M)) fail(ErrorKind::NonFinite, "mean embedding matrix has non-finite entries");

  const Vector ones = Vector::Ones(L);
  ProbeResult out;

  // 1-3: low-rank approximation around the initial center.
  const double scale = opts.center == CenterConvention::RowMean ? 1.0 / static_cast<double>(L) : 1.0 / static_cast<double>(d);
  out.initial_center = scale * (M * ones);
  const Matrix centered = M - out.initial_center * ones.transpose();
  Eigen::JacobiSVD<Matrix> svd1(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s1 = svd1.singularValues();
  const double sigma_next = r < s1.size() ? s1(r) : 0.0;
  const double gap = s1(r - 1) - sigma_next;
  out.low_rank = out.initial_center * ones.transpose() +
                 svd1.matrixU().leftCols(r) * s1.head(r).asDiagonal() * svd1.matrixV().leftCols(r).transpose();

  // 4: force orthogonality through the pseudo-inverse of M'.
  Eigen::JacobiSVD<Matrix> svd2(out.low_rank, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s2 = svd2.singularValues();
  const double smax = s2.size() > 0 ? s2(0) : 0.0;
  if (!(smax > 0.0)) fail(ErrorKind::Degenerate, "low-rank reconstruction is zero; agnostic direction undefined");
  Eigen::Index keep = 0;
  while (keep < std::min<Eigen::Index>(r + 1, s2.size()) && s2(keep) > smax * 1e-13) ++keep;
  const Vector row_coords = svd2.matrixV().leftCols(keep).transpose() * ones;
  if (row_coords.norm() <= 1e-10 * std::sqrt(static_cast<double>(L))) {
    fail(ErrorKind::Degenerate, "all-ones vector is outside the row space of M'; agnostic direction undefined");
  }
  const Vector v = svd2.matrixU().leftCols(keep) * (row_coords.array() / s2.head(keep).array()).matrix();
  const double vv = v.squaredNorm();
  if (!(vv > 0.0) || !std::isfinite(vv)) fail(ErrorKind::Degenerate, "pseudo-inverse image of 1 vanished");

  auto& dec = out.decomposition;
  dec.Ma = v / vv;

  // 5: language-specific basis from what remains.
  const Matrix rest = out.low_rank - dec.Ma * ones.transpose();
  Eigen::JacobiSVD<Matrix> svd3(rest, Eigen::ComputeThinU | Eigen::ComputeThinV);
  dec.Ms = svd3.matrixU().leftCols(r);
  detail::complete_basis(dec.Ms, dec.Ma, svd3.singularValues().head(r), smax * 1e-12);
  dec.Gamma = rest.transpose() * dec.Ms;
  detail::fix_signs(dec.Ms, dec.Gamma);

  dec.rank = r;
  dec.spectral_gap = gap;
  dec.tie_warning = gap < kTieGap;
  dec.center = opts.center;
  dec.languages = mean.languages;
  dec.residual = (M - dec.Ma * ones.transpose() - dec.Ms * dec.Gamma.transpose()).norm();
  return out;
}

inline SubspaceDecomposition decompose(const MeanEmbeddingMatrix& mean, int r, const DecomposeOptions& opts = {}) {
  return probe_subspace(mean, r, opts).decomposition;
}

inline SubspaceDecomposition decompose(const Matrix& M, int r, const DecomposeOptions& opts = {}) {
  return decompose(MeanEmbeddingMatrix{M, {}}, r, opts);
}

// ||M'^T Ma - ||Ma||^2 1||_inf. Vanishes when Ma is orthogonal to the
// language-specific part of M'.
inline double verify_orthogonality_identity(const SubspaceDecomposition& dec, const Matrix& low_rank) {
  const Vector lhs = low_rank.transpose() * dec.Ma;
  return (lhs.array() - dec.Ma.squaredNorm()).abs().maxCoeff();
}

inline double reconstruction_error(const Matrix& M, const SubspaceDecomposition& dec) {
  if (M.rows() != dec.Ma.size() || M.cols() != dec.Gamma.rows() || dec.Ms.cols() != dec.Gamma.cols() ||
      dec.Ms.rows() != M.rows()) {
    fail(ErrorKind::ShapeMismatch, "decomposition shapes do not match M");
  }
  return (M - dec.Ma * Vector::Ones(M.cols()).transpose() - dec.Ms * dec.Gamma.transpose()).norm();
}

// max |M^T M - I| over all entries.
inline double orthonormality_error(const Matrix& basis) {
  return (basis.transpose() * basis - Matrix::Identity(basis.cols(), basis.cols())).cwiseAbs().maxCoeff();
}

inline void require_orthonormal(const Matrix& basis, std::string_view name, double tol = 1e-6) {
  if (basis.cols() == 0) return;
  if (!basis.allFinite() || orthonormality_error(basis) > tol) {
    fail(ErrorKind::NotOrthonormal, std::string(name) + " does not have orthonormal columns");
  }
}

// Principal angles between Span(A) and Span(B), descending, in [0, pi/2].
// Cosines come from sigma(A^T B); angles below pi/4 are taken from the sines
// sigma(B - A A^T B) where arccos loses precision.
inline std::vector<double> principal_angles(const Matrix& A, const Matrix& B) {
  if (A.rows() != B.rows() || A.cols() != B.cols()) fail(ErrorKind::ShapeMismatch, "principal_angles needs equal shapes");
  require_orthonormal(A, "A");
  require_orthonormal(B, "B");
  const Eigen::Index k = A.cols();
  const Matrix cross = A.transpose() * B;
  Eigen::JacobiSVD<Matrix> cos_svd(cross);
  Eigen::JacobiSVD<Matrix> sin_svd(B - A * cross);
  const Vector cosines = cos_svd.singularValues();  // descending
  const Vector sines = sin_svd.singularValues();    // descending
  std::vector<double> angles(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) {
    // i-th largest cosine pairs with the i-th smallest sine
    const double c = std::clamp(cosines(i), 0.0, 1.0);
    const double s = std::clamp(sines(k - 1 - i), 0.0, 1.0);
    angles[static_cast<std::size_t>(i)] = c > std::sqrt(0.5) ? std::asin(s) : std::acos(c);
  }
  std::ranges::sort(angles, std::greater<>());
  return angles;
}

inline double max_principal_angle(const Matrix& A, const Matrix& B) {
  auto a = principal_angles(A, B);
  return a.empty() ? 0.0 : a.front();
}

// ---- serialization --------------------------------------------------------

inline constexpr std::string_view kDecompositionMagic = "AXDS";

inline bytes::Buffer encode_decomposition(const SubspaceDecomposition& dec, std::int64_t layer = -1) {
  container::Blob blob;
  blob.header = {
      {"d", dec.d()},
      {"L", dec.language_count()},
      {"r", dec.rank},
      {"languages", dec.languages},
      {"residual", dec.residual},
      {"spectral_gap", dec.spectral_gap},
      {"tie_warning", dec.tie_warning},
      {"center", std::string(to_string(dec.center))},
      {"layer", layer},
  };
  container::append(blob.payload, dec.Ma);
  container::append(blob.payload, dec.Ms);
  container::append(blob.payload, dec.Gamma);
  return container::encode(kDecompositionMagic, blob);
}

struct StoredDecomposition {
  SubspaceDecomposition decomposition;
  std::int64_t layer = -1;
};

inline StoredDecomposition decode_decomposition(std::span<const std::uint8_t> data) {
  auto blob = container::decode(kDecompositionMagic, data);
  StoredDecomposition out;
  auto& dec = out.decomposition;
  Eigen::Index d = 0, L = 0;
  try {
    d = blob.header.at("d").get<Eigen::Index>();
    L = blob.header.at("L").get<Eigen::Index>();
    dec.rank = blob.header.at("r").get<int>();
    dec.languages = blob.header.at("languages").get<std::vector<std::string>>();
    dec.residual = blob.header.at("residual").get<double>();
    dec.spectral_gap = blob.header.at("spectral_gap").get<double>();
    dec.tie_warning = blob.header.at("tie_warning").get<bool>();
    dec.center = center_from_string(blob.header.at("center").get<std::string>());
    out.layer = blob.header.at("layer").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("decomposition header: ") + e.what());
  }
  if (d <= 0 || L <= 0 || dec.rank <= 0) fail(ErrorKind::Parse, "decomposition header has non-positive shape");
  const auto expected = static_cast<std::size_t>(d + d * dec.rank + L * dec.rank);
  if (blob.payload.size() != expected) {
    fail(ErrorKind::ShapeMismatch, "decomposition payload has " + std::to_string(blob.payload.size()) +
                                       " floats, header implies " + std::to_string(expected));
  }
  std::span<const float> rest(blob.payload);
  dec.Ma = container::take(rest, d, 1);
  dec.Ms = container::take(rest, d, dec.rank);
  dec.Gamma = container::take(rest, L, dec.rank);
  return out;
}

inline void save_decomposition(const std::filesystem::path& path, const SubspaceDecomposition& dec,
                               std::int64_t layer = -1) {
  bytes::write_file(path, encode_decomposition(dec, layer));
}

inline StoredDecomposition load_decomposition(const std::filesystem::path& path) {
  return decode_decomposition(bytes::read_file(path));
}

}  // namespace langsub
