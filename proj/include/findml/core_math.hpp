#pragma once

// Dense primitives shared by the rest of the library: hypersphere
// normalization, pairwise distances, exact kNN, singular values and k-means.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "findml/error.hpp"

namespace findml {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using IndexList = std::vector<int>;

inline constexpr double kZeroRowNorm = 1e-12;
inline constexpr double kSpectralFloor = 1e-12;

/// n x D rows on (or off) the unit hypersphere.
///
/// The `normalized` flag is a promise checked at construction: every row
/// has unit Euclidean norm to within 1e-9.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(Matrix rows, bool normalized = false);

  const Matrix& values() const noexcept { return rows_; }
  Index rows() const noexcept { return rows_.rows(); }
  Index dim() const noexcept { return rows_.cols(); }
  bool normalized() const noexcept { return normalized_; }
  auto row(Index i) const { return rows_.row(i); }

  /// Rows at `indices`, in order.
  EmbeddingMatrix select(const IndexList& indices) const;

 private:
  Matrix rows_;
  bool normalized_ = false;
};

template <class Derived>
EmbeddingMatrix normalize_to_hypersphere(const Eigen::MatrixBase<Derived>& raw) {
  Matrix out = raw.template cast<double>();
  for (Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    require(norm >= kZeroRowNorm, ErrorCode::ZeroRow, "row " + std::to_string(i));
    out.row(i) /= norm;
  }
  return EmbeddingMatrix(std::move(out), true);
}

enum class DistanceMode { Euclidean, SquaredEuclidean, CosineSimilarity };

struct DistanceMatrix {
  Matrix values;
  DistanceMode mode = DistanceMode::Euclidean;

  double operator()(Index i, Index j) const { return values(i, j); }
  Index size() const noexcept { return values.rows(); }
  /// True when smaller entries mean closer points.
  bool ascending() const noexcept { return mode != DistanceMode::CosineSimilarity; }
};

template <class DerivedA, class DerivedB>
double pair_distance(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                     DistanceMode mode) {
  switch (mode) {
    case DistanceMode::Euclidean: return std::sqrt((a - b).squaredNorm());
    case DistanceMode::SquaredEuclidean: return (a - b).squaredNorm();
    case DistanceMode::CosineSimilarity: return a.dot(b);
  }
  return 0.0;
}

/// Full symmetric matrix of per-pair distances between the rows of `rows`.
/// Each entry is evaluated independently by `pair_distance`, so results do not
/// depend on evaluation order.
template <class Derived>
DistanceMatrix pairwise_distances(const Eigen::MatrixBase<Derived>& rows, DistanceMode mode) {
  const Index n = rows.rows();
  DistanceMatrix out{Matrix(n, n), mode};
  for (Index i = 0; i < n; ++i) {
    out.values(i, i) = mode == DistanceMode::CosineSimilarity ? rows.row(i).squaredNorm() : 0.0;
    for (Index j = i + 1; j < n; ++j) {
      const double d = pair_distance(rows.row(i), rows.row(j), mode);
      out.values(i, j) = d;
      out.values(j, i) = d;
    }
  }
  return out;
}

inline DistanceMatrix pairwise_distances(const EmbeddingMatrix& emb, DistanceMode mode) {
  return pairwise_distances(emb.values(), mode);
}

/// For every row, the indices of its k closest rows. Ties go to the lower
/// index. With `exclude_self` the row itself is never returned.
std::vector<IndexList> knn_indices(const DistanceMatrix& dist, int k, bool exclude_self);

/// Singular values of an (uncentered) matrix, descending, plus the
/// floored and renormalized distribution used by the uniformity score.
struct SpectralProfile {
  Vector singular_values;
  Vector normalized_distribution;
};

/// Computed from the eigenvalues of the D x D Gram matrix. When n < D the
/// trailing D - n values are exact zeros.
template <class Derived>
SpectralProfile singular_values(const Eigen::MatrixBase<Derived>& m) {
  const Index n = m.rows();
  const Index dim = m.cols();
  require(n >= 1, ErrorCode::InvalidArgument, "singular_values needs at least one row");
  const Matrix gram = m.transpose() * m;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(gram, Eigen::EigenvaluesOnly);
  require(solver.info() == Eigen::Success, ErrorCode::NumericalFailure,
          "Gram eigendecomposition did not converge");

  std::vector<double> values(static_cast<std::size_t>(dim));
  for (Index i = 0; i < dim; ++i) values[i] = std::sqrt(std::max(0.0, solver.eigenvalues()(i)));
  std::sort(values.begin(), values.end(), std::greater<>());
  for (Index i = std::min(n, dim); i < dim; ++i) values[i] = 0.0;

  SpectralProfile out;
  out.singular_values = Eigen::Map<Vector>(values.data(), dim);
  out.normalized_distribution = out.singular_values.cwiseMax(kSpectralFloor);
  out.normalized_distribution /= out.normalized_distribution.sum();
  return out;
}

struct KMeansResult {
  IndexList labels;
  Matrix centers;
  /// Inertia after every assignment step; non-increasing.
  std::vector<double> inertia_history;
  int iterations = 0;

  double inertia() const { return inertia_history.empty() ? 0.0 : inertia_history.back(); }
};

inline constexpr int kKMeansMaxIterations = 300;

/// Lloyd's algorithm with k-means++ seeding. Deterministic per seed; an
/// empty cluster is re-seeded at the point farthest from its center.
KMeansResult kmeans(const Matrix& rows, int k, std::uint64_t seed,
                    int max_iterations = kKMeansMaxIterations);

inline KMeansResult kmeans(const EmbeddingMatrix& emb, int k, std::uint64_t seed) {
  return kmeans(emb.values(), k, seed);
}

}  // namespace findml
