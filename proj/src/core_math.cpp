#include "findml/core_math.hpp"

#include <limits>
#include <string>

#include "findml/random.hpp"

namespace findml {

EmbeddingMatrix::EmbeddingMatrix(Matrix rows, bool normalized)
    : rows_(std::move(rows)), normalized_(normalized) {
  require(rows_.rows() >= 1, ErrorCode::InvalidArgument, "embedding needs at least one row");
  require(rows_.cols() >= 2, ErrorCode::InvalidArgument, "embedding dimension must be >= 2");
  if (normalized_) {
    for (Index i = 0; i < rows_.rows(); ++i) {
      require(std::abs(rows_.row(i).norm() - 1.0) <= 1e-9, ErrorCode::InvalidArgument,
              "row " + std::to_string(i) + " is not unit norm");
    }
  }
}

EmbeddingMatrix EmbeddingMatrix::select(const IndexList& indices) const {
  Matrix out(static_cast<Index>(indices.size()), rows_.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) out.row(static_cast<Index>(r)) = rows_.row(indices[r]);
  EmbeddingMatrix e;
  e.rows_ = std::move(out);
  e.normalized_ = normalized_;
  return e;
}

std::vector<IndexList> knn_indices(const DistanceMatrix& dist, int k, bool exclude_self) {
  const Index n = dist.size();
  require(k >= 1, ErrorCode::InvalidArgument, "k must be positive");
  require(exclude_self ? k < n : k <= n, ErrorCode::KTooLarge,
          "k=" + std::to_string(k) + " with n=" + std::to_string(n));

  const bool asc = dist.ascending();
  std::vector<IndexList> out(static_cast<std::size_t>(n));
  IndexList candidates;
  candidates.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    candidates.clear();
    for (Index j = 0; j < n; ++j) {
      if (!(exclude_self && j == i)) candidates.push_back(static_cast<int>(j));
    }
    auto closer = [&](int a, int b) {
      const double da = dist(i, a);
      const double db = dist(i, b);
      if (da != db) return asc ? da < db : da > db;
      return a < b;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(), closer);
    out[i].assign(candidates.begin(), candidates.begin() + k);
  }
  return out;
}

namespace {

IndexList kmeanspp_seed(const Matrix& rows, int k, Rng& rng) {
  const Index n = rows.rows();
  IndexList chosen;
  chosen.push_back(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n))));
  Vector best = (rows.rowwise() - rows.row(chosen[0])).rowwise().squaredNorm();
  while (static_cast<int>(chosen.size()) < k) {
    const double total = best.sum();
    int pick = -1;
    if (total > 0.0) {
      double u = uniform_unit(rng) * total;
      for (Index i = 0; i < n; ++i) {
        if (best(i) <= 0.0) continue;
        pick = static_cast<int>(i);
        u -= best(i);
        if (u < 0.0) break;
      }
    } else {
      // Every point coincides with a center; take any unused index.
      IndexList unused;
      for (Index i = 0; i < n; ++i) {
        if (std::find(chosen.begin(), chosen.end(), static_cast<int>(i)) == chosen.end()) {
          unused.push_back(static_cast<int>(i));
        }
      }
      pick = unused[uniform_index(rng, unused.size())];
    }
    chosen.push_back(pick);
    best = best.cwiseMin((rows.rowwise() - rows.row(pick)).rowwise().squaredNorm());
  }
  return chosen;
}

double assign(const Matrix& rows, const Matrix& centers, IndexList& labels, Vector& sq) {
  double inertia = 0.0;
  for (Index i = 0; i < rows.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < centers.rows(); ++c) {
      const double d = (rows.row(i) - centers.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[i] = best;
    sq(i) = best_d;
    inertia += best_d;
  }
  return inertia;
}

}  // namespace

KMeansResult kmeans(const Matrix& rows, int k, std::uint64_t seed, int max_iterations) {
  const Index n = rows.rows();
  require(k >= 1 && k <= n, ErrorCode::InvalidArgument,
          "kmeans needs 1 <= k <= n (k=" + std::to_string(k) + ")");
  Rng rng(seed);

  KMeansResult res;
  res.centers.resize(k, rows.cols());
  const IndexList init = kmeanspp_seed(rows, k, rng);
  for (int c = 0; c < k; ++c) res.centers.row(c) = rows.row(init[c]);

  res.labels.assign(static_cast<std::size_t>(n), -1);
  IndexList next(static_cast<std::size_t>(n), 0);
  Vector sq(n);
  for (int it = 0; it < max_iterations; ++it) {
    const double inertia = assign(rows, res.centers, next, sq);
    res.inertia_history.push_back(inertia);
    res.iterations = it + 1;
    if (next == res.labels) break;
    res.labels = next;

    Matrix sums = Matrix::Zero(k, rows.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(res.labels[i]) += rows.row(i);
      ++counts[res.labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        res.centers.row(c) = sums.row(c) / counts[c];
        continue;
      }
      // Re-seed the empty cluster at the worst-served point, then stop that
      // point from being chosen again this round.
      Index far = 0;
      sq.maxCoeff(&far);
      res.centers.row(c) = rows.row(far);
      sq(far) = 0.0;
    }
  }
  return res;
}

}  // namespace findml
