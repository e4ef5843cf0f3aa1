#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "findml/core_math.hpp"
#include "findml/losses.hpp"

namespace findml {

/// For every row, whether its k nearest neighbours (self excluded, ties to
/// the lower index) contain a same-class row. Shared by recall@k and the
/// per-subgroup k-close profile.
std::vector<bool> neighbor_hits(const DistanceMatrix& dist, std::span<const int> labels, int k);

/// Fraction of query rows with a same-class row among their k nearest
/// neighbours. Neighbours always range over every row; `restrict_to` only
/// selects which rows are scored.
double recall_at_k(const DistanceMatrix& dist, std::span<const int> labels, int k,
                   const IndexList* restrict_to = nullptr);
double recall_at_k(const EmbeddingMatrix& emb, std::span<const int> labels, int k,
                   const IndexList* restrict_to = nullptr);

enum class NmiForm {
  Symmetric,  // 2 I / (H(Y) + H(C))
  Halved,     // I / (H(Y) + H(C)), the per-subgroup variant without the factor 2
};

/// Normalized mutual information in nats over the rows in `restrict_to`
/// (all rows if null). 0/0 is 0.
double nmi(std::span<const int> clusters, std::span<const int> classes, const IndexList* restrict_to = nullptr,
           NmiForm form = NmiForm::Symmetric);

/// KL(uniform_D || normalized singular-value spectrum) of the selected rows.
double u_kl(const Matrix& rows, const IndexList* restrict_to = nullptr);
inline double u_kl(const EmbeddingMatrix& emb, const IndexList* restrict_to = nullptr) {
  return u_kl(emb.values(), restrict_to);
}

inline constexpr std::size_t kDefaultMaxPairs = 200000;

struct PairIndex {
  std::vector<Pair> positives;
  std::vector<Pair> negatives;
  std::optional<int> attribute;
};

/// All i<j pairs split by class agreement. With an attribute filter a pair
/// is kept when either endpoint carries the value. A list longer than
/// `max_pairs` is replaced by a uniform subsample (kept in index order).
PairIndex build_pair_index(std::span<const int> classes, std::span<const int> attributes,
                           std::optional<int> attribute_value = std::nullopt,
                           std::size_t max_pairs = kDefaultMaxPairs, std::uint64_t seed = 0);

struct Alignment {
  double positive = 0.0;
  double negative = 0.0;
};

/// Mean squared Euclidean distance over the positive and negative pairs.
Alignment alignment_expectations(const Matrix& rows, const PairIndex& pairs);

struct MetricReport {
  std::map<int, double> recall_at_k;
  double nmi = 0.0;
  double u_kl = 0.0;
  double alignment_pos = 0.0;
  double alignment_neg = 0.0;
};

/// k-means with one cluster per distinct class in `classes`.
KMeansResult cluster_for_nmi(const EmbeddingMatrix& emb, std::span<const int> classes, std::uint64_t seed);

MetricReport evaluate_embedding(const EmbeddingMatrix& emb, std::span<const int> classes,
                                const std::vector<int>& ks, std::uint64_t seed);

}  // namespace findml
