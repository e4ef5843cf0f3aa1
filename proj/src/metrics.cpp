#include "findml/metrics.hpp"

#include <cmath>
#include <set>

#include "findml/random.hpp"

namespace findml {

namespace {

IndexList all_rows(std::size_t n) {
  IndexList out(n);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

double entropy(const std::map<int, double>& counts, double total) {
  double h = 0.0;
  for (const auto& [k, c] : counts) {
    if (c > 0.0) h -= (c / total) * std::log(c / total);
  }
  return h;
}

std::vector<Pair> subsample(std::vector<Pair> pairs, std::size_t cap, Rng& rng) {
  if (pairs.size() <= cap) return pairs;
  // Partial Fisher-Yates, then restore index order.
  for (std::size_t i = 0; i < cap; ++i) {
    std::swap(pairs[i], pairs[i + uniform_index(rng, pairs.size() - i)]);
  }
  pairs.resize(cap);
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  return pairs;
}

}  // namespace

std::vector<bool> neighbor_hits(const DistanceMatrix& dist, std::span<const int> labels, int k) {
  require(static_cast<Index>(labels.size()) == dist.size(), ErrorCode::DimensionMismatch,
          "labels and distance matrix differ in size");
  const std::vector<IndexList> nn = knn_indices(dist, k, true);
  std::vector<bool> hits(labels.size(), false);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (int j : nn[i]) {
      if (labels[static_cast<std::size_t>(j)] == labels[i]) {
        hits[i] = true;
        break;
      }
    }
  }
  return hits;
}

double recall_at_k(const DistanceMatrix& dist, std::span<const int> labels, int k, const IndexList* restrict_to) {
  const std::vector<bool> hits = neighbor_hits(dist, labels, k);
  const IndexList rows = restrict_to ? *restrict_to : all_rows(labels.size());
  require(!rows.empty(), ErrorCode::InvalidArgument, "recall over an empty query set");
  std::size_t good = 0;
  for (int r : rows) good += hits.at(static_cast<std::size_t>(r)) ? 1 : 0;
  return static_cast<double>(good) / static_cast<double>(rows.size());
}

double recall_at_k(const EmbeddingMatrix& emb, std::span<const int> labels, int k, const IndexList* restrict_to) {
  return recall_at_k(pairwise_distances(emb, DistanceMode::Euclidean), labels, k, restrict_to);
}

double nmi(std::span<const int> clusters, std::span<const int> classes, const IndexList* restrict_to, NmiForm form) {
  require(clusters.size() == classes.size(), ErrorCode::DimensionMismatch, "cluster and class labels differ in length");
  const IndexList rows = restrict_to ? *restrict_to : all_rows(classes.size());
  if (rows.empty()) return 0.0;
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pc;
  std::map<int, double> py;
  for (int r : rows) {
    const int c = clusters[static_cast<std::size_t>(r)];
    const int y = classes[static_cast<std::size_t>(r)];
    joint[{c, y}] += 1.0;
    pc[c] += 1.0;
    py[y] += 1.0;
  }
  const double n = static_cast<double>(rows.size());
  double mi = 0.0;
  for (const auto& [cy, count] : joint) {
    mi += (count / n) * std::log(count * n / (pc[cy.first] * py[cy.second]));
  }
  const double denom = entropy(pc, n) + entropy(py, n);
  if (denom <= 0.0) return 0.0;
  const double scale = form == NmiForm::Symmetric ? 2.0 : 1.0;
  return std::max(0.0, scale * mi / denom);
}

double u_kl(const Matrix& rows, const IndexList* restrict_to) {
  const SpectralProfile sp =
      restrict_to ? singular_values(rows(*restrict_to, Eigen::all)) : singular_values(rows);
  const Vector& s = sp.normalized_distribution;
  const double u = 1.0 / static_cast<double>(s.size());
  double kl = 0.0;
  for (Index i = 0; i < s.size(); ++i) kl += u * std::log(u / s(i));
  return kl;
}

PairIndex build_pair_index(std::span<const int> classes, std::span<const int> attributes,
                           std::optional<int> attribute_value, std::size_t max_pairs, std::uint64_t seed) {
  require(!attribute_value || attributes.size() == classes.size(), ErrorCode::DimensionMismatch,
          "attributes and classes differ in length");
  PairIndex idx;
  idx.attribute = attribute_value;
  const int n = static_cast<int>(classes.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (attribute_value && attributes[static_cast<std::size_t>(i)] != *attribute_value &&
          attributes[static_cast<std::size_t>(j)] != *attribute_value) {
        continue;
      }
      (classes[static_cast<std::size_t>(i)] == classes[static_cast<std::size_t>(j)] ? idx.positives : idx.negatives)
          .push_back({i, j});
    }
  }
  Rng rng(seed);
  idx.positives = subsample(std::move(idx.positives), max_pairs, rng);
  idx.negatives = subsample(std::move(idx.negatives), max_pairs, rng);
  return idx;
}

Alignment alignment_expectations(const Matrix& rows, const PairIndex& pairs) {
  require(!pairs.positives.empty(), ErrorCode::EmptyPairSet, "positive");
  require(!pairs.negatives.empty(), ErrorCode::EmptyPairSet, "negative");
  auto mean_sq = [&](const std::vector<Pair>& list) {
    double s = 0.0;
    for (const Pair& p : list) s += (rows.row(p.i) - rows.row(p.j)).squaredNorm();
    return s / static_cast<double>(list.size());
  };
  return {mean_sq(pairs.positives), mean_sq(pairs.negatives)};
}

KMeansResult cluster_for_nmi(const EmbeddingMatrix& emb, std::span<const int> classes, std::uint64_t seed) {
  const std::set<int> distinct(classes.begin(), classes.end());
  return kmeans(emb, static_cast<int>(distinct.size()), seed);
}

MetricReport evaluate_embedding(const EmbeddingMatrix& emb, std::span<const int> classes,
                                const std::vector<int>& ks, std::uint64_t seed) {
  MetricReport r;
  const DistanceMatrix dist = pairwise_distances(emb, DistanceMode::Euclidean);
  for (int k : ks) r.recall_at_k[k] = recall_at_k(dist, classes, k);
  r.nmi = nmi(cluster_for_nmi(emb, classes, seed).labels, classes);
  r.u_kl = u_kl(emb);
  const Alignment a = alignment_expectations(emb.values(), build_pair_index(classes, {}, std::nullopt,
                                                                             kDefaultMaxPairs, seed));
  r.alignment_pos = a.positive;
  r.alignment_neg = a.negative;
  return r;
}

}  // namespace findml
