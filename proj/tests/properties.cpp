// Randomized invariants, one entry per module property.

#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

#include "checks.hpp"
#include "findml/data.hpp"
#include "findml/downstream.hpp"
#include "findml/fairness.hpp"
#include "findml/metrics.hpp"
#include "findml/mining.hpp"
#include "findml/random.hpp"
#include "oracles.hpp"

namespace findml::checks {

namespace {

using Fn = std::function<CheckResult(int, std::uint64_t)>;

CheckResult ok(int cases) { return {true, std::to_string(cases) + " cases"}; }
CheckResult fail(int at, const std::string& why) { return {false, "case " + std::to_string(at) + ": " + why}; }

int irange(Rng& rng, int lo, int hi) { return lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1))); }

Matrix gaussian(Index r, Index c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

Matrix unit_rows(Index r, Index c, Rng& rng) { return normalize_to_hypersphere(gaussian(r, c, rng)).values(); }

Matrix orthogonal(Index d, Rng& rng) { return Eigen::HouseholderQR<Matrix>(gaussian(d, d, rng)).householderQ(); }

IndexList random_labels(int n, int values, Rng& rng) {
  IndexList l(static_cast<std::size_t>(n));
  for (int& v : l) v = irange(rng, 0, values - 1);
  return l;
}

IndexList permutation(int n, Rng& rng) {
  IndexList p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  shuffle_in_place(p, rng);
  return p;
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b))); }

// Labels where every value occurs at least twice and at least two values exist.
IndexList paired_labels(int b, Rng& rng) {
  IndexList l;
  const int classes = irange(rng, 2, std::max(2, b / 2));
  for (int i = 0; i < b; ++i) l.push_back(i < 2 * classes ? i / 2 : irange(rng, 0, classes - 1));
  shuffle_in_place(l, rng);
  return l;
}

Dataset small_dataset(Rng& rng, int classes, int per_class) {
  SyntheticSpec s;
  s.classes = classes;
  s.per_class = per_class;
  s.feature_dim = 4;
  s.attribute_correlation = uniform_unit(rng);
  s.seed = rng();
  return split_per_class(generate_synthetic(s), 0.5, rng());
}

// --- core_math ---------------------------------------------------------------

CheckResult triangle_inequality(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const Matrix m = gaussian(irange(rng, 3, 10), irange(rng, 2, 6), rng);
    const DistanceMatrix d = pairwise_distances(m, DistanceMode::Euclidean);
    for (Index i = 0; i < d.size(); ++i) {
      if (d(i, i) != 0.0) return fail(t, "nonzero diagonal");
      for (Index j = 0; j < d.size(); ++j) {
        if (d(i, j) != d(j, i)) return fail(t, "asymmetric");
        for (Index k = 0; k < d.size(); ++k)
          if (d(i, k) > d(i, j) + d(j, k) + 1e-9) return fail(t, "triangle violated");
      }
    }
    const DistanceMatrix du = pairwise_distances(normalize_to_hypersphere(m), DistanceMode::Euclidean);
    if (du.values.maxCoeff() > 2.0 + 1e-12) return fail(t, "unit-row distance above 2");
  }
  return ok(cases);
}

CheckResult unit_norm_rows(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const Matrix m = gaussian(irange(rng, 1, 20), irange(rng, 2, 16), rng) * std::pow(10.0, irange(rng, -5, 5));
    const EmbeddingMatrix e = normalize_to_hypersphere(m);
    if (!e.normalized()) return fail(t, "flag not set");
    for (Index i = 0; i < e.rows(); ++i)
      if (std::abs(e.row(i).norm() - 1.0) > 1e-9) return fail(t, "row not unit norm");
  }
  return ok(cases);
}

CheckResult knn_permutation(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int n = irange(rng, 6, 20);
    const int k = irange(rng, 1, 3);
    const Matrix m = gaussian(n, irange(rng, 2, 4), rng);
    const int q = irange(rng, 0, n - 1);
    const IndexList nn = knn_indices(pairwise_distances(m, DistanceMode::Euclidean), k, true)[static_cast<std::size_t>(q)];
    // Shuffle the rows that are neither the query nor its neighbours.
    IndexList movable;
    for (int i = 0; i < n; ++i)
      if (i != q && std::find(nn.begin(), nn.end(), i) == nn.end()) movable.push_back(i);
    IndexList target = movable;
    shuffle_in_place(target, rng);
    IndexList perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 0; i < movable.size(); ++i) perm[static_cast<std::size_t>(movable[i])] = target[i];
    Matrix p(m.rows(), m.cols());
    for (int i = 0; i < n; ++i) p.row(i) = m.row(perm[static_cast<std::size_t>(i)]);
    const IndexList after = knn_indices(pairwise_distances(p, DistanceMode::Euclidean), k, true)[static_cast<std::size_t>(q)];
    if (after != nn) return fail(t, "neighbours changed");
  }
  return ok(cases);
}

CheckResult frobenius(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const Matrix m = gaussian(irange(rng, 1, 30), irange(rng, 2, 10), rng);
    const SpectralProfile s = singular_values(m);
    if (!close(s.singular_values.squaredNorm(), m.squaredNorm(), 1e-9)) return fail(t, "sum of squares");
    for (Index i = 1; i < s.singular_values.size(); ++i)
      if (s.singular_values(i) > s.singular_values(i - 1)) return fail(t, "not descending");
    if (std::abs(s.normalized_distribution.sum() - 1.0) > 1e-9) return fail(t, "distribution does not sum to 1");
  }
  return ok(cases);
}

CheckResult kmeans_inertia(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int n = irange(rng, 2, 40);
    const KMeansResult r = kmeans(gaussian(n, irange(rng, 2, 5), rng), irange(rng, 1, std::min(n, 6)), rng());
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
      if (r.inertia_history[i] > r.inertia_history[i - 1] * (1 + 1e-12)) return fail(t, "inertia increased");
  }
  return ok(cases);
}

// --- data --------------------------------------------------------------------

CheckResult imbalance_keeps_test(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int c = irange(rng, 3, 8);
    const Dataset ds = small_dataset(rng, c, irange(rng, 6, 14));
    const ImbalanceResult r =
        induce_imbalance(ds, {irange(rng, 1, c - 1), 0.1 + 0.9 * uniform_unit(rng), uniform_unit(rng) < 0.5, rng()});
    const IndexList a = ds.indices(Split::Test), b = r.dataset.indices(Split::Test);
    if (a.size() != b.size()) return fail(t, "test size changed");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto x = ds.features.row(a[i]), y = r.dataset.features.row(b[i]);
      if (std::memcmp(Vector(x.transpose()).data(), Vector(y.transpose()).data(), sizeof(double) * static_cast<std::size_t>(x.size())) != 0 ||
          ds.classes[static_cast<std::size_t>(a[i])] != r.dataset.classes[static_cast<std::size_t>(b[i])] ||
          ds.attributes[static_cast<std::size_t>(a[i])] != r.dataset.attributes[static_cast<std::size_t>(b[i])] ||
          ds.ids[static_cast<std::size_t>(a[i])] != r.dataset.ids[static_cast<std::size_t>(b[i])])
        return fail(t, "test row changed");
    }
  }
  return ok(cases);
}

CheckResult minoritized_seed_only(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int c = irange(rng, 3, 8), m = irange(rng, 8, 12);
    const int count = irange(rng, 1, c - 1);
    const std::uint64_t s = rng();
    const ImbalanceResult a = induce_imbalance(small_dataset(rng, c, m), {count, 0.5, true, s});
    const ImbalanceResult b = induce_imbalance(small_dataset(rng, c, m), {count, 0.5, false, s});
    if (a.minoritized != b.minoritized || a.minoritized != select_minoritized_classes(c, count, s))
      return fail(t, "selection depends on the data");
  }
  return ok(cases);
}

CheckResult ita_pure(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    std::vector<LabPatch> patches(static_cast<std::size_t>(irange(rng, 1, 6)));
    long double sum = 0;
    for (LabPatch& p : patches) {
      p.L = 100 * uniform_unit(rng);
      p.b = (1 + 39 * uniform_unit(rng)) * (uniform_unit(rng) < 0.8 ? 1 : -1);
      sum += oracle::ita_degrees(p.L, p.b);
    }
    const ItaResult r = ita_fitzpatrick(patches);
    if (std::abs(r.mean_ita - (double)(sum / patches.size())) > 1e-9) return fail(t, "mean ITA");
    if (r.category != fitzpatrick_category(r.mean_ita) || static_cast<int>(r.category) != oracle::fitzpatrick(r.mean_ita))
      return fail(t, "category");
  }
  return ok(cases);
}

CheckResult partition_permutation(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int n = irange(rng, 1, 50);
    const IndexList v = random_labels(n, irange(rng, 1, 4), rng);
    const IndexList pi = permutation(n, rng);
    IndexList pv(static_cast<std::size_t>(n)), inv(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      pv[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(pi[static_cast<std::size_t>(i)])];
      inv[static_cast<std::size_t>(pi[static_cast<std::size_t>(i)])] = i;
    }
    const SubgroupPartition a = partition_by_values(v), b = partition_by_values(pv);
    if (a.total() != static_cast<std::size_t>(n) || a.groups.size() != b.groups.size()) return fail(t, "cover");
    for (const auto& [val, members] : a.groups) {
      IndexList mapped;
      for (int i : members) mapped.push_back(inv[static_cast<std::size_t>(i)]);
      std::sort(mapped.begin(), mapped.end());
      if (!b.groups.count(val) || b.groups.at(val) != mapped) return fail(t, "not the permuted partition");
    }
  }
  return ok(cases);
}

CheckResult split_counts(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    Dataset ds;
    const int c = irange(rng, 2, 6);
    std::vector<int> counts;
    for (int k = 0; k < c; ++k) counts.push_back(irange(rng, 2, 15));
    const int n = std::accumulate(counts.begin(), counts.end(), 0);
    ds.features = gaussian(n, 2, rng);
    for (int k = 0; k < c; ++k)
      for (int i = 0; i < counts[static_cast<std::size_t>(k)]; ++i) ds.classes.push_back(k);
    ds.attributes.assign(static_cast<std::size_t>(n), 0);
    ds.split.assign(static_cast<std::size_t>(n), Split::Train);
    for (int i = 0; i < n; ++i) ds.ids.push_back(i);
    const double f = 0.05 + 0.9 * uniform_unit(rng);
    const IndexList got = split_per_class(ds, f, rng()).class_counts(Split::Train);
    for (int k = 0; k < c; ++k) {
      const int cnt = counts[static_cast<std::size_t>(k)];
      const int want = std::clamp(static_cast<int>(std::floor(f * cnt)), 1, cnt - 1);
      if (got[static_cast<std::size_t>(k)] != want) return fail(t, "train count");
    }
  }
  return ok(cases);
}

// --- mining ------------------------------------------------------------------

CheckResult triplet_labels(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int b = irange(rng, 4, 16);
    const Matrix emb = unit_rows(b, irange(rng, 3, 6), rng);
    // Class-like labels and attribute-like labels (few values, many positives).
    for (const IndexList& labels : {paired_labels(b, rng), random_labels(b, 2, rng)}) {
      if (std::all_of(labels.begin(), labels.end(), [&](int l) { return l == labels.front(); })) continue;
      for (MiningStrategy s : {MiningStrategy::Random, MiningStrategy::SemiHard, MiningStrategy::DistanceWeighted}) {
        MiningConfig cfg;
        cfg.strategy = s;
        std::set<int> anchors;
        for (const Triplet& tr : mine(cfg, labels, emb, rng())) {
          const auto l = [&](int i) { return labels[static_cast<std::size_t>(i)]; };
          if (tr.anchor == tr.positive || l(tr.anchor) != l(tr.positive) || l(tr.anchor) == l(tr.negative))
            return fail(t, "invalid triplet");
          if (!anchors.insert(tr.anchor).second) return fail(t, "two triplets for one anchor");
        }
        for (int a = 0; a < b; ++a) {
          const bool has_pos = std::count(labels.begin(), labels.end(), labels[static_cast<std::size_t>(a)]) > 1;
          if (has_pos != static_cast<bool>(anchors.count(a))) return fail(t, "anchor coverage");
        }
      }
    }
  }
  return ok(cases);
}

CheckResult mining_deterministic(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int b = irange(rng, 4, 16);
    const Matrix emb = unit_rows(b, 4, rng);
    const IndexList labels = paired_labels(b, rng);
    const std::uint64_t s = rng();
    for (MiningStrategy st : {MiningStrategy::Random, MiningStrategy::SemiHard, MiningStrategy::DistanceWeighted}) {
      MiningConfig cfg;
      cfg.strategy = st;
      if (mine(cfg, labels, emb, s) != mine(cfg, labels, emb, s)) return fail(t, "not deterministic");
    }
  }
  return ok(cases);
}

// Negatives of anchor 0 under an empty semi-hard window, pooled over cases
// into one chi-square against the uniform law that random mining follows.
CheckResult semihard_fallback(int cases, std::uint64_t seed) {
  Rng rng(seed);
  double stat = 0.0;
  int dof = 0;
  const int draws = 600;
  for (int t = 0; t < cases; ++t) {
    const int negs = irange(rng, 2, 6);
    IndexList labels = {0, 0};
    for (int j = 0; j < negs; ++j) labels.push_back(1 + j % 2);
    const Matrix emb = unit_rows(static_cast<Index>(labels.size()), 4, rng);
    std::vector<double> counts(static_cast<std::size_t>(negs), 0.0);
    for (int d = 0; d < draws; ++d) {
      for (const Triplet& tr : mine_semihard(labels, emb, 1e-12, rng()))
        if (tr.anchor == 0) counts[static_cast<std::size_t>(tr.negative - 2)] += 1;
    }
    const double e = static_cast<double>(draws) / negs;
    for (double c : counts) stat += (c - e) * (c - e) / e;
    dof += negs - 1;
  }
  const double p = oracle::chi_square_p(stat, dof);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d cases, pooled chi-square p=%.3f", cases, p);
  return {p > 0.01, buf};
}

CheckResult spc_batches(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int n = 1 << irange(rng, 1, 3);
    const int b = n * irange(rng, 1, 6);
    IndexList rows, labels;
    std::map<int, int> counts;
    const int classes = irange(rng, 2, 9);
    for (int c = 0; c < classes; ++c) {
      const int cnt = irange(rng, c == 0 ? 2 : 1, 10);
      counts[c] = cnt;
      for (int i = 0; i < cnt; ++i) {
        rows.push_back(static_cast<int>(rows.size()) * 3);
        labels.push_back(c);
      }
    }
    const std::uint64_t s = rng();
    const BatchPlan plan = build_spc_batches(rows, labels, b, n, s);
    if (plan.batches != build_spc_batches(rows, labels, b, n, s).batches) return fail(t, "not deterministic");
    std::map<int, int> label_of;
    for (std::size_t i = 0; i < rows.size(); ++i) label_of[rows[i]] = labels[i];
    std::set<int> seen;
    std::size_t total = 0;
    bool short_seen = false;
    for (const IndexList& batch : plan.batches) {
      std::map<int, int> per;
      for (int r : batch) {
        ++per[label_of.at(r)];
        seen.insert(r);
      }
      for (const auto& [c, k] : per)
        if (k != n) return fail(t, "class block is not n rows");
      if (static_cast<int>(batch.size()) > b) return fail(t, "batch too large");
      if (short_seen && static_cast<int>(batch.size()) == b) return fail(t, "full batch after a short one");
      short_seen = short_seen || static_cast<int>(batch.size()) < b;
      total += batch.size();
    }
    std::size_t want = 0;
    for (const auto& [c, k] : counts) want += static_cast<std::size_t>((k + n - 1) / n * n);
    if (total != want || seen.size() != rows.size()) return fail(t, "epoch coverage");
  }
  return ok(cases);
}

// --- losses ------------------------------------------------------------------

struct Batch {
  Matrix emb;
  IndexList labels;
  std::vector<Triplet> triplets;
  std::vector<Pair> pairs;
  Matrix centers;
};

Batch random_batch(Rng& rng, bool raw) {
  Batch b;
  const int n = 2 * irange(rng, 2, 6);
  const int d = irange(rng, 3, 6);
  b.labels = paired_labels(n, rng);
  b.emb = raw ? Matrix(gaussian(n, d, rng) * 0.7) : unit_rows(n, d, rng);
  b.triplets = mine_random(b.labels, rng());
  b.pairs = pairs_from_triplets(b.triplets);
  const int classes = *std::max_element(b.labels.begin(), b.labels.end()) + 1;
  b.centers = unit_rows(std::max(classes, 2), d, rng);
  return b;
}

const LossKind kAllLosses[] = {LossKind::Contrastive, LossKind::Triplet,  LossKind::Margin, LossKind::NPair,
                               LossKind::MultiSimilarity, LossKind::ProxyNca, LossKind::ArcFace};

LossOutput run_loss(LossKind k, const Batch& b) {
  LossConfig cfg;
  cfg.kind = k;
  LossParams params;
  params.beta = cfg.margin_beta_init;
  params.centers = b.centers;
  return compute_loss(cfg, params, b.emb, b.emb, b.labels, b.triplets);
}

CheckResult loss_nonnegative(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    for (LossKind k : kAllLosses) {
      const Batch b = random_batch(rng, k == LossKind::NPair);
      const LossOutput o = run_loss(k, b);
      if (!std::isfinite(o.value) || !o.grad_embeddings.allFinite()) return fail(t, "non-finite");
      if (k != LossKind::ProxyNca && o.value < 0.0) return fail(t, std::string(to_string(k)) + " negative");
    }
  }
  return ok(cases);
}

CheckResult loss_rotation(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    for (LossKind k : kAllLosses) {
      Batch b = random_batch(rng, k == LossKind::NPair);
      const double before = run_loss(k, b).value;
      const Matrix q = orthogonal(b.emb.cols(), rng);
      b.emb = b.emb * q;
      b.centers = b.centers * q;
      if (!close(run_loss(k, b).value, before, 1e-9)) return fail(t, std::string(to_string(k)) + " changed");
    }
  }
  return ok(cases);
}

// Tight orthogonal clusters: every hinge is inactive by construction.
CheckResult hinge_zero_gradient(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int classes = irange(rng, 2, 5);
    const int n = 2 * classes + irange(rng, 0, 4);
    Batch b;
    for (int i = 0; i < n; ++i) b.labels.push_back(i < 2 * classes ? i / 2 : irange(rng, 0, classes - 1));
    const Matrix noise = gaussian(n, 6, rng) * 0.01;
    b.emb = Matrix::Zero(n, 6);
    for (int i = 0; i < n; ++i) b.emb(i, b.labels[static_cast<std::size_t>(i)]) = 1.0;
    const Matrix exact = b.emb;
    b.emb = normalize_to_hypersphere(b.emb + noise).values();
    b.triplets = mine_random(b.labels, rng());
    b.pairs = pairs_from_triplets(b.triplets);
    const LossOutput outs[] = {contrastive_loss(exact, b.labels, b.pairs, 0.2), triplet_loss(b.emb, b.triplets, 0.2),
                               margin_loss(b.emb, b.labels, b.pairs, 0.2, 1.0)};
    for (const LossOutput& o : outs) {
      if (o.value != 0.0) return fail(t, "construction did not zero the loss");
      if (o.grad_embeddings.cwiseAbs().maxCoeff() != 0.0 || o.grad_beta != 0.0) return fail(t, "nonzero gradient");
    }
  }
  return ok(cases);
}

CheckResult loss_gradients(int cases, std::uint64_t seed) {
  for (LossKind k : kAllLosses) {
    const GradStats s = loss_gradient_check(k, cases, seed++);
    if (s.max_error > kGradTolerance) return {false, std::string(to_string(k)) + " error " + std::to_string(s.max_error)};
  }
  return ok(cases);
}

// --- model -------------------------------------------------------------------

CheckResult head_unit_norm(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const ModelSpec spec{irange(rng, 2, 8), {irange(rng, 2, 8)}, irange(rng, 2, 6), irange(rng, 2, 4)};
    const EmbeddingModel m(spec, rng());
    const ForwardCache c = forward(m, gaussian(irange(rng, 1, 10), spec.input_dim, rng) * 3.0);
    for (const Matrix* phi : {&c.phi_targ, &c.phi_sa})
      for (Index i = 0; i < phi->rows(); ++i)
        if (std::abs(phi->row(i).norm() - 1.0) > 1e-9) return fail(t, "head row not unit norm");
  }
  return ok(cases);
}

CheckResult normalize_backward_orthogonal(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const Matrix z = gaussian(irange(rng, 1, 8), irange(rng, 2, 8), rng);
    const Matrix phi = normalize_to_hypersphere(z).values();
    const Matrix g = normalize_backward(z, phi, gaussian(z.rows(), z.cols(), rng));
    for (Index i = 0; i < z.rows(); ++i)
      if (std::abs(phi.row(i).dot(g.row(i))) > 1e-10) return fail(t, "not orthogonal to the output");
  }
  return ok(cases);
}

CheckResult reversal_involution(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const Matrix g = gaussian(irange(rng, 1, 6), irange(rng, 1, 6), rng);
    if (GradientReversal::forward(g) != g || GradientReversal::backward(g) != -g ||
        GradientReversal::backward(GradientReversal::backward(g)) != g)
      return fail(t, "reversal");
  }
  return ok(cases);
}

// --- metrics -----------------------------------------------------------------

CheckResult recall_monotone(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int n = irange(rng, 3, 40);
    const EmbeddingMatrix e(gaussian(n, 3, rng));
    const IndexList labels = random_labels(n, irange(rng, 2, 6), rng);
    double prev = 0.0;
    for (int k = 1; k < n; ++k) {
      const double r = recall_at_k(e, labels, k);
      if (r < prev) return fail(t, "recall decreased in k");
      prev = r;
    }
  }
  return ok(cases);
}

CheckResult ukl_invariance(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int n = irange(rng, 1, 30);
    const Matrix m = gaussian(n, irange(rng, 2, 8), rng);
    const double base = u_kl(m);
    const IndexList p = permutation(n, rng);
    if (!close(u_kl(m(p, Eigen::all)), base, 1e-9)) return fail(t, "row permutation");
    if (!close(u_kl(m * orthogonal(m.cols(), rng)), base, 1e-9)) return fail(t, "rotation");
  }
  return ok(cases);
}

CheckResult alignment_rotation(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int n = irange(rng, 4, 30);
    const Matrix m = unit_rows(n, irange(rng, 2, 6), rng);
    const IndexList cls = paired_labels(n, rng);
    const PairIndex pairs = build_pair_index(cls, random_labels(n, 2, rng));
    const Alignment a = alignment_expectations(m, pairs);
    const Alignment b = alignment_expectations(m * orthogonal(m.cols(), rng), pairs);
    if (!close(a.positive, b.positive, 1e-9) || !close(a.negative, b.negative, 1e-9)) return fail(t, "rotation");
  }
  return ok(cases);
}

CheckResult nmi_symmetry(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int n = irange(rng, 1, 100);
    const IndexList u = random_labels(n, irange(rng, 1, 6), rng), v = random_labels(n, irange(rng, 1, 6), rng);
    const double base = nmi(u, v);
    if (!close(nmi(v, u), base, 1e-12)) return fail(t, "asymmetric");
    const IndexList rename = permutation(6, rng);
    IndexList ur;
    for (int x : u) ur.push_back(10 + rename[static_cast<std::size_t>(x)]);
    if (!close(nmi(ur, v), base, 1e-12)) return fail(t, "renaming");
    if (base < -1e-12 || base > 1 + 1e-12) return fail(t, "out of [0,1]");
  }
  return ok(cases);
}

// --- fairness ----------------------------------------------------------------

CheckResult gap_relabel(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int g = irange(rng, 2, 8);
    SubgroupValues v, pv;
    std::map<int, std::size_t> sizes, psizes;
    const IndexList relabel = permutation(g, rng);
    for (int a = 0; a < g; ++a) {
      v[a] = uniform_unit(rng);
      sizes[a] = static_cast<std::size_t>(irange(rng, 1, 50));
      pv[relabel[static_cast<std::size_t>(a)]] = v[a];
      psizes[relabel[static_cast<std::size_t>(a)]] = sizes[a];
    }
    for (Polarity pol : {Polarity::HigherBetter, Polarity::LowerBetter, Polarity::AbsoluteDifference}) {
      for (GapConvention c : {GapConvention::WorstGroup, GapConvention::TopHalfVsBottomHalf}) {
        if (!close(compute_gap(v, c, sizes, pol), compute_gap(pv, c, psizes, pol), 1e-12)) return fail(t, "gap moved");
      }
    }
  }
  return ok(cases);
}

CheckResult k_close_monotone(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int n = irange(rng, 4, 40);
    const EmbeddingMatrix e(unit_rows(n, 3, rng));
    const IndexList cls = random_labels(n, irange(rng, 2, 5), rng);
    IndexList attr = random_labels(n, 2, rng);
    attr[0] = 0;
    attr[1] = 1;
    const SubgroupPartition part = partition_by_values(attr);
    SubgroupValues prev;
    for (int k = 1; k < n; ++k) {
      const SubgroupValues cur = k_close_profile(e, cls, part, k);
      for (const auto& [a, val] : prev)
        if (cur.at(a) < val) return fail(t, "k-close decreased in k");
      prev = cur;
    }
  }
  return ok(cases);
}

CheckResult def1_zero_gap(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int classes = irange(rng, 2, 6);
    const Matrix centers = unit_rows(classes, 4, rng);
    Matrix rows(2 * classes, 4);
    IndexList cls, attr;
    for (int c = 0; c < classes; ++c) {
      for (int a = 0; a < 2; ++a) {
        rows.row(2 * c + a) = centers.row(c);
        cls.push_back(c);
        attr.push_back(a);
      }
    }
    const SubgroupPartition part = partition_by_values(attr);
    const SubgroupValues prof = k_close_profile(EmbeddingMatrix(rows), cls, part, irange(rng, 1, 2 * classes - 1));
    for (GapConvention c : {GapConvention::MajorityVsMinority, GapConvention::WorstGroup, GapConvention::TopHalfVsBottomHalf})
      if (compute_gap(prof, c, subgroup_sizes(part), Polarity::HigherBetter) != 0.0) return fail(t, "nonzero gap");
  }
  return ok(cases);
}

CheckResult gap_reproducible(int cases, std::uint64_t seed) {
  Rng rng(seed);
  const char* metrics[] = {"recall@1", "nmi", "u_kl", "alignment_pos", "accuracy"};
  for (int t = 0; t < cases; ++t) {
    const int g = irange(rng, 2, 6);
    SubgroupValues v;
    std::map<int, std::size_t> sizes;
    for (int a = 0; a < g; ++a) {
      v[a] = uniform_unit(rng);
      sizes[a] = static_cast<std::size_t>(irange(rng, 1, 9));
    }
    const std::string metric = metrics[uniform_index(rng, 5)];
    const auto conv = static_cast<GapConvention>(irange(rng, 0, 2));
    const GapReport r = make_gap_report(metric, v, conv, sizes);
    if (r.gap_mean != compute_gap(r.per_subgroup, conv, sizes, polarity_of(metric))) return fail(t, "gap not reproducible");
    const GapReport back = gap_report_from_json(to_json(r));
    if (back.per_subgroup != r.per_subgroup || back.gap_mean != r.gap_mean || back.convention != r.convention)
      return fail(t, "json round trip");
  }
  return ok(cases);
}

// --- downstream --------------------------------------------------------------

CheckResult accuracy_recombines(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int n = irange(rng, 1, 80), c = irange(rng, 2, 5);
    const IndexList truth = random_labels(n, c, rng), pred = random_labels(n, c, rng), attr = random_labels(n, 3, rng);
    double weighted = 0.0;
    for (const auto& [a, s] : macro_scores_by_subgroup(truth, pred, attr, c)) weighted += s.accuracy * static_cast<double>(s.support);
    long correct = 0;
    for (int i = 0; i < n; ++i) correct += truth[static_cast<std::size_t>(i)] == pred[static_cast<std::size_t>(i)];
    if (std::abs(weighted / n - static_cast<double>(correct) / n) > 1e-12) return fail(t, "accuracy does not recombine");
  }
  return ok(cases);
}

CheckResult macro_class_permutation(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const int n = irange(rng, 1, 80), c = irange(rng, 2, 5);
    const IndexList truth = random_labels(n, c, rng), pred = random_labels(n, c, rng), attr = random_labels(n, 3, rng);
    const IndexList p = permutation(c, rng);
    IndexList pt, pp;
    for (int i = 0; i < n; ++i) {
      pt.push_back(p[static_cast<std::size_t>(truth[static_cast<std::size_t>(i)])]);
      pp.push_back(p[static_cast<std::size_t>(pred[static_cast<std::size_t>(i)])]);
    }
    const auto a = macro_scores_by_subgroup(truth, pred, attr, c), b = macro_scores_by_subgroup(pt, pp, attr, c);
    for (const auto& [g, s] : a) {
      const MacroScores& o = b.at(g);
      if (!close(s.precision, o.precision, 1e-12) || !close(s.recall, o.recall, 1e-12) || s.accuracy != o.accuracy)
        return fail(t, "macro scores moved");
    }
  }
  return ok(cases);
}

struct Blobs {
  Matrix x;
  IndexList y;
};

Blobs blobs(const Matrix& centers, int per_class, Rng& rng) {
  Blobs b;
  b.x = gaussian(centers.rows() * per_class, centers.cols(), rng) * 0.6;
  for (Index c = 0; c < centers.rows(); ++c)
    for (int i = 0; i < per_class; ++i) {
      b.x.row(c * per_class + i) += centers.row(c);
      b.y.push_back(static_cast<int>(c));
    }
  return b;
}

double accuracy(const LogisticModel& m, const Blobs& b) {
  const IndexList p = predict(m, b.x).labels;
  int ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) ok += p[i] == b.y[i];
  return static_cast<double>(ok) / static_cast<double>(p.size());
}

CheckResult duplicate_rebalance(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    // Three distinct classes: centers 120 degrees apart, random rotation.
    const double phase = 2.0 * std::numbers::pi * uniform_unit(rng);
    Matrix centers(3, 2);
    for (int c = 0; c < 3; ++c) {
      const double t = phase + 2.0 * std::numbers::pi * c / 3.0;
      centers.row(c) << 3.0 * std::cos(t), 3.0 * std::sin(t);
    }
    // Enough rows per class that a few duplicates are a small reweighting.
    const int n = 100;
    const Blobs train = blobs(centers, n, rng), test = blobs(centers, 100, rng);
    // Balanced duplicates: every class gains the same number of resampled rows.
    Blobs dup = train;
    const int extra = irange(rng, 5, 20);
    dup.x.conservativeResize(train.x.rows() + 3 * extra, Eigen::NoChange);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < extra; ++i) {
        dup.x.row(train.x.rows() + c * extra + i) = train.x.row(c * n + irange(rng, 0, n - 1));
        dup.y.push_back(c);
      }
    // Strong enough ridge that both fits reach the optimum within the budget.
    LogisticConfig cfg;
    cfg.epochs = 300;
    cfg.l2 = 0.1;
    const double a = accuracy(fit_logistic(train.x, train.y, cfg).model, test);
    const double b = accuracy(fit_logistic(dup.x, dup.y, cfg).model, test);
    if (std::abs(a - b) > 0.02) return fail(t, "held-out accuracy moved by " + std::to_string(std::abs(a - b)));
  }
  return ok(cases);
}

CheckResult logistic_monotone(int cases, std::uint64_t seed) {
  Rng rng(seed);
  for (int t = 0; t < cases; ++t) {
    const Blobs b = blobs(unit_rows(irange(rng, 2, 4), irange(rng, 2, 4), rng) * 2.0, irange(rng, 3, 15), rng);
    LogisticConfig cfg;
    cfg.epochs = 100;
    cfg.lr = std::pow(10.0, -1 + 2 * uniform_unit(rng));
    const LogisticFit f = fit_logistic(b.x, b.y, cfg);
    for (std::size_t i = 1; i < f.loss_history.size(); ++i)
      if (f.loss_history[i] > f.loss_history[i - 1]) return fail(t, "loss increased");
  }
  return ok(cases);
}

}  // namespace

const std::vector<Property>& properties() {
  static const std::vector<Property> all = {
      {"core_math.triangle_inequality", triangle_inequality},
      {"core_math.unit_norm_rows", unit_norm_rows},
      {"core_math.knn_permutation_invariance", knn_permutation},
      {"core_math.singular_values_frobenius", frobenius},
      {"core_math.kmeans_inertia_nonincreasing", kmeans_inertia},
      {"data.imbalance_keeps_test_rows", imbalance_keeps_test},
      {"data.minoritized_selection_seed_only", minoritized_seed_only},
      {"data.ita_category_pure", ita_pure},
      {"data.partition_permutation", partition_permutation},
      {"data.split_per_class_counts", split_counts},
      {"mining.triplet_label_invariant", triplet_labels},
      {"mining.deterministic", mining_deterministic},
      {"mining.semihard_empty_window_is_uniform", semihard_fallback},
      {"mining.spc_batch_structure", spc_batches},
      {"losses.nonnegative_and_finite", loss_nonnegative},
      {"losses.rotation_invariance", loss_rotation},
      {"losses.zero_hinge_zero_gradient", hinge_zero_gradient},
      {"losses.finite_differences", loss_gradients, 20},
      {"model.head_outputs_unit_norm", head_unit_norm},
      {"model.normalize_backward_orthogonal", normalize_backward_orthogonal},
      {"model.gradient_reversal", reversal_involution},
      {"model.parade_finite_differences",
       [](int cases, std::uint64_t seed) {
         const GradStats s = parade_gradient_check(cases, seed);
         return CheckResult{s.max_error <= kGradTolerance, "max rel err " + std::to_string(s.max_error)};
       },
       20},
      {"model.degenerate_parade",
       [](int, std::uint64_t seed) { return degenerate_parade_check(LossKind::Margin, 2, seed); }, 1},
      {"metrics.recall_monotone_in_k", recall_monotone},
      {"metrics.u_kl_invariance", ukl_invariance},
      {"metrics.alignment_rotation_invariance", alignment_rotation},
      {"metrics.nmi_symmetry_and_renaming", nmi_symmetry},
      {"fairness.gap_relabel_invariance", gap_relabel},
      {"fairness.k_close_monotone_in_k", k_close_monotone},
      {"fairness.def1_construction_zero_gap", def1_zero_gap},
      {"fairness.gap_reproducible", gap_reproducible},
      {"downstream.accuracy_recombines", accuracy_recombines},
      {"downstream.macro_class_permutation", macro_class_permutation},
      {"downstream.duplicate_rebalance_stable", duplicate_rebalance},
      {"downstream.logistic_loss_monotone", logistic_monotone},
  };
  return all;
}

}  // namespace findml::checks
