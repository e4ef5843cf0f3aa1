#include <doctest.h>

#include <cmath>
#include <set>

#include "findml/metrics.hpp"
#include "findml/random.hpp"
#include "oracles.hpp"

using namespace findml;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

Matrix gaussian(Index r, Index c, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

}  // namespace

TEST_CASE("recall_at_k examples") {
  const EmbeddingMatrix two(Matrix{{1, 0}, {0, 1}});
  CHECK(recall_at_k(two, IndexList{0, 0}, 1) == 1.0);
  // Each point's nearest neighbour belongs to the other class.
  const EmbeddingMatrix cross(Matrix{{0, 0}, {0.1, 0}, {5, 0}, {5.1, 0}});
  CHECK(recall_at_k(cross, IndexList{0, 1, 0, 1}, 1) == 0.0);
  CHECK(recall_at_k(cross, IndexList{0, 1, 0, 1}, 3) == 1.0);
  CHECK(code_of([&] { recall_at_k(cross, IndexList{0, 1, 0, 1}, 4); }) == ErrorCode::KTooLarge);
}

TEST_CASE("recall_at_k matches the brute-force oracle") {
  Rng rng(3);
  const Matrix m = gaussian(50, 5, 4);
  IndexList labels;
  for (int i = 0; i < 50; ++i) labels.push_back(static_cast<int>(uniform_index(rng, 6)));
  CHECK(recall_at_k(EmbeddingMatrix(m), labels, 4) == oracle::recall_at_k(oracle::to_mat(m), labels, 4));
}

TEST_CASE("recall_at_k restricted to a subset still searches every row") {
  const EmbeddingMatrix e(Matrix{{0, 0}, {0.1, 0}, {5, 0}, {5.1, 0}});
  const IndexList labels = {0, 0, 1, 2};
  const IndexList first = {0, 1};
  const IndexList last = {2, 3};
  CHECK(recall_at_k(e, labels, 1, &first) == 1.0);
  CHECK(recall_at_k(e, labels, 1, &last) == 0.0);
  const std::vector<bool> hits = neighbor_hits(pairwise_distances(e.values(), DistanceMode::Euclidean), labels, 1);
  CHECK(hits == std::vector<bool>{true, true, false, false});
}

TEST_CASE("nmi examples") {
  const IndexList y = {0, 0, 1, 1, 2, 2};
  CHECK(nmi(y, y) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(nmi(IndexList{3, 3, 3, 3, 3, 3}, y) == 0.0);
  CHECK(nmi(IndexList{0, 0, 0}, IndexList{1, 1, 1}) == 0.0);  // 0/0
  // Contingency [[2,1],[1,2]].
  const IndexList c = {0, 0, 1, 0, 1, 1};
  const IndexList k = {0, 0, 0, 1, 1, 1};
  const double h = std::log(2.0);
  const double mi = 2 * (2.0 / 6) * std::log((2.0 / 6) / 0.25) + 2 * (1.0 / 6) * std::log((1.0 / 6) / 0.25);
  CHECK(nmi(c, k) == doctest::Approx(2 * mi / (2 * h)).epsilon(1e-12));
  CHECK(nmi(c, k, nullptr, NmiForm::Halved) == doctest::Approx(mi / (2 * h)).epsilon(1e-12));
  CHECK(nmi(c, k) == doctest::Approx(oracle::nmi(c, k)).epsilon(1e-12));
  CHECK(code_of([] { nmi(IndexList{0, 1}, IndexList{0}); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("u_kl examples") {
  CHECK(std::abs(u_kl(Matrix{{1, 0}, {0, 1}})) <= 1e-15);
  // Rank one: the second singular value is floored.
  const Matrix same{{1, 0}, {1, 0}, {1, 0}};
  const double s1 = std::sqrt(3.0), floor = kSpectralFloor;
  const double p1 = s1 / (s1 + floor), p2 = floor / (s1 + floor);
  const double want = 0.5 * std::log(0.5 / p1) + 0.5 * std::log(0.5 / p2);
  CHECK(u_kl(same) == doctest::Approx(want).epsilon(1e-9));
  CHECK(u_kl(same) > 13.0);

  const Matrix m = gaussian(20, 4, 5);
  CHECK(std::abs(u_kl(m) - oracle::u_kl(oracle::to_mat(m))) <= 1e-9 * std::max(1.0, u_kl(m)));
  const IndexList rows = {0, 1};
  CHECK(u_kl(Matrix{{1, 0}, {0, 1}, {1, 0}}, &rows) == doctest::Approx(0.0));
}

TEST_CASE("alignment_expectations") {
  const IndexList classes = {0, 0, 1, 1};
  const IndexList attrs = {0, 0, 0, 0};
  const PairIndex idx = build_pair_index(classes, attrs);
  const Matrix point = Matrix::Ones(4, 2) / std::sqrt(2.0);
  CHECK(alignment_expectations(point, idx).positive == 0.0);
  CHECK(alignment_expectations(point, idx).negative == 0.0);
  const Matrix split{{1, 0}, {1, 0}, {0, 1}, {0, 1}};
  const Alignment a = alignment_expectations(split, idx);
  CHECK(a.positive == 0.0);
  CHECK(a.negative == doctest::Approx(2.0).epsilon(1e-15));

  const Matrix r = gaussian(9, 3, 6);
  const IndexList c9 = {0, 1, 2, 0, 1, 2, 0, 1, 2};
  const PairIndex all = build_pair_index(c9, IndexList(9, 0));
  double pos = 0, neg = 0;
  int np = 0, nn = 0;
  for (int i = 0; i < 9; ++i)
    for (int j = i + 1; j < 9; ++j) {
      const double d = (r.row(i) - r.row(j)).squaredNorm();
      if (c9[static_cast<std::size_t>(i)] == c9[static_cast<std::size_t>(j)]) {
        pos += d;
        ++np;
      } else {
        neg += d;
        ++nn;
      }
    }
  const Alignment got = alignment_expectations(r, all);
  CHECK(std::abs(got.positive - pos / np) <= 1e-12);
  CHECK(std::abs(got.negative - neg / nn) <= 1e-12);

  CHECK(code_of([&] { alignment_expectations(split, build_pair_index(IndexList{0, 1, 2, 3}, attrs)); }) ==
        ErrorCode::EmptyPairSet);
}

TEST_CASE("build_pair_index") {
  const PairIndex p = build_pair_index(IndexList{0, 0, 1}, IndexList{0, 0, 0});
  REQUIRE(p.positives.size() == 1);
  CHECK(p.positives[0].i == 0);
  CHECK(p.positives[0].j == 1);
  REQUIRE(p.negatives.size() == 2);
  CHECK((p.negatives[0].i == 0 && p.negatives[0].j == 2));
  CHECK((p.negatives[1].i == 1 && p.negatives[1].j == 2));

  const PairIndex f = build_pair_index(IndexList{0, 0, 1}, IndexList{1, 0, 0}, 1);
  CHECK(f.positives.size() == 1);
  CHECK(f.negatives.size() == 1);
  CHECK(f.negatives[0].i == 0);

  // A mixed pair shows up under both attribute values.
  const IndexList cls = {0, 0};
  const IndexList att = {0, 1};
  CHECK(build_pair_index(cls, att, 0).positives.size() == 1);
  CHECK(build_pair_index(cls, att, 1).positives.size() == 1);
}

TEST_CASE("build_pair_index subsamples above the cap") {
  IndexList cls;
  for (int i = 0; i < 60; ++i) cls.push_back(i % 3);
  const PairIndex p = build_pair_index(cls, IndexList(60, 0), std::nullopt, 100, 9);
  CHECK(p.positives.size() == 100);
  CHECK(p.negatives.size() == 100);
  std::set<std::pair<int, int>> seen;
  for (const Pair& q : p.negatives) {
    CHECK(q.i < q.j);
    CHECK(cls[static_cast<std::size_t>(q.i)] != cls[static_cast<std::size_t>(q.j)]);
    seen.insert({q.i, q.j});
  }
  CHECK(seen.size() == 100);
  const PairIndex again = build_pair_index(cls, IndexList(60, 0), std::nullopt, 100, 9);
  CHECK(again.negatives.size() == p.negatives.size());
  CHECK(again.negatives.front().j == p.negatives.front().j);
}

TEST_CASE("evaluate_embedding") {
  const Matrix m{{1, 0, 0}, {0.99, 0.141, 0}, {0, 1, 0}, {0, 0.99, 0.141}, {0, 0, 1}, {0.141, 0, 0.99}};
  const EmbeddingMatrix e = normalize_to_hypersphere(m);
  const IndexList c = {0, 0, 1, 1, 2, 2};
  const MetricReport r = evaluate_embedding(e, c, {1, 2}, 3);
  CHECK(r.recall_at_k.at(1) == 1.0);
  CHECK(r.recall_at_k.at(2) == 1.0);
  CHECK(r.nmi == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.u_kl >= 0.0);
  CHECK(r.alignment_pos < r.alignment_neg);
  CHECK(cluster_for_nmi(e, c, 3).centers.rows() == 3);
}
