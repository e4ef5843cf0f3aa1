#include "findml/mining.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <set>

#include "findml/data.hpp"
#include "findml/random.hpp"

namespace findml {

std::string_view to_string(MiningStrategy s) {
  switch (s) {
    case MiningStrategy::Random: return "random";
    case MiningStrategy::SemiHard: return "semihard";
    case MiningStrategy::DistanceWeighted: return "distance_weighted";
  }
  return "?";
}

MiningStrategy parse_mining_strategy(std::string_view s) {
  for (MiningStrategy m : {MiningStrategy::Random, MiningStrategy::SemiHard, MiningStrategy::DistanceWeighted}) {
    if (to_string(m) == s) return m;
  }
  throw Error(ErrorCode::ConfigError, "unknown mining strategy '" + std::string(s) + "'");
}

BatchPlan build_spc_batches(const Dataset& ds, int batch_size, int samples_per_class, std::uint64_t seed) {
  const IndexList rows = ds.indices(Split::Train);
  IndexList labels;
  labels.reserve(rows.size());
  for (int r : rows) labels.push_back(ds.classes[static_cast<std::size_t>(r)]);
  return build_spc_batches(rows, labels, batch_size, samples_per_class, seed);
}

BatchPlan build_spc_batches(const IndexList& rows, const IndexList& row_labels, int batch_size,
                            int samples_per_class, std::uint64_t seed) {
  require(samples_per_class >= 1 && batch_size >= samples_per_class && batch_size % samples_per_class == 0,
          ErrorCode::InvalidArgument, "samples_per_class must divide batch_size");
  require(rows.size() == row_labels.size(), ErrorCode::InvalidArgument, "rows/labels length mismatch");

  std::map<int, IndexList> by_class;
  for (std::size_t i = 0; i < rows.size(); ++i) by_class[row_labels[i]].push_back(rows[i]);
  bool feasible = false;
  for (const auto& [c, members] : by_class) feasible = feasible || members.size() >= 2;
  require(feasible, ErrorCode::InfeasiblePlan, "no class has two train samples");

  Rng rng(seed);
  struct Block {
    int cls;
    IndexList rows;
  };
  std::vector<Block> blocks;
  for (auto& [c, members] : by_class) {
    IndexList order = members;
    shuffle_in_place(order, rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(samples_per_class)) {
      Block blk{c, {}};
      for (int s = 0; s < samples_per_class; ++s) {
        const std::size_t pos = start + static_cast<std::size_t>(s);
        blk.rows.push_back(pos < order.size() ? order[pos] : members[uniform_index(rng, members.size())]);
      }
      blocks.push_back(std::move(blk));
    }
  }
  shuffle_in_place(blocks, rng);

  BatchPlan plan{batch_size, samples_per_class, {}};
  const auto per_batch = static_cast<std::size_t>(batch_size / samples_per_class);
  std::deque<Block> queue(blocks.begin(), blocks.end());
  while (!queue.empty()) {
    IndexList batch;
    std::set<int> present;
    for (auto it = queue.begin(); it != queue.end() && present.size() < per_batch;) {
      if (present.count(it->cls)) {
        ++it;
        continue;
      }
      present.insert(it->cls);
      batch.insert(batch.end(), it->rows.begin(), it->rows.end());
      it = queue.erase(it);
    }
    plan.batches.push_back(std::move(batch));
  }
  return plan;
}

namespace {

struct AnchorSets {
  IndexList positives;
  IndexList negatives;
};

AnchorSets anchor_sets(std::span<const int> labels, int a) {
  AnchorSets s;
  for (int j = 0; j < static_cast<int>(labels.size()); ++j) {
    if (j == a) continue;
    (labels[j] == labels[a] ? s.positives : s.negatives).push_back(j);
  }
  return s;
}

void require_two_labels(std::span<const int> labels) {
  bool mixed = false;
  for (int l : labels) mixed = mixed || l != labels.front();
  require(!labels.empty() && mixed, ErrorCode::NoNegativeInBatch, "batch carries a single label");
}

double distance(const Matrix& emb, int i, int j) { return std::sqrt((emb.row(i) - emb.row(j)).squaredNorm()); }

// Draw an index from `weights` (need not be normalized). Falls back to a
// uniform draw when the total weight is zero.
std::size_t draw_weighted(const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) return uniform_index(rng, weights.size());
  double u = uniform_unit(rng) * total;
  std::size_t last = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last = i;
    u -= weights[i];
    if (u < 0.0) return i;
  }
  return last;
}

}  // namespace

std::vector<Triplet> mine_random(std::span<const int> labels, std::uint64_t seed) {
  require_two_labels(labels);
  Rng rng(seed);
  std::vector<Triplet> out;
  for (int a = 0; a < static_cast<int>(labels.size()); ++a) {
    const AnchorSets s = anchor_sets(labels, a);
    if (s.positives.empty()) continue;
    const int p = s.positives[uniform_index(rng, s.positives.size())];
    const int n = s.negatives[uniform_index(rng, s.negatives.size())];
    out.push_back({a, p, n});
  }
  return out;
}

std::vector<Triplet> mine_semihard(std::span<const int> labels, const Matrix& emb, double slack,
                                   std::uint64_t seed) {
  require_two_labels(labels);
  require(emb.rows() == static_cast<Index>(labels.size()), ErrorCode::DimensionMismatch,
          "labels and embeddings differ in length");
  Rng rng(seed);
  std::vector<Triplet> out;
  IndexList window;
  for (int a = 0; a < static_cast<int>(labels.size()); ++a) {
    const AnchorSets s = anchor_sets(labels, a);
    if (s.positives.empty()) continue;
    const int p = s.positives[uniform_index(rng, s.positives.size())];
    const double dap = distance(emb, a, p);
    window.clear();
    for (int n : s.negatives) {
      const double dan = distance(emb, a, n);
      if (dap < dan && dan < dap + slack) window.push_back(n);
    }
    const IndexList& pool = window.empty() ? s.negatives : window;
    out.push_back({a, p, pool[uniform_index(rng, pool.size())]});
  }
  return out;
}

double dw_log_density(double d, int dim) {
  if (!(d > 0.0 && d < 2.0)) return -std::numeric_limits<double>::infinity();
  return (dim - 2.0) * std::log(d) + 0.5 * (dim - 3.0) * std::log(1.0 - 0.25 * d * d);
}

double dw_density(double d, int dim) {
  if (!(d > 0.0 && d < 2.0)) return 0.0;
  return std::exp(dw_log_density(d, dim));
}

double dw_weight(double d, int dim, double lambda, double clip) {
  if (!(lambda > 0.0)) return 0.0;
  const double dc = std::min(d, clip);
  // 1/q is +inf at zero density, so the weight saturates at lambda there.
  return std::exp(std::min(std::log(lambda), -dw_log_density(dc, dim)));
}

std::vector<Triplet> mine_distance_weighted(std::span<const int> labels, const Matrix& emb, double lambda,
                                            double clip, std::uint64_t seed) {
  require_two_labels(labels);
  require(emb.rows() == static_cast<Index>(labels.size()), ErrorCode::DimensionMismatch,
          "labels and embeddings differ in length");
  require(emb.cols() >= 3, ErrorCode::InvalidArgument, "distance-weighted mining needs D >= 3");
  require(clip > 0.0 && clip <= 2.0, ErrorCode::InvalidArgument, "distance clip must lie in (0,2]");
  const int dim = static_cast<int>(emb.cols());
  Rng rng(seed);
  std::vector<Triplet> out;
  std::vector<double> weights;
  for (int a = 0; a < static_cast<int>(labels.size()); ++a) {
    const AnchorSets s = anchor_sets(labels, a);
    if (s.positives.empty()) continue;
    const int p = s.positives[uniform_index(rng, s.positives.size())];
    weights.clear();
    for (int n : s.negatives) weights.push_back(dw_weight(distance(emb, a, n), dim, lambda, clip));
    out.push_back({a, p, s.negatives[draw_weighted(weights, rng)]});
  }
  return out;
}

std::vector<Triplet> mine(const MiningConfig& cfg, std::span<const int> labels, const Matrix& emb,
                          std::uint64_t seed) {
  switch (cfg.strategy) {
    case MiningStrategy::Random: return mine_random(labels, seed);
    case MiningStrategy::SemiHard: return mine_semihard(labels, emb, cfg.semihard_slack, seed);
    case MiningStrategy::DistanceWeighted:
      return mine_distance_weighted(labels, emb, cfg.dw_lambda, cfg.dw_distance_clip, seed);
  }
  return {};
}

}  // namespace findml
