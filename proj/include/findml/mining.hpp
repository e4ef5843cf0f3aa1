#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "findml/core_math.hpp"

namespace findml {

struct Dataset;

/// Samples-per-class batches: each batch holds b/n distinct classes with n
/// rows each (the final batch of an epoch may be short).
struct BatchPlan {
  int batch_size = 0;
  int samples_per_class = 0;
  std::vector<IndexList> batches;  // dataset row indices
};

/// One epoch over the train split. Every class contributes ceil(count/n)
/// blocks, so classes appear in proportion to their train size; a block of a
/// class with fewer than n rows repeats rows (drawn with replacement).
BatchPlan build_spc_batches(const Dataset& ds, int batch_size, int samples_per_class, std::uint64_t seed);
BatchPlan build_spc_batches(const IndexList& rows, const IndexList& row_labels, int batch_size,
                            int samples_per_class, std::uint64_t seed);

/// Positions inside a batch.
struct Triplet {
  int anchor = 0;
  int positive = 0;
  int negative = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

enum class MiningStrategy { Random, SemiHard, DistanceWeighted };
enum class LabelSource { Class, Attribute };

std::string_view to_string(MiningStrategy s);
MiningStrategy parse_mining_strategy(std::string_view s);

struct MiningConfig {
  MiningStrategy strategy = MiningStrategy::DistanceWeighted;
  double semihard_slack = 0.2;
  double dw_lambda = 0.5;
  double dw_distance_clip = 1.4;
  LabelSource label_source = LabelSource::Class;
  std::uint64_t seed = 0;
};

// All miners emit at most one triplet per anchor. Anchors with no positive
// in the batch are skipped; a single-label batch raises NoNegativeInBatch.

std::vector<Triplet> mine_random(std::span<const int> labels, std::uint64_t seed);

/// Negative drawn uniformly from d(a,p) < d(a,n) < d(a,p) + slack, or from
/// every negative when that window is empty.
std::vector<Triplet> mine_semihard(std::span<const int> labels, const Matrix& emb, double slack,
                                   std::uint64_t seed);

/// Pairwise distance density of uniform points on S^(D-1), unnormalized:
/// d^(D-2) (1 - d^2/4)^((D-3)/2). Zero outside (0, 2).
double dw_density(double d, int dim);
/// log of dw_density; -inf outside (0, 2).
double dw_log_density(double d, int dim);

/// Sampling weight min(lambda, 1/q(min(d, clip))) of a negative at distance d.
double dw_weight(double d, int dim, double lambda, double clip);

std::vector<Triplet> mine_distance_weighted(std::span<const int> labels, const Matrix& emb, double lambda,
                                            double clip, std::uint64_t seed);

std::vector<Triplet> mine(const MiningConfig& cfg, std::span<const int> labels, const Matrix& emb,
                          std::uint64_t seed);

}  // namespace findml
