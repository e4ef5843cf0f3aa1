#pragma once

#include <span>
#include <string>
#include <vector>

#include "findml/core_math.hpp"
#include "findml/mining.hpp"

namespace findml {

enum class LossKind { Contrastive, Triplet, Margin, NPair, MultiSimilarity, ProxyNca, ArcFace };

std::string_view to_string(LossKind k);
LossKind parse_loss_kind(std::string_view s);

/// Objective hyperparameters. Defaults are the published DML settings.
struct LossConfig {
  LossKind kind = LossKind::Margin;
  double margin_gamma = 0.2;  // contrastive / triplet / margin
  double margin_beta_init = 1.2;
  double margin_beta_lr = 0.0005;
  double npair_nu = 0.005;
  double ms_alpha = 2.0;
  double ms_beta = 40.0;
  double ms_lambda = 0.5;
  double ms_epsilon = 0.1;
  double arcface_margin = 0.5;
  double arcface_scale = 16.0;
  double center_lr = 0.0005;  // ArcFace centers and Proxy-NCA proxies

  bool uses_raw_embeddings() const { return kind == LossKind::NPair; }
  bool uses_centers() const { return kind == LossKind::ProxyNca || kind == LossKind::ArcFace; }
  bool uses_triplets() const {
    return kind == LossKind::Contrastive || kind == LossKind::Triplet || kind == LossKind::Margin;
  }
};

struct LossOutput {
  double value = 0.0;
  Matrix grad_embeddings;
  double grad_beta = 0.0;
  Matrix grad_centers;  // empty unless the loss owns class centers
};

struct Pair {
  int i = 0;
  int j = 0;
};

/// (anchor, positive) and (anchor, negative) pairs, in triplet order.
std::vector<Pair> pairs_from_triplets(const std::vector<Triplet>& triplets);

/// (1/b) sum of d for same-label pairs and [gamma - d]+ otherwise; b = batch rows.
LossOutput contrastive_loss(const Matrix& emb, std::span<const int> labels, const std::vector<Pair>& pairs,
                            double gamma);

/// Mean over triplets of [d(a,p) - d(a,n) + gamma]+.
LossOutput triplet_loss(const Matrix& emb, const std::vector<Triplet>& triplets, double gamma);

/// Mean over pairs of [gamma + (d - beta)]+ (positives) and [gamma - (d - beta)]+
/// (negatives), with the gradient for the learnable boundary beta.
LossOutput margin_loss(const Matrix& emb, std::span<const int> labels, const std::vector<Pair>& pairs,
                       double gamma, double beta);

/// Operates on unnormalized embeddings; every ordered positive pair is a term.
LossOutput npair_loss(const Matrix& raw, std::span<const int> labels, double nu);

LossOutput multisimilarity_loss(const Matrix& emb, std::span<const int> labels, double alpha, double beta,
                                double lambda, double epsilon);

/// `proxies` holds one row per class.
LossOutput proxy_nca_loss(const Matrix& emb, std::span<const int> labels, const Matrix& proxies);

/// Additive angular margin on the true-class logit; one negative logit per
/// differently labelled batch member.
LossOutput arcface_loss(const Matrix& emb, std::span<const int> labels, const Matrix& centers, double margin,
                        double scale);

inline constexpr double kArcCosClamp = 1e-7;

/// Learnable state owned by the objective.
struct LossParams {
  double beta = 1.2;
  Matrix centers;
};

LossParams init_loss_params(const LossConfig& cfg, int num_classes, int dim, std::uint64_t seed);

/// Dispatches on cfg.kind. `emb` are normalized rows, `raw` the
/// pre-normalization rows; the returned embedding gradient is with respect to
/// `raw` exactly when cfg.uses_raw_embeddings().
LossOutput compute_loss(const LossConfig& cfg, const LossParams& params, const Matrix& emb, const Matrix& raw,
                        std::span<const int> labels, const std::vector<Triplet>& triplets);

}  // namespace findml
