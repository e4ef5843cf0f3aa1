#include "findml/losses.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "findml/random.hpp"

namespace findml {

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::Contrastive: return "contrastive";
    case LossKind::Triplet: return "triplet";
    case LossKind::Margin: return "margin";
    case LossKind::NPair: return "npair";
    case LossKind::MultiSimilarity: return "multisimilarity";
    case LossKind::ProxyNca: return "proxy_nca";
    case LossKind::ArcFace: return "arcface";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view s) {
  for (LossKind k : {LossKind::Contrastive, LossKind::Triplet, LossKind::Margin, LossKind::NPair,
                     LossKind::MultiSimilarity, LossKind::ProxyNca, LossKind::ArcFace}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::ConfigError, "unknown loss kind '" + std::string(s) + "'");
}

std::vector<Pair> pairs_from_triplets(const std::vector<Triplet>& triplets) {
  std::vector<Pair> out;
  out.reserve(2 * triplets.size());
  for (const Triplet& t : triplets) {
    out.push_back({t.anchor, t.positive});
    out.push_back({t.anchor, t.negative});
  }
  return out;
}

namespace {

// d = |x_i - x_j| and its gradient w.r.t. x_i (zero at d = 0).
struct DistGrad {
  double d;
  Eigen::RowVectorXd unit;
};

DistGrad dist_grad(const Matrix& emb, int i, int j) {
  Eigen::RowVectorXd diff = emb.row(i) - emb.row(j);
  const double d = diff.norm();
  if (d > 0.0) diff /= d;
  else diff.setZero();
  return {d, diff};
}

// log(1 + sum exp(x)), with softmax weights exp(x_k) / (1 + sum exp(x)).
double log1p_sum_exp(const std::vector<double>& x, std::vector<double>& weights) {
  double m = 0.0;
  for (double v : x) m = std::max(m, v);
  double total = std::exp(-m);
  weights.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    weights[k] = std::exp(x[k] - m);
    total += weights[k];
  }
  for (double& w : weights) w /= total;
  return m + std::log(total);
}

void check_rows(const Matrix& emb, std::span<const int> labels) {
  require(emb.rows() == static_cast<Index>(labels.size()), ErrorCode::DimensionMismatch,
          "labels and embeddings differ in length");
}

}  // namespace

LossOutput contrastive_loss(const Matrix& emb, std::span<const int> labels, const std::vector<Pair>& pairs,
                            double gamma) {
  check_rows(emb, labels);
  LossOutput out{0.0, Matrix::Zero(emb.rows(), emb.cols()), 0.0, {}};
  const double inv_b = 1.0 / static_cast<double>(emb.rows());
  for (const Pair& p : pairs) {
    const DistGrad g = dist_grad(emb, p.i, p.j);
    double coef = 0.0;
    if (labels[p.i] == labels[p.j]) {
      out.value += g.d;
      coef = 1.0;
    } else if (gamma - g.d > 0.0) {
      out.value += gamma - g.d;
      coef = -1.0;
    }
    if (coef != 0.0) {
      out.grad_embeddings.row(p.i) += coef * inv_b * g.unit;
      out.grad_embeddings.row(p.j) -= coef * inv_b * g.unit;
    }
  }
  out.value *= inv_b;
  return out;
}

LossOutput triplet_loss(const Matrix& emb, const std::vector<Triplet>& triplets, double gamma) {
  LossOutput out{0.0, Matrix::Zero(emb.rows(), emb.cols()), 0.0, {}};
  if (triplets.empty()) return out;
  const double inv = 1.0 / static_cast<double>(triplets.size());
  for (const Triplet& t : triplets) {
    const DistGrad ap = dist_grad(emb, t.anchor, t.positive);
    const DistGrad an = dist_grad(emb, t.anchor, t.negative);
    const double h = ap.d - an.d + gamma;
    if (h <= 0.0) continue;
    out.value += h;
    out.grad_embeddings.row(t.anchor) += inv * (ap.unit - an.unit);
    out.grad_embeddings.row(t.positive) -= inv * ap.unit;
    out.grad_embeddings.row(t.negative) += inv * an.unit;
  }
  out.value *= inv;
  return out;
}

LossOutput margin_loss(const Matrix& emb, std::span<const int> labels, const std::vector<Pair>& pairs,
                       double gamma, double beta) {
  check_rows(emb, labels);
  require(beta > 0.0, ErrorCode::InvalidArgument, "margin boundary beta must be positive");
  LossOutput out{0.0, Matrix::Zero(emb.rows(), emb.cols()), 0.0, {}};
  if (pairs.empty()) return out;
  const double inv = 1.0 / static_cast<double>(pairs.size());
  for (const Pair& p : pairs) {
    const DistGrad g = dist_grad(emb, p.i, p.j);
    // sign = +1 pulls positives below beta - gamma, -1 pushes negatives past beta + gamma.
    const double sign = labels[p.i] == labels[p.j] ? 1.0 : -1.0;
    const double h = gamma + sign * (g.d - beta);
    if (h <= 0.0) continue;
    out.value += h;
    out.grad_embeddings.row(p.i) += sign * inv * g.unit;
    out.grad_embeddings.row(p.j) -= sign * inv * g.unit;
    out.grad_beta -= sign * inv;
  }
  out.value *= inv;
  return out;
}

LossOutput npair_loss(const Matrix& raw, std::span<const int> labels, double nu) {
  check_rows(raw, labels);
  const Index b = raw.rows();
  const double inv_b = 1.0 / static_cast<double>(b);
  LossOutput out{0.0, Matrix::Zero(b, raw.cols()), 0.0, {}};
  const Matrix gram = raw * raw.transpose();
  std::vector<double> x;
  std::vector<double> w;
  IndexList negatives;
  for (Index a = 0; a < b; ++a) {
    negatives.clear();
    bool has_positive = false;
    for (Index j = 0; j < b; ++j) {
      if (j == a) continue;
      if (labels[j] == labels[a]) has_positive = true;
      else negatives.push_back(static_cast<int>(j));
    }
    require(has_positive, ErrorCode::NoPositive, "anchor " + std::to_string(a) + " has no positive");
    for (Index p = 0; p < b; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      x.clear();
      for (int n : negatives) x.push_back(gram(a, n) - gram(a, p));
      out.value += log1p_sum_exp(x, w);
      double wsum = 0.0;
      for (std::size_t k = 0; k < negatives.size(); ++k) {
        const int n = negatives[k];
        out.grad_embeddings.row(a) += inv_b * w[k] * raw.row(n);
        out.grad_embeddings.row(n) += inv_b * w[k] * raw.row(a);
        wsum += w[k];
      }
      out.grad_embeddings.row(a) -= inv_b * wsum * raw.row(p);
      out.grad_embeddings.row(p) -= inv_b * wsum * raw.row(a);
    }
  }
  out.value = inv_b * out.value + nu * inv_b * raw.squaredNorm();
  out.grad_embeddings += 2.0 * nu * inv_b * raw;
  return out;
}

LossOutput multisimilarity_loss(const Matrix& emb, std::span<const int> labels, double alpha, double beta,
                                double lambda, double epsilon) {
  check_rows(emb, labels);
  const Index b = emb.rows();
  const double inv_b = 1.0 / static_cast<double>(b);
  LossOutput out{0.0, Matrix::Zero(b, emb.cols()), 0.0, {}};
  const Matrix sim = emb * emb.transpose();
  std::vector<double> x;
  std::vector<double> w;
  IndexList kept_pos;
  IndexList kept_neg;
  for (Index i = 0; i < b; ++i) {
    double min_pos = std::numeric_limits<double>::infinity();
    double max_neg = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < b; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) min_pos = std::min(min_pos, sim(i, j));
      else max_neg = std::max(max_neg, sim(i, j));
    }
    // A pair survives the mask when either margin condition holds.
    auto kept = [&](double s) { return s > min_pos - epsilon || s < max_neg + epsilon; };
    kept_pos.clear();
    kept_neg.clear();
    for (Index j = 0; j < b; ++j) {
      if (j == i || !kept(sim(i, j))) continue;
      (labels[j] == labels[i] ? kept_pos : kept_neg).push_back(static_cast<int>(j));
    }

    if (!kept_pos.empty()) {
      x.clear();
      for (int j : kept_pos) x.push_back(-alpha * (sim(i, j) - lambda));
      out.value += log1p_sum_exp(x, w) / alpha;
      for (std::size_t k = 0; k < kept_pos.size(); ++k) {
        const double g = -w[k] * inv_b;  // d/ds of (1/alpha) log(1 + sum exp(-alpha (s - lambda)))
        out.grad_embeddings.row(i) += g * emb.row(kept_pos[k]);
        out.grad_embeddings.row(kept_pos[k]) += g * emb.row(i);
      }
    }
    if (!kept_neg.empty()) {
      x.clear();
      for (int j : kept_neg) x.push_back(beta * (sim(i, j) - lambda));
      out.value += log1p_sum_exp(x, w) / beta;
      for (std::size_t k = 0; k < kept_neg.size(); ++k) {
        const double g = w[k] * inv_b;
        out.grad_embeddings.row(i) += g * emb.row(kept_neg[k]);
        out.grad_embeddings.row(kept_neg[k]) += g * emb.row(i);
      }
    }
  }
  out.value *= inv_b;
  return out;
}

LossOutput proxy_nca_loss(const Matrix& emb, std::span<const int> labels, const Matrix& proxies) {
  check_rows(emb, labels);
  require(proxies.cols() == emb.cols(), ErrorCode::DimensionMismatch, "proxy dimension differs from embedding");
  require(proxies.rows() >= 2, ErrorCode::InvalidArgument, "Proxy-NCA needs at least two proxies");
  const Index b = emb.rows();
  const Index C = proxies.rows();
  const double inv_b = 1.0 / static_cast<double>(b);
  LossOutput out{0.0, Matrix::Zero(b, emb.cols()), 0.0, Matrix::Zero(C, proxies.cols())};
  std::vector<double> d(static_cast<std::size_t>(C));
  std::vector<Eigen::RowVectorXd> unit(static_cast<std::size_t>(C));
  for (Index i = 0; i < b; ++i) {
    const int y = labels[i];
    require(y >= 0 && y < C, ErrorCode::MissingProxy, "class " + std::to_string(y));
    double m = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < C; ++c) {
      Eigen::RowVectorXd diff = emb.row(i) - proxies.row(c);
      d[c] = diff.norm();
      unit[c] = d[c] > 0.0 ? Eigen::RowVectorXd(diff / d[c]) : Eigen::RowVectorXd::Zero(emb.cols());
      if (c != y) m = std::max(m, -d[c]);
    }
    double denom = 0.0;
    for (Index c = 0; c < C; ++c) {
      if (c != y) denom += std::exp(-d[c] - m);
    }
    // -log(exp(-d_y) / sum_{c != y} exp(-d_c)) = d_y + logsumexp_{c != y}(-d_c)
    out.value += d[y] + m + std::log(denom);
    out.grad_embeddings.row(i) += inv_b * unit[y];
    out.grad_centers.row(y) -= inv_b * unit[y];
    for (Index c = 0; c < C; ++c) {
      if (c == y) continue;
      const double p = std::exp(-d[c] - m) / denom;
      out.grad_embeddings.row(i) -= inv_b * p * unit[c];
      out.grad_centers.row(c) += inv_b * p * unit[c];
    }
  }
  out.value *= inv_b;
  return out;
}

LossOutput arcface_loss(const Matrix& emb, std::span<const int> labels, const Matrix& centers, double margin,
                        double scale) {
  check_rows(emb, labels);
  require(centers.cols() == emb.cols(), ErrorCode::DimensionMismatch, "center dimension differs from embedding");
  const Index b = emb.rows();
  const double inv_b = 1.0 / static_cast<double>(b);
  LossOutput out{0.0, Matrix::Zero(b, emb.cols()), 0.0, Matrix::Zero(centers.rows(), centers.cols())};
  std::vector<double> logits;
  IndexList logit_class;
  for (Index i = 0; i < b; ++i) {
    const int y = labels[i];
    require(y >= 0 && y < centers.rows(), ErrorCode::MissingProxy, "class " + std::to_string(y));
    const double raw_cos = centers.row(y).dot(emb.row(i));
    const double lo = -1.0 + kArcCosClamp;
    const double hi = 1.0 - kArcCosClamp;
    const double c = std::clamp(raw_cos, lo, hi);
    const double theta = std::acos(c);

    logits.assign(1, scale * std::cos(theta + margin));
    logit_class.assign(1, y);
    for (Index j = 0; j < b; ++j) {
      if (labels[j] == y) continue;
      logits.push_back(scale * centers.row(labels[j]).dot(emb.row(i)));
      logit_class.push_back(labels[j]);
    }
    double m = logits[0];
    for (double l : logits) m = std::max(m, l);
    double total = 0.0;
    for (double l : logits) total += std::exp(l - m);
    out.value += m + std::log(total) - logits[0];

    // dL/dlogit_k = p_k - [k == 0]
    const double p0 = std::exp(logits[0] - m) / total;
    if (raw_cos > lo && raw_cos < hi) {
      // d/dc of s cos(acos(c) + margin) = s sin(theta + margin) / sin(theta)
      const double dlogit_dc = scale * std::sin(theta + margin) / std::sin(theta);
      const double g = inv_b * (p0 - 1.0) * dlogit_dc;
      out.grad_embeddings.row(i) += g * centers.row(y);
      out.grad_centers.row(y) += g * emb.row(i);
    }
    for (std::size_t k = 1; k < logits.size(); ++k) {
      const double g = inv_b * scale * std::exp(logits[k] - m) / total;
      out.grad_embeddings.row(i) += g * centers.row(logit_class[k]);
      out.grad_centers.row(logit_class[k]) += g * emb.row(i);
    }
  }
  out.value *= inv_b;
  return out;
}

LossParams init_loss_params(const LossConfig& cfg, int num_classes, int dim, std::uint64_t seed) {
  LossParams p;
  p.beta = cfg.margin_beta_init;
  if (cfg.uses_centers()) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    p.centers.resize(num_classes, dim);
    for (Index c = 0; c < num_classes; ++c) {
      for (Index d = 0; d < dim; ++d) p.centers(c, d) = normal(rng);
      p.centers.row(c).normalize();
    }
  }
  return p;
}

LossOutput compute_loss(const LossConfig& cfg, const LossParams& params, const Matrix& emb, const Matrix& raw,
                        std::span<const int> labels, const std::vector<Triplet>& triplets) {
  switch (cfg.kind) {
    case LossKind::Contrastive:
      return contrastive_loss(emb, labels, pairs_from_triplets(triplets), cfg.margin_gamma);
    case LossKind::Triplet: return triplet_loss(emb, triplets, cfg.margin_gamma);
    case LossKind::Margin:
      return margin_loss(emb, labels, pairs_from_triplets(triplets), cfg.margin_gamma, params.beta);
    case LossKind::NPair: return npair_loss(raw, labels, cfg.npair_nu);
    case LossKind::MultiSimilarity:
      return multisimilarity_loss(emb, labels, cfg.ms_alpha, cfg.ms_beta, cfg.ms_lambda, cfg.ms_epsilon);
    case LossKind::ProxyNca: return proxy_nca_loss(emb, labels, params.centers);
    case LossKind::ArcFace:
      return arcface_loss(emb, labels, params.centers, cfg.arcface_margin, cfg.arcface_scale);
  }
  return {};
}

}  // namespace findml
