#include "findml/downstream.hpp"

#include <cmath>
#include <set>

#include "findml/random.hpp"

namespace findml {

namespace {

Matrix logits(const LogisticModel& m, const Matrix& x) {
  return (x * m.weights.transpose()).rowwise() + m.bias.transpose();
}

// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& z) {
  Matrix p(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    p.row(i) = (z.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

int argmax_lowest(const auto& row) {
  Index best = 0;
  for (Index c = 1; c < row.size(); ++c) {
    if (row(c) > row(best)) best = c;
  }
  return static_cast<int>(best);
}

}  // namespace

LogisticObjective logistic_objective(const LogisticModel& model, const Matrix& x, std::span<const int> labels) {
  require(x.cols() == model.weights.cols(), ErrorCode::DimensionMismatch, "feature dimension differs from model");
  require(static_cast<Index>(labels.size()) == x.rows(), ErrorCode::DimensionMismatch, "labels and rows differ");
  const double n = static_cast<double>(x.rows());
  const Matrix z = logits(model, x);
  Matrix g = softmax_rows(z);
  LogisticObjective out;
  for (Index i = 0; i < z.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double mx = z.row(i).maxCoeff();
    const double lse = mx + std::log((z.row(i).array() - mx).exp().sum());
    out.value += lse - z(i, y);
    g(i, y) -= 1.0;
  }
  out.value = out.value / n + 0.5 * model.l2 * model.weights.squaredNorm();
  g /= n;
  out.grad_weights = g.transpose() * x + model.l2 * model.weights;
  out.grad_bias = g.colwise().sum().transpose();
  return out;
}

LogisticFit fit_logistic(const Matrix& x, std::span<const int> labels, const LogisticConfig& cfg, int num_classes) {
  const std::set<int> present(labels.begin(), labels.end());
  require(present.size() >= 2, ErrorCode::SingleClass, "logistic regression needs at least two classes");
  const int c = num_classes >= 0 ? num_classes : *present.rbegin() + 1;
  require(*present.begin() >= 0 && *present.rbegin() < c, ErrorCode::InvalidArgument, "label out of range");

  LogisticFit fit;
  fit.model.l2 = cfg.l2;
  fit.model.weights = Matrix(c, x.cols());
  fit.model.bias = Vector::Zero(c);
  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 0.01);
  for (Index r = 0; r < fit.model.weights.rows(); ++r) {
    for (Index k = 0; k < fit.model.weights.cols(); ++k) fit.model.weights(r, k) = normal(rng);
  }

  double lr = cfg.lr;
  LogisticObjective cur = logistic_objective(fit.model, x, labels);
  for (int e = 0; e < cfg.epochs; ++e) {
    LogisticModel next = fit.model;
    next.weights -= lr * cur.grad_weights;
    next.bias -= lr * cur.grad_bias;
    LogisticObjective trial = logistic_objective(next, x, labels);
    if (trial.value <= cur.value) {
      fit.model = std::move(next);
      cur = std::move(trial);
    } else {
      lr *= 0.5;
    }
    fit.loss_history.push_back(cur.value);
  }
  return fit;
}

Prediction predict(const LogisticModel& model, const Matrix& x) {
  require(x.cols() == model.weights.cols(), ErrorCode::DimensionMismatch, "feature dimension differs from model");
  Prediction p;
  p.probabilities = softmax_rows(logits(model, x));
  for (Index i = 0; i < x.rows(); ++i) p.labels.push_back(argmax_lowest(p.probabilities.row(i)));
  return p;
}

NearestCentroid fit_nearest_centroid(const Matrix& x, std::span<const int> labels) {
  require(static_cast<Index>(labels.size()) == x.rows(), ErrorCode::DimensionMismatch, "labels and rows differ");
  const std::set<int> present(labels.begin(), labels.end());
  NearestCentroid nc;
  nc.class_ids.assign(present.begin(), present.end());
  nc.centroids = Matrix::Zero(static_cast<Index>(nc.class_ids.size()), x.cols());
  std::map<int, Index> slot;
  for (std::size_t i = 0; i < nc.class_ids.size(); ++i) slot[nc.class_ids[i]] = static_cast<Index>(i);
  for (Index i = 0; i < x.rows(); ++i) nc.centroids.row(slot[labels[static_cast<std::size_t>(i)]]) += x.row(i);
  for (Index r = 0; r < nc.centroids.rows(); ++r) {
    const double norm = nc.centroids.row(r).norm();
    if (norm > kZeroRowNorm) nc.centroids.row(r) /= norm;
  }
  return nc;
}

IndexList classify(const NearestCentroid& nc, const Matrix& x) {
  require(x.cols() == nc.centroids.cols(), ErrorCode::DimensionMismatch, "feature dimension differs from centroids");
  IndexList out;
  for (Index i = 0; i < x.rows(); ++i) {
    Index best = 0;
    double best_d = (x.row(i) - nc.centroids.row(0)).squaredNorm();
    for (Index c = 1; c < nc.centroids.rows(); ++c) {
      const double d = (x.row(i) - nc.centroids.row(c)).squaredNorm();
      if (d < best_d) {
        best = c;
        best_d = d;
      }
    }
    out.push_back(nc.class_ids[static_cast<std::size_t>(best)]);
  }
  return out;
}

std::map<int, ConfusionCounts> confusion_by_group(std::span<const int> truth, std::span<const int> predicted,
                                                  std::span<const int> attributes, int num_classes) {
  require(truth.size() == predicted.size() && truth.size() == attributes.size(), ErrorCode::DimensionMismatch,
          "truth, predictions and attributes differ in length");
  std::map<int, ConfusionCounts> out;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int y = truth[i];
    const int yhat = predicted[i];
    require(y >= 0 && y < num_classes && yhat >= 0 && yhat < num_classes, ErrorCode::InvalidArgument,
            "label outside [0, num_classes)");
    ConfusionCounts& cc = out[attributes[i]];
    if (cc.tp.empty()) {
      cc.tp.assign(static_cast<std::size_t>(num_classes), 0);
      cc.fp = cc.tp;
      cc.fn = cc.tp;
    }
    ++cc.support;
    if (y == yhat) {
      ++cc.tp[static_cast<std::size_t>(y)];
      ++cc.correct;
    } else {
      ++cc.fp[static_cast<std::size_t>(yhat)];
      ++cc.fn[static_cast<std::size_t>(y)];
    }
  }
  return out;
}

std::map<int, MacroScores> macro_scores_by_subgroup(std::span<const int> truth, std::span<const int> predicted,
                                                    std::span<const int> attributes, int num_classes) {
  auto ratio = [](long a, long b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  std::map<int, MacroScores> out;
  for (const auto& [a, cc] : confusion_by_group(truth, predicted, attributes, num_classes)) {
    MacroScores s;
    for (std::size_t y = 0; y < cc.tp.size(); ++y) {
      s.precision += ratio(cc.tp[y], cc.tp[y] + cc.fp[y]);
      s.recall += ratio(cc.tp[y], cc.tp[y] + cc.fn[y]);
    }
    s.precision /= num_classes;
    s.recall /= num_classes;
    s.accuracy = ratio(cc.correct, cc.support);
    s.support = cc.support;
    out[a] = s;
  }
  return out;
}

}  // namespace findml
