#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "findml/core_math.hpp"

namespace findml {

/// Multinomial logistic regression: logits = x W^T + b.
struct LogisticModel {
  Matrix weights;  // C x D
  Vector bias;     // C
  double l2 = 1e-3;

  Index num_classes() const { return weights.rows(); }
};

struct LogisticConfig {
  double l2 = 1e-3;
  int epochs = 500;
  double lr = 0.5;
  std::uint64_t seed = 0;
};

struct LogisticFit {
  LogisticModel model;
  std::vector<double> loss_history;  // one entry per epoch, non-increasing
};

/// Mean cross-entropy plus (l2/2)|W|^2 and its gradient.
struct LogisticObjective {
  double value = 0.0;
  Matrix grad_weights;
  Vector grad_bias;
};

LogisticObjective logistic_objective(const LogisticModel& model, const Matrix& x, std::span<const int> labels);

/// Full-batch gradient descent. A step that would raise the objective is
/// rejected and the step size halved. `num_classes` < 0 means max label + 1.
LogisticFit fit_logistic(const Matrix& x, std::span<const int> labels, const LogisticConfig& cfg,
                         int num_classes = -1);

struct Prediction {
  IndexList labels;
  Matrix probabilities;
};

/// Argmax of the softmax; ties go to the lower class id.
Prediction predict(const LogisticModel& model, const Matrix& x);

struct NearestCentroid {
  Matrix centroids;  // one unit-norm row per class id in `class_ids`
  IndexList class_ids;
};

NearestCentroid fit_nearest_centroid(const Matrix& x, std::span<const int> labels);
/// Euclidean nearest centroid; ties go to the lower class id.
IndexList classify(const NearestCentroid& nc, const Matrix& x);

struct ConfusionCounts {
  std::vector<long> tp;
  std::vector<long> fp;
  std::vector<long> fn;
  long support = 0;
  long correct = 0;
};

/// Standard one-vs-rest counts per attribute value.
std::map<int, ConfusionCounts> confusion_by_group(std::span<const int> truth, std::span<const int> predicted,
                                                  std::span<const int> attributes, int num_classes);

struct MacroScores {
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
  long support = 0;
};

/// Macro averages divide by the global class count, so classes missing from
/// a subgroup contribute 0. 0/0 terms are 0.
std::map<int, MacroScores> macro_scores_by_subgroup(std::span<const int> truth, std::span<const int> predicted,
                                                    std::span<const int> attributes, int num_classes);

}  // namespace findml
