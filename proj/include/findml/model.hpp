#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "findml/core_math.hpp"
#include "findml/losses.hpp"
#include "findml/mining.hpp"

namespace findml {

struct Dataset;

/// Affine map on row batches: y = x W^T + b.
struct Dense {
  Matrix weight;  // out x in
  Vector bias;    // out

  Index in_dim() const { return weight.cols(); }
  Index out_dim() const { return weight.rows(); }
  Matrix apply(const Matrix& x) const { return (x * weight.transpose()).rowwise() + bias.transpose(); }
};

struct DenseGrad {
  Matrix weight;
  Vector bias;
};

/// Uniform in +-sqrt(6 / fan_in), zero bias.
Dense init_dense(Index in, Index out, std::uint64_t seed);

struct ModelSpec {
  int input_dim = 32;
  std::vector<int> hidden = {64, 32};
  int embed_dim = 16;
  int sa_embed_dim = 0;  // 0: no sensitive-attribute head
};

/// Named view of one parameter tensor (biases appear as n x 1 maps).
struct ParamView {
  std::string name;
  double* data;
  Index rows;
  Index cols;
  bool decay = true;  // subject to the optimizer's weight decay

  Eigen::Map<Matrix> map() const { return Eigen::Map<Matrix>(data, rows, cols); }
};

/// tanh MLP trunk shared by a target head and an optional sensitive-attribute
/// head; both heads end in hypersphere normalization.
class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  EmbeddingModel(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  bool has_sa_head() const { return head_sa_.has_value(); }

  std::vector<Dense>& trunk() { return trunk_; }
  const std::vector<Dense>& trunk() const { return trunk_; }
  Dense& head_targ() { return head_targ_; }
  const Dense& head_targ() const { return head_targ_; }
  Dense& head_sa() { return *head_sa_; }
  const Dense& head_sa() const { return *head_sa_; }

  /// Trunk, target head, then the SA head if present.
  std::vector<ParamView> parameters();
  /// Bumped on every parameter update; caches from older versions are stale.
  std::uint64_t version() const { return version_; }
  void touch() { ++version_; }

 private:
  ModelSpec spec_;
  std::vector<Dense> trunk_;
  Dense head_targ_;
  std::optional<Dense> head_sa_;
  std::uint64_t version_ = 0;
};

struct ForwardCache {
  std::uint64_t version = 0;
  Matrix input;
  std::vector<Matrix> activations;  // tanh outputs, one per trunk layer
  Matrix z_targ;                    // pre-normalization head outputs
  Matrix phi_targ;
  Matrix z_sa;
  Matrix phi_sa;
};

ForwardCache forward(const EmbeddingModel& model, const Matrix& features);

/// Gradient of a unit-normalized row batch mapped back through the
/// normalization: (I - phi phi^T) g / |z| per row.
Matrix normalize_backward(const Matrix& z, const Matrix& phi, const Matrix& grad_phi);

/// Upstream gradients for one backward pass. Per head, the gradient may be
/// given w.r.t. the normalized output, the raw output, or both.
struct HeadGrads {
  Matrix phi_targ;
  Matrix z_targ;
  Matrix phi_sa;
  Matrix z_sa;
};

struct ModelGrads {
  std::vector<DenseGrad> trunk;
  DenseGrad head_targ;
  std::optional<DenseGrad> head_sa;
  Matrix input;

  /// Same order as EmbeddingModel::parameters().
  std::vector<Matrix> flatten() const;
};

ModelGrads backward(const EmbeddingModel& model, const ForwardCache& cache, const HeadGrads& upstream);

/// Unit-norm target-head embedding of every row of `features`.
EmbeddingMatrix embed(const EmbeddingModel& model, const Matrix& features);
EmbeddingMatrix embed_sa(const EmbeddingModel& model, const Matrix& features);

// Adam with coupled L2 weight decay and one learning rate per tensor.

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0004;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// params[i] -= lrs[i] * mhat / (sqrt(vhat) + eps) with g = grads[i] + wd * params[i].
  void step(const std::vector<ParamView>& params, const std::vector<Matrix>& grads, const std::vector<double>& lrs);

  long long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long long t_ = 0;
};

/// Identity forward, sign flip backward.
struct GradientReversal {
  template <class T>
  static const T& forward(const T& x) {
    return x;
  }
  static Matrix backward(const Matrix& upstream) { return -upstream; }
};

/// xi: affine -> tanh -> affine, mapping SA embeddings to target-embedding size.
/// With `normalize_output` the result is projected to the unit sphere, which
/// bounds c by 1; otherwise the maximizer can grow c by scaling alone.
class AdversaryMLP {
 public:
  AdversaryMLP() = default;
  AdversaryMLP(Index sa_dim, Index hidden, Index target_dim, std::uint64_t seed, bool normalize_output = true);

  bool normalize_output() const { return normalize_output_; }

  Dense& first() { return first_; }
  const Dense& first() const { return first_; }
  Dense& second() { return second_; }
  const Dense& second() const { return second_; }

  Matrix apply(const Matrix& phi_sa) const;
  std::vector<ParamView> parameters();

 private:
  Dense first_;
  Dense second_;
  bool normalize_output_ = true;
};

/// c = mean_i |phi_targ_i (.) xi(phi_sa_i)|^2 and the gradients of the
/// combined objective -c after gradient reversal at both head inputs: `xi`
/// holds d(-c)/d theta_xi (descending it ascends c) and the head gradients
/// hold +dc/dphi (descending them lowers c).
struct DecorrelationOutput {
  double c = 0.0;
  Matrix grad_targ;
  Matrix grad_sa;
  std::vector<Matrix> grad_xi;  // same order as AdversaryMLP::parameters()
};

DecorrelationOutput decorrelation_c(const Matrix& phi_targ, const Matrix& phi_sa, const AdversaryMLP& xi);

// Training.

struct ParadeConfig {
  double alpha_sa = 0.3;
  double rho = 1500.0;
  double adversary_lr = 1e-1;
  int adversary_hidden = 32;
  int sa_embed_dim = 16;
  bool normalize_adversary = true;
  MiningConfig sa_mining{MiningStrategy::DistanceWeighted, 0.2, 0.5, 1.4, LabelSource::Attribute, 0};
};

struct TrainConfig {
  LossConfig loss;
  MiningConfig mining;
  AdamConfig adam;
  double lr = 1e-3;
  int epochs = 100;
  int batch_size = 32;
  int samples_per_class = 2;
  std::uint64_t seed = 0;
  std::optional<ParadeConfig> parade;
};

struct StepDiagnostics {
  double loss_targ = 0.0;
  double loss_sa = 0.0;
  double c = 0.0;
};

struct TrainState {
  int epoch = 0;
  long long step = 0;
  std::vector<StepDiagnostics> history;
};

/// One model (and, with PARADE, one adversary) together with its optimizer
/// state. All randomness is derived from cfg.seed and the step counters.
class Trainer {
 public:
  Trainer(const ModelSpec& spec, const TrainConfig& cfg, int num_classes, int num_attributes);

  /// Everything one step would apply, without applying it. `views` alias
  /// this trainer's parameters; grads[i] belongs to views[i].
  struct StepGradients {
    std::vector<ParamView> views;
    std::vector<Matrix> grads;
    std::vector<double> lrs;
    StepDiagnostics diag;
  };
  StepGradients gradients(const Matrix& features, const IndexList& classes, const IndexList& attributes);

  /// A single optimizer step on one batch. With PARADE enabled, trunk and
  /// heads descend L_targ + alpha L_SA + rho c while xi ascends c.
  StepDiagnostics step(const Matrix& features, const IndexList& classes, const IndexList& attributes);

  /// One SPC-n epoch over the train rows of `ds`.
  void run_epoch(const Dataset& ds);

  const EmbeddingModel& model() const { return model_; }
  EmbeddingModel& model() { return model_; }
  const std::optional<AdversaryMLP>& adversary() const { return adversary_; }
  const LossParams& targ_params() const { return targ_params_; }
  const LossParams& sa_params() const { return sa_params_; }
  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  TrainConfig cfg_;
  EmbeddingModel model_;
  std::optional<AdversaryMLP> adversary_;
  LossParams targ_params_;
  LossParams sa_params_;
  Adam adam_;
  TrainState state_;
};

struct TrainResult {
  EmbeddingModel model;
  std::optional<AdversaryMLP> adversary;
  LossParams targ_params;
  TrainState state;
};

/// Full training run; deterministic per cfg.seed.
TrainResult train(const Dataset& ds, const ModelSpec& spec, const TrainConfig& cfg);

/// Train a fresh adversary on frozen embeddings to maximize c (full batch
/// Adam) and report the final c. Runs with different rho become comparable.
double probe_decorrelation(const Matrix& phi_targ, const Matrix& phi_sa, int hidden, int steps, double lr,
                           std::uint64_t seed, bool normalize_output = true);

/// As above, but the adversary is fit on one set of rows and c is read off
/// another, so memorizing individual rows earns nothing.
double probe_decorrelation(const Matrix& fit_targ, const Matrix& fit_sa, const Matrix& eval_targ,
                           const Matrix& eval_sa, int hidden, int steps, double lr, std::uint64_t seed,
                           bool normalize_output = true);

// Checkpoints: `findml-checkpoint 1` header, then one block per tensor.

void write_checkpoint(const std::filesystem::path& path, EmbeddingModel& model);
EmbeddingModel read_checkpoint(const std::filesystem::path& path);

}  // namespace findml
