#include <algorithm>
#include <set>

#include "findml/data.hpp"
#include "findml/model.hpp"
#include "findml/random.hpp"

namespace findml {

namespace {

// Seed streams. Each component draws from its own stream so that enabling
// PARADE leaves the baseline's random draws untouched.
enum Stream : std::uint64_t {
  kModel = 21,
  kBatches = 22,
  kMineTarg = 23,
  kMineSa = 24,
  kTargParams = 25,
  kSaParams = 26,
  kAdversary = 27,
};

DenseGrad dense_backward(const Matrix& input, const Matrix& grad_out) {
  return {grad_out.transpose() * input, grad_out.colwise().sum().transpose()};
}

bool has_two_labels(const IndexList& labels) {
  return std::any_of(labels.begin(), labels.end(), [&](int l) { return l != labels.front(); });
}

bool has_positive_pair(const IndexList& labels) {
  std::set<int> seen;
  for (int l : labels) {
    if (!seen.insert(l).second) return true;
  }
  return false;
}

struct HeadLoss {
  double value = 0.0;
  Matrix grad_phi;
  Matrix grad_z;
  LossOutput raw;
};

HeadLoss head_loss(const LossConfig& loss, const MiningConfig& mining, const LossParams& params, const Matrix& phi,
                   const Matrix& z, const IndexList& labels, std::uint64_t seed) {
  std::vector<Triplet> triplets;
  if (loss.uses_triplets()) triplets = mine(mining, labels, phi, seed);
  HeadLoss out;
  out.raw = compute_loss(loss, params, phi, z, labels, triplets);
  out.value = out.raw.value;
  (loss.uses_raw_embeddings() ? out.grad_z : out.grad_phi) = out.raw.grad_embeddings;
  return out;
}

void push_loss_params(LossParams& params, const LossConfig& cfg, const std::string& prefix,
                      std::vector<ParamView>& views, std::vector<double>& lrs) {
  if (cfg.kind == LossKind::Margin) {
    views.push_back({prefix + ".beta", &params.beta, 1, 1});
    lrs.push_back(cfg.margin_beta_lr);
  }
  if (cfg.uses_centers()) {
    views.push_back({prefix + ".centers", params.centers.data(), params.centers.rows(), params.centers.cols()});
    lrs.push_back(cfg.center_lr);
  }
}

void push_loss_grads(const LossOutput& out, const LossParams& params, const LossConfig& cfg, double scale,
                     std::vector<Matrix>& grads) {
  if (cfg.kind == LossKind::Margin) grads.push_back(Matrix::Constant(1, 1, scale * out.grad_beta));
  if (cfg.uses_centers()) {
    grads.push_back(out.grad_centers.size() > 0 ? Matrix(scale * out.grad_centers)
                                                : Matrix::Zero(params.centers.rows(), params.centers.cols()));
  }
}

void renormalize_rows(Matrix& m) {
  for (Index r = 0; r < m.rows(); ++r) m.row(r).normalize();
}

}  // namespace

AdversaryMLP::AdversaryMLP(Index sa_dim, Index hidden, Index target_dim, std::uint64_t seed, bool normalize_output)
    : first_(init_dense(sa_dim, hidden, derive_seed(seed, 1))),
      second_(init_dense(hidden, target_dim, derive_seed(seed, 2))),
      normalize_output_(normalize_output) {}

Matrix AdversaryMLP::apply(const Matrix& phi_sa) const {
  const Matrix o = second_.apply(first_.apply(phi_sa).array().tanh().matrix());
  return normalize_output_ ? normalize_to_hypersphere(o).values() : o;
}

std::vector<ParamView> AdversaryMLP::parameters() {
  // No decay: with a normalized output nothing opposes it radially.
  return {{"xi.0.weight", first_.weight.data(), first_.weight.rows(), first_.weight.cols(), false},
          {"xi.0.bias", first_.bias.data(), first_.bias.size(), 1, false},
          {"xi.1.weight", second_.weight.data(), second_.weight.rows(), second_.weight.cols(), false},
          {"xi.1.bias", second_.bias.data(), second_.bias.size(), 1, false}};
}

DecorrelationOutput decorrelation_c(const Matrix& phi_targ, const Matrix& phi_sa, const AdversaryMLP& xi) {
  require(phi_targ.rows() == phi_sa.rows(), ErrorCode::DimensionMismatch, "head batches differ in rows");
  require(phi_sa.cols() == xi.first().in_dim() && phi_targ.cols() == xi.second().out_dim(),
          ErrorCode::DimensionMismatch, "adversary does not match head dimensions");
  const double n = static_cast<double>(phi_targ.rows());
  const Matrix h = xi.first().apply(phi_sa).array().tanh().matrix();
  const Matrix raw = xi.second().apply(h);
  const Matrix o = xi.normalize_output() ? normalize_to_hypersphere(raw).values() : raw;
  const Matrix prod = phi_targ.cwiseProduct(o);

  DecorrelationOutput out;
  out.c = prod.squaredNorm() / n;
  const Matrix dc_dt = (2.0 / n) * prod.cwiseProduct(o);
  Matrix dc_do = (2.0 / n) * prod.cwiseProduct(phi_targ);
  if (xi.normalize_output()) dc_do = normalize_backward(raw, o, dc_do);
  const DenseGrad g2 = dense_backward(h, dc_do);
  const Matrix g_pre = (dc_do * xi.second().weight).array() * (1.0 - h.array().square());
  const DenseGrad g1 = dense_backward(phi_sa, g_pre);

  // The heads see c through a reversal layer placed after xi's output, so the
  // sign flips twice on the path to the heads and once on the path to xi.
  out.grad_targ = dc_dt;
  out.grad_sa = g_pre * xi.first().weight;
  out.grad_xi = {GradientReversal::backward(g1.weight), GradientReversal::backward(g1.bias),
                 GradientReversal::backward(g2.weight), GradientReversal::backward(g2.bias)};
  return out;
}

Trainer::Trainer(const ModelSpec& spec, const TrainConfig& cfg, int num_classes, int num_attributes)
    : cfg_(cfg), adam_(cfg.adam) {
  ModelSpec s = spec;
  s.sa_embed_dim = 0;
  if (cfg.parade) {
    const ParadeConfig& p = *cfg.parade;
    require(p.alpha_sa >= 0.0 && p.alpha_sa < 1.0, ErrorCode::InvalidArgument, "alpha_sa must lie in [0,1)");
    require(p.rho >= 0.0, ErrorCode::InvalidArgument, "rho must be nonnegative");
    require(p.sa_embed_dim >= 2 && p.adversary_hidden >= 1, ErrorCode::InvalidArgument,
            "bad sensitive-attribute head or adversary size");
    s.sa_embed_dim = p.sa_embed_dim;
  }
  require(cfg.epochs >= 0, ErrorCode::InvalidArgument, "epochs must be nonnegative");
  model_ = EmbeddingModel(s, derive_seed(cfg.seed, kModel));
  targ_params_ = init_loss_params(cfg.loss, num_classes, s.embed_dim, derive_seed(cfg.seed, kTargParams));
  if (cfg.parade) {
    sa_params_ = init_loss_params(cfg.loss, std::max(num_attributes, 2), s.sa_embed_dim,
                                  derive_seed(cfg.seed, kSaParams));
    adversary_ = AdversaryMLP(s.sa_embed_dim, cfg.parade->adversary_hidden, s.embed_dim,
                              derive_seed(cfg.seed, kAdversary), cfg.parade->normalize_adversary);
  }
}

Trainer::StepGradients Trainer::gradients(const Matrix& features, const IndexList& classes,
                                          const IndexList& attributes) {
  require(static_cast<Index>(classes.size()) == features.rows() &&
              static_cast<Index>(attributes.size()) == features.rows(),
          ErrorCode::DimensionMismatch, "batch labels and features differ in length");
  const ForwardCache cache = forward(model_, features);
  const std::uint64_t step = static_cast<std::uint64_t>(state_.step);
  StepDiagnostics diag;

  const IndexList& targ_labels = cfg_.mining.label_source == LabelSource::Class ? classes : attributes;
  const HeadLoss targ = head_loss(cfg_.loss, cfg_.mining, targ_params_, cache.phi_targ, cache.z_targ, targ_labels,
                                  derive_seed(cfg_.seed, kMineTarg, step));
  diag.loss_targ = targ.value;

  HeadGrads upstream;
  upstream.phi_targ = targ.grad_phi;
  upstream.z_targ = targ.grad_z;

  std::optional<HeadLoss> sa;
  std::optional<DecorrelationOutput> dec;
  if (cfg_.parade) {
    const ParadeConfig& p = *cfg_.parade;
    const IndexList& sa_labels = p.sa_mining.label_source == LabelSource::Attribute ? attributes : classes;
    if (p.alpha_sa > 0.0 && has_two_labels(sa_labels) && has_positive_pair(sa_labels)) {
      sa = head_loss(cfg_.loss, p.sa_mining, sa_params_, cache.phi_sa, cache.z_sa, sa_labels,
                     derive_seed(cfg_.seed, kMineSa, step));
      diag.loss_sa = sa->value;
      if (sa->grad_phi.size() > 0) upstream.phi_sa = p.alpha_sa * sa->grad_phi;
      if (sa->grad_z.size() > 0) upstream.z_sa = p.alpha_sa * sa->grad_z;
    }
    dec = decorrelation_c(cache.phi_targ, cache.phi_sa, *adversary_);
    diag.c = dec->c;
    if (p.rho > 0.0) {
      auto add = [](Matrix& dst, const Matrix& g) {
        if (dst.size() == 0) dst = g;
        else dst += g;
      };
      add(upstream.phi_targ, p.rho * dec->grad_targ);
      add(upstream.phi_sa, p.rho * dec->grad_sa);
    }
  }

  const ModelGrads mg = backward(model_, cache, upstream);

  std::vector<ParamView> views = model_.parameters();
  std::vector<Matrix> grads = mg.flatten();
  std::vector<double> lrs(views.size(), cfg_.lr);
  push_loss_params(targ_params_, cfg_.loss, "targ", views, lrs);
  push_loss_grads(targ.raw, targ_params_, cfg_.loss, 1.0, grads);
  if (cfg_.parade) {
    const ParadeConfig& p = *cfg_.parade;
    push_loss_params(sa_params_, cfg_.loss, "sa", views, lrs);
    if (sa) {
      push_loss_grads(sa->raw, sa_params_, cfg_.loss, p.alpha_sa, grads);
    } else {
      push_loss_grads(LossOutput{}, sa_params_, cfg_.loss, 0.0, grads);
    }
    for (const ParamView& v : adversary_->parameters()) {
      views.push_back(v);
      lrs.push_back(p.adversary_lr);
    }
    for (const Matrix& g : dec->grad_xi) grads.push_back(p.rho * g);
  }

  return {std::move(views), std::move(grads), std::move(lrs), diag};
}

StepDiagnostics Trainer::step(const Matrix& features, const IndexList& classes, const IndexList& attributes) {
  StepGradients g = gradients(features, classes, attributes);
  adam_.step(g.views, g.grads, g.lrs);
  model_.touch();
  if (cfg_.loss.uses_centers()) {
    renormalize_rows(targ_params_.centers);
    if (cfg_.parade) renormalize_rows(sa_params_.centers);
  }
  ++state_.step;
  state_.history.push_back(g.diag);
  return g.diag;
}

void Trainer::run_epoch(const Dataset& ds) {
  const BatchPlan plan = build_spc_batches(ds, cfg_.batch_size, cfg_.samples_per_class,
                                           derive_seed(cfg_.seed, kBatches, static_cast<std::uint64_t>(state_.epoch)));
  for (const IndexList& batch : plan.batches) {
    IndexList classes;
    IndexList attributes;
    for (int r : batch) {
      classes.push_back(ds.classes[static_cast<std::size_t>(r)]);
      attributes.push_back(ds.attributes[static_cast<std::size_t>(r)]);
    }
    // Trailing batches can collapse to one class; nothing to contrast there.
    if (batch.size() < 2 || !has_two_labels(classes)) continue;
    Matrix features(static_cast<Index>(batch.size()), ds.feature_dim());
    for (std::size_t i = 0; i < batch.size(); ++i) features.row(static_cast<Index>(i)) = ds.features.row(batch[i]);
    step(features, classes, attributes);
  }
  ++state_.epoch;
}

TrainResult train(const Dataset& ds, const ModelSpec& spec, const TrainConfig& cfg) {
  ModelSpec s = spec;
  s.input_dim = static_cast<int>(ds.feature_dim());
  Trainer trainer(s, cfg, ds.num_classes(), ds.num_attributes());
  for (int e = 0; e < cfg.epochs; ++e) trainer.run_epoch(ds);
  return {trainer.model(), trainer.adversary(), trainer.targ_params(), trainer.state()};
}

double probe_decorrelation(const Matrix& phi_targ, const Matrix& phi_sa, int hidden, int steps, double lr,
                           std::uint64_t seed, bool normalize_output) {
  return probe_decorrelation(phi_targ, phi_sa, phi_targ, phi_sa, hidden, steps, lr, seed, normalize_output);
}

double probe_decorrelation(const Matrix& fit_targ, const Matrix& fit_sa, const Matrix& eval_targ,
                           const Matrix& eval_sa, int hidden, int steps, double lr, std::uint64_t seed,
                           bool normalize_output) {
  AdversaryMLP xi(fit_sa.cols(), hidden, fit_targ.cols(), seed, normalize_output);
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Adam adam(cfg);
  const std::vector<ParamView> views = xi.parameters();
  const std::vector<double> lrs(views.size(), lr);
  for (int s = 0; s < steps; ++s) adam.step(views, decorrelation_c(fit_targ, fit_sa, xi).grad_xi, lrs);
  return decorrelation_c(eval_targ, eval_sa, xi).c;
}

}  // namespace findml
