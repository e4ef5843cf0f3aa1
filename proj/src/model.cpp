#include "findml/model.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include "findml/format.hpp"
#include "findml/random.hpp"

namespace findml {

namespace {

enum Stream : std::uint64_t { kTrunk = 11, kHeadTarg = 12, kHeadSa = 13 };

void add_views(std::vector<ParamView>& out, const std::string& prefix, Dense& d) {
  out.push_back({prefix + ".weight", d.weight.data(), d.weight.rows(), d.weight.cols()});
  out.push_back({prefix + ".bias", d.bias.data(), d.bias.size(), 1});
}

void push_grad(std::vector<Matrix>& out, const DenseGrad& g) {
  out.push_back(g.weight);
  out.push_back(Eigen::Map<const Matrix>(g.bias.data(), g.bias.size(), 1));
}

DenseGrad dense_backward(const Matrix& input, const Matrix& grad_out) {
  return {grad_out.transpose() * input, grad_out.colwise().sum().transpose()};
}

}  // namespace

Dense init_dense(Index in, Index out, std::uint64_t seed) {
  Rng rng(seed);
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> uni(-bound, bound);
  Dense d{Matrix(out, in), Vector::Zero(out)};
  for (Index r = 0; r < out; ++r) {
    for (Index c = 0; c < in; ++c) d.weight(r, c) = uni(rng);
  }
  return d;
}

EmbeddingModel::EmbeddingModel(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
  require(spec.input_dim >= 1 && !spec.hidden.empty() && spec.embed_dim >= 2, ErrorCode::InvalidArgument,
          "model needs an input, at least one hidden layer and embed_dim >= 2");
  Index in = spec.input_dim;
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    trunk_.push_back(init_dense(in, spec.hidden[l], derive_seed(seed, kTrunk, l)));
    in = spec.hidden[l];
  }
  head_targ_ = init_dense(in, spec.embed_dim, derive_seed(seed, kHeadTarg));
  if (spec.sa_embed_dim > 0) head_sa_ = init_dense(in, spec.sa_embed_dim, derive_seed(seed, kHeadSa));
}

std::vector<ParamView> EmbeddingModel::parameters() {
  std::vector<ParamView> out;
  for (std::size_t l = 0; l < trunk_.size(); ++l) add_views(out, "trunk." + std::to_string(l), trunk_[l]);
  add_views(out, "head_targ", head_targ_);
  if (head_sa_) add_views(out, "head_sa", *head_sa_);
  return out;
}

std::vector<Matrix> ModelGrads::flatten() const {
  std::vector<Matrix> out;
  for (const DenseGrad& g : trunk) push_grad(out, g);
  push_grad(out, head_targ);
  if (head_sa) push_grad(out, *head_sa);
  return out;
}

ForwardCache forward(const EmbeddingModel& model, const Matrix& features) {
  require(features.cols() == model.spec().input_dim, ErrorCode::DimensionMismatch,
          "features have " + std::to_string(features.cols()) + " columns, model expects " +
              std::to_string(model.spec().input_dim));
  ForwardCache cache;
  cache.version = model.version();
  cache.input = features;
  const Matrix* x = &cache.input;
  for (const Dense& layer : model.trunk()) {
    cache.activations.push_back(layer.apply(*x).array().tanh().matrix());
    x = &cache.activations.back();
  }
  cache.z_targ = model.head_targ().apply(*x);
  cache.phi_targ = normalize_to_hypersphere(cache.z_targ).values();
  if (model.has_sa_head()) {
    cache.z_sa = model.head_sa().apply(*x);
    cache.phi_sa = normalize_to_hypersphere(cache.z_sa).values();
  }
  return cache;
}

Matrix normalize_backward(const Matrix& z, const Matrix& phi, const Matrix& grad_phi) {
  Matrix out(grad_phi.rows(), grad_phi.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    const double proj = phi.row(i).dot(grad_phi.row(i));
    out.row(i) = (grad_phi.row(i) - proj * phi.row(i)) / z.row(i).norm();
  }
  return out;
}

ModelGrads backward(const EmbeddingModel& model, const ForwardCache& cache, const HeadGrads& upstream) {
  require(cache.version == model.version(), ErrorCode::StaleCache, "cache predates the last parameter update");
  const Matrix& features = cache.activations.back();

  auto head_grad = [](const Matrix& z, const Matrix& phi, const Matrix& g_phi, const Matrix& g_z) {
    Matrix g = Matrix::Zero(z.rows(), z.cols());
    if (g_phi.size() > 0) g += normalize_backward(z, phi, g_phi);
    if (g_z.size() > 0) g += g_z;
    return g;
  };

  ModelGrads grads;
  const Matrix gz_targ = head_grad(cache.z_targ, cache.phi_targ, upstream.phi_targ, upstream.z_targ);
  grads.head_targ = dense_backward(features, gz_targ);
  Matrix g_act = gz_targ * model.head_targ().weight;
  if (model.has_sa_head()) {
    const Matrix gz_sa = head_grad(cache.z_sa, cache.phi_sa, upstream.phi_sa, upstream.z_sa);
    grads.head_sa = dense_backward(features, gz_sa);
    // Skip the no-op add so a silent SA head leaves the trunk gradient bit-exact.
    if (upstream.phi_sa.size() > 0 || upstream.z_sa.size() > 0) g_act += gz_sa * model.head_sa().weight;
  }

  grads.trunk.resize(model.trunk().size());
  for (std::size_t l = model.trunk().size(); l-- > 0;) {
    const Matrix& act = cache.activations[l];
    const Matrix g_pre = g_act.array() * (1.0 - act.array().square());
    const Matrix& layer_in = l == 0 ? cache.input : cache.activations[l - 1];
    grads.trunk[l] = dense_backward(layer_in, g_pre);
    g_act = g_pre * model.trunk()[l].weight;
  }
  grads.input = std::move(g_act);
  return grads;
}

EmbeddingMatrix embed(const EmbeddingModel& model, const Matrix& features) {
  return EmbeddingMatrix(forward(model, features).phi_targ, true);
}

EmbeddingMatrix embed_sa(const EmbeddingModel& model, const Matrix& features) {
  require(model.has_sa_head(), ErrorCode::InvalidArgument, "model has no sensitive-attribute head");
  return EmbeddingMatrix(forward(model, features).phi_sa, true);
}

void Adam::step(const std::vector<ParamView>& params, const std::vector<Matrix>& grads,
                const std::vector<double>& lrs) {
  require(params.size() == grads.size() && params.size() == lrs.size(), ErrorCode::InvalidArgument,
          "params, grads and learning rates differ in count");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    require(grads[i].rows() == params[i].rows && grads[i].cols() == params[i].cols, ErrorCode::DimensionMismatch,
            "gradient shape differs for " + params[i].name);
    require(grads[i].allFinite(), ErrorCode::NonFiniteGradient, params[i].name);
  }
  if (m_.empty()) {
    for (const ParamView& p : params) {
      m_.push_back(Matrix::Zero(p.rows, p.cols));
      v_.push_back(Matrix::Zero(p.rows, p.cols));
    }
  }
  require(m_.size() == params.size(), ErrorCode::InvalidArgument, "parameter set changed between Adam steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].map();
    const double wd = params[i].decay ? cfg_.weight_decay : 0.0;
    const Matrix g = grads[i] + wd * p;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    p.array() -= lrs[i] * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

void write_checkpoint(const std::filesystem::path& path, EmbeddingModel& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot open " + path.string());
  const ModelSpec& s = model.spec();
  out << "findml-checkpoint 1\n";
  out << "spec," << s.input_dim << ',' << s.embed_dim << ',' << s.sa_embed_dim;
  for (int h : s.hidden) out << ',' << h;
  out << '\n';
  for (const ParamView& p : model.parameters()) {
    out << "tensor," << p.name << ',' << p.rows << ',' << p.cols << '\n';
    const auto m = p.map();
    for (Index r = 0; r < p.rows; ++r) {
      for (Index c = 0; c < p.cols; ++c) out << (c ? "," : "") << format_double(m(r, c));
      out << '\n';
    }
  }
  require(out.good(), ErrorCode::IoError, "write failed: " + path.string());
}

EmbeddingModel read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() {
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError,
            path.string() + ": unexpected end of file after line " + std::to_string(lineno));
    ++lineno;
    return split_view(line, ',');
  };
  auto bad = [&](const std::string& why) {
    return Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": " + why);
  };

  std::getline(in, line);
  ++lineno;
  if (trim(line) != "findml-checkpoint 1") throw bad("unsupported checkpoint header");
  auto fields = next();
  if (fields.size() < 5 || fields[0] != "spec") throw bad("bad spec line");
  ModelSpec spec;
  long long v = 0;
  std::vector<long long> nums;
  for (std::size_t i = 1; i < fields.size(); ++i) {
    if (!parse_int(fields[i], v)) throw bad("bad spec value");
    nums.push_back(v);
  }
  spec.input_dim = static_cast<int>(nums[0]);
  spec.embed_dim = static_cast<int>(nums[1]);
  spec.sa_embed_dim = static_cast<int>(nums[2]);
  spec.hidden.assign(nums.begin() + 3, nums.end());

  EmbeddingModel model(spec, 0);
  for (const ParamView& p : model.parameters()) {
    fields = next();
    long long rows = 0;
    long long cols = 0;
    if (fields.size() != 4 || fields[0] != "tensor" || fields[1] != p.name || !parse_int(fields[2], rows) ||
        !parse_int(fields[3], cols) || rows != p.rows || cols != p.cols) {
      throw bad("expected tensor " + p.name);
    }
    auto m = p.map();
    for (Index r = 0; r < p.rows; ++r) {
      fields = next();
      if (static_cast<Index>(fields.size()) != p.cols) throw bad("wrong value count in " + p.name);
      for (Index c = 0; c < p.cols; ++c) {
        double x = 0.0;
        if (!parse_double(fields[static_cast<std::size_t>(c)], x)) throw bad("bad number in " + p.name);
        m(r, c) = x;
      }
    }
  }
  return model;
}

}  // namespace findml
