#include "findml/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "findml/format.hpp"
#include "findml/random.hpp"

namespace findml {

// ---------------------------------------------------------------------------
// Configuration

namespace {

struct Field {
  std::string key;
  std::function<void(std::string_view)> set;
  std::function<std::string()> get;
};

Error config_error(const std::string& what) { return Error(ErrorCode::ConfigError, what); }

double to_double(std::string_view v) {
  double d = 0.0;
  if (!parse_double(v, d)) throw config_error("not a number: '" + std::string(v) + "'");
  return d;
}

long long to_int(std::string_view v) {
  long long i = 0;
  if (!parse_int(v, i)) throw config_error("not an integer: '" + std::string(v) + "'");
  return i;
}

bool to_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw config_error("not a boolean: '" + std::string(v) + "'");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(xs[i]);
    } else if constexpr (std::is_same_v<T, std::string>) {
      out += xs[i];
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

std::vector<int> to_int_list(std::string_view v) {
  std::vector<int> out;
  for (std::string_view p : split_view(v, ',')) out.push_back(static_cast<int>(to_int(trim(p))));
  return out;
}

std::vector<std::string> to_string_list(std::string_view v) {
  std::vector<std::string> out;
  for (std::string_view p : split_view(v, ',')) {
    if (!trim(p).empty()) out.emplace_back(trim(p));
  }
  return out;
}

Field real(const std::string& key, double& ref) {
  return {key, [&ref](std::string_view v) { ref = to_double(v); }, [&ref] { return format_double(ref); }};
}

Field integer(const std::string& key, int& ref) {
  return {key, [&ref](std::string_view v) { ref = static_cast<int>(to_int(v)); },
          [&ref] { return std::to_string(ref); }};
}

Field u64(const std::string& key, std::uint64_t& ref) {
  return {key, [&ref](std::string_view v) { ref = static_cast<std::uint64_t>(to_int(v)); },
          [&ref] { return std::to_string(ref); }};
}

Field boolean(const std::string& key, bool& ref) {
  return {key, [&ref](std::string_view v) { ref = to_bool(v); }, [&ref] { return from_bool(ref); }};
}

std::string_view to_string(SubgroupMode m) {
  return m == SubgroupMode::MinoritizedClass ? "minoritized_class" : "attribute";
}

std::vector<Field> fields(ExperimentConfig& c) {
  std::vector<Field> f;
  f.push_back({"data.source", [&c](std::string_view v) {
                 if (v != "synthetic" && v != "file") throw config_error("data.source must be synthetic or file");
                 c.data_source = std::string(v);
               },
               [&c] { return c.data_source; }});
  f.push_back({"data.path", [&c](std::string_view v) { c.data_path = std::string(v); },
               [&c] { return c.data_path.string(); }});
  f.push_back(integer("data.classes", c.synthetic.classes));
  f.push_back(integer("data.per_class", c.synthetic.per_class));
  f.push_back(integer("data.feature_dim", c.synthetic.feature_dim));
  f.push_back(real("data.attribute_correlation", c.synthetic.attribute_correlation));
  f.push_back(real("data.cluster_spread", c.synthetic.cluster_spread));
  f.push_back(real("data.attribute_shift", c.synthetic.attribute_shift));
  f.push_back(u64("data.seed", c.synthetic.seed));
  f.push_back(real("data.train_fraction", c.train_fraction));

  f.push_back(boolean("imbalance.enabled", c.imbalance_enabled));
  f.push_back(integer("imbalance.minoritized_class_count", c.minoritized_class_count));
  f.push_back(real("imbalance.retention_fraction", c.retention_fraction));
  f.push_back(boolean("imbalance.rebalance_majority", c.rebalance_majority));

  f.push_back({"model.hidden", [&c](std::string_view v) { c.model.hidden = to_int_list(v); },
               [&c] { return join(c.model.hidden); }});
  f.push_back(integer("model.embed_dim", c.model.embed_dim));

  f.push_back(real("train.lr", c.train.lr));
  f.push_back(integer("train.epochs", c.train.epochs));
  f.push_back(integer("train.batch_size", c.train.batch_size));
  f.push_back(integer("train.samples_per_class", c.train.samples_per_class));
  f.push_back(real("train.weight_decay", c.train.adam.weight_decay));

  LossConfig& l = c.train.loss;
  f.push_back({"loss.kind", [&l](std::string_view v) { l.kind = parse_loss_kind(v); },
               [&l] { return std::string(to_string(l.kind)); }});
  f.push_back(real("loss.margin_gamma", l.margin_gamma));
  f.push_back(real("loss.margin_beta_init", l.margin_beta_init));
  f.push_back(real("loss.margin_beta_lr", l.margin_beta_lr));
  f.push_back(real("loss.npair_nu", l.npair_nu));
  f.push_back(real("loss.ms_alpha", l.ms_alpha));
  f.push_back(real("loss.ms_beta", l.ms_beta));
  f.push_back(real("loss.ms_lambda", l.ms_lambda));
  f.push_back(real("loss.ms_epsilon", l.ms_epsilon));
  f.push_back(real("loss.arcface_margin", l.arcface_margin));
  f.push_back(real("loss.arcface_scale", l.arcface_scale));
  f.push_back(real("loss.center_lr", l.center_lr));

  MiningConfig& m = c.train.mining;
  f.push_back({"mining.strategy", [&m](std::string_view v) { m.strategy = parse_mining_strategy(v); },
               [&m] { return std::string(to_string(m.strategy)); }});
  f.push_back(real("mining.semihard_slack", m.semihard_slack));
  f.push_back(real("mining.dw_lambda", m.dw_lambda));
  f.push_back(real("mining.dw_distance_clip", m.dw_distance_clip));

  ParadeConfig& p = c.parade;
  f.push_back(boolean("parade.enabled", c.parade_enabled));
  f.push_back(real("parade.alpha_sa", p.alpha_sa));
  f.push_back(real("parade.rho", p.rho));
  f.push_back(real("parade.adversary_lr", p.adversary_lr));
  f.push_back(integer("parade.adversary_hidden", p.adversary_hidden));
  f.push_back(integer("parade.sa_embed_dim", p.sa_embed_dim));
  f.push_back(boolean("parade.normalize_adversary", p.normalize_adversary));
  f.push_back({"parade.sa_strategy", [&p](std::string_view v) { p.sa_mining.strategy = parse_mining_strategy(v); },
               [&p] { return std::string(to_string(p.sa_mining.strategy)); }});

  f.push_back({"eval.k", [&c](std::string_view v) { c.ks = to_int_list(v); }, [&c] { return join(c.ks); }});
  f.push_back({"eval.subgroups",
               [&c](std::string_view v) {
                 if (v == "minoritized_class") c.subgroups = SubgroupMode::MinoritizedClass;
                 else if (v == "attribute") c.subgroups = SubgroupMode::Attribute;
                 else throw config_error("eval.subgroups must be minoritized_class or attribute");
               },
               [&c] { return std::string(to_string(c.subgroups)); }});
  f.push_back({"eval.gap_convention", [&c](std::string_view v) { c.convention = parse_gap_convention(v); },
               [&c] { return std::string(to_string(c.convention)); }});
  f.push_back({"eval.nmi_form",
               [&c](std::string_view v) {
                 if (v == "symmetric") c.nmi_form = NmiForm::Symmetric;
                 else if (v == "halved") c.nmi_form = NmiForm::Halved;
                 else throw config_error("eval.nmi_form must be symmetric or halved");
               },
               [&c] { return std::string(c.nmi_form == NmiForm::Symmetric ? "symmetric" : "halved"); }});
  f.push_back(boolean("eval.center_for_uniformity", c.center_for_uniformity));
  f.push_back({"eval.probes",
               [&c](std::string_view v) {
                 c.probes = to_string_list(v);
                 for (const std::string& s : c.probes) {
                   if (s != "logistic" && s != "nearest_centroid") throw config_error("unknown probe '" + s + "'");
                 }
               },
               [&c] { return join(c.probes); }});
  f.push_back({"eval.max_pairs", [&c](std::string_view v) { c.max_pairs = static_cast<std::size_t>(to_int(v)); },
               [&c] { return std::to_string(c.max_pairs); }});
  f.push_back(integer("eval.c_probe_steps", c.c_probe_steps));
  f.push_back(integer("eval.c_probe_hidden", c.c_probe_hidden));
  f.push_back(real("eval.c_probe_lr", c.c_probe_lr));
  f.push_back(real("probe.l2", c.logistic.l2));
  f.push_back(integer("probe.epochs", c.logistic.epochs));
  f.push_back(real("probe.lr", c.logistic.lr));

  f.push_back({"run.seeds", [&c](std::string_view v) { c.seeds = parse_seed_list(std::string(v)); },
               [&c] { return join(c.seeds); }});
  f.push_back({"sweep.retention", [&c](std::string_view v) { c.sweep_retention = parse_double_list(std::string(v)); },
               [&c] { return join(c.sweep_retention); }});
  f.push_back({"grid.alpha", [&c](std::string_view v) { c.grid_alpha = parse_double_list(std::string(v)); },
               [&c] { return join(c.grid_alpha); }});
  f.push_back({"grid.rho", [&c](std::string_view v) { c.grid_rho = parse_double_list(std::string(v)); },
               [&c] { return join(c.grid_rho); }});
  f.push_back(real("grid.validation_fraction", c.validation_fraction));
  f.push_back({"output.dir", [&c](std::string_view v) { c.output_dir = std::string(v); },
               [&c] { return c.output_dir.string(); }});
  return f;
}

void validate(const ExperimentConfig& c) {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw config_error(what);
  };
  check(c.data_source != "file" || !c.data_path.empty(), "data.path is required when data.source=file");
  check(c.synthetic.classes >= 2 && c.synthetic.per_class >= 4 && c.synthetic.feature_dim >= 2,
        "synthetic data needs classes >= 2, per_class >= 4, feature_dim >= 2");
  check(c.synthetic.cluster_spread > 0.0, "data.cluster_spread must be positive");
  check(c.synthetic.attribute_correlation >= 0.0 && c.synthetic.attribute_correlation <= 1.0,
        "data.attribute_correlation must lie in [0,1]");
  check(c.train_fraction > 0.0 && c.train_fraction < 1.0, "data.train_fraction must lie in (0,1)");
  check(c.retention_fraction > 0.0 && c.retention_fraction <= 1.0, "imbalance.retention_fraction must lie in (0,1]");
  check(c.minoritized_class_count >= 1, "imbalance.minoritized_class_count must be positive");
  check(c.data_source != "synthetic" || c.minoritized_class_count < c.synthetic.classes,
        "imbalance.minoritized_class_count must be below data.classes");
  check(!c.model.hidden.empty() && c.model.embed_dim >= 2, "model needs hidden layers and embed_dim >= 2");
  check(c.train.epochs >= 0 && c.train.lr > 0.0, "train.epochs >= 0 and train.lr > 0 required");
  check(c.train.samples_per_class >= 1 && c.train.batch_size % c.train.samples_per_class == 0,
        "train.samples_per_class must divide train.batch_size");
  check(c.train.mining.dw_distance_clip > 0.0 && c.train.mining.dw_distance_clip <= 2.0,
        "mining.dw_distance_clip must lie in (0,2]");
  check(c.parade.alpha_sa >= 0.0 && c.parade.alpha_sa < 1.0, "parade.alpha_sa must lie in [0,1)");
  check(c.parade.rho >= 0.0, "parade.rho must be nonnegative");
  check(!c.ks.empty(), "eval.k must list at least one k");
  for (int k : c.ks) check(k >= 1, "eval.k entries must be positive");
  check(!c.seeds.empty(), "run.seeds is empty");
  for (double r : c.sweep_retention) check(r > 0.0 && r <= 1.0, "sweep.retention values must lie in (0,1]");
  check(!c.grid_alpha.empty() && !c.grid_rho.empty(), "grid lists must be non-empty");
  for (double a : c.grid_alpha) check(a >= 0.0 && a < 1.0, "grid.alpha values must lie in [0,1)");
  for (double r : c.grid_rho) check(r >= 0.0, "grid.rho values must be nonnegative");
  check(c.validation_fraction > 0.0 && c.validation_fraction < 1.0, "grid.validation_fraction must lie in (0,1)");
  check(c.c_probe_steps >= 0 && c.c_probe_hidden >= 1, "bad c probe settings");
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  const std::string_view t = trim(text);
  const auto dots = t.find("..");
  if (dots != std::string_view::npos) {
    const long long lo = to_int(trim(t.substr(0, dots)));
    const long long hi = to_int(trim(t.substr(dots + 2)));
    if (lo < 0 || hi < lo) throw config_error("bad seed range '" + std::string(t) + "'");
    for (long long s = lo; s <= hi; ++s) out.push_back(static_cast<std::uint64_t>(s));
    return out;
  }
  for (std::string_view p : split_view(t, ',')) {
    const long long s = to_int(trim(p));
    if (s < 0) throw config_error("seeds must be nonnegative");
    out.push_back(static_cast<std::uint64_t>(s));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (std::string_view p : split_view(trim(text), ',')) out.push_back(to_double(trim(p)));
  return out;
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  auto table = fields(cfg);
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    std::string_view body = line;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw config_error(where + ": expected key=value");
    const std::string key(trim(body.substr(0, eq)));
    const std::string_view value = trim(body.substr(eq + 1));
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw config_error(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw config_error(where + ": duplicate key '" + key + "'");
    try {
      it->set(value);
    } catch (const std::exception& e) {
      throw config_error(where + ": " + key + ": " + e.what());
    }
  }
  try {
    validate(cfg);
  } catch (const Error& e) {
    throw config_error(origin + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string echo_config(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  std::string out;
  for (const Field& f : fields(copy)) out += f.key + "=" + f.get() + "\n";
  out += "# per-run seeds: derive_seed(run_seed, stream) with streams";
  out += " imbalance=101 train=102 kmeans=103 probe=104 pairs=105 validation=106 c_probe=107\n";
  return out;
}

std::uint64_t module_seed(std::uint64_t run_seed, SeedStream stream) {
  return derive_seed(run_seed, static_cast<std::uint64_t>(stream));
}

Dataset prepare_base_dataset(const ExperimentConfig& cfg) {
  if (cfg.data_source == "file") {
    Dataset ds = read_dataset(cfg.data_path);
    ds.validate();
    return ds;
  }
  const Dataset raw = generate_synthetic(cfg.synthetic);
  return split_per_class(raw, cfg.train_fraction, derive_seed(cfg.synthetic.seed, 0x5e));
}

// ---------------------------------------------------------------------------
// One run

namespace {

TrainConfig train_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainConfig tc = cfg.train;
  tc.seed = module_seed(seed, SeedStream::Train);
  if (cfg.parade_enabled) tc.parade = cfg.parade;
  else tc.parade.reset();
  return tc;
}

IndexList subgroup_labels(const ExperimentConfig& cfg, const Dataset& ds, const IndexList& rows,
                          const IndexList& minoritized) {
  const std::set<int> minor(minoritized.begin(), minoritized.end());
  IndexList out;
  for (int r : rows) {
    const auto i = static_cast<std::size_t>(r);
    out.push_back(cfg.subgroups == SubgroupMode::Attribute ? ds.attributes[i] : (minor.count(ds.classes[i]) ? 1 : 0));
  }
  return out;
}

IndexList gather(const IndexList& src, const IndexList& rows) {
  IndexList out;
  for (int r : rows) out.push_back(src[static_cast<std::size_t>(r)]);
  return out;
}

void add_gaps(StageResult& s, const ExperimentConfig& cfg, const std::map<int, std::size_t>& sizes) {
  for (const auto& [metric, values] : s.per_subgroup) {
    s.gaps[metric] = make_gap_report(metric, values, cfg.convention, sizes);
  }
}

StageResult downstream_stage(const ExperimentConfig& cfg, const IndexList& truth, const IndexList& pred,
                             const IndexList& groups, int num_classes, const std::map<int, std::size_t>& sizes) {
  StageResult s;
  const IndexList one(truth.size(), 0);
  const MacroScores all = macro_scores_by_subgroup(truth, pred, one, num_classes).at(0);
  s.overall["precision"] = all.precision;
  s.overall["recall"] = all.recall;
  s.overall["accuracy"] = all.accuracy;
  for (const auto& [a, m] : macro_scores_by_subgroup(truth, pred, groups, num_classes)) {
    s.per_subgroup["precision"][a] = m.precision;
    s.per_subgroup["recall"][a] = m.recall;
    s.per_subgroup["accuracy"][a] = m.accuracy;
  }
  add_gaps(s, cfg, sizes);
  return s;
}

}  // namespace

SeedResult evaluate_model(const ExperimentConfig& cfg, const TrainResult& trained, const EvalInputs& in,
                          std::uint64_t seed) {
  const Dataset& ds = *in.dataset;
  SeedResult r;
  r.seed = seed;
  r.minoritized = in.minoritized;
  const int num_classes = ds.num_classes();

  const Matrix x = ds.features(in.eval_rows, Eigen::all);
  const IndexList cls = gather(ds.classes, in.eval_rows);
  const IndexList groups = subgroup_labels(cfg, ds, in.eval_rows, in.minoritized);
  const SubgroupPartition part = partition_by_values(groups);
  const auto sizes = subgroup_sizes(part);
  const EmbeddingMatrix emb = embed(trained.model, x);

  StageResult up;
  const DistanceMatrix dist = pairwise_distances(emb, DistanceMode::Euclidean);
  for (int k : cfg.ks) {
    const std::string name = "recall@" + std::to_string(k);
    up.overall[name] = recall_at_k(dist, cls, k);
    up.per_subgroup[name] = k_close_profile(dist, cls, part, k);
  }
  const IndexList clusters = cluster_for_nmi(emb, cls, module_seed(seed, SeedStream::KMeans)).labels;
  up.overall["nmi"] = nmi(clusters, cls, nullptr, cfg.nmi_form);
  up.per_subgroup["nmi"] = nmi_profile(clusters, cls, part, cfg.nmi_form);

  Matrix spectral_rows = emb.values();
  if (cfg.center_for_uniformity) spectral_rows.rowwise() -= spectral_rows.colwise().mean();
  up.overall["u_kl"] = u_kl(spectral_rows);
  for (const auto& [a, rows] : part.groups) up.per_subgroup["u_kl"][a] = u_kl(spectral_rows, &rows);

  const std::uint64_t pair_seed = module_seed(seed, SeedStream::Pairs);
  const Alignment al = alignment_expectations(emb.values(), build_pair_index(cls, {}, std::nullopt, cfg.max_pairs,
                                                                             pair_seed));
  up.overall["alignment_pos"] = al.positive;
  up.overall["alignment_neg"] = al.negative;
  for (const auto& [a, v] : alignment_profile(emb, cls, groups, cfg.max_pairs, pair_seed)) {
    up.per_subgroup["alignment_pos"][a] = v.positive;
    up.per_subgroup["alignment_neg"][a] = v.negative;
  }
  add_gaps(up, cfg, sizes);
  r.stages["upstream"] = std::move(up);

  if (!cfg.probes.empty()) {
    const Matrix probe_x = embed(trained.model, ds.features(in.probe_rows, Eigen::all)).values();
    const IndexList probe_y = gather(ds.classes, in.probe_rows);
    for (const std::string& probe : cfg.probes) {
      IndexList pred;
      if (probe == "logistic") {
        LogisticConfig lc = cfg.logistic;
        lc.seed = module_seed(seed, SeedStream::Probe);
        pred = predict(fit_logistic(probe_x, probe_y, lc, num_classes).model, emb.values()).labels;
      } else {
        pred = classify(fit_nearest_centroid(probe_x, probe_y), emb.values());
      }
      r.stages[probe] = downstream_stage(cfg, cls, pred, groups, num_classes, sizes);
    }
  }

  if (trained.model.has_sa_head()) {
    // Fit on the probe rows, score on the evaluation rows.
    const Matrix fit_x = ds.features(in.probe_rows, Eigen::all);
    r.c_probe = probe_decorrelation(embed(trained.model, fit_x).values(), embed_sa(trained.model, fit_x).values(),
                                    emb.values(), embed_sa(trained.model, x).values(), cfg.c_probe_hidden,
                                    cfg.c_probe_steps, cfg.c_probe_lr, module_seed(seed, SeedStream::CProbe),
                                    cfg.parade.normalize_adversary);
  }
  const auto& hist = trained.state.history;
  const std::size_t tail = std::min<std::size_t>(10, hist.size());
  double loss = 0.0;
  for (std::size_t i = hist.size() - tail; i < hist.size(); ++i) loss += hist[i].loss_targ;
  r.final_train_loss = tail ? loss / static_cast<double>(tail) : 0.0;
  return r;
}

SeedResult run_seed(const ExperimentConfig& cfg, const Dataset& base, std::uint64_t seed) {
  try {
    ImbalanceResult ir{base, {}};
    if (cfg.imbalance_enabled || cfg.subgroups == SubgroupMode::MinoritizedClass) {
      // Retention 1.0 leaves the data untouched but still fixes the minoritized selection.
      ir = induce_imbalance(base, {cfg.minoritized_class_count, cfg.imbalance_enabled ? cfg.retention_fraction : 1.0,
                                   cfg.rebalance_majority, module_seed(seed, SeedStream::Imbalance)});
    }
    const TrainResult trained = train(ir.dataset, cfg.model, train_config(cfg, seed));
    const EvalInputs in{&base, base.indices(Split::Test), base.indices(Split::Train), ir.minoritized};
    return evaluate_model(cfg, trained, in, seed);
  } catch (const Error& e) {
    SeedResult r;
    r.seed = seed;
    r.error = e.what();
    return r;
  }
}

Aggregate aggregate(const std::vector<SeedResult>& runs) {
  Aggregate a;
  std::map<std::string, std::map<std::string, std::vector<GapReport>>> gaps;
  std::map<std::string, std::map<std::string, std::vector<double>>> overall;
  std::vector<double> cs;
  for (const SeedResult& r : runs) {
    if (r.error) continue;
    ++a.n_seeds;
    for (const auto& [stage, s] : r.stages) {
      for (const auto& [metric, g] : s.gaps) gaps[stage][metric].push_back(g);
      for (const auto& [metric, v] : s.overall) overall[stage][metric].push_back(v);
    }
    if (r.c_probe) cs.push_back(*r.c_probe);
  }
  for (const auto& [stage, per] : gaps) {
    for (const auto& [metric, reports] : per) {
      a.gaps[stage][metric] = reports.size() >= 2 ? aggregate_over_seeds(reports) : reports.front();
    }
  }
  for (const auto& [stage, per] : overall) {
    for (const auto& [metric, vs] : per) a.overall[stage][metric] = {mean_of(vs), sample_std(vs)};
  }
  if (!cs.empty() && static_cast<int>(cs.size()) == a.n_seeds) a.c_probe = Summary{mean_of(cs), sample_std(cs)};
  return a;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& base) {
  ExperimentResult out;
  for (std::uint64_t s : cfg.seeds) out.per_seed.push_back(run_seed(cfg, base, s));
  out.summary = aggregate(out.per_seed);
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) { return run_experiment(cfg, prepare_base_dataset(cfg)); }

StudyResult run_study(const ExperimentConfig& cfg) {
  const Dataset base = prepare_base_dataset(cfg);
  ExperimentConfig bal = cfg;
  bal.imbalance_enabled = false;
  ExperimentConfig imb = cfg;
  imb.imbalance_enabled = true;
  return {run_experiment(bal, base), run_experiment(imb, base)};
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), ErrorCode::InvalidArgument, "spearman inputs differ in length");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  if (x.size() < 2) return 0.0;
  const std::vector<double> rx = ranks(x);
  const std::vector<double> ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

namespace {

double gap_or_zero(const Aggregate& a, const std::string& stage, const std::string& metric) {
  const auto s = a.gaps.find(stage);
  if (s == a.gaps.end()) return 0.0;
  const auto m = s->second.find(metric);
  return m == s->second.end() ? 0.0 : m->second.gap_mean;
}

}  // namespace

SweepResult imbalance_sweep(const ExperimentConfig& cfg, const std::vector<double>& retentions) {
  const Dataset base = prepare_base_dataset(cfg);
  SweepResult out;
  std::vector<double> severity, up, lr;
  for (double r : retentions) {
    ExperimentConfig c = cfg;
    c.imbalance_enabled = true;
    c.retention_fraction = r;
    out.points.push_back({r, run_experiment(c, base)});
    severity.push_back(1.0 - r);
    up.push_back(gap_or_zero(out.points.back().result.summary, "upstream", "recall@1"));
    lr.push_back(gap_or_zero(out.points.back().result.summary, "logistic", "accuracy"));
  }
  out.spearman_upstream = spearman(severity, up);
  out.spearman_logistic = spearman(severity, lr);
  out.monotonicity_flag = out.spearman_upstream < 0.8 || out.spearman_logistic < 0.8;
  return out;
}

GridResult alpha_rho_grid(const ExperimentConfig& cfg, const std::vector<double>& alphas,
                          const std::vector<double>& rhos) {
  require(!alphas.empty() && !rhos.empty(), ErrorCode::InvalidArgument, "empty alpha/rho grid");
  const Dataset base = prepare_base_dataset(cfg);
  GridResult out;
  for (std::uint64_t seed : cfg.seeds) {
    // Validation cut taken per class from the train split only.
    const Dataset train_only = base.subset(base.indices(Split::Train));
    Dataset work = split_per_class(train_only, 1.0 - cfg.validation_fraction, module_seed(seed, SeedStream::Validation));
    ImbalanceResult ir{work, {}};
    if (cfg.imbalance_enabled || cfg.subgroups == SubgroupMode::MinoritizedClass) {
      ir = induce_imbalance(work, {cfg.minoritized_class_count, cfg.imbalance_enabled ? cfg.retention_fraction : 1.0,
                                   cfg.rebalance_majority, module_seed(seed, SeedStream::Imbalance)});
    }
    const IndexList val_rows = work.indices(Split::Test);
    const IndexList val_cls = gather(work.classes, val_rows);
    const SubgroupPartition val_part = partition_by_values(subgroup_labels(cfg, work, val_rows, ir.minoritized));
    const auto run_cell = [&](const ExperimentConfig& c, GridCell& cell) {
      try {
        const TrainResult trained = train(ir.dataset, c.model, train_config(c, seed));
        const EmbeddingMatrix val_emb = embed(trained.model, work.features(val_rows, Eigen::all));
        const SubgroupValues prof = k_close_profile(val_emb, val_cls, val_part, 1);
        cell.validation_worst_recall1 = std::min_element(prof.begin(), prof.end(), [](const auto& a, const auto& b) {
                                          return a.second < b.second;
                                        })->second;
        cell.test = evaluate_model(c, trained, {&base, base.indices(Split::Test), base.indices(Split::Train),
                                                ir.minoritized},
                                   seed);
      } catch (const Error& e) {
        cell.test.seed = seed;
        cell.test.error = e.what();
        cell.validation_worst_recall1 = -1.0;
      }
    };
    for (double alpha : alphas) {
      for (double rho : rhos) {
        ExperimentConfig c = cfg;
        c.parade_enabled = true;
        c.parade.alpha_sa = alpha;
        c.parade.rho = rho;
        GridCell cell{alpha, rho, seed, 0.0, {}};
        run_cell(c, cell);
        out.cells.push_back(std::move(cell));
      }
    }
    // Same data, no adversary.
    ExperimentConfig plain = cfg;
    plain.parade_enabled = false;
    GridCell cell{0.0, 0.0, seed, 0.0, {}};
    run_cell(plain, cell);
    out.standard.push_back(std::move(cell.test));
  }
  // Mean validation score per (alpha, rho); ties -> smaller rho, then smaller alpha.
  double best = -std::numeric_limits<double>::infinity();
  bool first = true;
  for (double rho : rhos) {
    for (double alpha : alphas) {
      std::vector<double> vals;
      for (const GridCell& c : out.cells) {
        if (c.alpha == alpha && c.rho == rho) vals.push_back(c.validation_worst_recall1);
      }
      const double m = mean_of(vals);
      const bool better = m > best ||
                          (m == best && (rho < out.selected_rho || (rho == out.selected_rho && alpha < out.selected_alpha)));
      if (first || better) {
        best = m;
        out.selected_alpha = alpha;
        out.selected_rho = rho;
        first = false;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const SeedResult& r) {
  nlohmann::json j;
  j["seed"] = r.seed;
  j["error"] = r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr);
  j["minoritized"] = r.minoritized;
  j["final_train_loss"] = r.final_train_loss;
  j["c_probe"] = r.c_probe ? nlohmann::json(*r.c_probe) : nlohmann::json(nullptr);
  nlohmann::json stages = nlohmann::json::object();
  for (const auto& [name, s] : r.stages) {
    nlohmann::json sj;
    sj["overall"] = s.overall;
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [metric, values] : s.per_subgroup) {
      nlohmann::json vj = nlohmann::json::object();
      for (const auto& [a, v] : values) vj[std::to_string(a)] = v;
      per[metric] = vj;
    }
    sj["per_subgroup"] = per;
    nlohmann::json gj = nlohmann::json::object();
    for (const auto& [metric, g] : s.gaps) gj[metric] = to_json(g);
    sj["gaps"] = gj;
    stages[name] = sj;
  }
  j["stages"] = stages;
  return j;
}

nlohmann::json to_json(const Aggregate& a) {
  nlohmann::json j;
  j["n_seeds"] = a.n_seeds;
  j["c_probe"] = a.c_probe ? nlohmann::json{{"mean", a.c_probe->mean}, {"std", a.c_probe->std}}
                           : nlohmann::json(nullptr);
  nlohmann::json stages = nlohmann::json::object();
  for (const auto& [stage, per] : a.gaps) {
    for (const auto& [metric, g] : per) stages[stage]["gaps"][metric] = to_json(g);
  }
  for (const auto& [stage, per] : a.overall) {
    for (const auto& [metric, s] : per) stages[stage]["overall"][metric] = {{"mean", s.mean}, {"std", s.std}};
  }
  j["stages"] = stages;
  return j;
}

nlohmann::json to_json(const SweepResult& s) {
  nlohmann::json j;
  nlohmann::json pts = nlohmann::json::array();
  for (const SweepPoint& p : s.points) pts.push_back({{"retention", p.retention}, {"aggregate", to_json(p.result.summary)}});
  j["points"] = pts;
  j["spearman_upstream_recall@1"] = s.spearman_upstream;
  j["spearman_logistic_accuracy"] = s.spearman_logistic;
  j["monotonicity_flag"] = s.monotonicity_flag;
  return j;
}

nlohmann::json to_json(const GridResult& g) {
  nlohmann::json j;
  std::map<std::pair<double, double>, std::vector<SeedResult>> by_cell;
  std::map<std::pair<double, double>, std::vector<double>> val;
  for (const GridCell& c : g.cells) {
    by_cell[{c.alpha, c.rho}].push_back(c.test);
    val[{c.alpha, c.rho}].push_back(c.validation_worst_recall1);
  }
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [key, runs] : by_cell) {
    cells.push_back({{"alpha", key.first},
                     {"rho", key.second},
                     {"validation_worst_recall@1", mean_of(val[key])},
                     {"aggregate", to_json(aggregate(runs))}});
  }
  j["cells"] = cells;
  j["selected"] = {{"alpha", g.selected_alpha}, {"rho", g.selected_rho}};
  j["standard"] = to_json(aggregate(g.standard));
  return j;
}

OutputFormats parse_formats(const std::string& text) {
  OutputFormats f{false, false, false};
  for (std::string_view p : split_view(text, ',')) {
    const std::string_view t = trim(p);
    if (t == "csv") f.csv = true;
    else if (t == "json") f.json = true;
    else if (t == "svg") f.svg = true;
    else throw config_error("unknown format '" + std::string(t) + "'");
  }
  return f;
}

std::string table_csv(const std::vector<std::pair<std::string, const Aggregate*>>& conditions) {
  static const std::vector<std::tuple<std::string, std::string, std::string>> rows = {
      {"Recall@1", "upstream", "recall@1"}, {"NMI", "upstream", "nmi"},
      {"U_KL", "upstream", "u_kl"},         {"Precision", "logistic", "precision"},
      {"Recall", "logistic", "recall"},     {"Accuracy", "logistic", "accuracy"}};
  std::string out = "metric,condition,stage,gap_mean,gap_std,n_seeds\n";
  for (const auto& [label, stage, metric] : rows) {
    for (const auto& [cond, agg] : conditions) {
      out += label + "," + cond + "," + stage + ",";
      const auto s = agg->gaps.find(stage);
      if (s != agg->gaps.end() && s->second.count(metric)) {
        const GapReport& g = s->second.at(metric);
        out += format_double(g.gap_mean) + "," + format_double(g.gap_std) + "," + std::to_string(g.n_seeds);
      } else {
        out += ",,0";
      }
      out += "\n";
    }
  }
  return out;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(digits);
  ss << v;
  return ss.str();
}

}  // namespace

std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series) {
  const double w = 640, h = 400, ml = 70, mr = 150, mt = 40, mb = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const Series& s : series) {
    for (double x : s.x) x0 = std::min(x0, x), x1 = std::max(x1, x);
    for (double y : s.y) y0 = std::min(y0, y), y1 = std::max(y1, y);
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1;
  if (!(y0 <= y1)) y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - y0) / (y1 - y0) * (h - mt - mb); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
    << "</text>\n";
  o << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << xml_escape(x_label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << (mt + h - mb) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
    << (mt + h - mb) / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
  for (double t : {0.0, 0.5, 1.0}) {
    const double xv = x0 + t * (x1 - x0);
    const double yv = y0 + t * (y1 - y0);
    o << "<text x=\"" << px(xv) << "\" y=\"" << h - mb + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
      << fixed(xv) << "</text>\n";
    o << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << fixed(yv)
      << "</text>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    const char* color = colors[i % 7];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) o << (k ? " " : "") << px(s.x[k]) << "," << py(s.y[k]);
    o << "\"/>\n";
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      o << "<circle cx=\"" << px(s.x[k]) << "\" cy=\"" << py(s.y[k]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = mt + 18.0 * static_cast<double>(i);
    o << "<rect x=\"" << w - mr + 12 << "\" y=\"" << ly << "\" width=\"12\" height=\"4\" fill=\"" << color << "\"/>\n";
    o << "<text x=\"" << w - mr + 30 << "\" y=\"" << ly + 6 << "\" font-size=\"11\">" << xml_escape(s.name)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string sweep_csv(const SweepResult& s) {
  std::string out = "retention,seed,metric,stage,subgroup,value,gap\n";
  for (const SweepPoint& p : s.points) {
    for (const SeedResult& r : p.result.per_seed) {
      if (r.error) continue;
      for (const auto& [stage, sr] : r.stages) {
        for (const auto& [metric, values] : sr.per_subgroup) {
          const std::string gap = format_double(sr.gaps.at(metric).gap_mean);
          for (const auto& [a, v] : values) {
            out += format_double(p.retention) + "," + std::to_string(r.seed) + "," + metric + "," + stage + "," +
                   std::to_string(a) + "," + format_double(v) + "," + gap + "\n";
          }
        }
      }
    }
  }
  return out;
}

std::string grid_csv(const GridResult& g) {
  static const std::vector<std::pair<std::string, std::string>> cols = {
      {"upstream", "recall@1"}, {"upstream", "nmi"}, {"upstream", "u_kl"}, {"logistic", "accuracy"}};
  std::string out = "alpha,rho,seed,validation_worst_recall@1,c_probe";
  for (const auto& [stage, metric] : cols) {
    out += "," + stage + "." + metric + ".overall," + stage + "." + metric + ".gap," + stage + "." + metric + ".worst";
  }
  out += ",error\n";
  for (const GridCell& c : g.cells) {
    out += format_double(c.alpha) + "," + format_double(c.rho) + "," + std::to_string(c.seed) + "," +
           format_double(c.validation_worst_recall1) + "," + (c.test.c_probe ? format_double(*c.test.c_probe) : "");
    for (const auto& [stage, metric] : cols) {
      const auto s = c.test.stages.find(stage);
      if (s == c.test.stages.end() || !s->second.gaps.count(metric)) {
        out += ",,,";
        continue;
      }
      const SubgroupValues& v = s->second.per_subgroup.at(metric);
      const bool lower = polarity_of(metric) == Polarity::LowerBetter;
      double worst = v.begin()->second;
      for (const auto& [a, x] : v) worst = lower ? std::max(worst, x) : std::min(worst, x);
      out += "," + format_double(s->second.overall.at(metric)) + "," + format_double(s->second.gaps.at(metric).gap_mean) +
             "," + format_double(worst);
    }
    std::string err = c.test.error.value_or("");
    std::replace(err.begin(), err.end(), ',', ';');
    out += "," + err + "\n";
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  require(out.good(), ErrorCode::IoError, "write failed: " + path.string());
}

namespace {

void prepare_dir(const std::filesystem::path& dir, const ExperimentConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "per-seed", ec);
  std::filesystem::create_directories(dir / "curves", ec);
  require(std::filesystem::is_directory(dir), ErrorCode::IoError, "cannot create " + dir.string());
  write_text(dir / "config.echo", echo_config(cfg));
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void write_per_seed(const std::filesystem::path& dir, const std::string& prefix, const ExperimentResult& r) {
  for (const SeedResult& s : r.per_seed) {
    write_json(dir / "per-seed" / (prefix + "seed_" + std::to_string(s.seed) + ".json"), to_json(s));
  }
}

Series gap_series(const std::string& name, const ExperimentResult& r, const std::string& stage,
                  const std::string& metric) {
  Series s{name, {}, {}};
  for (const SeedResult& sr : r.per_seed) {
    if (sr.error) continue;
    const auto st = sr.stages.find(stage);
    if (st == sr.stages.end() || !st->second.gaps.count(metric)) continue;
    s.x.push_back(static_cast<double>(sr.seed));
    s.y.push_back(st->second.gaps.at(metric).gap_mean);
  }
  return s;
}

}  // namespace

void write_experiment_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                              const ExperimentResult& r, const OutputFormats& f) {
  prepare_dir(dir, cfg);
  write_per_seed(dir, "", r);
  write_json(dir / "aggregate.json", to_json(r.summary));
  if (f.csv) write_text(dir / "report.csv", table_csv({{"Run", &r.summary}}));
  if (f.svg) {
    write_text(dir / "curves" / "recall1_gap_by_seed.svg",
               line_plot_svg("Recall@1 gap per seed", "seed", "gap", {gap_series("upstream", r, "upstream", "recall@1")}));
  }
}

void write_study_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg, const StudyResult& r,
                         const OutputFormats& f) {
  prepare_dir(dir, cfg);
  write_per_seed(dir, "balanced_", r.balanced);
  write_per_seed(dir, "imbalanced_", r.imbalanced);
  write_json(dir / "aggregate.json", {{"balanced", to_json(r.balanced.summary)},
                                      {"imbalanced", to_json(r.imbalanced.summary)}});
  if (f.csv) {
    write_text(dir / "report.csv",
               table_csv({{"Balanced", &r.balanced.summary}, {"Imbalanced", &r.imbalanced.summary}}));
  }
  if (f.svg) {
    write_text(dir / "curves" / "recall1_gap_by_seed.svg",
               line_plot_svg("Recall@1 gap per seed", "seed", "gap",
                             {gap_series("balanced", r.balanced, "upstream", "recall@1"),
                              gap_series("imbalanced", r.imbalanced, "upstream", "recall@1")}));
  }
}

void write_sweep_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg, const SweepResult& r,
                         const OutputFormats& f) {
  prepare_dir(dir, cfg);
  for (const SweepPoint& p : r.points) write_per_seed(dir, "retention_" + format_double(p.retention) + "_", p.result);
  write_json(dir / "aggregate.json", to_json(r));
  if (f.csv) {
    write_text(dir / "sweep.csv", sweep_csv(r));
    std::vector<std::string> names;
    for (const SweepPoint& p : r.points) names.push_back("retention=" + format_double(p.retention));
    std::vector<std::pair<std::string, const Aggregate*>> conds;
    for (std::size_t i = 0; i < r.points.size(); ++i) conds.emplace_back(names[i], &r.points[i].result.summary);
    write_text(dir / "report.csv", table_csv(conds));
  }
  if (f.svg) {
    auto curve = [&](const std::string& name, const std::string& stage, const std::string& metric) {
      Series s{name, {}, {}};
      for (const SweepPoint& p : r.points) {
        s.x.push_back(p.retention);
        s.y.push_back(gap_or_zero(p.result.summary, stage, metric));
      }
      return s;
    };
    write_text(dir / "curves" / "upstream_gaps.svg",
               line_plot_svg("Upstream gaps vs retention", "retention fraction", "gap",
                             {curve("recall@1", "upstream", "recall@1"), curve("nmi", "upstream", "nmi"),
                              curve("u_kl", "upstream", "u_kl")}));
    write_text(dir / "curves" / "downstream_gaps.svg",
               line_plot_svg("Downstream gaps vs retention", "retention fraction", "gap",
                             {curve("logistic accuracy", "logistic", "accuracy"),
                              curve("logistic recall", "logistic", "recall"),
                              curve("centroid accuracy", "nearest_centroid", "accuracy")}));
  }
}

void write_grid_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg, const GridResult& r,
                        const OutputFormats& f) {
  prepare_dir(dir, cfg);
  for (const GridCell& c : r.cells) {
    write_json(dir / "per-seed" /
                   ("alpha_" + format_double(c.alpha) + "_rho_" + format_double(c.rho) + "_seed_" +
                    std::to_string(c.seed) + ".json"),
               to_json(c.test));
  }
  write_json(dir / "aggregate.json", to_json(r));
  if (f.csv) {
    write_text(dir / "grid.csv", grid_csv(r));
    std::vector<SeedResult> selected;
    for (const GridCell& c : r.cells) {
      if (c.alpha == r.selected_alpha && c.rho == r.selected_rho) selected.push_back(c.test);
    }
    const Aggregate agg = aggregate(selected);
    const Aggregate plain = aggregate(r.standard);
    write_text(dir / "report.csv", table_csv({{"PARADE", &agg}, {"Standard", &plain}}));
  }
  if (f.svg) {
    std::vector<Series> series;
    std::set<double> alphas;
    for (const GridCell& c : r.cells) alphas.insert(c.alpha);
    for (double a : alphas) {
      std::map<double, std::vector<double>> by_rho;
      for (const GridCell& c : r.cells) {
        if (c.alpha != a || c.test.error) continue;
        by_rho[c.rho].push_back(c.test.stages.at("upstream").gaps.at("recall@1").gap_mean);
      }
      Series s{"alpha=" + format_double(a), {}, {}};
      for (const auto& [rho, gaps] : by_rho) {
        s.x.push_back(std::log10(std::max(rho, 1e-3)));
        s.y.push_back(mean_of(gaps));
      }
      series.push_back(std::move(s));
    }
    write_text(dir / "curves" / "grid_recall1_gap.svg",
               line_plot_svg("Recall@1 gap across the alpha/rho grid", "log10(rho)", "gap", series));
  }
}

}  // namespace findml
