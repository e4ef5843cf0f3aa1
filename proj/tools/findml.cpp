// Command-line front end: gen-data, train, eval, study, sweep, grid, report.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "findml/experiment.hpp"
#include "findml/format.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kPipelineError = 3;

struct Options {
  std::string config;
  std::string seeds;
  std::string out;
  std::string format = "csv,json,svg";
  std::string input;       // eval: embedding dump; report: aggregate.json
  std::string checkpoint;  // train: write, eval: unused
};

findml::ExperimentConfig resolve(const Options& o) {
  findml::ExperimentConfig cfg = o.config.empty() ? findml::parse_config("") : findml::load_config(o.config);
  if (!o.seeds.empty()) cfg.seeds = findml::parse_seed_list(o.seeds);
  if (!o.out.empty()) cfg.output_dir = o.out;
  return cfg;
}

int finish(const std::vector<findml::SeedResult>& runs) {
  int ok = 0;
  for (const auto& r : runs) {
    if (r.error) std::cerr << "seed " << r.seed << " failed: " << *r.error << "\n";
    else ++ok;
  }
  return ok > 0 ? kOk : kPipelineError;
}

int gen_data(const findml::ExperimentConfig& cfg) {
  const findml::Dataset ds = findml::prepare_base_dataset(cfg);
  findml::write_dataset(cfg.output_dir / "dataset.csv", ds);
  findml::write_text(cfg.output_dir / "config.echo", findml::echo_config(cfg));
  std::cout << "wrote " << (cfg.output_dir / "dataset.csv").string() << " (" << ds.size() << " rows)\n";
  return kOk;
}

int train_cmd(const findml::ExperimentConfig& cfg, const Options& o) {
  const findml::Dataset base = findml::prepare_base_dataset(cfg);
  const std::uint64_t seed = cfg.seeds.front();
  findml::ImbalanceResult ir{base, {}};
  if (cfg.imbalance_enabled) {
    ir = findml::induce_imbalance(base, {cfg.minoritized_class_count, cfg.retention_fraction, cfg.rebalance_majority,
                                         findml::module_seed(seed, findml::SeedStream::Imbalance)});
  }
  findml::TrainConfig tc = cfg.train;
  tc.seed = findml::module_seed(seed, findml::SeedStream::Train);
  if (cfg.parade_enabled) tc.parade = cfg.parade;
  findml::TrainResult tr = findml::train(ir.dataset, cfg.model, tc);

  const auto ckpt = o.checkpoint.empty() ? cfg.output_dir / "model.ckpt" : std::filesystem::path(o.checkpoint);
  findml::write_checkpoint(ckpt, tr.model);
  const findml::IndexList test = base.indices(findml::Split::Test);
  findml::EmbeddingDump dump;
  for (int r : test) {
    dump.ids.push_back(base.ids[static_cast<std::size_t>(r)]);
    dump.classes.push_back(base.classes[static_cast<std::size_t>(r)]);
    dump.attributes.push_back(base.attributes[static_cast<std::size_t>(r)]);
  }
  dump.embeddings = findml::embed(tr.model, base.features(test, Eigen::all));
  findml::write_embeddings(cfg.output_dir / "test_embeddings.csv", dump);
  findml::write_text(cfg.output_dir / "config.echo", findml::echo_config(cfg));
  std::cout << "wrote " << ckpt.string() << " and " << (cfg.output_dir / "test_embeddings.csv").string() << "\n";
  return kOk;
}

// Metrics and attribute gaps for a precomputed embedding dump.
int eval_cmd(const findml::ExperimentConfig& cfg, const Options& o) {
  if (o.input.empty()) throw findml::Error(findml::ErrorCode::ConfigError, "eval needs --input EMBEDDINGS.csv");
  const findml::EmbeddingDump dump = findml::read_embeddings(o.input);
  const std::uint64_t seed = cfg.seeds.front();
  const findml::MetricReport m = findml::evaluate_embedding(dump.embeddings, dump.classes, cfg.ks,
                                                            findml::module_seed(seed, findml::SeedStream::KMeans));
  const findml::SubgroupPartition part = findml::partition_by_values(dump.attributes);
  const auto sizes = findml::subgroup_sizes(part);
  nlohmann::json j;
  nlohmann::json overall;
  for (const auto& [k, v] : m.recall_at_k) overall["recall@" + std::to_string(k)] = v;
  overall["nmi"] = m.nmi;
  overall["u_kl"] = m.u_kl;
  overall["alignment_pos"] = m.alignment_pos;
  overall["alignment_neg"] = m.alignment_neg;
  j["overall"] = overall;
  if (part.groups.size() >= 2) {
    nlohmann::json gaps = nlohmann::json::array();
    for (int k : cfg.ks) {
      gaps.push_back(findml::to_json(findml::make_gap_report(
          "recall@" + std::to_string(k), findml::k_close_profile(dump.embeddings, dump.classes, part, k),
          cfg.convention, sizes)));
    }
    const auto clusters =
        findml::cluster_for_nmi(dump.embeddings, dump.classes, findml::module_seed(seed, findml::SeedStream::KMeans));
    gaps.push_back(findml::to_json(findml::make_gap_report(
        "nmi", findml::nmi_profile(clusters.labels, dump.classes, part, cfg.nmi_form), cfg.convention, sizes)));
    gaps.push_back(findml::to_json(findml::make_gap_report("u_kl", findml::uniformity_profile(dump.embeddings, part),
                                                           cfg.convention, sizes)));
    j["gaps"] = gaps;
  }
  findml::write_text(cfg.output_dir / "eval.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int report_cmd(const findml::ExperimentConfig& cfg, const Options& o) {
  const std::filesystem::path in = o.input.empty() ? cfg.output_dir / "aggregate.json" : std::filesystem::path(o.input);
  std::ifstream f(in);
  if (!f) throw findml::Error(findml::ErrorCode::IoError, "cannot read " + in.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw findml::Error(findml::ErrorCode::ParseError, in.string() + ": " + e.what());
  }
  // Study aggregates carry one object per condition; single runs are a bare aggregate.
  std::vector<std::pair<std::string, findml::Aggregate>> conds;
  auto load = [](const nlohmann::json& a) {
    findml::Aggregate agg;
    agg.n_seeds = a.at("n_seeds").get<int>();
    for (const auto& [stage, sj] : a.at("stages").items()) {
      if (!sj.contains("gaps")) continue;
      for (const auto& [metric, g] : sj.at("gaps").items()) agg.gaps[stage][metric] = findml::gap_report_from_json(g);
    }
    return agg;
  };
  if (j.contains("balanced") && j.contains("imbalanced")) {
    conds.emplace_back("Balanced", load(j.at("balanced")));
    conds.emplace_back("Imbalanced", load(j.at("imbalanced")));
  } else if (j.contains("stages")) {
    conds.emplace_back("Run", load(j));
  } else {
    throw findml::Error(findml::ErrorCode::SchemaMismatch, in.string() + ": not an aggregate file");
  }
  std::vector<std::pair<std::string, const findml::Aggregate*>> refs;
  for (const auto& [name, agg] : conds) refs.emplace_back(name, &agg);
  const std::string csv = findml::table_csv(refs);
  findml::write_text(cfg.output_dir / "report.csv", csv);
  std::cout << csv;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness diagnostics for deep metric learning"};
  app.require_subcommand(1);
  Options o;
  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "key=value configuration file");
    sub->add_option("--seeds", o.seeds, "seed list: 0..9 or 0,1,2");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--format", o.format, "comma list of csv,json,svg");
  };
  auto* gen = app.add_subcommand("gen-data", "write the synthetic dataset as CSV");
  auto* trn = app.add_subcommand("train", "train one model and dump test embeddings");
  auto* evl = app.add_subcommand("eval", "metrics and gaps for an embedding dump");
  auto* study = app.add_subcommand("study", "balanced control vs imbalanced training");
  auto* sweep = app.add_subcommand("sweep", "gaps across retention fractions");
  auto* grid = app.add_subcommand("grid", "PARADE alpha/rho grid");
  auto* report = app.add_subcommand("report", "rebuild report.csv from aggregate.json");
  for (auto* s : {gen, trn, evl, study, sweep, grid, report}) common(s);
  trn->add_option("--checkpoint", o.checkpoint, "checkpoint path (default OUT/model.ckpt)");
  evl->add_option("--input", o.input, "embedding dump CSV")->required();
  report->add_option("--input", o.input, "aggregate.json (default OUT/aggregate.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    const findml::ExperimentConfig cfg = resolve(o);
    const findml::OutputFormats fmt = findml::parse_formats(o.format);
    if (gen->parsed()) return gen_data(cfg);
    if (trn->parsed()) return train_cmd(cfg, o);
    if (evl->parsed()) return eval_cmd(cfg, o);
    if (report->parsed()) return report_cmd(cfg, o);
    if (study->parsed()) {
      const findml::StudyResult r = findml::run_study(cfg);
      findml::write_study_outputs(cfg.output_dir, cfg, r, fmt);
      const int a = finish(r.balanced.per_seed);
      const int b = finish(r.imbalanced.per_seed);
      return a == kOk && b == kOk ? kOk : kPipelineError;
    }
    if (sweep->parsed()) {
      const findml::SweepResult r = findml::imbalance_sweep(cfg, cfg.sweep_retention);
      findml::write_sweep_outputs(cfg.output_dir, cfg, r, fmt);
      if (r.monotonicity_flag) std::cerr << "warning: gap is not monotone in imbalance (Spearman < 0.8)\n";
      std::vector<findml::SeedResult> all;
      for (const auto& p : r.points) all.insert(all.end(), p.result.per_seed.begin(), p.result.per_seed.end());
      return finish(all);
    }
    if (grid->parsed()) {
      const findml::GridResult r = findml::alpha_rho_grid(cfg, cfg.grid_alpha, cfg.grid_rho);
      findml::write_grid_outputs(cfg.output_dir, cfg, r, fmt);
      std::cout << "selected alpha=" << findml::format_double(r.selected_alpha)
                << " rho=" << findml::format_double(r.selected_rho) << "\n";
      std::vector<findml::SeedResult> all;
      for (const auto& c : r.cells) all.push_back(c.test);
      return finish(all);
    }
  } catch (const findml::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == findml::ErrorCode::ConfigError ? kConfigError : kPipelineError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPipelineError;
  }
  return kOk;
}
