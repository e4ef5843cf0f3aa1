#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "findml/data.hpp"
#include "findml/downstream.hpp"
#include "findml/fairness.hpp"
#include "findml/model.hpp"

namespace findml {

enum class SubgroupMode { MinoritizedClass, Attribute };

struct ExperimentConfig {
  // data
  std::string data_source = "synthetic";  // synthetic | file
  std::filesystem::path data_path;
  SyntheticSpec synthetic;
  double train_fraction = 0.5;

  // imbalance (the minoritized selection is also used to label subgroups of
  // the balanced control)
  bool imbalance_enabled = false;
  int minoritized_class_count = 5;
  double retention_fraction = 0.1;
  bool rebalance_majority = true;

  ModelSpec model;
  TrainConfig train;
  bool parade_enabled = false;
  ParadeConfig parade;

  // evaluation
  std::vector<int> ks = {1, 2, 4};
  SubgroupMode subgroups = SubgroupMode::MinoritizedClass;
  GapConvention convention = GapConvention::MajorityVsMinority;
  NmiForm nmi_form = NmiForm::Symmetric;
  bool center_for_uniformity = false;
  std::vector<std::string> probes = {"logistic", "nearest_centroid"};
  std::size_t max_pairs = kDefaultMaxPairs;
  int c_probe_steps = 500;
  int c_probe_hidden = 32;
  double c_probe_lr = 1e-2;
  LogisticConfig logistic;

  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<double> sweep_retention = {0.5, 0.4, 0.3, 0.2, 0.1};
  std::vector<double> grid_alpha = {0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<double> grid_rho = {1, 10, 100, 500, 1000, 1500, 3000};
  double validation_fraction = 0.2;
  std::filesystem::path output_dir = "out";
};

/// Flat `key=value` lines, `#` comments. Unknown keys and bad values raise
/// ConfigError naming `origin:line`.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical key=value dump of every setting, followed by the seed streams.
std::string echo_config(const ExperimentConfig& cfg);

/// "0..9", "3" or "0,2,5".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);

// Run seed -> per-module seeds.
enum class SeedStream : std::uint64_t { Imbalance = 101, Train = 102, KMeans = 103, Probe = 104, Pairs = 105, Validation = 106, CProbe = 107 };
std::uint64_t module_seed(std::uint64_t run_seed, SeedStream stream);

/// The balanced dataset with split tags (generated or read, never depends on the run seed).
Dataset prepare_base_dataset(const ExperimentConfig& cfg);

struct StageResult {
  std::map<std::string, double> overall;
  std::map<std::string, SubgroupValues> per_subgroup;
  std::map<std::string, GapReport> gaps;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::optional<std::string> error;
  IndexList minoritized;
  std::map<std::string, StageResult> stages;  // upstream, logistic, nearest_centroid
  std::optional<double> c_probe;
  double final_train_loss = 0.0;
};

/// Embedding-space and probe evaluation of a trained model on `eval_rows`
/// of `ds`, with probes fit on `probe_rows`.
struct EvalInputs {
  const Dataset* dataset = nullptr;
  IndexList eval_rows;
  IndexList probe_rows;
  IndexList minoritized;
};

SeedResult evaluate_model(const ExperimentConfig& cfg, const TrainResult& trained, const EvalInputs& in,
                          std::uint64_t seed);

/// imbalance -> train -> evaluate for one seed. Errors are recorded, not thrown.
SeedResult run_seed(const ExperimentConfig& cfg, const Dataset& base, std::uint64_t seed);

struct Summary {
  double mean = 0.0;
  double std = 0.0;
};

struct Aggregate {
  int n_seeds = 0;
  std::map<std::string, std::map<std::string, GapReport>> gaps;  // stage -> metric
  std::map<std::string, std::map<std::string, Summary>> overall;
  std::optional<Summary> c_probe;
};

Aggregate aggregate(const std::vector<SeedResult>& runs);

struct ExperimentResult {
  std::vector<SeedResult> per_seed;
  Aggregate summary;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& base);
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct StudyResult {
  ExperimentResult balanced;
  ExperimentResult imbalanced;
};

/// Balanced control (retention 1.0, same minoritized selection) against the
/// imbalanced condition, on one shared dataset.
StudyResult run_study(const ExperimentConfig& cfg);

struct SweepPoint {
  double retention = 1.0;
  ExperimentResult result;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  double spearman_upstream = 0.0;  // severity vs mean recall@1 gap
  double spearman_logistic = 0.0;  // severity vs mean logistic accuracy gap
  bool monotonicity_flag = false;  // raised when either is < 0.8
};

SweepResult imbalance_sweep(const ExperimentConfig& cfg, const std::vector<double>& retentions);

struct GridCell {
  double alpha = 0.0;
  double rho = 0.0;
  std::uint64_t seed = 0;
  double validation_worst_recall1 = 0.0;
  SeedResult test;
};

struct GridResult {
  std::vector<GridCell> cells;
  double selected_alpha = 0.0;
  double selected_rho = 0.0;
  std::vector<SeedResult> standard;  // PARADE off, one per seed
};

/// PARADE over every (alpha, rho, seed). Training uses the train split minus
/// a per-class validation cut; selection maximizes mean validation
/// worst-group recall@1, ties to smaller rho then smaller alpha. Each seed
/// also gets a run with PARADE disabled on the same data.
GridResult alpha_rho_grid(const ExperimentConfig& cfg, const std::vector<double>& alphas,
                          const std::vector<double>& rhos);

double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Serialization and reports.

nlohmann::json to_json(const SeedResult& r);
nlohmann::json to_json(const Aggregate& a);
nlohmann::json to_json(const SweepResult& s);
nlohmann::json to_json(const GridResult& g);

struct OutputFormats {
  bool csv = true;
  bool json = true;
  bool svg = true;
};

OutputFormats parse_formats(const std::string& text);

/// Table-1 layout: one row per (metric, condition) for recall@1, NMI, U_KL
/// and the logistic probe's precision, recall and accuracy gaps.
std::string table_csv(const std::vector<std::pair<std::string, const Aggregate*>>& conditions);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series);

std::string sweep_csv(const SweepResult& s);
std::string grid_csv(const GridResult& g);

void write_text(const std::filesystem::path& path, const std::string& text);

void write_experiment_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                              const ExperimentResult& r, const OutputFormats& f);
void write_study_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg, const StudyResult& r,
                         const OutputFormats& f);
void write_sweep_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg, const SweepResult& r,
                         const OutputFormats& f);
void write_grid_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg, const GridResult& r,
                        const OutputFormats& f);

}  // namespace findml
