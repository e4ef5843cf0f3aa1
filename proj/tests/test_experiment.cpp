#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "findml/experiment.hpp"
#include "xml_check.hpp"

using namespace findml;

namespace {

std::string error_text(auto&& fn, ErrorCode want) {
  try {
    fn();
  } catch (const Error& e) {
    CHECK(e.code() == want);
    return e.what();
  }
  FAIL("expected an error");
  return {};
}

const char* kTiny = R"(# small enough for a unit test
data.classes = 6
data.per_class = 12
data.feature_dim = 8
data.cluster_spread = 0.2
imbalance.minoritized_class_count = 2
imbalance.retention_fraction = 0.3
model.hidden = 8
model.embed_dim = 4
train.epochs = 2
train.batch_size = 8
loss.kind = margin
mining.strategy = random
parade.sa_embed_dim = 4
parade.adversary_hidden = 4
eval.k = 1,2
eval.c_probe_steps = 20
probe.epochs = 50
run.seeds = 0,1
)";

ExperimentConfig tiny() { return parse_config(kTiny, "tiny"); }

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("parse_config reads keys and echoes them back") {
  const ExperimentConfig c = tiny();
  CHECK(c.synthetic.classes == 6);
  CHECK(c.model.hidden == std::vector<int>{8});
  CHECK(c.train.loss.kind == LossKind::Margin);
  CHECK(c.train.mining.strategy == MiningStrategy::Random);
  CHECK(c.ks == std::vector<int>{1, 2});
  CHECK(c.seeds == std::vector<std::uint64_t>{0, 1});
  const std::string echo = echo_config(c);
  CHECK(echo.find("data.classes=6") != std::string::npos);
  // The echo is itself a valid config describing the same run, apart from the
  // trailing seed-stream notes.
  std::istringstream in(echo);
  std::string line, kept;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') kept += line + "\n";
  CHECK(echo_config(parse_config(kept)) == echo);
}

TEST_CASE("parse_config errors name origin and line") {
  CHECK(error_text([] { parse_config("data.classes=4\nbogus.key=1\n", "cfg.txt"); }, ErrorCode::ConfigError)
            .find("cfg.txt:2") != std::string::npos);
  CHECK(error_text([] { parse_config("train.epochs=many\n", "x"); }, ErrorCode::ConfigError).find("x:1") !=
        std::string::npos);
  CHECK(error_text([] { parse_config("no equals sign\n", "y"); }, ErrorCode::ConfigError).find("y:1") !=
        std::string::npos);
  error_text([] { parse_config("data.classes=4\ndata.classes=5\n"); }, ErrorCode::ConfigError);
  error_text([] { parse_config("loss.kind=softtriple\n"); }, ErrorCode::ConfigError);
  error_text([] { parse_config("mining.dw_distance_clip=3\n"); }, ErrorCode::ConfigError);
  error_text([] { load_config("/nonexistent/findml.cfg"); }, ErrorCode::ConfigError);
}

TEST_CASE("seed and number lists") {
  CHECK(parse_seed_list("0..3") == std::vector<std::uint64_t>{0, 1, 2, 3});
  CHECK(parse_seed_list("7") == std::vector<std::uint64_t>{7});
  CHECK(parse_seed_list("0,2,5") == std::vector<std::uint64_t>{0, 2, 5});
  error_text([] { parse_seed_list("5..2"); }, ErrorCode::ConfigError);
  CHECK(parse_double_list("0.5, 0.1") == std::vector<double>{0.5, 0.1});
  CHECK(module_seed(3, SeedStream::Train) != module_seed(3, SeedStream::Probe));
  CHECK(module_seed(3, SeedStream::Train) == module_seed(3, SeedStream::Train));
}

TEST_CASE("spearman") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  // Ranks (1,2,3) vs (1,3,2): 1 - 6*2/(3*8) = 0.5.
  CHECK(spearman({1, 2, 3}, {5, 9, 7}) == doctest::Approx(0.5));
  // Tied values take their average rank.
  CHECK(spearman({1, 2, 2, 3}, {1, 2, 2, 3}) == doctest::Approx(1.0));
}

TEST_CASE("formats") {
  const OutputFormats f = parse_formats("csv,svg");
  CHECK(f.csv);
  CHECK_FALSE(f.json);
  CHECK(f.svg);
  error_text([] { parse_formats("pdf"); }, ErrorCode::ConfigError);
}

TEST_CASE("line_plot_svg is well formed") {
  const std::string svg = line_plot_svg("a < b & c", "x", "y", {{"s1", {0, 1, 2}, {0.1, -0.2, 0.3}}, {"s2", {0}, {1}}});
  CHECK(testutil::well_formed_xml(svg));
  CHECK(svg.find("a &lt; b &amp; c") != std::string::npos);
  CHECK(testutil::well_formed_xml(line_plot_svg("empty", "x", "y", {})));
  CHECK_FALSE(testutil::well_formed_xml("<svg><g></svg>"));
}

TEST_CASE("run_experiment: per-seed results, aggregate and determinism") {
  ExperimentConfig c = tiny();
  c.imbalance_enabled = true;
  const ExperimentResult a = run_experiment(c);
  REQUIRE(a.per_seed.size() == 2);
  for (const SeedResult& s : a.per_seed) {
    INFO(s.error.value_or(""));
    CHECK_FALSE(s.error.has_value());
    CHECK(s.stages.count("upstream") == 1);
    CHECK(s.stages.count("logistic") == 1);
    CHECK(s.stages.count("nearest_centroid") == 1);
    CHECK(s.minoritized.size() == 2);
  }
  CHECK(a.summary.n_seeds == 2);
  CHECK(a.summary.gaps.at("upstream").at("recall@1").n_seeds == 2);
  const ExperimentResult b = run_experiment(c);
  CHECK(to_json(a.summary).dump() == to_json(b.summary).dump());
}

TEST_CASE("run_study shares the test split between conditions") {
  const ExperimentConfig c = tiny();
  const Dataset base = prepare_base_dataset(c);
  const StudyResult r = run_study(c);
  REQUIRE(r.balanced.per_seed.size() == 2);
  REQUIRE(r.imbalanced.per_seed.size() == 2);
  // Same minoritized selection in both conditions.
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(r.balanced.per_seed[i].minoritized == r.imbalanced.per_seed[i].minoritized);
  const ImbalanceResult imb =
      induce_imbalance(base, {c.minoritized_class_count, c.retention_fraction, c.rebalance_majority,
                              module_seed(0, SeedStream::Imbalance)});
  const Dataset t0 = base.subset(base.indices(Split::Test));
  const Dataset t1 = imb.dataset.subset(imb.dataset.indices(Split::Test));
  CHECK(t0.features == t1.features);
  CHECK(t0.ids == t1.ids);
}

TEST_CASE("table_csv has six rows per condition") {
  const ExperimentResult r = run_experiment(tiny());
  const std::string one = table_csv({{"Balanced", &r.summary}});
  const std::string two = table_csv({{"Balanced", &r.summary}, {"Imbalanced", &r.summary}});
  CHECK(count_lines(one) == 1 + 6);
  CHECK(count_lines(two) == 1 + 12);
  CHECK(two.rfind("metric,condition,stage,gap_mean,gap_std,n_seeds\n", 0) == 0);
  // CSV values are the JSON values.
  const double gap = r.summary.gaps.at("upstream").at("recall@1").gap_mean;
  const auto pos = one.find("Recall@1,Balanced,upstream,");
  REQUIRE(pos != std::string::npos);
  const std::string field = one.substr(pos + 27, one.find(',', pos + 27) - pos - 27);
  CHECK(std::stod(field) == gap);
}

TEST_CASE("imbalance_sweep runs every retention for every seed") {
  ExperimentConfig c = tiny();
  c.seeds = {0};
  const SweepResult s = imbalance_sweep(c, {0.5, 0.3, 0.1});
  REQUIRE(s.points.size() == 3);
  for (const SweepPoint& p : s.points) CHECK(p.result.per_seed.size() == 1);
  CHECK(s.monotonicity_flag == (s.spearman_upstream < 0.8 || s.spearman_logistic < 0.8));
  CHECK(count_lines(sweep_csv(s)) > 3);
}

TEST_CASE("alpha_rho_grid: 1x1 grid and cell count") {
  ExperimentConfig c = tiny();
  const GridResult one = alpha_rho_grid(c, {0.3}, {0.5});
  CHECK(one.cells.size() == 2);
  CHECK(one.selected_alpha == 0.3);
  CHECK(one.selected_rho == 0.5);
  for (const GridCell& cell : one.cells) CHECK(cell.test.stages.count("upstream") == 1);
  c.seeds = {0};
  const GridResult g = alpha_rho_grid(c, {0.1, 0.5}, {0.0, 1.0, 2.0});
  CHECK(g.cells.size() == 6);
  CHECK(count_lines(grid_csv(g)) >= 7);
}

TEST_CASE("alpha_rho_grid: ties go to smaller rho, then smaller alpha") {
  // Well separated clusters make validation recall perfect in every cell.
  ExperimentConfig c = tiny();
  c.synthetic.cluster_spread = 0.01;
  c.train.epochs = 1;
  c.seeds = {0};
  const GridResult g = alpha_rho_grid(c, {0.5, 0.1}, {1.0, 0.5});
  for (const GridCell& cell : g.cells) REQUIRE(cell.validation_worst_recall1 == 1.0);
  CHECK(g.selected_rho == 0.5);
  CHECK(g.selected_alpha == 0.1);
}

TEST_CASE("write_study_outputs layout") {
  const ExperimentConfig c = tiny();
  const StudyResult r = run_study(c);
  const auto dir = std::filesystem::temp_directory_path() / "findml_study_layout";
  std::filesystem::remove_all(dir);
  write_study_outputs(dir, c, r, {});
  CHECK(std::filesystem::exists(dir / "config.echo"));
  CHECK(std::filesystem::exists(dir / "aggregate.json"));
  CHECK(std::filesystem::exists(dir / "report.csv"));
  CHECK(std::filesystem::is_directory(dir / "per-seed"));
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "per-seed")) files += e.is_regular_file();
  CHECK(files == 4);
  std::ifstream svg(dir / "curves" / "recall1_gap_by_seed.svg");
  std::stringstream ss;
  ss << svg.rdbuf();
  CHECK(testutil::well_formed_xml(ss.str()));
  std::filesystem::remove_all(dir);
}
