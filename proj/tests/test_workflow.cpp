#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fmsc/analysis.hpp"
#include "fmsc/csv.hpp"
#include "fmsc/rng.hpp"

using namespace fmsc;

namespace {

namespace fs = std::filesystem;

fs::path work_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "fmsc_workflow" / name;
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

AnalysisConfig fixture_config(const fs::path& dir, const std::string& csv) {
  AnalysisConfig cfg;
  cfg.input = csv;
  cfg.outcome = "y";
  cfg.regressors = {"x"};
  cfg.baseline = {"z1", "z2", "z3"};
  cfg.suspect = {"w"};
  cfg.draws_j = 300;
  cfg.seed = 21;
  cfg.out = (dir / "out").string();
  return cfg;
}

}  // namespace

TEST_CASE("fixture to analysis round trip") {
  fs::path dir = work_dir("analyze");
  FixtureSpec spec;
  spec.family = ProblemFamily::ChooseIv;
  spec.pi_or_gamma = 0.3;
  spec.rho = 0.4;
  spec.n = 400;
  spec.seed = 7;
  spec.out = (dir / "fixture.csv").string();
  write_fixture(spec);

  NumericTable tab = read_numeric_csv(spec.out);
  CHECK(tab.columns == std::vector<std::string>{"y", "x", "z1", "z2", "z3", "w"});
  CHECK(tab.values.n_rows == 400);

  AnalysisConfig cfg = fixture_config(dir, spec.out);
  AnalyzeReport rep = run_analyze(cfg);
  CHECK(rep.n == 400);
  CHECK(rep.n_candidates == 2);
  REQUIRE(rep.targets.size() == 1);

  const TargetReport& t = rep.targets[0];
  CHECK(t.target == "x");
  CHECK(t.candidate_ids == std::vector<std::string>{"valid", "full"});
  REQUIRE(t.fmsc.rows.size() == 2);
  CHECK(t.fmsc.rows[0].bias_sq == 0.0);  // the valid set carries no estimated bias

  // candidate estimate rows: 2 candidates x 1 coefficient, candidate-major
  REQUIRE(rep.estimates.size() == 2);
  CHECK(t.estimate_fmsc ==
        doctest::Approx(rep.estimates[t.fmsc.selected].estimate).epsilon(1e-12));
  CHECK(rep.estimates[0].candidate == "valid");
  CHECK(rep.estimates[1].candidate == "full");
  for (const CandidateEstimateRow& r : rep.estimates) {
    CHECK(r.coefficient == "x");
    CHECK(r.ci_lower < r.estimate);
    CHECK(r.estimate < r.ci_upper);
  }

  // interval nesting and sanity
  CHECK(t.two_step.lower <= t.one_step.lower);
  CHECK(t.two_step.upper >= t.one_step.upper);
  CHECK(t.naive.lower < t.naive.upper);

  // strong outcome correlation of the suspect instrument: keep the valid set
  CHECK(t.fmsc.selected == 0);
}

TEST_CASE("analysis respects intercept and explicit targets") {
  fs::path dir = work_dir("intercept");
  FixtureSpec spec;
  spec.family = ProblemFamily::ChooseIv;
  spec.pi_or_gamma = 0.4;
  spec.rho = 0.0;
  spec.n = 300;
  spec.seed = 11;
  spec.out = (dir / "fixture.csv").string();
  write_fixture(spec);

  AnalysisConfig cfg = fixture_config(dir, spec.out);
  cfg.add_intercept = true;
  cfg.targets = {"x"};
  AnalyzeReport rep = run_analyze(cfg);
  // 2 candidates x (const, x)
  REQUIRE(rep.estimates.size() == 4);
  CHECK(rep.estimates[0].coefficient == "const");
  CHECK(rep.estimates[1].coefficient == "x");
  REQUIRE(rep.targets.size() == 1);
  CHECK(rep.targets[0].target == "x");

  // an intercept target works too
  cfg.targets = {"const"};
  AnalyzeReport rep2 = run_analyze(cfg);
  CHECK(rep2.targets[0].target == "const");
}

TEST_CASE("analysis failure modes") {
  fs::path dir = work_dir("failures");
  FixtureSpec spec;
  spec.out = (dir / "fixture.csv").string();
  spec.n = 120;
  write_fixture(spec);

  AnalysisConfig cfg = fixture_config(dir, spec.out);

  AnalysisConfig no_input = cfg;
  no_input.input.clear();
  CHECK_THROWS_AS(run_analyze(no_input), config_error);

  AnalysisConfig gone = cfg;
  gone.input = (dir / "missing.csv").string();
  CHECK_THROWS_AS(run_analyze(gone), parse_error);

  AnalysisConfig bad_target = cfg;
  bad_target.targets = {"nope"};
  CHECK_THROWS_AS(run_analyze(bad_target), config_error);

  AnalysisConfig dup = cfg;
  dup.suspect = {"w", "w"};
  CHECK_THROWS_AS(run_analyze(dup), config_error);

  AnalysisConfig no_suspect = cfg;
  no_suspect.suspect.clear();
  CHECK_THROWS_AS(run_analyze(no_suspect), config_error);

  AnalysisConfig blockless = cfg;
  blockless.candidate_mode = CandidateMode::Blocks;
  CHECK_THROWS_AS(run_analyze(blockless), config_error);

  AnalysisConfig bad_col = cfg;
  bad_col.baseline = {"z1", "zz"};
  CHECK_THROWS_AS(run_analyze(bad_col), parse_error);
}

TEST_CASE("suspect blocks enter candidates as a unit") {
  fs::path dir = work_dir("blocks");
  // hand-built table with two suspect columns
  Philox rng(31, 0);
  arma::uword n = 250;
  arma::mat Z1 = rng.normal_mat(n, 3);
  arma::vec v = rng.normal_vec(n);
  arma::vec x = Z1 * arma::vec{0.4, 0.3, 0.2} + v;
  arma::vec w1 = rng.normal_vec(n);
  arma::vec w2 = rng.normal_vec(n);
  arma::vec y = 0.5 * x + rng.normal_vec(n);
  std::vector<std::vector<std::string>> rows;
  for (arma::uword i = 0; i < n; ++i)
    rows.push_back({fmt_num(y(i)), fmt_num(x(i)), fmt_num(Z1(i, 0)), fmt_num(Z1(i, 1)),
                    fmt_num(Z1(i, 2)), fmt_num(w1(i)), fmt_num(w2(i))});
  fs::path csv = dir / "two_suspects.csv";
  write_csv(csv.string(), {"y", "x", "z1", "z2", "z3", "w1", "w2"}, rows);

  AnalysisConfig cfg = fixture_config(dir, csv.string());
  cfg.suspect = {"w1", "w2"};
  cfg.draws_j = 200;
  AnalyzeReport subsets = run_analyze(cfg);
  CHECK(subsets.n_candidates == 4);

  AnalysisConfig grouped = cfg;
  grouped.suspect.clear();
  grouped.candidate_mode = CandidateMode::Blocks;
  grouped.suspect_blocks = {{"pair", {"w1", "w2"}}};
  AnalyzeReport blocks = run_analyze(grouped);
  CHECK(blocks.n_candidates == 2);
  CHECK(blocks.targets[0].candidate_ids == std::vector<std::string>{"valid", "full"});
}

TEST_CASE("analysis reports are deterministic") {
  fs::path dir = work_dir("determinism");
  FixtureSpec spec;
  spec.pi_or_gamma = 0.35;
  spec.rho = 0.2;
  spec.n = 200;
  spec.seed = 13;
  spec.out = (dir / "fixture.csv").string();
  write_fixture(spec);

  AnalysisConfig cfg = fixture_config(dir, spec.out);
  cfg.draws_j = 250;

  AnalysisConfig first = cfg;
  first.out = (dir / "out1").string();
  AnalysisConfig second = cfg;
  second.out = (dir / "out2").string();

  auto files1 = write_analyze_report(run_analyze(first), first);
  auto files2 = write_analyze_report(run_analyze(second), second);
  REQUIRE(files1.size() == 1);  // json by default
  CHECK(slurp(files1[0]) == slurp(files2[0]));

  // csv format writes the three tables
  AnalysisConfig as_csv = cfg;
  as_csv.format = OutputFormat::Csv;
  as_csv.out = (dir / "out_csv").string();
  auto files3 = write_analyze_report(run_analyze(as_csv), as_csv);
  REQUIRE(files3.size() == 3);
  for (const std::string& f : files3) {
    CAPTURE(f);
    CHECK(fs::exists(f));
    std::string body = slurp(f);
    CHECK(body.find('\n') != std::string::npos);
  }
  // rerunning the fixture writer reproduces the input byte for byte
  FixtureSpec again = spec;
  again.out = (dir / "fixture2.csv").string();
  write_fixture(again);
  CHECK(slurp(spec.out) == slurp(again.out));
}

TEST_CASE("simulation runner writes tidy tables") {
  fs::path dir = work_dir("simulate");

  SimulateConfig sim;
  sim.experiment = "rmse-ols-tsls";
  sim.reps = 40;
  sim.seed = 4;
  sim.out = (dir / "rmse").string();
  sim.cells = "n=60,pi=0.4,rho=0.2";
  std::string path = run_simulate(sim);
  CHECK(path == sim.out + "/rmse_ols_tsls.csv");
  std::string body = slurp(path);
  std::istringstream lines(body);
  std::string header;
  std::getline(lines, header);
  CHECK(header == "family,strength,rho,n,method,rmse,mean_estimate,select_freq,reps,failures");
  std::vector<std::string> data_lines;
  for (std::string l; std::getline(lines, l);)
    if (!l.empty()) data_lines.push_back(l);
  CHECK(data_lines.size() == 6);  // one row per scalar-problem method
  for (const std::string& l : data_lines) {
    CHECK(l.find("ols-vs-tsls,0.4,0.2,60,") == 0);
    CHECK(l.find(",40,") != std::string::npos);  // reps column
  }

  SimulateConfig crit;
  crit.experiment = "criteria-compare";
  crit.reps = 25;
  crit.seed = 5;
  crit.out = (dir / "crit").string();
  crit.cells = "n=60,gamma=0.3,rho=0.3";
  std::string cpath = run_simulate(crit);
  std::string cbody = slurp(cpath);
  CHECK(std::count(cbody.begin(), cbody.end(), '\n') == 13);  // header + 12 criteria

  SimulateConfig cov;
  cov.experiment = "coverage-choose-iv";
  cov.reps = 25;
  cov.draws_j = 120;
  cov.seed = 6;
  cov.out = (dir / "cov").string();
  cov.cells = "n=80,gamma=0.4,rho=0.3";
  std::string vpath = run_simulate(cov);
  std::string vbody = slurp(vpath);
  CHECK(std::count(vbody.begin(), vbody.end(), '\n') == 5);  // header + 4 procedures
  CHECK(vbody.find("two-step") != std::string::npos);
  CHECK(vbody.find("benchmark") != std::string::npos);

  // determinism: the same config writes identical bytes
  SimulateConfig rerun = sim;
  rerun.out = (dir / "rmse_again").string();
  CHECK(slurp(run_simulate(rerun)) == body);
}

TEST_CASE("simulation runner rejects bad input") {
  fs::path dir = work_dir("simulate_bad");
  SimulateConfig sim;
  sim.out = (dir / "x").string();
  sim.reps = 5;

  sim.experiment = "mystery";
  CHECK_THROWS_AS(run_simulate(sim), config_error);

  sim.experiment = "rmse-ols-tsls";
  sim.cells = "n=50";  // missing rho and pi
  CHECK_THROWS_AS(run_simulate(sim), config_error);

  sim.cells = "n=50,pi=0.3,rho=0.1,bogus=2";
  CHECK_THROWS_AS(run_simulate(sim), config_error);

  sim.cells = "n=fifty,pi=0.3,rho=0.1";
  CHECK_THROWS_AS(run_simulate(sim), parse_error);

  sim.cells = ";";
  CHECK_THROWS_AS(run_simulate(sim), config_error);
}
