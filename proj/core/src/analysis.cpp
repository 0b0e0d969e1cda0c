#include "fmsc/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "json.hpp"

#include "fmsc/averaging.hpp"
#include "fmsc/csv.hpp"
#include "fmsc/parallel.hpp"

namespace fmsc {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& value, const char* what) {
  std::vector<std::string> out;
  if (trim(value).empty()) return out;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = value.find(',', start);
    std::string item = trim(comma == std::string::npos ? value.substr(start)
                                                       : value.substr(start, comma - start));
    if (item.empty()) throw parse_error(std::string(what) + ": empty list item");
    out.push_back(item);
    if (comma == std::string::npos) return out;
    start = comma + 1;
  }
}

double parse_double(const std::string& s, const char* what) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
    throw parse_error(std::string(what) + ": expected a number, got '" + s + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& s, const char* what) {
  if (s.empty() || s[0] == '-' || s[0] == '+')
    throw parse_error(std::string(what) + ": expected a nonnegative integer, got '" + s + "'");
  char* end = nullptr;
  unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size())
    throw parse_error(std::string(what) + ": expected a nonnegative integer, got '" + s + "'");
  return v;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out;
}

}  // namespace

AnalysisConfig parse_config_text(const std::string& text) {
  AnalysisConfig cfg;
  std::unordered_set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const std::string where = "config line " + std::to_string(lineno);

    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw parse_error(where + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));

    if (key.rfind("suspect_block", 0) == 0 &&
        (key.size() == 13 || std::isspace(static_cast<unsigned char>(key[13])))) {
      BlockSpec block;
      block.name = trim(key.substr(13));
      if (block.name.empty()) throw parse_error(where + ": suspect_block needs a name");
      block.columns = split_list(value, where.c_str());
      if (block.columns.empty()) throw parse_error(where + ": suspect_block needs columns");
      cfg.suspect_blocks.push_back(std::move(block));
      continue;
    }

    if (!seen.insert(key).second) throw parse_error(where + ": duplicate key '" + key + "'");
    if (key == "input") {
      cfg.input = value;
    } else if (key == "outcome") {
      cfg.outcome = value;
    } else if (key == "regressors") {
      cfg.regressors = split_list(value, where.c_str());
    } else if (key == "baseline") {
      cfg.baseline = split_list(value, where.c_str());
    } else if (key == "suspect") {
      cfg.suspect = split_list(value, where.c_str());
    } else if (key == "targets") {
      cfg.targets = split_list(value, where.c_str());
    } else if (key == "candidate_mode") {
      if (value == "all-subsets")
        cfg.candidate_mode = CandidateMode::AllSubsets;
      else if (value == "blocks")
        cfg.candidate_mode = CandidateMode::Blocks;
      else
        throw parse_error(where + ": candidate_mode must be all-subsets or blocks");
    } else if (key == "add_intercept") {
      if (value == "true")
        cfg.add_intercept = true;
      else if (value == "false")
        cfg.add_intercept = false;
      else
        throw parse_error(where + ": add_intercept must be true or false");
    } else if (key == "alpha") {
      cfg.alpha = parse_double(value, where.c_str());
    } else if (key == "delta") {
      cfg.delta = parse_double(value, where.c_str());
    } else if (key == "draws_j") {
      cfg.draws_j = parse_uint(value, where.c_str());
    } else if (key == "region_budget") {
      cfg.region_budget = parse_uint(value, where.c_str());
    } else if (key == "search_budget") {
      cfg.search_budget = parse_uint(value, where.c_str());
    } else if (key == "seed") {
      cfg.seed = parse_uint(value, where.c_str());
    } else if (key == "threads") {
      cfg.threads = static_cast<unsigned>(parse_uint(value, where.c_str()));
    } else if (key == "out") {
      cfg.out = value;
    } else if (key == "format") {
      if (value == "csv")
        cfg.format = OutputFormat::Csv;
      else if (value == "json")
        cfg.format = OutputFormat::Json;
      else
        throw parse_error(where + ": format must be csv or json");
    } else {
      throw parse_error(where + ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

AnalysisConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const AnalysisConfig& cfg) {
  std::ostringstream out;
  out << "input = " << cfg.input << "\n";
  out << "outcome = " << cfg.outcome << "\n";
  out << "regressors = " << join_list(cfg.regressors) << "\n";
  out << "baseline = " << join_list(cfg.baseline) << "\n";
  out << "suspect = " << join_list(cfg.suspect) << "\n";
  for (const BlockSpec& b : cfg.suspect_blocks)
    out << "suspect_block " << b.name << " = " << join_list(b.columns) << "\n";
  out << "targets = " << join_list(cfg.targets) << "\n";
  out << "candidate_mode = "
      << (cfg.candidate_mode == CandidateMode::AllSubsets ? "all-subsets" : "blocks") << "\n";
  out << "add_intercept = " << (cfg.add_intercept ? "true" : "false") << "\n";
  out << "alpha = " << fmt_num(cfg.alpha) << "\n";
  out << "delta = " << fmt_num(cfg.delta) << "\n";
  out << "draws_j = " << cfg.draws_j << "\n";
  out << "region_budget = " << cfg.region_budget << "\n";
  out << "search_budget = " << cfg.search_budget << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "threads = " << cfg.threads << "\n";
  out << "out = " << cfg.out << "\n";
  out << "format = " << (cfg.format == OutputFormat::Csv ? "csv" : "json") << "\n";
  return out.str();
}

AnalyzeReport run_analyze(const AnalysisConfig& cfg) {
  if (cfg.input.empty()) throw config_error("analyze: input file is required");
  if (cfg.outcome.empty() || cfg.regressors.empty() || cfg.baseline.empty())
    throw config_error("analyze: outcome, regressors and baseline are required");
  NumericTable tab = read_numeric_csv(cfg.input);

  std::vector<std::string> suspect_cols;
  std::vector<SuspectBlock> blocks;
  if (cfg.candidate_mode == CandidateMode::Blocks) {
    if (cfg.suspect_blocks.empty())
      throw config_error("analyze: blocks mode needs suspect_block lines");
    for (const BlockSpec& b : cfg.suspect_blocks) {
      SuspectBlock sb;
      sb.name = b.name;
      for (const std::string& c : b.columns) {
        sb.indices.push_back(static_cast<arma::uword>(suspect_cols.size()));
        suspect_cols.push_back(c);
      }
      blocks.push_back(std::move(sb));
    }
  } else {
    suspect_cols = cfg.suspect;
  }
  if (suspect_cols.empty()) throw config_error("analyze: at least one suspect column is required");
  {
    std::unordered_set<std::string> uniq(suspect_cols.begin(), suspect_cols.end());
    if (uniq.size() != suspect_cols.size())
      throw config_error("analyze: suspect columns listed twice");
  }

  std::vector<std::string> regs = cfg.regressors;
  arma::vec y = tab.col(cfg.outcome);
  arma::mat X = tab.cols(regs);
  arma::mat Z1 = tab.cols(cfg.baseline);
  arma::mat Z2 = tab.cols(suspect_cols);
  if (cfg.add_intercept) {
    arma::vec ones(tab.values.n_rows, arma::fill::ones);
    X = arma::join_rows(arma::mat(ones), X);
    Z1 = arma::join_rows(arma::mat(ones), Z1);
    regs.insert(regs.begin(), "const");
  }
  Dataset d = make_dataset(std::move(y), std::move(X), std::move(Z1), std::move(Z2),
                           ProblemKind::ChooseIv);
  std::vector<MomentSet> candidates =
      candidate_lattice(d.p(), d.q(), cfg.candidate_mode, blocks);

  std::vector<std::string> targets = cfg.targets.empty() ? cfg.regressors : cfg.targets;
  std::vector<arma::uword> tidx;
  for (const std::string& name : targets) {
    auto it = std::find(regs.begin(), regs.end(), name);
    if (it == regs.end())
      throw config_error("analyze: target '" + name + "' is not a regressor");
    tidx.push_back(static_cast<arma::uword>(it - regs.begin()));
  }

  AnalyzeReport rep;
  rep.n = d.n();
  rep.n_candidates = static_cast<arma::uword>(candidates.size());

  const double z = z_two_sided(cfg.alpha);
  for (const MomentSet& s : candidates) {
    EstimateResult fit = fit_candidate(d, s);
    for (std::size_t j = 0; j < regs.size(); ++j) {
      CandidateEstimateRow row;
      row.candidate = s.id;
      row.coefficient = regs[j];
      row.estimate = fit.beta(j);
      row.se = fit.se(j);
      row.ci_lower = row.estimate - z * row.se;
      row.ci_upper = row.estimate + z * row.se;
      rep.estimates.push_back(std::move(row));
    }
  }

  rep.targets.resize(tidx.size());
  parallel_for(tidx.size(), cfg.threads, [&](std::size_t k) {
    ProblemContext ctx = make_choose_iv_context(d, candidates, tidx[k]);
    TargetReport tr;
    tr.target = targets[k];
    tr.fmsc = ctx.report();
    for (const CandidateContext& c : ctx.candidates) tr.candidate_ids.push_back(c.set.id);
    tr.estimate_fmsc = ctx.mu_fmsc();
    tr.estimate_fmsc_pp = ctx.mu_hat(ctx.fmsc_pp_selected);
    tr.naive = naive_ci(tr.estimate_fmsc,
                        ctx.candidates[ctx.fmsc_selected].fit.se(tidx[k]), cfg.alpha);
    CiOptions opts;
    opts.alpha = cfg.alpha;
    opts.delta = cfg.delta;
    opts.draws = cfg.draws_j;
    opts.region_budget = cfg.region_budget;
    opts.search_budget = cfg.search_budget;
    opts.seed = cfg.seed;
    opts.stream = stream_id(k, 0, 0);
    tr.one_step = one_step_ci(ctx, tr.estimate_fmsc, opts);
    tr.two_step = two_step_ci(ctx, tr.estimate_fmsc, opts);
    rep.targets[k] = std::move(tr);
  });
  return rep;
}

namespace {

nlohmann::json ci_json(const CiResult& r) {
  return {{"lower", r.lower},
          {"upper", r.upper},
          {"alpha", r.alpha},
          {"delta", r.delta},
          {"draws", r.draws_j},
          {"region_points", r.region_points}};
}

}  // namespace

std::vector<std::string> write_analyze_report(const AnalyzeReport& report,
                                              const AnalysisConfig& cfg) {
  std::filesystem::create_directories(cfg.out);
  std::vector<std::string> files;

  if (cfg.format == OutputFormat::Csv) {
    {
      std::vector<std::vector<std::string>> rows;
      for (const CandidateEstimateRow& r : report.estimates)
        rows.push_back({r.candidate, r.coefficient, fmt_num(r.estimate), fmt_num(r.se),
                        fmt_num(r.ci_lower), fmt_num(r.ci_upper)});
      std::string path = cfg.out + "/estimates.csv";
      write_csv(path, {"candidate", "coefficient", "estimate", "se", "ci_lower", "ci_upper"},
                rows);
      files.push_back(path);
    }
    {
      std::vector<std::vector<std::string>> rows;
      for (const TargetReport& t : report.targets) {
        for (std::size_t i = 0; i < t.fmsc.rows.size(); ++i) {
          const FmscCandidateRow& r = t.fmsc.rows[i];
          rows.push_back({t.target, r.id, std::to_string(r.n_conditions), fmt_num(r.bias_sq),
                          fmt_num(r.variance), fmt_num(r.fmsc), fmt_num(r.fmsc_pp),
                          i == t.fmsc.selected ? "1" : "0",
                          i == t.fmsc.selected_pp ? "1" : "0"});
        }
      }
      std::string path = cfg.out + "/fmsc.csv";
      write_csv(path,
                {"target", "candidate", "conditions", "bias_sq", "variance", "fmsc", "fmsc_pp",
                 "selected", "selected_pp"},
                rows);
      files.push_back(path);
    }
    {
      std::vector<std::vector<std::string>> rows;
      for (const TargetReport& t : report.targets) {
        auto push = [&](const char* name, const CiResult& r) {
          rows.push_back({t.target, name, fmt_num(t.estimate_fmsc), fmt_num(r.lower),
                          fmt_num(r.upper), fmt_num(r.alpha), fmt_num(r.delta)});
        };
        push("naive", t.naive);
        push("one-step", t.one_step);
        push("two-step", t.two_step);
      }
      std::string path = cfg.out + "/intervals.csv";
      write_csv(path, {"target", "method", "estimate", "lower", "upper", "alpha", "delta"},
                rows);
      files.push_back(path);
    }
    return files;
  }

  nlohmann::json j;
  j["n"] = report.n;
  j["n_candidates"] = report.n_candidates;
  j["estimates"] = nlohmann::json::array();
  for (const CandidateEstimateRow& r : report.estimates)
    j["estimates"].push_back({{"candidate", r.candidate},
                              {"coefficient", r.coefficient},
                              {"estimate", r.estimate},
                              {"se", r.se},
                              {"ci_lower", r.ci_lower},
                              {"ci_upper", r.ci_upper}});
  j["targets"] = nlohmann::json::array();
  for (const TargetReport& t : report.targets) {
    nlohmann::json jt;
    jt["target"] = t.target;
    jt["tau"] = std::vector<double>(t.fmsc.tau.begin(), t.fmsc.tau.end());
    jt["criteria"] = nlohmann::json::array();
    for (const FmscCandidateRow& r : t.fmsc.rows)
      jt["criteria"].push_back({{"candidate", r.id},
                                {"conditions", r.n_conditions},
                                {"bias_sq", r.bias_sq},
                                {"variance", r.variance},
                                {"fmsc", r.fmsc},
                                {"fmsc_pp", r.fmsc_pp}});
    jt["selected"] = t.fmsc.rows[t.fmsc.selected].id;
    jt["selected_pp"] = t.fmsc.rows[t.fmsc.selected_pp].id;
    jt["estimate_fmsc"] = t.estimate_fmsc;
    jt["estimate_fmsc_pp"] = t.estimate_fmsc_pp;
    jt["intervals"] = {{"naive", ci_json(t.naive)},
                       {"one-step", ci_json(t.one_step)},
                       {"two-step", ci_json(t.two_step)}};
    j["targets"].push_back(std::move(jt));
  }
  std::string path = cfg.out + "/report.json";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw config_error("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  out.flush();
  if (!out) throw config_error("write to " + path + " failed");
  files.push_back(path);
  return files;
}

void write_fixture(const FixtureSpec& spec) {
  Philox rng(spec.seed, stream_id(0, 0, kStreamData));
  Dataset d;
  std::vector<std::string> header;
  if (spec.family == ProblemFamily::OlsVsTsls) {
    OlsTslsDesign design;
    design.pi = spec.pi_or_gamma;
    design.rho = spec.rho;
    design.n = spec.n;
    d = gen_ols_tsls(design, rng);
    header = {"y", "x", "z1", "z2", "z3"};
  } else {
    ChooseIvDesign design;
    design.gamma = spec.pi_or_gamma;
    design.rho = spec.rho;
    design.n = spec.n;
    d = gen_choose_iv(design, rng);
    header = {"y", "x", "z1", "z2", "z3", "w"};
  }
  std::filesystem::path parent = std::filesystem::path(spec.out).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::vector<std::vector<std::string>> rows;
  rows.reserve(d.n());
  for (arma::uword i = 0; i < d.n(); ++i) {
    std::vector<std::string> row{fmt_num(d.y(i)), fmt_num(d.X(i, 0)), fmt_num(d.Z1(i, 0)),
                                 fmt_num(d.Z1(i, 1)), fmt_num(d.Z1(i, 2))};
    if (spec.family == ProblemFamily::ChooseIv) row.push_back(fmt_num(d.Z2(i, 0)));
    rows.push_back(std::move(row));
  }
  write_csv(spec.out, header, rows);
}

namespace {

std::string family_name(ProblemFamily f) {
  return f == ProblemFamily::OlsVsTsls ? "ols-vs-tsls" : "choose-iv";
}

DesignCell parse_cell(const std::string& text, ProblemFamily family) {
  DesignCell cell;
  cell.family = family;
  bool have_n = false, have_strength = false, have_rho = false;
  std::size_t start = 0;
  const std::string spec = text;
  while (start <= spec.size()) {
    std::size_t comma = spec.find(',', start);
    std::string tok = trim(comma == std::string::npos ? spec.substr(start)
                                                      : spec.substr(start, comma - start));
    if (!tok.empty()) {
      std::size_t eq = tok.find('=');
      if (eq == std::string::npos)
        throw config_error("cell spec: expected key=value, got '" + tok + "'");
      std::string key = trim(tok.substr(0, eq));
      std::transform(key.begin(), key.end(), key.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      std::string value = trim(tok.substr(eq + 1));
      if (key == "n") {
        cell.n = parse_uint(value, "cell spec");
        have_n = true;
      } else if (key == "pi" || key == "gamma") {
        cell.pi = parse_double(value, "cell spec");
        have_strength = true;
      } else if (key == "rho") {
        cell.rho = parse_double(value, "cell spec");
        have_rho = true;
      } else {
        throw config_error("cell spec: unknown key '" + key + "'");
      }
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (!have_n || !have_strength || !have_rho)
    throw config_error("cell spec needs n, rho and pi/gamma");
  return cell;
}

std::vector<DesignCell> parse_cells(const std::string& text, ProblemFamily family) {
  std::vector<DesignCell> cells;
  std::size_t start = 0;
  for (;;) {
    std::size_t semi = text.find(';', start);
    std::string one =
        trim(semi == std::string::npos ? text.substr(start) : text.substr(start, semi - start));
    if (!one.empty()) cells.push_back(parse_cell(one, family));
    if (semi == std::string::npos) break;
    start = semi + 1;
  }
  if (cells.empty()) throw config_error("cell spec is empty");
  return cells;
}

std::vector<std::string> cell_fields(const DesignCell& c) {
  return {family_name(c.family), fmt_num(c.pi), fmt_num(c.rho), std::to_string(c.n)};
}

}  // namespace

std::string run_simulate(const SimulateConfig& cfg) {
  std::filesystem::create_directories(cfg.out);

  const bool scalar_family = cfg.experiment == "rmse-ols-tsls" ||
                             cfg.experiment == "coverage-ols-tsls";
  const ProblemFamily family =
      scalar_family ? ProblemFamily::OlsVsTsls : ProblemFamily::ChooseIv;

  std::string name = cfg.experiment;
  std::replace(name.begin(), name.end(), '-', '_');
  const std::string path = cfg.out + "/" + name + ".csv";

  if (cfg.experiment == "rmse-ols-tsls" || cfg.experiment == "rmse-choose-iv") {
    std::vector<DesignCell> grid =
        cfg.cells.empty() ? default_rmse_grid(family) : parse_cells(cfg.cells, family);
    std::vector<Method> methods =
        family == ProblemFamily::OlsVsTsls
            ? std::vector<Method>{Method::Ols, Method::Tsls, Method::Fmsc, Method::MinAmseAvg,
                                  Method::Dhw90, Method::Dhw95}
            : std::vector<Method>{Method::Valid, Method::Full, Method::Fmsc};
    RmseTable t = rmse_experiment(grid, methods, cfg.reps, cfg.seed, cfg.threads);
    std::vector<std::vector<std::string>> rows;
    for (const RmseRow& r : t.rows) {
      std::vector<std::string> row = cell_fields(r.cell);
      row.insert(row.end(),
                 {method_name(r.method), fmt_num(r.rmse), fmt_num(r.mean_estimate),
                  fmt_num(r.select_freq), std::to_string(r.reps), std::to_string(r.failures)});
      rows.push_back(std::move(row));
    }
    write_csv(path,
              {"family", "strength", "rho", "n", "method", "rmse", "mean_estimate",
               "select_freq", "reps", "failures"},
              rows);
    return path;
  }

  if (cfg.experiment == "coverage-ols-tsls" || cfg.experiment == "coverage-choose-iv") {
    std::vector<DesignCell> grid =
        cfg.cells.empty() ? default_coverage_grid(family) : parse_cells(cfg.cells, family);
    CoverageTable t = coverage_experiment(grid, cfg.reps, cfg.alpha, cfg.delta, cfg.draws_j,
                                          cfg.seed, cfg.threads);
    std::vector<std::vector<std::string>> rows;
    for (const CoverageRow& r : t.rows) {
      std::vector<std::string> row = cell_fields(r.cell);
      row.insert(row.end(), {ci_procedure_name(r.procedure), fmt_num(r.coverage),
                             fmt_num(r.median_width), fmt_num(r.relative_width),
                             std::to_string(r.reps), std::to_string(r.failures)});
      rows.push_back(std::move(row));
    }
    write_csv(path,
              {"family", "strength", "rho", "n", "procedure", "coverage", "median_width",
               "relative_width", "reps", "failures"},
              rows);
    return path;
  }

  if (cfg.experiment == "criteria-compare") {
    std::vector<DesignCell> grid = cfg.cells.empty()
                                       ? default_rmse_grid(ProblemFamily::ChooseIv)
                                       : parse_cells(cfg.cells, ProblemFamily::ChooseIv);
    SelectionFreqTable t = criteria_compare_experiment(grid, cfg.reps, cfg.seed, cfg.threads);
    std::vector<std::vector<std::string>> rows;
    for (const SelectionFreqRow& r : t.rows) {
      std::vector<std::string> row = cell_fields(r.cell);
      row.insert(row.end(), {method_name(r.method), fmt_num(r.valid_freq),
                             std::to_string(r.reps), std::to_string(r.failures)});
      rows.push_back(std::move(row));
    }
    write_csv(path, {"family", "strength", "rho", "n", "method", "valid_freq", "reps",
                     "failures"},
              rows);
    return path;
  }

  throw config_error("unknown experiment '" + cfg.experiment + "'");
}

}  // namespace fmsc
