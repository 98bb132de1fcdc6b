// Command-line front end: fit, simulate, backtest. Exit codes: 0 ok,
// 2 bad flags or configuration, 3 data problems, 4 model-space capacity,
// 5 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dma/dma.hpp"

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw dma::ConfigError("cannot parse '" + s + "' as a number in " + what);
}

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  for (char ch : s)
    if (ch < '0' || ch > '9') return false;
  return true;
}

// A:B:STEP makes an inclusive arithmetic grid; a comma list is taken as is.
// Values within 1e-9 of 1 snap to exactly 1 so 0.90:1.00:0.01 ends on 1.
std::vector<double> parse_delta(const std::string& text) {
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 3)
      throw dma::ConfigError("--delta range must look like A:B:STEP");
    const double a = parse_double(parts[0], "--delta");
    const double b = parse_double(parts[1], "--delta");
    const double step = parse_double(parts[2], "--delta");
    if (!(step > 0.0)) throw dma::ConfigError("--delta step must be positive");
    if (b < a) throw dma::ConfigError("--delta range end must be >= its start");
    for (int i = 0;; ++i) {
      const double v = a + i * step;
      if (v > b + 1e-12) break;
      grid.push_back(v);
    }
  } else {
    for (const std::string& field : split(text, ','))
      grid.push_back(parse_double(field, "--delta"));
  }
  for (double& v : grid)
    if (v > 1.0 && v < 1.0 + 1e-9) v = 1.0;
  return grid;
}

struct FitFlags {
  std::string data;
  std::string response;
  std::vector<std::string> terms;
  bool intercept = true;
  std::string delta = "0.90,0.95,0.99";
  double alpha = 0.99;
  std::string keep;
  std::string prior = "diffuse";
  double g = 100.0;
  int burn = 0;
  int threads = 0;
  std::string out;
};

void add_fit_flags(CLI::App* cmd, FitFlags& ff, bool required) {
  cmd->add_option("--data", ff.data, "CSV file with a header row")
      ->required(required);
  cmd->add_option("--response", ff.response, "column to forecast")
      ->required(required);
  cmd->add_option("--term", ff.terms,
                  "predictor column as NAME or NAME:LAG; repeatable, order "
                  "defines predictor positions");
  cmd->add_flag("--intercept,!--no-intercept", ff.intercept,
                "include a constant column (default on)");
  cmd->add_option("--delta", ff.delta,
                  "discount grid: comma list or A:B:STEP (default 0.90,0.95,0.99)");
  cmd->add_option("--alpha", ff.alpha, "probability forgetting factor (default 0.99)");
  cmd->add_option("--keep", ff.keep,
                  "columns forced into every model: comma list of names or 1-based "
                  "positions (intercept is position 1), or KS for the single "
                  "all-predictors model");
  cmd->add_option("--prior", ff.prior, "diffuse or zellner (default diffuse)")
      ->check(CLI::IsMember({"diffuse", "zellner"}));
  cmd->add_option("--g", ff.g, "prior coefficient variance scale (default 100)");
  cmd->add_option("--burn", ff.burn,
                  "rows dropped from outputs and scores (default 0)");
  cmd->add_option("--threads", ff.threads,
                  "worker threads; 0 = all hardware threads but one");
  cmd->add_option("--out", ff.out, "output directory")->required(required);
}

dma::DesignSpec design_spec(const FitFlags& ff) {
  dma::DesignSpec spec;
  spec.response = ff.response;
  spec.intercept = ff.intercept;
  for (const std::string& raw : ff.terms) {
    dma::Term term;
    const auto colon = raw.rfind(':');
    if (colon != std::string::npos && all_digits(raw.substr(colon + 1))) {
      term.name = raw.substr(0, colon);
      term.lag = std::stoi(raw.substr(colon + 1));
    } else {
      term.name = raw;
    }
    spec.terms.push_back(term);
  }
  return spec;
}

// Keep entries are design-column names or 1-based positions.
void apply_keep(const std::string& keep, const std::vector<std::string>& names,
                dma::DmaConfig* cfg) {
  if (keep.empty()) return;
  if (keep == "KS" || keep == "ks") {
    cfg->kitchen_sink = true;
    return;
  }
  for (const std::string& entry : split(keep, ',')) {
    int idx = -1;
    if (all_digits(entry)) {
      const int pos = std::stoi(entry);
      if (pos < 1 || pos > static_cast<int>(names.size()))
        throw dma::ConfigError("--keep position " + entry + " is out of range");
      idx = pos - 1;
    } else {
      for (std::size_t c = 0; c < names.size(); ++c)
        if (names[c] == entry) idx = static_cast<int>(c);
      if (idx < 0)
        throw dma::ConfigError("--keep column '" + entry +
                               "' is not a design column");
    }
    cfg->keep.push_back(idx);
  }
}

struct FitResult {
  dma::DmaOutput output;
  Eigen::VectorXd y;
  std::vector<std::string> time;
  std::string response;
};

FitResult run_fit(const FitFlags& ff) {
  const dma::Dataset ds = dma::load_csv(ff.data);
  const dma::Design design = dma::build_design(ds, design_spec(ff));

  dma::DmaConfig cfg;
  cfg.delta_grid = parse_delta(ff.delta);
  cfg.alpha = ff.alpha;
  cfg.prior.kind =
      ff.prior == "zellner" ? dma::PriorKind::Zellner : dma::PriorKind::Diffuse;
  cfg.prior.g = ff.g;
  cfg.burn = ff.burn;
  cfg.threads = ff.threads;
  apply_keep(ff.keep, design.names, &cfg);
  if (ff.burn >= static_cast<int>(design.y.size()))
    throw dma::ConfigError("--burn leaves no rows: burn-in must be below " +
                           std::to_string(design.y.size()));

  FitResult res;
  res.output = dma::run_dma(design.y, design.F, cfg, design.names);
  res.y = design.y;
  res.time = design.time;
  res.response = ff.response;
  return res;
}

void write_fit_outputs(const FitResult& res, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw dma::DataError("cannot create output directory '" + dir + "'");
  dma::write_series_csvs(res.output, res.time, dir);
  dma::write_meta_json(res.output, res.y, res.time, res.response, dir);
}

void print_scores(const dma::BacktestScores& sc) {
  std::printf("          DMA           DMS\n");
  std::printf("MSE    %10.4f %13.4f\n", sc.mse_dma, sc.mse_dms);
  std::printf("MAD    %10.4f %13.4f\n", sc.mad_dma, sc.mad_dms);
  std::printf("logPL  %10.3f %13.3f\n", sc.logpl_dma, sc.logpl_dms);
}

int cmd_fit(const FitFlags& ff) {
  const FitResult res = run_fit(ff);
  write_fit_outputs(res, ff.out);
  const dma::BacktestScores sc = dma::backtest(res.output, res.y, res.output.burn);
  std::cout << dma::summary_text(res.output, res.y, sc);
  std::cout << "\nOutputs written to " << ff.out << "\n";
  return 0;
}

struct SimFlags {
  int T = 0;
  int n = 0;
  double obs_var = 0.1;
  std::string state_var;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_simulate(const SimFlags& sf) {
  dma::SimSpec spec;
  spec.T = sf.T;
  spec.n = sf.n;
  spec.obs_var = sf.obs_var;
  spec.seed = sf.seed;
  if (!sf.state_var.empty()) {
    for (const std::string& field : split(sf.state_var, ','))
      spec.state_var.push_back(parse_double(field, "--state-var"));
    if (spec.state_var.size() == 1 && sf.n > 1)
      spec.state_var.assign(static_cast<std::size_t>(sf.n), spec.state_var[0]);
  }
  const dma::SimData sim = dma::simulate_dlm(spec);

  auto open = [](const std::string& path) {
    std::ofstream f(path);
    if (!f) throw dma::DataError("cannot write output file '" + path + "'");
    return f;
  };
  {
    std::ofstream f = open(sf.out);
    f << "time,y";
    for (int c = 1; c < sf.n; ++c) f << ",x" << c;
    f << '\n';
    for (int t = 0; t < sf.T; ++t) {
      f << t + 1 << ',' << dma::detail::g17(sim.y[t]);
      for (int c = 1; c < sf.n; ++c) f << ',' << dma::detail::g17(sim.F(t, c));
      f << '\n';
    }
  }
  const auto dot = sf.out.rfind('.');
  const std::string stem =
      dot == std::string::npos ? sf.out : sf.out.substr(0, dot);
  const std::string theta_path = stem + "_theta.csv";
  {
    std::ofstream f = open(theta_path);
    f << "time,intercept";
    for (int c = 1; c < sf.n; ++c) f << ",x" << c;
    f << '\n';
    for (int t = 0; t < sf.T; ++t) {
      f << t + 1;
      for (int c = 0; c < sf.n; ++c) f << ',' << dma::detail::g17(sim.theta(t, c));
      f << '\n';
    }
  }
  std::cout << "Wrote " << sf.out << " (" << sf.T << " rows, y plus " << sf.n - 1
            << " regressors) and " << theta_path << "\n";
  return 0;
}

// Re-score a finished run from its output directory: the response snapshot
// lives in meta.json, the forecast series in yhat.csv and lpdf.csv.
int rescore_run(const std::string& dir, std::optional<int> burn_flag) {
  const std::string meta_path = dir + "/meta.json";
  std::ifstream in(meta_path);
  if (!in) throw dma::DataError("cannot open '" + meta_path + "'");
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& err) {
    throw dma::DataError("cannot parse '" + meta_path + "': " + err.what());
  }

  dma::DmaOutput out;
  std::vector<double> yv;
  int burn_rec = 0;
  try {
    out.T = meta.at("T").get<int>();
    burn_rec = meta.at("burn").get<int>();
    yv = meta.at("response_values").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& err) {
    throw dma::DataError("'" + meta_path + "' is missing run fields: " + err.what());
  }
  if (static_cast<int>(yv.size()) != out.T)
    throw dma::DataError("'" + meta_path + "' response length does not match T");

  const int burn = burn_flag.value_or(burn_rec);
  if (burn < burn_rec)
    throw dma::ConfigError(
        "--burn " + std::to_string(burn) + " is below the run's recorded burn-in " +
        std::to_string(burn_rec) + "; rows before it were never written");

  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.yhat_dma = Eigen::VectorXd::Constant(out.T, nan);
  out.yhat_dms = Eigen::VectorXd::Constant(out.T, nan);
  out.lpdf_dma = Eigen::VectorXd::Constant(out.T, nan);
  out.lpdf_dms = Eigen::VectorXd::Constant(out.T, nan);
  const dma::Dataset yhat = dma::load_csv(dir + "/yhat.csv");
  const dma::Dataset lpdf = dma::load_csv(dir + "/lpdf.csv");
  if (yhat.rows != out.T - burn_rec || lpdf.rows != out.T - burn_rec)
    throw dma::DataError("series files in '" + dir +
                         "' do not match meta.json: expected " +
                         std::to_string(out.T - burn_rec) + " rows");
  for (int r = 0; r < yhat.rows; ++r) {
    out.yhat_dma[burn_rec + r] = yhat.column("yhat_dma")[r];
    out.yhat_dms[burn_rec + r] = yhat.column("yhat_dms")[r];
    out.lpdf_dma[burn_rec + r] = lpdf.column("lpdf_dma")[r];
    out.lpdf_dms[burn_rec + r] = lpdf.column("lpdf_dms")[r];
  }

  const Eigen::VectorXd y = Eigen::VectorXd::Map(yv.data(), out.T);
  const dma::BacktestScores sc = dma::backtest(out, y, burn);
  dma::write_scores_csv(sc, dir + "/scores.csv");
  print_scores(sc);
  std::cout << "\nScores written to " << dir << "/scores.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Dynamic model averaging for time-varying-parameter regressions.\n"
      "Runs discount-factor Kalman recursions over every predictor subset and\n"
      "discount grid point, mixing them by one-step-ahead predictive likelihood."};
  app.require_subcommand(1);

  FitFlags ff;
  CLI::App* fit = app.add_subcommand(
      "fit", "fit a model mixture and write forecast series plus metadata");
  add_fit_flags(fit, ff, true);

  SimFlags sf;
  CLI::App* sim = app.add_subcommand(
      "simulate", "generate a synthetic dataset with drifting coefficients");
  sim->add_option("--t", sf.T, "number of observations")->required();
  sim->add_option("--n", sf.n, "design columns including the constant")->required();
  sim->add_option("--obs-var", sf.obs_var, "observation noise variance (default 0.1)");
  sim->add_option("--state-var", sf.state_var,
                  "comma list of coefficient innovation variances, one per "
                  "column (a single value applies to all; default 0.01)");
  sim->add_option("--seed", sf.seed, "random seed (default 1)");
  sim->add_option("--out", sf.out, "dataset file; the coefficient path goes to "
                                   "<stem>_theta.csv")
      ->required();

  FitFlags bf;
  std::string run_dir;
  CLI::App* bt = app.add_subcommand(
      "backtest", "score one-step-ahead forecasts out of sample");
  bt->add_option("--run", run_dir,
                 "directory written by a previous fit; omit to fit here using "
                 "the fit flags");
  add_fit_flags(bt, bf, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (fit->parsed()) return cmd_fit(ff);
    if (sim->parsed()) return cmd_simulate(sf);
    if (bt->parsed()) {
      const bool burn_given = bt->count("--burn") > 0;
      if (!run_dir.empty())
        return rescore_run(run_dir, burn_given ? std::optional<int>(bf.burn)
                                               : std::nullopt);
      if (bf.data.empty() || bf.response.empty() || bf.out.empty())
        throw dma::ConfigError(
            "backtest needs either --run DIR or the full fit flags "
            "(--data, --response, --out)");
      const FitResult res = run_fit(bf);
      write_fit_outputs(res, bf.out);
      const dma::BacktestScores sc =
          dma::backtest(res.output, res.y, res.output.burn);
      dma::write_scores_csv(sc, bf.out + "/scores.csv");
      print_scores(sc);
      std::cout << "\nOutputs written to " << bf.out << "\n";
      return 0;
    }
  } catch (const dma::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dma::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const dma::CapacityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const dma::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  }
  return 2;
}
