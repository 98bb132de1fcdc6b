#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dma/backtest.hpp"
#include "dma/engine.hpp"
#include "dma/errors.hpp"

namespace dma {

namespace detail {

// 17 significant digits: the shortest format that always round-trips a
// double through text.
inline std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write output file '" + path + "'");
  return out;
}

inline void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw DataError("failed while writing output file '" + path + "'");
}

// Linear-interpolation quantile on a sorted vector: h = (N-1) p, value
// x[floor h] + frac(h) (x[floor h + 1] - x[floor h]).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t N = sorted.size();
  if (N == 1) return sorted[0];
  const double h = static_cast<double>(N - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= N) return sorted[N - 1];
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline std::string row_label(const std::vector<std::string>& time, int t) {
  return time.empty() ? std::to_string(t + 1) : time[static_cast<std::size_t>(t)];
}

}  // namespace detail

// The per-series output files, one row per kept time step (burn-in rows are
// dropped here, not in the engine). All values carry 17 significant digits.
//   yhat.csv      time, yhat_dma, yhat_dms
//   lpdf.csv      time, lpdf_dma, lpdf_dms
//   inclusion.csv time, one column per design column
//   theta.csv     time, one column per design column
//   size.csv      time, size, size_dms
//   deltahat.csv  time, deltahat
//   pmt.csv       time, one column per discount grid point
//   vardec.csv    time, vobs, vcoeff, vmod, vtvp, vtotal
//   topprob.csv   time, highmp, top01
inline void write_series_csvs(const DmaOutput& out,
                              const std::vector<std::string>& time,
                              const std::string& dir) {
  if (!time.empty() && static_cast<int>(time.size()) != out.T)
    throw ConfigError("time label count does not match the run length");
  if (out.burn >= out.T)
    throw ConfigError("burn-in leaves no rows to write");
  const int b = out.burn;

  auto write = [&](const std::string& name, const std::vector<std::string>& cols,
                   auto&& row_fn) {
    const std::string path = dir + "/" + name;
    std::ofstream f = detail::open_out(path);
    f << "time";
    for (const std::string& c : cols) f << ',' << c;
    f << '\n';
    for (int t = b; t < out.T; ++t) {
      f << detail::row_label(time, t);
      row_fn(f, t);
      f << '\n';
    }
    detail::finish(f, path);
  };

  write("yhat.csv", {"yhat_dma", "yhat_dms"}, [&](std::ofstream& f, int t) {
    f << ',' << detail::g17(out.yhat_dma[t]) << ',' << detail::g17(out.yhat_dms[t]);
  });
  write("lpdf.csv", {"lpdf_dma", "lpdf_dms"}, [&](std::ofstream& f, int t) {
    f << ',' << detail::g17(out.lpdf_dma[t]) << ',' << detail::g17(out.lpdf_dms[t]);
  });
  write("inclusion.csv", out.names, [&](std::ofstream& f, int t) {
    for (int c = 0; c < out.n; ++c) f << ',' << detail::g17(out.incl(t, c));
  });
  write("theta.csv", out.names, [&](std::ofstream& f, int t) {
    for (int c = 0; c < out.n; ++c) f << ',' << detail::g17(out.theta(t, c));
  });
  write("size.csv", {"size", "size_dms"}, [&](std::ofstream& f, int t) {
    f << ',' << detail::g17(out.esize[t]) << ',' << out.dms_size[t];
  });
  write("deltahat.csv", {"deltahat"}, [&](std::ofstream& f, int t) {
    f << ',' << detail::g17(out.deltahat[t]);
  });
  std::vector<std::string> delta_cols;
  for (double dl : out.delta_grid) delta_cols.push_back("delta_" + detail::g6(dl));
  write("pmt.csv", delta_cols, [&](std::ofstream& f, int t) {
    for (int j = 0; j < out.d; ++j) f << ',' << detail::g17(out.pmt(t, j));
  });
  write("vardec.csv", {"vobs", "vcoeff", "vmod", "vtvp", "vtotal"},
        [&](std::ofstream& f, int t) {
          for (int c = 0; c < 5; ++c) f << ',' << detail::g17(out.vdec(t, c));
        });
  write("topprob.csv", {"highmp", "top01"}, [&](std::ofstream& f, int t) {
    f << ',' << detail::g17(out.highmp[t]) << ',' << detail::g17(out.top01[t]);
  });
}

// Run metadata plus a full-length snapshot of the response and time labels,
// enough to re-score the run later without the original dataset. Thread
// count is an execution detail, not part of the model, so it is not
// recorded; elapsed_sec is the only field that varies between reruns.
inline void write_meta_json(const DmaOutput& out, const Eigen::VectorXd& y,
                            const std::vector<std::string>& time,
                            const std::string& response_name,
                            const std::string& dir) {
  if (y.size() != out.T)
    throw ConfigError("response length does not match the run length");
  nlohmann::json meta;
  meta["k"] = out.k;
  meta["d"] = out.d;
  meta["combinations"] = out.k * static_cast<std::size_t>(out.d);
  meta["T"] = out.T;
  meta["n"] = out.n;
  meta["alpha"] = out.alpha;
  meta["delta_grid"] = out.delta_grid;
  meta["prior"] = {
      {"kind", out.prior.kind == PriorKind::Zellner ? "zellner" : "diffuse"},
      {"g", out.prior.g},
      {"n0", out.prior.n0},
      {"s0", out.prior.s0},
  };
  meta["names"] = out.names;
  meta["keep"] = out.keep;
  meta["kitchen_sink"] = out.kitchen_sink;
  meta["burn"] = out.burn;
  meta["warnings"] = out.warnings;
  meta["elapsed_sec"] = out.elapsed_sec;
  meta["response_name"] = response_name;
  std::vector<double> yv(y.data(), y.data() + y.size());
  meta["response_values"] = yv;
  if (!time.empty()) meta["time"] = time;

  const std::string path = dir + "/meta.json";
  std::ofstream f = detail::open_out(path);
  f << meta.dump(2) << '\n';
  detail::finish(f, path);
}

// scores.csv: one row per metric, DMA and DMS columns.
inline void write_scores_csv(const BacktestScores& sc, const std::string& path) {
  std::ofstream f = detail::open_out(path);
  f << "metric,dma,dms\n";
  f << "mse," << detail::g17(sc.mse_dma) << ',' << detail::g17(sc.mse_dms) << '\n';
  f << "mad," << detail::g17(sc.mad_dma) << ',' << detail::g17(sc.mad_dms) << '\n';
  f << "logpl," << detail::g17(sc.logpl_dma) << ',' << detail::g17(sc.logpl_dms)
    << '\n';
  detail::finish(f, path);
}

// Human-readable run summary: shape and timing, residual quantiles, time
// averages of coefficients and inclusion probabilities, the variance split,
// and out-of-sample scores. All statistics cover the kept rows only.
inline std::string summary_text(const DmaOutput& out, const Eigen::VectorXd& y,
                                const BacktestScores& sc) {
  if (y.size() != out.T)
    throw ConfigError("response length does not match the run length");
  if (out.burn >= out.T) throw ConfigError("burn-in leaves no rows to summarize");
  const int b = out.burn;
  const int N = out.T - b;
  std::ostringstream os;
  char buf[160];

  os << "Mixture of " << out.k << " models over " << out.d
     << " discount factors (" << out.k * static_cast<std::size_t>(out.d)
     << " combinations)\n";
  std::snprintf(buf, sizeof buf,
                "T = %d, n = %d, alpha = %g, prior: %s (g = %g), burn-in = %d\n",
                out.T, out.n, out.alpha,
                out.prior.kind == PriorKind::Zellner ? "zellner" : "diffuse",
                out.prior.g, out.burn);
  os << buf;
  std::snprintf(buf, sizeof buf, "Elapsed time: %.3f sec\n", out.elapsed_sec);
  os << buf;
  if (out.warnings > 0)
    os << "Warnings: " << out.warnings << " underflowed weight columns reset\n";

  std::vector<double> res;
  res.reserve(static_cast<std::size_t>(N));
  for (int t = b; t < out.T; ++t) res.push_back(y[t] - out.yhat_dma[t]);
  std::sort(res.begin(), res.end());
  os << "\nResiduals (y - yhat_dma):\n";
  os << "      Min       1Q   Median       3Q      Max\n";
  std::snprintf(buf, sizeof buf, " %8.4f %8.4f %8.4f %8.4f %8.4f\n", res.front(),
                detail::quantile_sorted(res, 0.25), detail::quantile_sorted(res, 0.5),
                detail::quantile_sorted(res, 0.75), res.back());
  os << buf;

  os << "\nCoefficients and inclusion probabilities (time averages):\n";
  std::size_t width = 9;
  for (const std::string& name : out.names) width = std::max(width, name.size());
  os << std::string(width - 9, ' ')
     << "predictor  E[theta]  SD[theta]   E[incl]  SD[incl]\n";
  for (int c = 0; c < out.n; ++c) {
    double mt = 0.0, mi = 0.0;
    for (int t = b; t < out.T; ++t) {
      mt += out.theta(t, c);
      mi += out.incl(t, c);
    }
    mt /= N;
    mi /= N;
    double vt = 0.0, vi = 0.0;
    for (int t = b; t < out.T; ++t) {
      vt += (out.theta(t, c) - mt) * (out.theta(t, c) - mt);
      vi += (out.incl(t, c) - mi) * (out.incl(t, c) - mi);
    }
    const double sdt = N > 1 ? std::sqrt(vt / (N - 1)) : 0.0;
    const double sdi = N > 1 ? std::sqrt(vi / (N - 1)) : 0.0;
    const std::string& name = out.names[static_cast<std::size_t>(c)];
    os << std::string(width - name.size(), ' ') << name;
    std::snprintf(buf, sizeof buf, " %9.4f %10.4f %9.4f %9.4f\n", mt, sdt, mi, sdi);
    os << buf;
  }

  double vobs = 0.0, vcoeff = 0.0, vmod = 0.0, vtvp = 0.0, vtot = 0.0;
  for (int t = b; t < out.T; ++t) {
    vobs += out.vdec(t, 0);
    vcoeff += out.vdec(t, 1);
    vmod += out.vdec(t, 2);
    vtvp += out.vdec(t, 3);
    vtot += out.vdec(t, 4);
  }
  os << "\nPredictive variance shares (% of total, time average):\n";
  os << "      obs    coeff    model      tvp\n";
  std::snprintf(buf, sizeof buf, " %8.2f %8.2f %8.2f %8.2f\n", 100.0 * vobs / vtot,
                100.0 * vcoeff / vtot, 100.0 * vmod / vtot, 100.0 * vtvp / vtot);
  os << buf;

  os << "\nForecast performance:\n";
  os << "             DMA          DMS\n";
  std::snprintf(buf, sizeof buf, " MSE   %10.4f %12.4f\n", sc.mse_dma, sc.mse_dms);
  os << buf;
  std::snprintf(buf, sizeof buf, " MAD   %10.4f %12.4f\n", sc.mad_dma, sc.mad_dms);
  os << buf;
  std::snprintf(buf, sizeof buf, " logPL %10.3f %12.3f\n", sc.logpl_dma,
                sc.logpl_dms);
  os << buf;
  return os.str();
}

}  // namespace dma
