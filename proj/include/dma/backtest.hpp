#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "dma/engine.hpp"
#include "dma/errors.hpp"

namespace dma {

// Out-of-sample forecast scores over t > burn, for the averaged (DMA) and
// selected (DMS) forecasts: mean squared error, mean absolute deviation,
// and the summed one-step-ahead log predictive likelihood.
struct BacktestScores {
  double mse_dma = 0.0, mad_dma = 0.0, logpl_dma = 0.0;
  double mse_dms = 0.0, mad_dms = 0.0, logpl_dms = 0.0;
  int count = 0;
};

inline BacktestScores backtest(const DmaOutput& out, const Eigen::VectorXd& y,
                               int burn) {
  if (y.size() != out.T)
    throw ConfigError("response length does not match the run output");
  if (burn < 0 || burn >= out.T)
    throw ConfigError("burn-in must lie in [0, T)");
  BacktestScores sc;
  sc.count = out.T - burn;
  for (int t = burn; t < out.T; ++t) {
    const double ea = y[t] - out.yhat_dma[t];
    const double es = y[t] - out.yhat_dms[t];
    sc.mse_dma += ea * ea;
    sc.mad_dma += std::abs(ea);
    sc.mse_dms += es * es;
    sc.mad_dms += std::abs(es);
    sc.logpl_dma += out.lpdf_dma[t];
    sc.logpl_dms += out.lpdf_dms[t];
  }
  sc.mse_dma /= sc.count;
  sc.mad_dma /= sc.count;
  sc.mse_dms /= sc.count;
  sc.mad_dms /= sc.count;
  return sc;
}

// Cumulative log predictive likelihood difference between two runs on the
// same response: pld[t] = sum_{s<=t} (lpdf_a[s] - lpdf_b[s]), over t > burn.
// Ends positive when run a predicted better.
inline Eigen::VectorXd pld(const DmaOutput& a, const DmaOutput& b, int burn = 0) {
  if (a.T != b.T) throw ConfigError("runs have different lengths");
  if (burn < 0 || burn >= a.T) throw ConfigError("burn-in must lie in [0, T)");
  Eigen::VectorXd out(a.T - burn);
  double acc = 0.0;
  for (int t = burn; t < a.T; ++t) {
    acc += a.lpdf_dma[t] - b.lpdf_dma[t];
    out[t - burn] = acc;
  }
  return out;
}

}  // namespace dma
