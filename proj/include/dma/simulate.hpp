#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "dma/errors.hpp"

namespace dma {

// Synthetic data generator: y_t = F_t' theta_t + sqrt(obs_var) eps_t with a
// random-walk theta and standard normal regressors (column 0 is a constant).
struct SimSpec {
  int T = 0;
  int n = 0;                      // design columns including the constant
  double obs_var = 0.1;
  std::vector<double> state_var;  // per-coordinate innovation variance, default 0.01
  std::uint64_t seed = 1;
};

struct SimData {
  Eigen::VectorXd y;      // T
  Eigen::MatrixXd F;      // T x n, first column constant 1
  Eigen::MatrixXd theta;  // T x n, the path that generated y
};

namespace detail {

// Fixed, portable normal sampler. mt19937_64 output is pinned by the
// standard; std::normal_distribution is not, so we map two 53-bit uniforms
// through the Box-Muller cosine branch ourselves. One normal consumes
// exactly two raw draws, which keeps the stream layout reproducible.
class PortableNormal {
 public:
  explicit PortableNormal(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  double uniform01() {
    // (0, 1): 53 high bits, offset by half an ulp so log(u1) stays finite.
    return (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53;
  }
  std::mt19937_64 rng_;
};

}  // namespace detail

// Draw order per observation: the n-1 regressors, then all n coefficient
// innovations (scaled by sqrt(state_var)), then the observation noise. The
// coefficient path starts at zero and takes its first innovation before the
// first observation.
inline SimData simulate_dlm(const SimSpec& spec) {
  if (spec.T < 1) throw ConfigError("simulation length must be positive");
  if (spec.n < 1) throw ConfigError("simulation needs at least one design column");
  if (!(spec.obs_var >= 0.0)) throw ConfigError("observation variance must be >= 0");
  std::vector<double> svar = spec.state_var;
  if (svar.empty()) svar.assign(static_cast<std::size_t>(spec.n), 0.01);
  if (static_cast<int>(svar.size()) != spec.n)
    throw ConfigError("state variance list must have one entry per design column");
  for (double v : svar)
    if (!(v >= 0.0)) throw ConfigError("state variances must be >= 0");

  detail::PortableNormal normal(spec.seed);
  SimData out;
  out.y.resize(spec.T);
  out.F.resize(spec.T, spec.n);
  out.theta.resize(spec.T, spec.n);

  const double obs_sd = std::sqrt(spec.obs_var);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(spec.n);
  for (int t = 0; t < spec.T; ++t) {
    out.F(t, 0) = 1.0;
    for (int c = 1; c < spec.n; ++c) out.F(t, c) = normal();
    for (int c = 0; c < spec.n; ++c)
      theta[c] += std::sqrt(svar[static_cast<std::size_t>(c)]) * normal();
    out.theta.row(t) = theta;
    out.y[t] = out.F.row(t).dot(theta) + obs_sd * normal();
  }
  return out;
}

}  // namespace dma
