#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "dma/errors.hpp"
#include "dma/model_space.hpp"

namespace dma {

// Mixture weights over the model/discount grid. cond(i, j) is
// p(model i | delta j, data); dprob(j) is p(delta j | data). Every column
// of cond sums to 1 and so does dprob, so the joint weight of cell (i, j)
// is cond(i, j) * dprob(j).
struct MixtureProbs {
  Eigen::MatrixXd cond;   // k x d
  Eigen::VectorXd dprob;  // d

  std::size_t models() const { return static_cast<std::size_t>(cond.rows()); }
  int grid_size() const { return static_cast<int>(cond.cols()); }
};

inline MixtureProbs uniform_probs(std::size_t k, int d) {
  if (k < 1 || d < 1) throw ConfigError("mixture needs at least one model and one delta");
  MixtureProbs probs;
  probs.cond = Eigen::MatrixXd::Constant(k, d, 1.0 / static_cast<double>(k));
  probs.dprob = Eigen::VectorXd::Constant(d, 1.0 / d);
  return probs;
}

namespace detail {

// Raise a probability column to the power alpha and renormalize, in log
// space. A column whose mass entirely underflows is reset to uniform and
// counted in *reset_count.
inline void power_normalize_column(const double* src, double* dst, std::ptrdiff_t len,
                                   double alpha, int* reset_count) {
  double max_lp = -std::numeric_limits<double>::infinity();
  for (std::ptrdiff_t i = 0; i < len; ++i) {
    dst[i] = alpha * std::log(src[i]);
    max_lp = std::max(max_lp, dst[i]);
  }
  if (!std::isfinite(max_lp)) {
    const double u = 1.0 / static_cast<double>(len);
    for (std::ptrdiff_t i = 0; i < len; ++i) dst[i] = u;
    ++*reset_count;
    return;
  }
  double sum = 0.0;
  for (std::ptrdiff_t i = 0; i < len; ++i) {
    dst[i] = std::exp(dst[i] - max_lp);
    sum += dst[i];
  }
  for (std::ptrdiff_t i = 0; i < len; ++i) dst[i] /= sum;
}

inline void forgetting_into(const MixtureProbs& probs, double alpha, MixtureProbs* out,
                            int* reset_count) {
  const std::ptrdiff_t k = probs.cond.rows();
  const int d = probs.grid_size();
  out->cond.resize(k, d);
  out->dprob.resize(d);
  for (int j = 0; j < d; ++j)
    power_normalize_column(probs.cond.col(j).data(), out->cond.col(j).data(), k, alpha,
                           reset_count);
  power_normalize_column(probs.dprob.data(), out->dprob.data(), d, alpha, reset_count);
}

}  // namespace detail

// Flattening step between observations: each cond column and dprob become
// p^alpha / sum(p^alpha). alpha = 1 leaves the weights unchanged.
inline MixtureProbs forgetting_update(const MixtureProbs& probs, double alpha,
                                      bool* underflowed = nullptr) {
  if (!(alpha > 0.0) || alpha > 1.0)
    throw ConfigError("forgetting factor alpha must lie in (0, 1]");
  MixtureProbs out;
  int resets = 0;
  detail::forgetting_into(probs, alpha, &out, &resets);
  if (underflowed != nullptr) *underflowed = resets > 0;
  return out;
}

// Marginal model weights p(model i | data) = sum_j cond(i, j) dprob(j).
inline Eigen::VectorXd marginal_model_probs(const MixtureProbs& probs) {
  return probs.cond * probs.dprob;
}

// Per-column inclusion probabilities: mass of the models containing each
// design column. Forced columns therefore come out as 1.
inline Eigen::VectorXd inclusion_probs(const MixtureProbs& probs, const ModelSpace& space) {
  if (probs.models() != space.size())
    throw ConfigError("mixture and model space disagree on the number of models");
  const Eigen::VectorXd pm = marginal_model_probs(probs);
  Eigen::VectorXd incl = Eigen::VectorXd::Zero(space.n);
  for (std::size_t i = 0; i < space.size(); ++i) {
    std::uint64_t mask = space.ids[i];
    while (mask != 0) {
      incl[std::countr_zero(mask)] += pm[static_cast<Eigen::Index>(i)];
      mask &= mask - 1;
    }
  }
  return incl;
}

// Probability-weighted number of included columns.
inline double expected_size(const MixtureProbs& probs, const ModelSpace& space) {
  if (probs.models() != space.size())
    throw ConfigError("mixture and model space disagree on the number of models");
  const Eigen::VectorXd pm = marginal_model_probs(probs);
  double acc = 0.0;
  for (std::size_t i = 0; i < space.size(); ++i)
    acc += pm[static_cast<Eigen::Index>(i)] * model_size(space.ids[i]);
  return acc;
}

// Size of the most probable model under the marginal weights; ties go to
// the lowest mask, i.e. the earliest enumerated model.
inline int dms_size(const MixtureProbs& probs, const ModelSpace& space) {
  if (probs.models() != space.size())
    throw ConfigError("mixture and model space disagree on the number of models");
  const Eigen::VectorXd pm = marginal_model_probs(probs);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < pm.size(); ++i)
    if (pm[i] > pm[best]) best = i;
  return model_size(space.ids[static_cast<std::size_t>(best)]);
}

// Posterior mean of the discount factor over its grid.
inline double delta_posterior_mean(const MixtureProbs& probs,
                                   const std::vector<double>& grid) {
  if (static_cast<int>(grid.size()) != probs.grid_size())
    throw ConfigError("delta grid size does not match the mixture");
  double acc = 0.0;
  for (int j = 0; j < probs.grid_size(); ++j) acc += grid[j] * probs.dprob[j];
  return acc;
}

// {highest marginal model probability, mass of the top ceil(k/10) models}.
inline std::pair<double, double> top_prob_stats(const MixtureProbs& probs) {
  Eigen::VectorXd pm = marginal_model_probs(probs);
  const std::ptrdiff_t k = pm.size();
  const std::ptrdiff_t top = (k + 9) / 10;  // ceil(0.1 k)
  std::vector<double> buf(pm.data(), pm.data() + k);
  std::nth_element(buf.begin(), buf.begin() + (top - 1), buf.end(),
                   std::greater<double>());
  double mass = 0.0;
  for (std::ptrdiff_t i = 0; i < top; ++i) mass += buf[static_cast<std::size_t>(i)];
  const double highmp = *std::max_element(pm.data(), pm.data() + k);
  return {highmp, mass};
}

}  // namespace dma
