#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dma/dlm.hpp"
#include "dma/errors.hpp"
#include "dma/mixture.hpp"
#include "dma/model_space.hpp"

namespace dma {

struct DmaConfig {
  std::vector<double> delta_grid{0.90, 0.95, 0.99};
  double alpha = 0.99;
  std::vector<int> keep;       // forced design columns
  bool kitchen_sink = false;   // single all-columns model
  PriorSpec prior;
  int burn = 0;                // rows dropped at output time, not here
  int threads = 0;             // 0 = all hardware threads but one
  int model_cap = kDefaultModelCap;
};

inline void validate(const DmaConfig& cfg) {
  if (cfg.delta_grid.empty()) throw ConfigError("discount grid must not be empty");
  for (double dl : cfg.delta_grid)
    if (!(dl > 0.0) || dl > 1.0 || !std::isfinite(dl))
      throw ConfigError("discount factors must lie in (0, 1]");
  for (std::size_t j = 1; j < cfg.delta_grid.size(); ++j)
    if (!(cfg.delta_grid[j] > cfg.delta_grid[j - 1]))
      throw ConfigError("discount grid must be strictly increasing");
  if (!(cfg.alpha > 0.0) || cfg.alpha > 1.0)
    throw ConfigError("forgetting factor alpha must lie in (0, 1]");
  if (cfg.burn < 0) throw ConfigError("burn-in must be non-negative");
  if (cfg.threads < 0) throw ConfigError("thread count must be non-negative");
  if (cfg.model_cap < 1) throw ConfigError("model cap must be positive");
  validate(cfg.prior);
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 1 ? static_cast<int>(hw - 1) : 1;
}

// Filter states for every (model, delta) cell, stored as flat arrays with
// per-model offsets. Cells of one model sit next to each other across the
// delta grid; this is the layout the per-model hot loops walk. Updates
// happen in place, so the whole run touches two time slices of memory at
// most: this grid and the per-step scratch in Workspace.
class StateGrid {
 public:
  StateGrid(const ModelSpace& space, int d) : space_(&space), d_(d) {
    if (d < 1) throw ConfigError("need at least one discount grid point");
    const std::size_t k = space.size();
    dims_.resize(k);
    moff_.resize(k);
    coff_.resize(k);
    std::size_t mtot = 0;
    std::size_t ctot = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const int p = model_size(space.ids[i]);
      dims_[i] = p;
      moff_[i] = mtot;
      coff_[i] = ctot;
      mtot += static_cast<std::size_t>(p) * d;
      ctot += static_cast<std::size_t>(p) * p * d;
    }
    m_.assign(mtot, 0.0);
    C_.assign(ctot, 0.0);
    n_.assign(k * d, 0.0);
    s_.assign(k * d, 0.0);
  }

  // Diffuse prior: C0 = g I per cell. Zellner: C0 = g s0 inv(X'X) on each
  // model's own columns, Gram taken from the full design matrix.
  void init(const PriorSpec& prior, const Eigen::MatrixXd* design = nullptr) {
    validate(prior);
    std::fill(m_.begin(), m_.end(), 0.0);
    std::fill(n_.begin(), n_.end(), prior.n0);
    std::fill(s_.begin(), s_.end(), prior.s0);

    if (prior.kind == PriorKind::Diffuse) {
      std::fill(C_.begin(), C_.end(), 0.0);
      for (std::size_t i = 0; i < size(); ++i) {
        const int p = dims_[i];
        for (int j = 0; j < d_; ++j) {
          double* C = C_ptr(i, j);
          for (int r = 0; r < p; ++r) C[static_cast<std::size_t>(r) * p + r] = prior.g;
        }
      }
      return;
    }

    if (design == nullptr)
      throw ConfigError("g-prior initialization needs the design matrix");
    if (design->cols() != space_->n)
      throw ConfigError("design matrix width does not match the model space");
    const Eigen::MatrixXd gram = design->transpose() * (*design);
    for (std::size_t i = 0; i < size(); ++i) {
      const int p = dims_[i];
      std::vector<int> cols;
      cols.reserve(p);
      std::uint64_t mask = space_->ids[i];
      while (mask != 0) {
        cols.push_back(std::countr_zero(mask));
        mask &= mask - 1;
      }
      Eigen::MatrixXd sub(p, p);
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c) sub(r, c) = gram(cols[r], cols[c]);
      Eigen::MatrixXd C0 = prior.g * prior.s0 * detail::inverse_spd_with_ridge(sub);
      C0 = 0.5 * (C0 + C0.transpose()).eval();
      for (int j = 0; j < d_; ++j)
        std::copy(C0.data(), C0.data() + static_cast<std::size_t>(p) * p, C_ptr(i, j));
    }
  }

  std::size_t size() const { return dims_.size(); }
  int grid_size() const { return d_; }
  const ModelSpace& space() const { return *space_; }
  int dim(std::size_t i) const { return dims_[i]; }

  double* m_ptr(std::size_t i, int j) {
    return m_.data() + moff_[i] + static_cast<std::size_t>(j) * dims_[i];
  }
  const double* m_ptr(std::size_t i, int j) const {
    return m_.data() + moff_[i] + static_cast<std::size_t>(j) * dims_[i];
  }
  double* C_ptr(std::size_t i, int j) {
    return C_.data() + coff_[i] + static_cast<std::size_t>(j) * dims_[i] * dims_[i];
  }
  const double* C_ptr(std::size_t i, int j) const {
    return C_.data() + coff_[i] + static_cast<std::size_t>(j) * dims_[i] * dims_[i];
  }
  double& nval(std::size_t i, int j) { return n_[i * d_ + j]; }
  double nval(std::size_t i, int j) const { return n_[i * d_ + j]; }
  double& sval(std::size_t i, int j) { return s_[i * d_ + j]; }
  double sval(std::size_t i, int j) const { return s_[i * d_ + j]; }

  DlmState state_copy(std::size_t i, int j) const {
    DlmState st;
    const int p = dims_[i];
    st.m = Eigen::Map<const Eigen::VectorXd>(m_ptr(i, j), p);
    st.C = Eigen::Map<const Eigen::MatrixXd>(C_ptr(i, j), p, p);
    st.n = nval(i, j);
    st.s = sval(i, j);
    return st;
  }

  std::size_t bytes() const {
    return (m_.capacity() + C_.capacity() + n_.capacity() + s_.capacity()) *
           sizeof(double);
  }

 private:
  const ModelSpace* space_;
  int d_;
  std::vector<int> dims_;
  std::vector<std::size_t> moff_, coff_;
  std::vector<double> m_, C_, n_, s_;
};

// Per-step scratch. Sized by (k, d, n) only, never by T; reused across
// steps. Parallel passes accumulate into fixed-size per-block partials that
// are combined sequentially in block order, which keeps every reduction
// bit-identical no matter how many threads ran the blocks.
struct Workspace {
  static constexpr std::size_t kModelsPerBlock = 64;

  Workspace(const ModelSpace& space, int d)
      : k(space.size()),
        d(d),
        n(space.n),
        nblocks((space.size() + kModelsPerBlock - 1) / kModelsPerBlock) {
    condp.resize(static_cast<Eigen::Index>(k), d);
    yhat.resize(static_cast<Eigen::Index>(k), d);
    frf.resize(static_cast<Eigen::Index>(k), d);
    score.resize(static_cast<Eigen::Index>(k), d);
    dprobp.resize(d);
    pm.resize(static_cast<Eigen::Index>(k));
    topbuf.resize(k);
    pa_yhat.assign(nblocks * d, 0.0);
    pa_s.assign(nblocks * d, 0.0);
    pa_frf.assign(nblocks * d, 0.0);
    pb_vmod.assign(nblocks * d, 0.0);
    pb_theta.assign(nblocks * static_cast<std::size_t>(n), 0.0);
    block_err.assign(nblocks, -1);
    block_err_q.assign(nblocks, 0.0);
    L.resize(d);
    yhat_col.resize(d);
    vobs_col.resize(d);
    vcoeff_col.resize(d);
    vmod_col.resize(d);
  }

  std::size_t k;
  int d;
  int n;
  std::size_t nblocks;

  Eigen::MatrixXd condp, yhat, frf, score;  // k x d
  Eigen::VectorXd dprobp;                   // d
  Eigen::VectorXd pm;                       // k, marginal predicted weights
  std::vector<double> topbuf;               // k
  std::vector<double> pa_yhat, pa_s, pa_frf, pb_vmod;  // nblocks x d, [b*d + j]
  std::vector<double> pb_theta;                        // nblocks x n, [b*n + r]
  std::vector<std::int64_t> block_err;                 // lowest bad cell per block
  std::vector<double> block_err_q;
  Eigen::VectorXd L, yhat_col, vobs_col, vcoeff_col, vmod_col;  // d

  std::size_t bytes() const {
    std::size_t b = 0;
    b += static_cast<std::size_t>(condp.size() + yhat.size() + frf.size() +
                                  score.size() + dprobp.size() + pm.size()) *
         sizeof(double);
    b += (topbuf.capacity() + pa_yhat.capacity() + pa_s.capacity() +
          pa_frf.capacity() + pb_vmod.capacity() + pb_theta.capacity() +
          block_err_q.capacity()) *
         sizeof(double);
    b += block_err.capacity() * sizeof(std::int64_t);
    b += static_cast<std::size_t>(L.size() + yhat_col.size() + vobs_col.size() +
                                  vcoeff_col.size() + vmod_col.size()) *
         sizeof(double);
    return b;
  }
};

// Everything one observation contributes to the output series. All forecast
// quantities (yhat, lpdf, variance decomposition, inclusion, sizes, theta,
// deltahat, top stats) are measurable at t-1: they mix the forgetting-updated
// weights with the pre-update states. delta_post is the posterior after
// absorbing y.
struct StepStats {
  double yhat_dma = 0.0, yhat_dms = 0.0;
  double lpdf_dma = 0.0, lpdf_dms = 0.0;
  double vobs = 0.0, vcoeff = 0.0, vmod = 0.0, vtvp = 0.0, vtotal = 0.0;
  Eigen::VectorXd incl;   // n
  Eigen::VectorXd theta;  // n
  double esize = 0.0;
  int dms_size = 0;
  double deltahat = 0.0;
  double highmp = 0.0, top01 = 0.0;
  Eigen::VectorXd delta_post;  // d
  int warnings = 0;
};

namespace detail {

[[noreturn]] inline void throw_cell_error(const ModelSpace& space,
                                          const std::vector<double>& grid, int d,
                                          std::int64_t cell, double q) {
  const std::size_t i = static_cast<std::size_t>(cell) / d;
  const int j = static_cast<int>(cell % d);
  std::ostringstream msg;
  msg << "degenerate predictive variance q=" << q << " for model mask=0x" << std::hex
      << space.ids[i] << std::dec << " at delta=" << grid[j];
  throw NumericError(msg.str());
}

}  // namespace detail

// Advance the mixture by one observation. Returns the forecast statistics
// for y (made before seeing it) and leaves `states` and `probs` filtered.
inline StepStats step(StateGrid& states, MixtureProbs& probs, Workspace& ws,
                      const ModelSpace& space, const DmaConfig& cfg,
                      const Eigen::VectorXd& f, double y) {
  const std::size_t k = space.size();
  const int d = static_cast<int>(cfg.delta_grid.size());
  if (probs.models() != k || probs.grid_size() != d || ws.k != k || ws.d != d)
    throw ConfigError("mixture, workspace, and model space sizes disagree");
  if (f.size() != space.n)
    throw ConfigError("design vector dimension does not match the model space");
  if (!std::isfinite(y)) throw NumericError("non-finite observation");

  StepStats st;
  st.incl = Eigen::VectorXd::Zero(space.n);
  st.theta = Eigen::VectorXd::Zero(space.n);
  st.delta_post.resize(d);

  // Between observations the weights are flattened: p -> p^alpha, normalized.
  int resets = 0;
  for (int j = 0; j < d; ++j)
    detail::power_normalize_column(probs.cond.col(j).data(), ws.condp.col(j).data(),
                                   static_cast<std::ptrdiff_t>(k), cfg.alpha, &resets);
  detail::power_normalize_column(probs.dprob.data(), ws.dprobp.data(), d, cfg.alpha,
                                 &resets);

  const int nthreads = resolve_threads(cfg.threads);
  const std::int64_t nblocks = static_cast<std::int64_t>(ws.nblocks);
  const double* grid = cfg.delta_grid.data();

  std::fill(ws.pa_yhat.begin(), ws.pa_yhat.end(), 0.0);
  std::fill(ws.pa_s.begin(), ws.pa_s.end(), 0.0);
  std::fill(ws.pa_frf.begin(), ws.pa_frf.end(), 0.0);
  std::fill(ws.block_err.begin(), ws.block_err.end(), -1);

  // Pass A: per-cell one-step-ahead moments, densities, and scores
  // score(i,j) = log p(y | cell) + log condp(i,j). Also block partials of
  // the condp-weighted column sums used by the forecast aggregates.
  const double* condp_data = ws.condp.data();
  double* yhat_data = ws.yhat.data();
  double* frf_data = ws.frf.data();
  double* score_data = ws.score.data();

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(nthreads)
#endif
  for (std::int64_t b = 0; b < nblocks; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * Workspace::kModelsPerBlock;
    const std::size_t hi = std::min(k, lo + Workspace::kModelsPerBlock);
    double fbuf[64];
    double* pa_yhat = ws.pa_yhat.data() + b * d;
    double* pa_s = ws.pa_s.data() + b * d;
    double* pa_frf = ws.pa_frf.data() + b * d;
    for (std::size_t i = lo; i < hi; ++i) {
      const int p = detail::project_into(f.data(), space.ids[i], fbuf);
      double pm_acc = 0.0;
      for (int j = 0; j < d; ++j) {
        const std::size_t cell = static_cast<std::size_t>(j) * k + i;  // column-major
        double yh = 0.0, fr = 0.0;
        const bool ok = detail::predict_kernel(states.m_ptr(i, j), states.C_ptr(i, j),
                                               p, fbuf, grid[j], &yh, &fr);
        const double sv = states.sval(i, j);
        const double q = fr + sv;
        if (!ok || !(q >= kMinPredVar) || !std::isfinite(q)) {
          const std::int64_t flat = static_cast<std::int64_t>(i) * d + j;
          if (ws.block_err[static_cast<std::size_t>(b)] < 0) {
            ws.block_err[static_cast<std::size_t>(b)] = flat;
            ws.block_err_q[static_cast<std::size_t>(b)] = q;
          }
          break;
        }
        const double cp = condp_data[cell];
        yhat_data[cell] = yh;
        frf_data[cell] = fr;
        score_data[cell] = detail::log_t_density(states.nval(i, j), yh, q, y) +
                           std::log(cp);
        pa_yhat[j] += cp * yh;
        pa_s[j] += cp * sv;
        pa_frf[j] += cp * fr;
        pm_acc += cp * ws.dprobp[j];
      }
      ws.pm[static_cast<Eigen::Index>(i)] = pm_acc;
      if (ws.block_err[static_cast<std::size_t>(b)] >= 0) break;
    }
  }
  for (std::size_t b = 0; b < ws.nblocks; ++b)
    if (ws.block_err[b] >= 0)
      detail::throw_cell_error(space, cfg.delta_grid, d, ws.block_err[b],
                               ws.block_err_q[b]);

  // Combine pass A partials in fixed block order.
  for (int j = 0; j < d; ++j) {
    double ay = 0.0, as = 0.0, af = 0.0;
    for (std::size_t b = 0; b < ws.nblocks; ++b) {
      ay += ws.pa_yhat[b * d + j];
      as += ws.pa_s[b * d + j];
      af += ws.pa_frf[b * d + j];
    }
    ws.yhat_col[j] = ay;
    ws.vobs_col[j] = as;
    ws.vcoeff_col[j] = af;
  }

  // Per-delta predictive log-likelihood L_j = log sum_i exp score(i,j).
  for (int j = 0; j < d; ++j) {
    const double mx = ws.score.col(j).maxCoeff();
    ws.L[j] = std::isfinite(mx)
                  ? mx + std::log((ws.score.col(j).array() - mx).exp().sum())
                  : mx;
  }

  // Forecast aggregates under the predicted weights.
  double lse_max = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < d; ++j)
    lse_max = std::max(lse_max, ws.L[j] + std::log(ws.dprobp[j]));
  double lse_sum = 0.0;
  for (int j = 0; j < d; ++j)
    lse_sum += std::exp(ws.L[j] + std::log(ws.dprobp[j]) - lse_max);
  st.lpdf_dma = lse_max + std::log(lse_sum);

  st.yhat_dma = 0.0;
  st.vobs = st.vcoeff = st.vtvp = 0.0;
  st.deltahat = 0.0;
  for (int j = 0; j < d; ++j) {
    st.yhat_dma += ws.yhat_col[j] * ws.dprobp[j];
    st.vobs += ws.vobs_col[j] * ws.dprobp[j];
    st.vcoeff += ws.vcoeff_col[j] * ws.dprobp[j];
    st.deltahat += grid[j] * ws.dprobp[j];
  }
  for (int j = 0; j < d; ++j) {
    const double dev = ws.yhat_col[j] - st.yhat_dma;
    st.vtvp += dev * dev * ws.dprobp[j];
  }

  // DMS: the single best (model, delta) cell under the predicted joint
  // weights; ties resolve to the lowest model mask, then the lowest delta.
  std::size_t best_i = 0;
  int best_j = 0;
  double best_w = -1.0;
  for (int j = 0; j < d; ++j) {
    const double dp = ws.dprobp[j];
    const double* col = condp_data + static_cast<std::size_t>(j) * k;
    for (std::size_t i = 0; i < k; ++i) {
      const double w = col[i] * dp;
      if (w > best_w || (w == best_w && (i < best_i || (i == best_i && j < best_j)))) {
        best_w = w;
        best_i = i;
        best_j = j;
      }
    }
  }
  {
    const std::size_t cell = static_cast<std::size_t>(best_j) * k + best_i;
    st.yhat_dms = yhat_data[cell];
    st.lpdf_dms = score_data[cell] - std::log(condp_data[cell]);
  }

  // Marginal-model summaries from the predicted weights.
  {
    double esize = 0.0;
    double highmp = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const double w = ws.pm[static_cast<Eigen::Index>(i)];
      esize += w * model_size(space.ids[i]);
      if (w > highmp) {
        highmp = w;
        arg = i;
      }
      std::uint64_t mask = space.ids[i];
      while (mask != 0) {
        st.incl[std::countr_zero(mask)] += w;
        mask &= mask - 1;
      }
    }
    st.esize = esize;
    st.dms_size = model_size(space.ids[arg]);
    st.highmp = highmp;
    const std::size_t top = (k + 9) / 10;
    std::copy(ws.pm.data(), ws.pm.data() + k, ws.topbuf.begin());
    std::nth_element(ws.topbuf.begin(), ws.topbuf.begin() + (top - 1), ws.topbuf.end(),
                     std::greater<double>());
    double mass = 0.0;
    for (std::size_t i = 0; i < top; ++i) mass += ws.topbuf[i];
    st.top01 = mass;
  }

  // Pass B: posterior-theta partials, model-spread partials, and the state
  // updates themselves. theta mixes the pre-update means.
  std::fill(ws.pb_vmod.begin(), ws.pb_vmod.end(), 0.0);
  std::fill(ws.pb_theta.begin(), ws.pb_theta.end(), 0.0);
  const int nfull = space.n;

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(nthreads)
#endif
  for (std::int64_t b = 0; b < nblocks; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * Workspace::kModelsPerBlock;
    const std::size_t hi = std::min(k, lo + Workspace::kModelsPerBlock);
    double fbuf[64];
    double rf[64];
    double* pb_vmod = ws.pb_vmod.data() + b * d;
    double* pb_theta = ws.pb_theta.data() + b * nfull;
    for (std::size_t i = lo; i < hi; ++i) {
      const int p = detail::project_into(f.data(), space.ids[i], fbuf);
      for (int j = 0; j < d; ++j) {
        const std::size_t cell = static_cast<std::size_t>(j) * k + i;
        const double cp = condp_data[cell];
        const double w = cp * ws.dprobp[j];
        const double* m = states.m_ptr(i, j);
        if (w != 0.0) {
          std::uint64_t mask = space.ids[i];
          int r = 0;
          while (mask != 0) {
            pb_theta[std::countr_zero(mask)] += w * m[r++];
            mask &= mask - 1;
          }
        }
        const double dev = yhat_data[cell] - ws.yhat_col[j];
        pb_vmod[j] += cp * dev * dev;

        double q = 0.0;
        if (!detail::update_kernel(states.m_ptr(i, j), states.C_ptr(i, j),
                                   &states.nval(i, j), &states.sval(i, j), p, fbuf, y,
                                   grid[j], rf, &q)) {
          const std::int64_t flat = static_cast<std::int64_t>(i) * d + j;
          if (ws.block_err[static_cast<std::size_t>(b)] < 0) {
            ws.block_err[static_cast<std::size_t>(b)] = flat;
            ws.block_err_q[static_cast<std::size_t>(b)] = q;
          }
          break;
        }
      }
      if (ws.block_err[static_cast<std::size_t>(b)] >= 0) break;
    }
  }
  for (std::size_t b = 0; b < ws.nblocks; ++b)
    if (ws.block_err[b] >= 0)
      detail::throw_cell_error(space, cfg.delta_grid, d, ws.block_err[b],
                               ws.block_err_q[b]);

  for (int j = 0; j < d; ++j) {
    double acc = 0.0;
    for (std::size_t b = 0; b < ws.nblocks; ++b) acc += ws.pb_vmod[b * d + j];
    ws.vmod_col[j] = acc;
  }
  st.vmod = 0.0;
  for (int j = 0; j < d; ++j) st.vmod += ws.vmod_col[j] * ws.dprobp[j];
  st.vtotal = st.vobs + st.vcoeff + st.vmod + st.vtvp;
  for (int r = 0; r < nfull; ++r) {
    double acc = 0.0;
    for (std::size_t b = 0; b < ws.nblocks; ++b)
      acc += ws.pb_theta[b * static_cast<std::size_t>(nfull) + r];
    st.theta[r] = acc;
  }

  // Filtered weights: cond(i,j) = exp(score - L_j) per column, then the
  // delta posterior via one more log-sum-exp over the grid.
  for (int j = 0; j < d; ++j) {
    if (!std::isfinite(ws.L[j])) {
      probs.cond.col(j).setConstant(1.0 / static_cast<double>(k));
      ++resets;
      continue;
    }
    probs.cond.col(j) = (ws.score.col(j).array() - ws.L[j]).exp();
    probs.cond.col(j) /= probs.cond.col(j).sum();
  }
  {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < d; ++j) mx = std::max(mx, ws.L[j] + std::log(ws.dprobp[j]));
    if (!std::isfinite(mx)) {
      probs.dprob.setConstant(1.0 / d);
      ++resets;
    } else {
      for (int j = 0; j < d; ++j)
        probs.dprob[j] = std::exp(ws.L[j] + std::log(ws.dprobp[j]) - mx);
      probs.dprob /= probs.dprob.sum();
    }
  }
  st.delta_post = probs.dprob;
  st.warnings = resets;
  return st;
}

// Mixture-weighted posterior coefficient means, embedded into the full
// n-vector (columns a model excludes contribute zero).
inline Eigen::VectorXd posterior_theta(const StateGrid& states, const MixtureProbs& probs,
                                       const ModelSpace& space) {
  if (probs.models() != space.size() || probs.grid_size() != states.grid_size())
    throw ConfigError("mixture and state grid sizes disagree");
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(space.n);
  for (std::size_t i = 0; i < space.size(); ++i)
    for (int j = 0; j < states.grid_size(); ++j) {
      const double w = probs.cond(static_cast<Eigen::Index>(i), j) * probs.dprob[j];
      if (w == 0.0) continue;
      const double* m = states.m_ptr(i, j);
      std::uint64_t mask = space.ids[i];
      int r = 0;
      while (mask != 0) {
        theta[std::countr_zero(mask)] += w * m[r++];
        mask &= mask - 1;
      }
    }
  return theta;
}

struct VarDecomp {
  double vobs = 0.0;    // expected observational variance
  double vcoeff = 0.0;  // coefficient uncertainty, f' R f
  double vmod = 0.0;    // forecast spread across models
  double vtvp = 0.0;    // forecast spread across discount factors
  double vtotal = 0.0;
};

// Decomposition of the one-step-ahead predictive variance under the given
// (predicted) weights and the same design vector used for the forecast.
inline VarDecomp variance_decomposition(const StateGrid& states,
                                        const MixtureProbs& predicted,
                                        const ModelSpace& space,
                                        const std::vector<double>& grid,
                                        const Eigen::VectorXd& f) {
  if (predicted.models() != space.size() ||
      predicted.grid_size() != states.grid_size() ||
      static_cast<int>(grid.size()) != states.grid_size())
    throw ConfigError("mixture, grid, and state grid sizes disagree");
  if (f.size() != space.n)
    throw ConfigError("design vector dimension does not match the model space");
  const int d = states.grid_size();
  VarDecomp v;
  std::vector<double> yhat_col(d, 0.0);
  std::vector<std::vector<double>> yh(static_cast<std::size_t>(d));
  double fbuf[64];
  for (int j = 0; j < d; ++j) {
    yh[static_cast<std::size_t>(j)].resize(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) {
      const int p = detail::project_into(f.data(), space.ids[i], fbuf);
      double yhij = 0.0, frf = 0.0;
      if (!detail::predict_kernel(states.m_ptr(i, j), states.C_ptr(i, j), p, fbuf,
                                  grid[static_cast<std::size_t>(j)], &yhij, &frf))
        throw NumericError("non-finite predictive moments");
      const double cp = predicted.cond(static_cast<Eigen::Index>(i), j);
      yh[static_cast<std::size_t>(j)][i] = yhij;
      yhat_col[static_cast<std::size_t>(j)] += cp * yhij;
      v.vobs += cp * predicted.dprob[j] * states.sval(i, j);
      v.vcoeff += cp * predicted.dprob[j] * frf;
    }
  }
  double ybar = 0.0;
  for (int j = 0; j < d; ++j) ybar += yhat_col[static_cast<std::size_t>(j)] * predicted.dprob[j];
  for (int j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < space.size(); ++i) {
      const double dev = yh[static_cast<std::size_t>(j)][i] - yhat_col[static_cast<std::size_t>(j)];
      v.vmod += predicted.cond(static_cast<Eigen::Index>(i), j) * predicted.dprob[j] * dev * dev;
    }
    const double dj = yhat_col[static_cast<std::size_t>(j)] - ybar;
    v.vtvp += dj * dj * predicted.dprob[j];
  }
  v.vtotal = v.vobs + v.vcoeff + v.vmod + v.vtvp;
  return v;
}

// Full-run output. Per-step series only (length T); the k x d mixture never
// leaves the engine, so memory stays at two time slices plus these series.
struct DmaOutput {
  Eigen::VectorXd yhat_dma, yhat_dms, lpdf_dma, lpdf_dms;  // T
  Eigen::MatrixXd incl;                                    // T x n
  Eigen::MatrixXd theta;                                   // T x n
  Eigen::VectorXd esize;                                   // T
  Eigen::VectorXi dms_size;                                // T
  Eigen::VectorXd deltahat;                                // T
  Eigen::MatrixXd pmt;                                     // T x d, filtered delta weights
  Eigen::MatrixXd vdec;                                    // T x 5: vobs vcoeff vmod vtvp vtotal
  Eigen::VectorXd highmp, top01;                           // T

  std::size_t k = 0;
  int d = 0;
  int T = 0;
  int n = 0;
  double alpha = 1.0;
  std::vector<double> delta_grid;
  PriorSpec prior;
  std::vector<std::string> names;
  std::vector<int> keep;
  bool kitchen_sink = false;
  int burn = 0;
  double elapsed_sec = 0.0;
  int warnings = 0;
};

// Run the full mixture recursion over y, F (rows are observations). Output
// rows are one-step-ahead quantities for every t including the burn-in;
// burn is recorded for writers, not applied here.
inline DmaOutput run_dma(const Eigen::VectorXd& y, const Eigen::MatrixXd& F,
                         const DmaConfig& cfg,
                         const std::vector<std::string>& names = {}) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const int T = static_cast<int>(F.rows());
  const int n = static_cast<int>(F.cols());
  if (y.size() != T) throw ConfigError("response length does not match the design");
  if (T < 1) throw ConfigError("need at least one observation");
  if (n < 1) throw ConfigError("need at least one design column");
  for (int t = 0; t < T; ++t) {
    if (!std::isfinite(y[t])) {
      std::ostringstream msg;
      msg << "non-finite response at row " << t + 1;
      throw DataError(msg.str());
    }
    for (int c = 0; c < n; ++c)
      if (!std::isfinite(F(t, c))) {
        std::ostringstream msg;
        msg << "non-finite design entry at row " << t + 1 << ", column " << c + 1;
        throw DataError(msg.str());
      }
  }
  if (!names.empty() && static_cast<int>(names.size()) != n)
    throw ConfigError("number of column names does not match the design");

  ModelSpace space = enumerate_models(n, cfg.keep, cfg.kitchen_sink, cfg.model_cap);
  space.names = names;
  if (space.names.empty()) {
    space.names.reserve(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) space.names.push_back("x" + std::to_string(c + 1));
  }

  const int d = static_cast<int>(cfg.delta_grid.size());
  StateGrid states(space, d);
  states.init(cfg.prior, &F);
  MixtureProbs probs = uniform_probs(space.size(), d);
  Workspace ws(space, d);

  DmaOutput out;
  out.yhat_dma.resize(T);
  out.yhat_dms.resize(T);
  out.lpdf_dma.resize(T);
  out.lpdf_dms.resize(T);
  out.incl.resize(T, n);
  out.theta.resize(T, n);
  out.esize.resize(T);
  out.dms_size.resize(T);
  out.deltahat.resize(T);
  out.pmt.resize(T, d);
  out.vdec.resize(T, 5);
  out.highmp.resize(T);
  out.top01.resize(T);

  Eigen::VectorXd f(n);
  for (int t = 0; t < T; ++t) {
    f = F.row(t);
    const StepStats st = step(states, probs, ws, space, cfg, f, y[t]);
    out.yhat_dma[t] = st.yhat_dma;
    out.yhat_dms[t] = st.yhat_dms;
    out.lpdf_dma[t] = st.lpdf_dma;
    out.lpdf_dms[t] = st.lpdf_dms;
    out.incl.row(t) = st.incl;
    out.theta.row(t) = st.theta;
    out.esize[t] = st.esize;
    out.dms_size[t] = st.dms_size;
    out.deltahat[t] = st.deltahat;
    out.pmt.row(t) = st.delta_post;
    out.vdec(t, 0) = st.vobs;
    out.vdec(t, 1) = st.vcoeff;
    out.vdec(t, 2) = st.vmod;
    out.vdec(t, 3) = st.vtvp;
    out.vdec(t, 4) = st.vtotal;
    out.highmp[t] = st.highmp;
    out.top01[t] = st.top01;
    out.warnings += st.warnings;
  }

  out.k = space.size();
  out.d = d;
  out.T = T;
  out.n = n;
  out.alpha = cfg.alpha;
  out.delta_grid = cfg.delta_grid;
  out.prior = cfg.prior;
  out.names = space.names;
  out.keep = cfg.keep;
  out.kitchen_sink = cfg.kitchen_sink;
  out.burn = cfg.burn;
  out.elapsed_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace dma
