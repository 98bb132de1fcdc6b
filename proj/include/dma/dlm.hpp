#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <sstream>

#include "dma/errors.hpp"

namespace dma {

// Predictive variances below this threshold are treated as numerically
// degenerate rather than clamped; callers get a NumericError instead of
// silently corrupted weights.
inline constexpr double kMinPredVar = 1e-300;

enum class PriorKind { Diffuse, Zellner };

struct PriorSpec {
  PriorKind kind = PriorKind::Diffuse;
  double g = 100.0;   // prior scale on the coefficient covariance
  double n0 = 1.0;    // initial degrees of freedom for variance learning
  double s0 = 1.0;    // initial observational variance estimate
};

inline void validate(const PriorSpec& prior) {
  if (!(prior.g > 0.0) || !std::isfinite(prior.g))
    throw ConfigError("prior scale g must be positive and finite");
  if (!(prior.n0 >= 1.0) || !std::isfinite(prior.n0))
    throw ConfigError("prior degrees of freedom n0 must be >= 1");
  if (!(prior.s0 > 0.0) || !std::isfinite(prior.s0))
    throw ConfigError("prior variance estimate s0 must be positive and finite");
}

// Conjugate state of one time-varying-parameter regression:
// theta_t | F_t ~ T_n(m, C) and the observational variance estimate s
// carries n degrees of freedom. C is kept exactly symmetric.
struct DlmState {
  Eigen::VectorXd m;
  Eigen::MatrixXd C;
  double n = 1.0;
  double s = 1.0;

  int dim() const { return static_cast<int>(m.size()); }
};

// One-step-ahead y distribution: Student-t with `dof` degrees of freedom,
// location `yhat`, squared scale `q`.
struct PredictiveMoments {
  double yhat = 0.0;
  double q = 0.0;
  double dof = 0.0;
};

namespace detail {

// yhat = f'm, frf = f'(C/delta)f. C is p x p, row/col major irrelevant
// by symmetry. Returns false when the result is non-finite.
inline bool predict_kernel(const double* m, const double* C, int p, const double* f,
                           double delta, double* yhat, double* frf) {
  double acc_y = 0.0;
  double acc_q = 0.0;
  for (int r = 0; r < p; ++r) {
    acc_y += f[r] * m[r];
    double row = 0.0;
    const double* Cr = C + static_cast<std::ptrdiff_t>(r) * p;
    for (int c = 0; c < p; ++c) row += Cr[c] * f[c];
    acc_q += f[r] * row;
  }
  *yhat = acc_y;
  *frf = acc_q / delta;
  return std::isfinite(acc_y) && std::isfinite(*frf);
}

// Student-t log density at y for location yhat, squared scale q > 0, dof nu.
inline double log_t_density(double nu, double yhat, double q, double y) {
  const double dy = y - yhat;
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * std::numbers::pi * q) -
         0.5 * (nu + 1.0) * std::log1p(dy * dy / (nu * q));
}

// In-place conjugate update with discounting. rf is caller scratch of
// length p. On success writes the realized predictive variance to *q_out;
// returns false (state untouched apart from *q_out) when that variance is
// below kMinPredVar or non-finite.
inline bool update_kernel(double* m, double* C, double* n, double* s, int p,
                          const double* f, double y, double delta, double* rf,
                          double* q_out) {
  double yhat = 0.0;
  double frf = 0.0;
  for (int r = 0; r < p; ++r) {
    double row = 0.0;
    const double* Cr = C + static_cast<std::ptrdiff_t>(r) * p;
    for (int c = 0; c < p; ++c) row += Cr[c] * f[c];
    rf[r] = row / delta;
    frf += f[r] * rf[r];
    yhat += f[r] * m[r];
  }
  const double q = frf + *s;
  *q_out = q;
  if (!(q >= kMinPredVar) || !std::isfinite(q)) return false;

  const double e = y - yhat;
  const double n1 = *n + 1.0;
  const double s1 = *s + (*s / n1) * (e * e / q - 1.0);
  if (!(s1 > 0.0) || !std::isfinite(s1)) return false;

  // m += (Rf/q) e ; C = (s1/s) (R - Rf Rf'/q), mirrored for exact symmetry.
  const double gain = e / q;
  const double scale = s1 / *s;
  for (int r = 0; r < p; ++r) {
    m[r] += rf[r] * gain;
    double* Cr = C + static_cast<std::ptrdiff_t>(r) * p;
    for (int c = 0; c <= r; ++c) {
      const double v = scale * (Cr[c] / delta - rf[r] * rf[c] / q);
      Cr[c] = v;
      C[static_cast<std::ptrdiff_t>(c) * p + r] = v;
    }
  }
  *n = n1;
  *s = s1;
  return true;
}

// Inverse of a symmetric positive definite matrix. A numerically singular
// input gets one ridge retry (1e-8 * trace/p on the diagonal) before failing.
inline Eigen::MatrixXd inverse_spd_with_ridge(Eigen::MatrixXd G) {
  const int p = static_cast<int>(G.rows());
  if (!G.allFinite()) throw NumericError("Gram matrix has non-finite entries");
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) {
    const double ridge = 1e-8 * G.trace() / p;
    G.diagonal().array() += ridge;
    llt.compute(G);
    if (llt.info() != Eigen::Success)
      throw NumericError("Gram matrix is singular even after ridge adjustment");
  }
  return llt.solve(Eigen::MatrixXd::Identity(p, p));
}

}  // namespace detail

// Initial state for a p-dimensional regression. Diffuse: C0 = g I.
// Zellner: C0 = g s0 (X'X)^-1, supplied as gram_inverse = (X'X)^-1.
inline DlmState init_state(int p, const PriorSpec& prior,
                           const Eigen::MatrixXd* gram_inverse = nullptr) {
  validate(prior);
  if (p < 1) throw ConfigError("state dimension must be >= 1");
  DlmState st;
  st.m = Eigen::VectorXd::Zero(p);
  st.n = prior.n0;
  st.s = prior.s0;
  if (prior.kind == PriorKind::Diffuse) {
    st.C = prior.g * Eigen::MatrixXd::Identity(p, p);
  } else {
    if (gram_inverse == nullptr)
      throw ConfigError("g-prior initialization needs the inverse Gram matrix");
    if (gram_inverse->rows() != p || gram_inverse->cols() != p)
      throw ConfigError("inverse Gram matrix dimension mismatch");
    if (!gram_inverse->allFinite())
      throw NumericError("inverse Gram matrix has non-finite entries");
    st.C = prior.g * prior.s0 * (*gram_inverse);
    st.C = 0.5 * (st.C + st.C.transpose()).eval();  // enforce exact symmetry
  }
  return st;
}

// One-step-ahead moments under discounting: R = C/delta, yhat = f'm,
// q = f'Rf + s, dof = n (the state's value before observing y).
inline PredictiveMoments predict_moments(const DlmState& state, const Eigen::VectorXd& f,
                                         double delta) {
  if (f.size() != state.m.size())
    throw ConfigError("design vector dimension does not match the state");
  if (!(delta > 0.0) || delta > 1.0)
    throw ConfigError("discount factor must lie in (0, 1]");
  PredictiveMoments pm;
  double frf = 0.0;
  if (!detail::predict_kernel(state.m.data(), state.C.data(), state.dim(), f.data(),
                              delta, &pm.yhat, &frf))
    throw NumericError("non-finite predictive moments");
  pm.q = frf + state.s;
  pm.dof = state.n;
  if (!(pm.q >= kMinPredVar) || !std::isfinite(pm.q)) {
    std::ostringstream msg;
    msg << "degenerate predictive variance q=" << pm.q << " (s=" << state.s
        << ", n=" << state.n << ")";
    throw NumericError(msg.str());
  }
  return pm;
}

inline double log_pred_density(const PredictiveMoments& pm, double y) {
  if (!(pm.q > 0.0) || !std::isfinite(pm.q) || !(pm.dof > 0.0) || !std::isfinite(y))
    throw NumericError("non-finite inputs to the predictive density");
  return detail::log_t_density(pm.dof, pm.yhat, pm.q, y);
}

// Observe y and return the filtered state. The variance estimate follows
// s' = s + (s/n')(e^2/q - 1) with n' = n + 1; the covariance is rescaled
// by s'/s so it stays on the current variance scale.
inline DlmState update_state(DlmState state, const Eigen::VectorXd& f, double y,
                             double delta) {
  if (f.size() != state.m.size())
    throw ConfigError("design vector dimension does not match the state");
  if (!(delta > 0.0) || delta > 1.0)
    throw ConfigError("discount factor must lie in (0, 1]");
  if (!std::isfinite(y)) throw NumericError("non-finite observation");
  Eigen::VectorXd rf(state.dim());
  double q = 0.0;
  if (!detail::update_kernel(state.m.data(), state.C.data(), &state.n, &state.s,
                             state.dim(), f.data(), y, delta, rf.data(), &q)) {
    std::ostringstream msg;
    msg << "degenerate predictive variance q=" << q << " in filter update (s="
        << state.s << ", n=" << state.n << ")";
    throw NumericError(msg.str());
  }
  return state;
}

}  // namespace dma
