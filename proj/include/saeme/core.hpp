#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace saeme {

/// One small area's observed data for the log-scale area-level model
///
///   z | phi ~ N(phi, psi),   phi ~ N(beta0 + beta1 * x, sigma2v),
///   W ~ N(x, c),
///
/// where z is the log-scale direct estimate, W the observed covariate,
/// psi the (known) sampling variance of z and c the (known) measurement
/// error variance of W. c = 0 encodes an error-free covariate. Immutable
/// by convention: validated at construction, never mutated afterwards.
struct AreaObservation {
  std::string area_id;
  double z = 0;    ///< log-scale direct estimate
  double w = 0;    ///< observed covariate, log scale
  double psi = 0;  ///< sampling variance of z, > 0
  double c = 0;    ///< measurement-error variance of w, >= 0

  AreaObservation(std::string id, double z_, double w_, double psi_, double c_)
      : area_id(std::move(id)), z(z_), w(w_), psi(psi_), c(c_) {
    if (!std::isfinite(z) || !std::isfinite(w))
      throw std::invalid_argument("AreaObservation: z and W must be finite");
    if (!(psi > 0.0) || !std::isfinite(psi))
      throw std::invalid_argument("AreaObservation: psi must be finite and > 0");
    if (!(c >= 0.0) || !std::isfinite(c))
      throw std::invalid_argument("AreaObservation: c must be finite and >= 0");
  }
};

/// Model parameters omega = (beta0, beta1, sigma2v).
struct ModelParams {
  double beta0 = 0;
  double beta1 = 0;
  double sigma2v = 0;

  ModelParams() = default;
  ModelParams(double b0, double b1, double s2v)
      : beta0(b0), beta1(b1), sigma2v(s2v) {
    if (!std::isfinite(beta0) || !std::isfinite(beta1) || !std::isfinite(sigma2v))
      throw std::invalid_argument("ModelParams: fields must be finite");
    if (sigma2v < 0.0)
      throw std::invalid_argument("ModelParams: sigma2v must be >= 0");
  }
};

/// Per-area derived quantities:
///   S      = beta1^2 c + sigma2v + psi
///   gamma~ = (beta1^2 c + sigma2v) / S        (measurement-error shrinkage)
///   gamma* = sigma2v / (sigma2v + psi)        (error-free shrinkage)
///   d      = 2 psi beta1^2 c / S              (log-scale bias of predictor A)
///   tau    = z - beta0 - beta1 W
struct DerivedQuantities {
  double s = 0;
  double gamma_tilde = 0;
  double gamma_star = 0;
  double d = 0;
  double tau = 0;
};

/// Quadratic measurement-error term beta1^2 * c, written so the scalar and
/// the p=1 multivariate code paths produce bit-identical values.
inline double me_quad(double beta1, double c) { return (beta1 * c) * beta1; }

inline DerivedQuantities derive(const ModelParams& p, const AreaObservation& a) {
  DerivedQuantities q;
  const double quad = me_quad(p.beta1, a.c);
  q.s = quad + p.sigma2v + a.psi;
  q.gamma_tilde = (quad + p.sigma2v) / q.s;
  q.gamma_star = p.sigma2v / (p.sigma2v + a.psi);
  q.d = 2.0 * a.psi * quad / q.s;
  q.tau = a.z - p.beta0 - p.beta1 * a.w;
  return q;
}

/// LHS minus RHS of the completing-the-square identity behind the marginal
/// likelihood; a test oracle, expected to vanish. Requires c > 0 (the RHS
/// divides by c).
inline double identity_residual(const ModelParams& p, const AreaObservation& a,
                                double x) {
  if (!(a.c > 0.0))
    throw std::invalid_argument("identity_residual: requires c > 0");
  if (!std::isfinite(x))
    throw std::invalid_argument("identity_residual: x must be finite");
  const double vp = p.sigma2v + a.psi;
  const double rz = a.z - p.beta0 - p.beta1 * x;
  const double rw = a.w - x;
  const double lhs = rz * rz / vp + rw * rw / a.c;

  const auto dq = derive(p, a);
  const double prec = p.beta1 * p.beta1 / vp + 1.0 / a.c;
  const double center = (p.beta1 * (a.z - p.beta0) / vp + a.w / a.c) / prec;
  const double dev = x - center;
  const double rhs = dq.tau * dq.tau / dq.s + prec * dev * dev;
  return lhs - rhs;
}

struct PhiMoments {
  double mean = 0;
  double variance = 0;
};

/// Posterior mean and variance of phi given (z, W) after integrating the
/// unobserved covariate out under a flat prior:
///   E(phi|.) = gamma~ z + (1 - gamma~)(beta0 + beta1 W),  V(phi|.) = gamma~ psi.
inline PhiMoments posterior_phi_moments(const ModelParams& p,
                                        const AreaObservation& a) {
  const auto dq = derive(p, a);
  PhiMoments m;
  m.mean = dq.gamma_tilde * a.z +
           (1.0 - dq.gamma_tilde) * (p.beta0 + p.beta1 * a.w);
  m.variance = dq.gamma_tilde * a.psi;
  return m;
}

}  // namespace saeme
