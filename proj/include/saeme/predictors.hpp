#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "saeme/core.hpp"

namespace saeme {

/// Largest log value exponentiated without overflow.
inline constexpr double kMaxLogPrediction = 709.0;

namespace detail {

struct LogAB {
  double log_a = 0;
  double log_b = 0;
};

// Shared numeric core for every predictor variant. `quad` is the quadratic
// measurement-error term (beta'C beta, or beta1^2 c, or 0 for the
// error-free forms); keeping a single expression sequence makes the C=0
// reduction chain and the p=1 multivariate reduction exact, not just
// approximate.
inline LogAB log_predictor_core(double quad, double sigma2v, double psi,
                                double z, double linpred) {
  const double s = quad + sigma2v + psi;
  const double gt = (quad + sigma2v) / s;
  const double d = 2.0 * psi * quad / s;
  LogAB r;
  r.log_a = gt * z + (1.0 - gt) * linpred + 0.5 * gt * psi;
  r.log_b = r.log_a - 0.5 * d;
  return r;
}

inline double checked_exp(double log_value, const char* what) {
  if (log_value > kMaxLogPrediction)
    throw std::overflow_error(std::string(what) + ": overflow, log-scale value " +
                              std::to_string(log_value));
  return std::exp(log_value);
}

}  // namespace detail

/// log of predictor A (the conditional-expectation predictor of exp(phi)):
/// gamma~ z + (1 - gamma~)(beta0 + beta1 W) + gamma~ psi / 2.
inline double log_predictor_a(const ModelParams& p, const AreaObservation& a) {
  return detail::log_predictor_core(me_quad(p.beta1, a.c), p.sigma2v, a.psi,
                                    a.z, p.beta0 + p.beta1 * a.w)
      .log_a;
}

/// log of predictor B, the unbiased predictor: log A - d/2.
inline double log_predictor_b(const ModelParams& p, const AreaObservation& a) {
  return detail::log_predictor_core(me_quad(p.beta1, a.c), p.sigma2v, a.psi,
                                    a.z, p.beta0 + p.beta1 * a.w)
      .log_b;
}

/// log of the predictor that ignores measurement error: the C=0 form of A/B
/// evaluated at the observed covariate.
inline double log_predictor_no_me(const ModelParams& p, const AreaObservation& a) {
  return detail::log_predictor_core(0.0, p.sigma2v, a.psi, a.z,
                                    p.beta0 + p.beta1 * a.w)
      .log_a;
}

/// log of the classical transformed Fay-Herriot EB predictor, for an
/// error-free covariate value x (log scale):
/// gamma* z + (1 - gamma*)(beta0 + beta1 x) + gamma* psi / 2.
inline double log_predictor_fheblup(const ModelParams& p, const AreaObservation& a,
                                    double x) {
  if (!std::isfinite(x))
    throw std::invalid_argument("predictor_fheblup: x must be finite");
  return detail::log_predictor_core(0.0, p.sigma2v, a.psi, a.z,
                                    p.beta0 + p.beta1 * x)
      .log_a;
}

inline double predictor_a(const ModelParams& p, const AreaObservation& a) {
  return detail::checked_exp(log_predictor_a(p, a), "predictor_a");
}
inline double predictor_b(const ModelParams& p, const AreaObservation& a) {
  return detail::checked_exp(log_predictor_b(p, a), "predictor_b");
}
inline double predictor_no_me(const ModelParams& p, const AreaObservation& a) {
  return detail::checked_exp(log_predictor_no_me(p, a), "predictor_no_me");
}
inline double predictor_fheblup(const ModelParams& p, const AreaObservation& a,
                                double x) {
  return detail::checked_exp(log_predictor_fheblup(p, a, x), "predictor_fheblup");
}

/// Multivariate covariate set-up: W ~ MVN(x, C) with diagonal C.
struct MultivariateArea {
  std::string area_id;
  double z = 0;
  double psi = 0;
  std::vector<double> w;       ///< covariate vector, length p
  std::vector<double> c_diag;  ///< diagonal of the measurement covariance

  MultivariateArea(std::string id, double z_, double psi_, std::vector<double> w_,
                   std::vector<double> c_)
      : area_id(std::move(id)), z(z_), psi(psi_), w(std::move(w_)),
        c_diag(std::move(c_)) {
    if (!(psi > 0.0) || !std::isfinite(psi))
      throw std::invalid_argument("MultivariateArea: psi must be > 0");
    if (w.size() != c_diag.size())
      throw std::invalid_argument("MultivariateArea: dimension mismatch");
    for (double cj : c_diag)
      if (!(cj >= 0.0) || !std::isfinite(cj))
        throw std::invalid_argument("MultivariateArea: c entries must be >= 0");
  }
};

struct MultiParams {
  double beta0 = 0;
  std::vector<double> beta;
  double sigma2v = 0;
};

namespace detail {

inline LogAB log_predictor_multi(const MultiParams& p, const MultivariateArea& a) {
  if (p.beta.size() != a.w.size())
    throw std::invalid_argument("predictor multi: dimension mismatch");
  if (p.sigma2v < 0.0)
    throw std::invalid_argument("predictor multi: sigma2v must be >= 0");
  double quad = 0.0, lin = 0.0;
  for (std::size_t j = 0; j < p.beta.size(); ++j) {
    quad += me_quad(p.beta[j], a.c_diag[j]);
    lin += p.beta[j] * a.w[j];
  }
  return log_predictor_core(quad, p.sigma2v, a.psi, a.z, p.beta0 + lin);
}

}  // namespace detail

inline double log_predictor_a_multi(const MultiParams& p, const MultivariateArea& a) {
  return detail::log_predictor_multi(p, a).log_a;
}
inline double log_predictor_b_multi(const MultiParams& p, const MultivariateArea& a) {
  return detail::log_predictor_multi(p, a).log_b;
}
inline double predictor_a_multi(const MultiParams& p, const MultivariateArea& a) {
  return detail::checked_exp(log_predictor_a_multi(p, a), "predictor_a_multi");
}
inline double predictor_b_multi(const MultiParams& p, const MultivariateArea& a) {
  return detail::checked_exp(log_predictor_b_multi(p, a), "predictor_b_multi");
}

/// All point predictors for one area, log scale mirrored alongside the
/// original scale. Original-scale values are exp of the stored logs;
/// `overflow` marks areas whose exp left double range (value is +inf then).
struct PredictionSet {
  std::string area_id;
  double direct = 0, pred_no_me = 0, pred_a = 0, pred_b = 0;
  std::optional<double> pred_fheblup;
  double log_direct = 0, log_no_me = 0, log_a = 0, log_b = 0;
  std::optional<double> log_fheblup;
  bool overflow = false;
};

inline std::vector<PredictionSet> predict_all(const ModelParams& p,
                                              std::span<const AreaObservation> areas) {
  std::vector<PredictionSet> out;
  out.reserve(areas.size());
  for (const auto& a : areas) {
    PredictionSet ps;
    ps.area_id = a.area_id;
    ps.log_direct = a.z;
    ps.log_no_me = log_predictor_no_me(p, a);
    const auto ab = detail::log_predictor_core(me_quad(p.beta1, a.c), p.sigma2v,
                                               a.psi, a.z, p.beta0 + p.beta1 * a.w);
    ps.log_a = ab.log_a;
    ps.log_b = ab.log_b;
    ps.direct = std::exp(ps.log_direct);
    ps.pred_no_me = std::exp(ps.log_no_me);
    ps.pred_a = std::exp(ps.log_a);
    ps.pred_b = std::exp(ps.log_b);
    ps.overflow = std::max({ps.log_direct, ps.log_no_me, ps.log_a, ps.log_b}) >
                  kMaxLogPrediction;
    out.push_back(std::move(ps));
  }
  return out;
}

/// Variant that also fills the FHeblup column from a separately fitted
/// error-free-covariate model (x given on the log scale, one per area).
inline std::vector<PredictionSet> predict_all(const ModelParams& p,
                                              std::span<const AreaObservation> areas,
                                              const ModelParams& fh_params,
                                              std::span<const double> x_log) {
  if (x_log.size() != areas.size())
    throw std::invalid_argument("predict_all: x_log size mismatch");
  auto out = predict_all(p, areas);
  for (std::size_t i = 0; i < areas.size(); ++i) {
    const double lf = log_predictor_fheblup(fh_params, areas[i], x_log[i]);
    out[i].log_fheblup = lf;
    out[i].pred_fheblup = std::exp(lf);
    out[i].overflow = out[i].overflow || lf > kMaxLogPrediction;
  }
  return out;
}

}  // namespace saeme
