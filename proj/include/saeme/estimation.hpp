#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "saeme/core.hpp"

namespace saeme {

/// Values of the (unbiased) score functions at a given omega.
struct ScoreVector {
  double u1 = 0, u2 = 0, u3 = 0;
  double max_abs() const {
    return std::max({std::fabs(u1), std::fabs(u2), std::fabs(u3)});
  }
  bool finite() const {
    return std::isfinite(u1) && std::isfinite(u2) && std::isfinite(u3);
  }
};

namespace detail {

// No validity checks, never throws; fit() needs this on wild iterates.
inline ScoreVector raw_scores_unchecked(const ModelParams& p,
                                        std::span<const AreaObservation> areas) {
  ScoreVector u;
  for (const auto& a : areas) {
    const auto dq = derive(p, a);
    const double inv_s = 1.0 / dq.s;
    const double t = dq.tau;
    u.u1 += inv_s * t;
    u.u2 += inv_s * (a.w * t - p.beta1 * a.c) + inv_s * inv_s * t * t * p.beta1 * a.c;
    u.u3 += 0.5 * (inv_s * inv_s * t * t - inv_s);
  }
  return u;
}

inline ScoreVector unbiased_scores_unchecked(const ModelParams& p,
                                             std::span<const AreaObservation> areas) {
  ScoreVector u;
  for (const auto& a : areas) {
    const auto dq = derive(p, a);
    const double inv_s = 1.0 / dq.s;
    const double t = dq.tau;
    u.u1 += inv_s * t;
    u.u2 += inv_s * a.w * t + inv_s * inv_s * t * t * p.beta1 * a.c;
    u.u3 += 0.5 * (inv_s * inv_s * t * t - inv_s);
  }
  return u;
}

}  // namespace detail

/// Score functions (U1, U2, U3) of the marginal log-likelihood:
///   U1 = sum 1/S tau
///   U2 = -sum beta1 c / S + sum W tau / S + sum beta1 c tau^2 / S^2
///   U3 = -1/2 sum 1/S + 1/2 sum tau^2 / S^2
inline ScoreVector raw_scores(const ModelParams& p,
                              std::span<const AreaObservation> areas) {
  if (areas.empty()) throw std::invalid_argument("raw_scores: no areas");
  const ScoreVector u = detail::raw_scores_unchecked(p, areas);
  if (!u.finite()) throw std::runtime_error("raw_scores: non-finite accumulation");
  return u;
}

/// Bias-corrected scores U - E[U]; only the beta1 component changes:
/// U~2 = U2 + sum beta1 c / S, since E[W tau] = -beta1 c.
inline ScoreVector unbiased_scores(const ModelParams& p,
                                   std::span<const AreaObservation> areas) {
  if (areas.empty()) throw std::invalid_argument("unbiased_scores: no areas");
  const ScoreVector u = detail::unbiased_scores_unchecked(p, areas);
  if (!u.finite())
    throw std::runtime_error("unbiased_scores: non-finite accumulation");
  return u;
}

/// Intercept update given current (beta1, sigma2v):
/// beta0 = sum 1/S (z - beta1 W) / sum 1/S.
inline double update_beta0(const ModelParams& current,
                           std::span<const AreaObservation> areas) {
  double num = 0.0, den = 0.0;
  for (const auto& a : areas) {
    const double inv_s = 1.0 / derive(current, a).s;
    num += inv_s * (a.z - current.beta1 * a.w);
    den += inv_s;
  }
  return num / den;
}

struct Beta1Update {
  double value = 0;
  bool fallback = false;  ///< denominator was <= 0; damped step used instead
};

/// Slope update with weights from the current iterate and the new beta0.
/// The corrected denominator sum W^2/S - sum c tau^2/S^2 can turn
/// nonpositive on pathological samples; then the step is the midpoint of
/// the previous slope and the uncorrected weighted least squares slope.
inline Beta1Update update_beta1(double beta0_new, const ModelParams& current,
                                std::span<const AreaObservation> areas) {
  double num = 0.0, den = 0.0, den_plain = 0.0;
  for (const auto& a : areas) {
    const double s = derive(current, a).s;
    const double inv_s = 1.0 / s;
    const double tau = a.z - beta0_new - current.beta1 * a.w;
    num += inv_s * a.w * (a.z - beta0_new);
    den_plain += inv_s * a.w * a.w;
    den += inv_s * a.w * a.w - inv_s * inv_s * tau * tau * a.c;
  }
  if (den > 0.0) return {num / den, false};
  const double naive = (den_plain > 0.0) ? num / den_plain : current.beta1;
  return {0.5 * (current.beta1 + naive), true};
}

struct Sigma2vRoot {
  double value = 0;
  bool truncated = false;  ///< the score had no nonnegative root
};

/// Solves 1/2 sum tau^2/S^2 = 1/2 sum 1/S for sigma2v >= 0 by bracketing
/// bisection on [0, max tau^2 + max psi]; at the upper end every term of
/// g = sum tau^2/S^2 - 1/S is negative, so a sign change is guaranteed
/// whenever g(0) > 0. Returns 0 with the truncation flag when g(0) <= 0.
inline Sigma2vRoot solve_sigma2v_step(double beta0, double beta1,
                                      std::span<const AreaObservation> areas) {
  if (areas.empty()) throw std::invalid_argument("solve_sigma2v_step: no areas");
  double upper = 0.0;
  const auto g = [&](double s2v) {
    double acc = 0.0;
    for (const auto& a : areas) {
      const double s = me_quad(beta1, a.c) + s2v + a.psi;
      const double tau = a.z - beta0 - beta1 * a.w;
      acc += tau * tau / (s * s) - 1.0 / s;
    }
    return acc;
  };
  for (const auto& a : areas) {
    const double tau = a.z - beta0 - beta1 * a.w;
    upper = std::max(upper, tau * tau);
  }
  double max_psi = 0.0;
  for (const auto& a : areas) max_psi = std::max(max_psi, a.psi);
  upper += max_psi;

  if (!(g(0.0) > 0.0)) return {0.0, g(0.0) < 0.0};
  double lo = 0.0, hi = upper;
  for (int it = 0; it < 120; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return {0.5 * (lo + hi), false};
}

/// 3x3 asymptotic information matrix of the unbiased estimating functions.
/// The (1,3) and (2,3) entries are exactly zero.
struct InfoMatrix {
  std::array<std::array<double, 3>, 3> entries{};
  bool singular = false;

  /// sqrt of the diagonal of the inverse; absent when singular.
  std::optional<std::array<double, 3>> standard_errors() const {
    if (singular) return std::nullopt;
    const double a = entries[0][0], b = entries[0][1], c = entries[1][1];
    const double det2 = a * c - b * b;
    return std::array<double, 3>{std::sqrt(c / det2), std::sqrt(a / det2),
                                 std::sqrt(1.0 / entries[2][2])};
  }
};

namespace detail {

template <class XValue, class X2Value>
InfoMatrix info_matrix_impl(const ModelParams& p,
                            std::span<const AreaObservation> areas,
                            XValue&& x_of, X2Value&& x2_of) {
  InfoMatrix im;
  double i11 = 0, i12 = 0, i22 = 0, i33 = 0;
  for (std::size_t i = 0; i < areas.size(); ++i) {
    const auto& a = areas[i];
    const double s = me_quad(p.beta1, a.c) + p.sigma2v + a.psi;
    const double inv_s = 1.0 / s;
    const double sig2_c = a.c * (p.sigma2v + a.psi) * inv_s;
    i11 += inv_s;
    i12 += inv_s * x_of(i);
    i22 += inv_s * (x2_of(i) + sig2_c);
    i33 += 0.5 * inv_s * inv_s;
  }
  im.entries = {{{i11, i12, 0.0}, {i12, i22, 0.0}, {0.0, 0.0, i33}}};
  const double det2 = i11 * i22 - i12 * i12;
  im.singular = !(std::isfinite(det2) && i11 > 0.0 && i33 > 0.0 &&
                  det2 > 1e-12 * std::max(i11 * i22, i12 * i12));
  return im;
}

}  // namespace detail

/// Information matrix with the real-data covariate plug-in: x <- W and
/// x^2 <- max(W^2 - c, 0), which is unbiased since E[W^2] = x^2 + c.
inline InfoMatrix information_matrix(const ModelParams& p,
                                     std::span<const AreaObservation> areas) {
  return detail::info_matrix_impl(
      p, areas, [&](std::size_t i) { return areas[i].w; },
      [&](std::size_t i) {
        return std::max(areas[i].w * areas[i].w - areas[i].c, 0.0);
      });
}

/// Information matrix with known covariate values (simulation truth).
inline InfoMatrix information_matrix_with_x(const ModelParams& p,
                                            std::span<const AreaObservation> areas,
                                            std::span<const double> x) {
  if (x.size() != areas.size())
    throw std::invalid_argument("information_matrix_with_x: size mismatch");
  return detail::info_matrix_impl(
      p, areas, [&](std::size_t i) { return x[i]; },
      [&](std::size_t i) { return x[i] * x[i]; });
}

/// Ordinary least squares of z on W; starting point for the iteration.
/// sigma2v starts at the residual variance minus the average error
/// variances, floored at zero.
inline ModelParams ols_init(std::span<const AreaObservation> areas) {
  const double n = static_cast<double>(areas.size());
  double mz = 0, mw = 0;
  for (const auto& a : areas) {
    mz += a.z;
    mw += a.w;
  }
  mz /= n;
  mw /= n;
  double sxx = 0, sxy = 0;
  for (const auto& a : areas) {
    sxx += (a.w - mw) * (a.w - mw);
    sxy += (a.w - mw) * (a.z - mz);
  }
  const double b1 = (sxx > 0.0) ? sxy / sxx : 0.0;
  const double b0 = mz - b1 * mw;
  double rss = 0, mpsi = 0, mc = 0;
  for (const auto& a : areas) {
    const double r = a.z - b0 - b1 * a.w;
    rss += r * r;
    mpsi += a.psi;
    mc += a.c;
  }
  const double resid_var = (n > 1.0) ? rss / (n - 1.0) : 0.0;
  const double s2 = std::max(0.0, resid_var - mpsi / n - b1 * b1 * (mc / n));
  return {b0, b1, s2};
}

struct FitOptions {
  std::optional<ModelParams> init;  ///< default: ols_init
  double tol = 1e-8;
  int max_iter = 200;
};

struct FitResult {
  ModelParams params;
  int iterations = 0;
  bool converged = false;
  ScoreVector score_at_solution;
  InfoMatrix info;
  bool sigma_truncated = false;  ///< sigma2v hit the zero boundary
  int beta1_fallbacks = 0;       ///< damped slope steps taken
};

/// Solves the unbiased estimating equations by cycling the three updates
/// (beta0, beta1, sigma2v) until both the parameter step and the score
/// residual fall below tol. Non-convergence is reported through the
/// `converged` flag, never as an exception. At a zero-truncated sigma2v
/// the third score is allowed to be negative (boundary solution).
///
/// The alternating beta updates contract at rate corr(1, W)^2, which is
/// ruinous for covariates whose mean dwarfs their spread, so the cycle
/// runs on a mean-centered covariate and translates the intercept back.
/// The estimating equations are translation-equivariant (tau and S are
/// unchanged), so the fixed point is identical; convergence is still
/// judged by the scores of the raw data.
inline FitResult fit(std::span<const AreaObservation> areas, FitOptions opts = {}) {
  if (areas.size() < 3)
    throw std::invalid_argument("fit: need at least 3 areas");
  if (!(opts.tol > 0.0)) throw std::invalid_argument("fit: tol must be > 0");

  double w_mean = 0.0;
  for (const auto& a : areas) w_mean += a.w;
  w_mean /= static_cast<double>(areas.size());
  std::vector<AreaObservation> centered;
  centered.reserve(areas.size());
  for (const auto& a : areas)
    centered.emplace_back(a.area_id, a.z, a.w - w_mean, a.psi, a.c);
  const auto to_raw = [&](const ModelParams& c) {
    ModelParams raw = c;
    raw.beta0 = c.beta0 - c.beta1 * w_mean;
    return raw;
  };

  FitResult out;
  ModelParams w = opts.init ? ModelParams{opts.init->beta0 + opts.init->beta1 * w_mean,
                                          opts.init->beta1, opts.init->sigma2v}
                            : ols_init(centered);
  int r = 0;
  for (; r < opts.max_iter; ++r) {
    const double b0 = update_beta0(w, centered);
    const auto b1 = update_beta1(b0, w, centered);
    if (b1.fallback) ++out.beta1_fallbacks;
    if (!std::isfinite(b0) || !std::isfinite(b1.value)) break;
    const auto s2 = solve_sigma2v_step(b0, b1.value, centered);

    const double step = std::max({std::fabs(b0 - w.beta0),
                                  std::fabs(b1.value - w.beta1),
                                  std::fabs(s2.value - w.sigma2v)});
    w.beta0 = b0;
    w.beta1 = b1.value;
    w.sigma2v = s2.value;
    out.sigma_truncated = s2.truncated;

    const ScoreVector sc = detail::unbiased_scores_unchecked(to_raw(w), areas);
    if (!sc.finite()) break;
    const double u3_resid =
        s2.truncated ? std::max(0.0, sc.u3) : std::fabs(sc.u3);
    const double resid = std::max({std::fabs(sc.u1), std::fabs(sc.u2), u3_resid});
    if (step < opts.tol && resid <= opts.tol) {
      out.converged = true;
      ++r;
      break;
    }
  }
  out.iterations = r;
  out.params = to_raw(w);
  out.score_at_solution = detail::unbiased_scores_unchecked(out.params, areas);
  out.info = information_matrix(out.params, areas);
  if (out.info.singular) out.converged = false;
  return out;
}

}  // namespace saeme
