#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "saeme/core.hpp"
#include "saeme/errors.hpp"
#include "saeme/estimation.hpp"
#include "saeme/parallel.hpp"
#include "saeme/predictors.hpp"
#include "saeme/rng.hpp"
#include "saeme/stats.hpp"

namespace saeme {

namespace detail {

inline double m2_factor(const ModelParams& p, const AreaObservation& a) {
  const auto dq = derive(p, a);
  const double gp = dq.gamma_tilde * a.psi;
  return 1.0 - 2.0 * std::exp(1.5 * dq.d - gp) + std::exp(dq.d - gp);
}

}  // namespace detail

/// log of the analytical MSE estimate R1^ = M2^2 * Lambda with
///   M2     = 1 - 2 exp(3d/2 - gamma~ psi) + exp(d - gamma~ psi)
///   Lambda = exp(-4 psi) exp(4 z) (1 - exp(-4 sigma2v - 4 psi)).
/// The log form stays usable when exp(4z) leaves double range.
inline double r1_hat_log(const ModelParams& p, const AreaObservation& a) {
  const double m2 = detail::m2_factor(p, a);
  if (m2 == 0.0) return -std::numeric_limits<double>::infinity();
  const double log_lambda =
      4.0 * (a.z - a.psi) + std::log1p(-std::exp(-4.0 * p.sigma2v - 4.0 * a.psi));
  return 2.0 * std::log(std::fabs(m2)) + log_lambda;
}

/// R1^ on the original scale; nonnegative by construction. Returns +inf
/// when exp(4z) overflows (use r1_hat_log there).
inline double r1_hat(const ModelParams& p, const AreaObservation& a) {
  const double m2 = detail::m2_factor(p, a);
  const double log_scale = 4.0 * (a.z - a.psi);
  if (log_scale > 709.0) {
    return (m2 == 0.0) ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return m2 * m2 * std::exp(log_scale) *
         (-std::expm1(-4.0 * p.sigma2v - 4.0 * a.psi));
}

/// Leave-one-out MSE components for one area. mse_j = r1_j + r2_j exactly;
/// a negative total is reported as-is and flagged, never clamped.
struct MseEstimates {
  double r1_hat = 0;
  double mse_j = 0;
  double r1_j = 0;
  double r2_j = 0;
  bool negative_flag = false;
  int failed_replicates = 0;
};

/// Jackknife MSE for every area at once. Refits omega on each of the m
/// leave-one-out samples (shared across areas), then assembles
///   R1_J = R1^ - f * sum_j (R1^(-j) - R1^),   R2_J = f * sum_j (B(-j) - B)^2,
/// with f = (m_ok - 1)/m_ok scaled to the successful refits. Throws
/// numerical_error past a 20% refit-failure budget.
template <class FitFn>
std::vector<MseEstimates> jackknife_all(std::span<const AreaObservation> areas,
                                        const ModelParams& full_params,
                                        FitFn&& refit, int threads = 1,
                                        double max_fail_fraction = 0.2) {
  const std::size_t m = areas.size();
  if (m < 4) throw std::invalid_argument("jackknife: need at least 4 areas");
  std::vector<std::optional<ModelParams>> loo(m);
  parallel_for(m, threads, [&](std::size_t j) {
    std::vector<AreaObservation> sub;
    sub.reserve(m - 1);
    for (std::size_t i = 0; i < m; ++i)
      if (i != j) sub.push_back(areas[i]);
    try {
      const FitResult fr = refit(sub);
      if (fr.converged) loo[j] = fr.params;
    } catch (...) {
    }
  });
  std::size_t ok = 0;
  for (const auto& l : loo) ok += l.has_value();
  if (static_cast<double>(m - ok) > max_fail_fraction * static_cast<double>(m))
    throw numerical_error("jackknife: " + std::to_string(m - ok) + " of " +
                          std::to_string(m) + " leave-one-out refits failed");
  const double f = (ok > 0) ? (static_cast<double>(ok) - 1.0) / static_cast<double>(ok)
                            : 0.0;

  std::vector<MseEstimates> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    MseEstimates& e = out[i];
    e.r1_hat = r1_hat(full_params, areas[i]);
    e.failed_replicates = static_cast<int>(m - ok);
    const double theta_b = predictor_b(full_params, areas[i]);
    double sum_bias = 0.0, sum_sq = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (!loo[j]) continue;
      sum_bias += r1_hat(*loo[j], areas[i]) - e.r1_hat;
      const double diff = predictor_b(*loo[j], areas[i]) - theta_b;
      sum_sq += diff * diff;
    }
    e.r1_j = e.r1_hat - f * sum_bias;
    e.r2_j = f * sum_sq;
    e.mse_j = e.r1_j + e.r2_j;
    e.negative_flag = e.mse_j < 0.0;
  }
  return out;
}

template <class FitFn>
MseEstimates jackknife_mse(std::span<const AreaObservation> areas, std::size_t i,
                           FitFn&& refit, int threads = 1) {
  if (i >= areas.size())
    throw std::invalid_argument("jackknife_mse: area index out of range");
  ModelParams full;
  {
    std::vector<AreaObservation> all(areas.begin(), areas.end());
    const FitResult fr = refit(all);
    full = fr.params;
  }
  return jackknife_all(areas, full, refit, threads)[i];
}

/// How the bootstrap replicate evaluates predictor B: at the tuple landing
/// in the area's position (default; the replication is theta_B(W*, y*)
/// with parameters refit from the resample) or at the area's original
/// observed tuple (parameter uncertainty only).
enum class BootstrapEval { resampled_area, original_area };

struct BootstrapOptions {
  int bt = 2000;
  std::uint64_t seed = 0;
  int threads = 1;
  BootstrapEval eval = BootstrapEval::resampled_area;
};

struct BootstrapInterval {
  double lower = 0;
  double upper = 0;
  double alpha = 0;
  int bt = 0;
  int replicate_failures = 0;
};

namespace detail {

inline constexpr std::uint64_t kStreamBootstrap = 0xb007u;

}  // namespace detail

/// Nonparametric bootstrap: resamples the m per-area tuples (z, W, psi, c)
/// with replacement, refits omega on each resample, evaluates predictor B
/// per area, and returns the percentile interval
/// [G^-1(alpha/2), G^-1(1-alpha/2)] of the replicate CDF for every
/// (area, alpha) pair. Replicates share one RNG stream per (seed, index),
/// so results do not depend on thread count, and all alphas are quantiles
/// of one shared replicate set (intervals nest). Throws numerical_error if
/// fewer than bt/2 refits succeed.
template <class FitFn>
std::vector<std::vector<BootstrapInterval>> bootstrap_all(
    std::span<const AreaObservation> areas, std::span<const double> alphas,
    const BootstrapOptions& opt, FitFn&& refit) {
  const std::size_t m = areas.size();
  if (m == 0) throw std::invalid_argument("bootstrap: no areas");
  if (opt.bt < 100) throw std::invalid_argument("bootstrap: bt must be >= 100");
  for (double a : alphas)
    if (!(a > 0.0 && a < 1.0))
      throw std::invalid_argument("bootstrap: alpha must be in (0,1)");

  std::vector<std::optional<std::vector<double>>> rows(
      static_cast<std::size_t>(opt.bt));
  parallel_for(static_cast<std::size_t>(opt.bt), opt.threads, [&](std::size_t b) {
    Rng rng(mix_stream(opt.seed, detail::kStreamBootstrap, b));
    std::vector<AreaObservation> sample;
    sample.reserve(m);
    for (std::size_t i = 0; i < m; ++i)
      sample.push_back(areas[rng.below(m)]);
    try {
      const FitResult fr = refit(sample);
      if (!fr.converged) return;
      std::vector<double> vals(m);
      for (std::size_t i = 0; i < m; ++i) {
        const AreaObservation& target =
            (opt.eval == BootstrapEval::original_area) ? areas[i] : sample[i];
        vals[i] = log_predictor_b(fr.params, target);
      }
      rows[b] = std::move(vals);
    } catch (...) {
    }
  });

  std::size_t ok = 0;
  for (const auto& r : rows) ok += r.has_value();
  if (ok < static_cast<std::size_t>(opt.bt) / 2)
    throw numerical_error("bootstrap: only " + std::to_string(ok) + " of " +
                          std::to_string(opt.bt) + " replicates refit");
  const int failures = opt.bt - static_cast<int>(ok);

  std::vector<std::vector<BootstrapInterval>> out(m);
  std::vector<double> col;
  col.reserve(ok);
  for (std::size_t i = 0; i < m; ++i) {
    col.clear();
    for (const auto& r : rows)
      if (r) col.push_back((*r)[i]);
    std::sort(col.begin(), col.end());
    out[i].reserve(alphas.size());
    for (double a : alphas) {
      BootstrapInterval bi;
      bi.alpha = a;
      bi.bt = opt.bt;
      bi.replicate_failures = failures;
      bi.lower = std::exp(empirical_cdf_inverse_sorted(col, a / 2.0));
      bi.upper = std::exp(empirical_cdf_inverse_sorted(col, 1.0 - a / 2.0));
      out[i].push_back(bi);
    }
  }
  return out;
}

template <class FitFn>
BootstrapInterval bootstrap_interval(std::span<const AreaObservation> areas,
                                     std::size_t i, double alpha, int bt,
                                     std::uint64_t seed, FitFn&& refit,
                                     BootstrapEval eval = BootstrapEval::resampled_area) {
  if (i >= areas.size())
    throw std::invalid_argument("bootstrap_interval: area index out of range");
  BootstrapOptions opt;
  opt.bt = bt;
  opt.seed = seed;
  opt.eval = eval;
  const double alphas[] = {alpha};
  return bootstrap_all(areas, alphas, opt, refit)[i][0];
}

}  // namespace saeme
