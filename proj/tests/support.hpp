#pragma once

// Test-only oracles and data builders. Everything here is independent of
// the library code paths it checks: quadrature instead of closed forms,
// plain bisection instead of the production root step, Cramer-rule WLS
// instead of the iterative updates.

#include <cmath>
#include <utility>
#include <vector>

#include "saeme/saeme.hpp"

namespace oracle {

/// Posterior mean/variance of phi given (z, W) by brute-force 2-D Simpson
/// quadrature over (x, phi) of the three-level density with a flat prior
/// on x. Needs sigma2v > 0 and c > 0.
inline saeme::PhiMoments posterior_moments_quadrature(const saeme::ModelParams& p,
                                                      const saeme::AreaObservation& a,
                                                      int nx = 1201, int nphi = 801) {
  const double vp = p.sigma2v + a.psi;
  // analytic hints used only to place the integration window
  const double prec_x = p.beta1 * p.beta1 / vp + 1.0 / a.c;
  const double mu_x = (p.beta1 * (a.z - p.beta0) / vp + a.w / a.c) / prec_x;
  const double sd_x = std::sqrt(1.0 / prec_x);
  const double xlo = mu_x - 10.0 * sd_x, xhi = mu_x + 10.0 * sd_x;
  const double sd_phi = std::sqrt(a.psi + p.sigma2v);
  const double lin_lo = p.beta0 + p.beta1 * (p.beta1 >= 0 ? xlo : xhi);
  const double lin_hi = p.beta0 + p.beta1 * (p.beta1 >= 0 ? xhi : xlo);
  const double plo = std::min(a.z, lin_lo) - 10.0 * sd_phi;
  const double phi_hi = std::max(a.z, lin_hi) + 10.0 * sd_phi;

  const double hx = (xhi - xlo) / (nx - 1);
  const double hp = (phi_hi - plo) / (nphi - 1);
  auto simpson_w = [](int i, int n) {
    if (i == 0 || i == n - 1) return 1.0;
    return (i % 2 == 1) ? 4.0 : 2.0;
  };
  const double shift = 0.0;  // weights are O(1) for moderate configs
  double sw = 0, swp = 0, swp2 = 0;
  for (int ix = 0; ix < nx; ++ix) {
    const double x = xlo + hx * ix;
    const double wx = simpson_w(ix, nx);
    const double lin = p.beta0 + p.beta1 * x;
    for (int ip = 0; ip < nphi; ++ip) {
      const double phi = plo + hp * ip;
      const double lw = -0.5 * ((a.z - phi) * (a.z - phi) / a.psi +
                                (phi - lin) * (phi - lin) / p.sigma2v +
                                (a.w - x) * (a.w - x) / a.c) -
                        shift;
      const double w = wx * simpson_w(ip, nphi) * std::exp(lw);
      sw += w;
      swp += w * phi;
      swp2 += w * phi * phi;
    }
  }
  saeme::PhiMoments m;
  m.mean = swp / sw;
  m.variance = swp2 / sw - m.mean * m.mean;
  return m;
}

/// Plain 1e-10 bracketing bisection for the sigma2v score equation,
/// written from the definitions.
inline double sigma_root_bisection(double beta0, double beta1,
                                   const std::vector<saeme::AreaObservation>& areas) {
  auto g = [&](double s2v) {
    double acc = 0.0;
    for (const auto& a : areas) {
      const double s = beta1 * beta1 * a.c + s2v + a.psi;
      const double tau = a.z - beta0 - beta1 * a.w;
      acc += tau * tau / (s * s) - 1.0 / s;
    }
    return acc;
  };
  if (g(0.0) <= 0.0) return 0.0;
  double hi = 1.0;
  while (g(hi) > 0.0) hi *= 2.0;
  double lo = 0.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Weighted least squares of z on W with weights 1/(sigma2v + psi),
/// solved in closed form by Cramer's rule.
inline std::pair<double, double> wls_beta(const std::vector<saeme::AreaObservation>& areas,
                                          double sigma2v) {
  double sw = 0, swx = 0, swxx = 0, swy = 0, swxy = 0;
  for (const auto& a : areas) {
    const double wgt = 1.0 / (sigma2v + a.psi);
    sw += wgt;
    swx += wgt * a.w;
    swxx += wgt * a.w * a.w;
    swy += wgt * a.z;
    swxy += wgt * a.w * a.z;
  }
  const double det = sw * swxx - swx * swx;
  const double b0 = (swy * swxx - swx * swxy) / det;
  const double b1 = (sw * swxy - swx * swy) / det;
  return {b0, b1};
}

/// Fixed single-area design for the fixed-x predictor oracles: draws
/// (z, W) at the true parameters, x held at x_true.
struct FixedXDraw {
  double z, w;
};

inline FixedXDraw draw_fixed_x(const saeme::ModelParams& p, double x_true, double psi,
                               double c, saeme::Rng& rng) {
  FixedXDraw d;
  d.z = p.beta0 + p.beta1 * x_true + rng.normal(0.0, std::sqrt(p.sigma2v)) +
        rng.normal(0.0, std::sqrt(psi));
  d.w = x_true + rng.normal(0.0, std::sqrt(c));
  return d;
}

/// Census-of-Governments-like synthetic state data: moderate log-scale
/// spread, mixed sampling variances, small covariate error variances.
inline std::vector<saeme::AreaObservation> make_cog_like(int m, std::uint64_t seed) {
  std::vector<saeme::AreaObservation> out;
  saeme::Rng rng(saeme::mix_stream(seed, 0xc09u));
  const saeme::ModelParams truth{0.3, 0.95, 0.25};
  for (int i = 0; i < m; ++i) {
    const double x = 5.0 + 0.8 * rng.normal();
    const double psi = 0.05 + 0.65 * rng.uniform();
    const double c = 0.02 + 0.18 * rng.uniform();
    const double z = truth.beta0 + truth.beta1 * x +
                     rng.normal(0.0, std::sqrt(truth.sigma2v)) +
                     rng.normal(0.0, std::sqrt(psi));
    const double w = x + rng.normal(0.0, std::sqrt(c));
    out.emplace_back("state_" + std::to_string(i), z, w, psi, c);
  }
  return out;
}

}  // namespace oracle
