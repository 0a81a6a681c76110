#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "saeme/core.hpp"
#include "saeme/csv.hpp"
#include "saeme/errors.hpp"
#include "saeme/estimation.hpp"
#include "saeme/parallel.hpp"
#include "saeme/predictors.hpp"
#include "saeme/rng.hpp"
#include "saeme/stats.hpp"
#include "saeme/uncertainty.hpp"

namespace saeme {

/// Monte Carlo protocol configuration. Defaults reproduce the reference
/// design: x ~ N(5, 9), psi ~ Gamma(shape 4.5, rate 2), log Y = 3x + v,
/// log y = log Y + e, W = x + u, sigma2v = 2, C in {0, d} with a random
/// k% of areas receiving d.
struct SimulationConfig {
  int m = 20;
  double k_percent = 50.0;
  double d_value = 2.0;
  double sigma2v = 2.0;
  double beta0 = 0.0;
  double beta1 = 3.0;
  int reps = 2000;
  std::uint64_t seed = 1;

  /// "Gamma(4.5, 2)" read as shape/rate by default; shape/scale available.
  enum class GammaConvention { rate, scale };
  GammaConvention psi_convention = GammaConvention::rate;
  double psi_shape = 4.5;
  double psi_rate_or_scale = 2.0;

  double x_mean = 5.0;
  double x_var = 9.0;

  /// The no-measurement-error competitor. Default: the error-free-form
  /// predictor at the true covariate x under the shared measurement-error
  /// fit, which reproduces the published per-area ties on C = 0 rows
  /// exactly. The alternative refits with C forced to zero and predicts at
  /// the observed W (what an analyst ignoring the error would do).
  bool no_me_separate_fit = false;

  void validate() const {
    if (m < 3) throw std::invalid_argument("simulation config: m must be >= 3");
    if (!(k_percent > 0.0 && k_percent <= 100.0))
      throw std::invalid_argument("simulation config: k_percent must be in (0, 100]");
    if (reps < 1) throw std::invalid_argument("simulation config: reps must be >= 1");
    if (d_value < 0.0) throw std::invalid_argument("simulation config: d_value must be >= 0");
    if (sigma2v < 0.0) throw std::invalid_argument("simulation config: sigma2v must be >= 0");
    if (!(psi_shape > 0.0) || !(psi_rate_or_scale > 0.0))
      throw std::invalid_argument("simulation config: gamma parameters must be > 0");
    if (x_var < 0.0) throw std::invalid_argument("simulation config: x_var must be >= 0");
  }
};

/// One generated area: the observable tuple plus the simulation truths.
struct SimulatedArea {
  AreaObservation obs;
  double x = 0;          ///< true covariate
  double v = 0;          ///< linking error
  double log_truth = 0;  ///< log Y = beta0 + beta1 x + v
  double truth = 0;      ///< Y, the prediction target
};

namespace detail {

inline constexpr std::uint64_t kStreamDesign = 0xd351u;
inline constexpr std::uint64_t kStreamAssign = 0xa551u;
inline constexpr std::uint64_t kStreamNoise = 0x0153u;
inline constexpr std::uint64_t kStreamRepBoot = 0x9b00u;
inline constexpr std::uint64_t kStreamGrid = 0x96d0u;

}  // namespace detail

/// Draws one replicate. Design variables (x_i, psi_i, the C assignment)
/// come from streams keyed by (seed, area) only, so they are common to all
/// replicates of a study, matching per-area tables that display a fixed
/// C_i per row; the noise (v, e, u) is keyed by (seed, rep, area).
inline std::vector<SimulatedArea> generate(const SimulationConfig& cfg,
                                           int rep_index) {
  cfg.validate();
  const auto m = static_cast<std::size_t>(cfg.m);

  std::vector<double> c_of(m, 0.0);
  {
    const auto n_me = static_cast<std::size_t>(
        std::llround(static_cast<double>(cfg.m) * cfg.k_percent / 100.0));
    std::vector<std::size_t> idx(m);
    for (std::size_t i = 0; i < m; ++i) idx[i] = i;
    Rng assign(mix_stream(cfg.seed, detail::kStreamAssign));
    for (std::size_t i = 0; i < std::min(n_me, m); ++i) {
      const std::size_t j = i + assign.below(m - i);
      std::swap(idx[i], idx[j]);
      c_of[idx[i]] = cfg.d_value;
    }
  }

  std::vector<SimulatedArea> out;
  out.reserve(m);
  const double x_sd = std::sqrt(cfg.x_var);
  const double v_sd = std::sqrt(cfg.sigma2v);
  for (std::size_t i = 0; i < m; ++i) {
    Rng design(mix_stream(cfg.seed, detail::kStreamDesign, i));
    const double x = cfg.x_mean + x_sd * design.normal();
    double psi = design.gamma(cfg.psi_shape);
    psi = (cfg.psi_convention == SimulationConfig::GammaConvention::rate)
              ? psi / cfg.psi_rate_or_scale
              : psi * cfg.psi_rate_or_scale;

    Rng noise(mix_stream(cfg.seed, detail::kStreamNoise,
                         static_cast<std::uint64_t>(rep_index), i));
    const double v = v_sd * noise.normal();
    const double e = std::sqrt(psi) * noise.normal();
    const double u = std::sqrt(c_of[i]) * noise.normal();

    SimulatedArea sa{AreaObservation("area_" + std::to_string(i),
                                     cfg.beta0 + cfg.beta1 * x + v + e, x + u,
                                     psi, c_of[i]),
                     x, v, 0, 0};
    sa.log_truth = cfg.beta0 + cfg.beta1 * x + v;
    sa.truth = std::exp(sa.log_truth);
    out.push_back(std::move(sa));
  }
  return out;
}

inline std::vector<AreaObservation> observations(std::span<const SimulatedArea> sim) {
  std::vector<AreaObservation> out;
  out.reserve(sim.size());
  for (const auto& s : sim) out.push_back(s.obs);
  return out;
}

/// Empirical MSE over replicates: mean of (prediction - truth)^2.
inline double emse(std::span<const double> preds, std::span<const double> truths) {
  if (preds.size() != truths.size())
    throw std::invalid_argument("emse: length mismatch");
  if (preds.empty()) throw std::invalid_argument("emse: empty series");
  double acc = 0.0;
  for (std::size_t r = 0; r < preds.size(); ++r) {
    const double d = preds[r] - truths[r];
    acc += d * d;
  }
  return acc / static_cast<double>(preds.size());
}

/// Relative bias and relative root MSE of a prediction series against its
/// truth series; the normalizer is the replicate mean of the truth.
inline std::pair<double, double> rb_rrmse(std::span<const double> preds,
                                          std::span<const double> truths) {
  if (preds.size() != truths.size())
    throw std::invalid_argument("rb_rrmse: length mismatch");
  if (preds.empty()) throw std::invalid_argument("rb_rrmse: empty series");
  const double y = mean(truths);
  if (y == 0.0) throw std::invalid_argument("rb_rrmse: zero truth");
  double bias = 0.0, sq = 0.0;
  for (std::size_t r = 0; r < preds.size(); ++r) {
    const double d = preds[r] - truths[r];
    bias += d;
    sq += d * d;
  }
  const double n = static_cast<double>(preds.size());
  return {bias / n / y, std::sqrt(sq / n) / y};
}

/// Predictor-comparison study: per-area and per-C-group empirical MSEs of
/// the direct, no-ME, A and B predictors, per-area RB/RRMSE for A and B,
/// and optionally the mean analytic and jackknife MSE estimates.
struct EmseStudyResult {
  struct AreaRow {
    int area = 0;
    double c = 0;
    double emse_direct = 0, emse_no_me = 0, emse_a = 0, emse_b = 0;
    double mean_r1 = 0;
    double mean_mse_j = 0;  ///< nan when jackknife disabled
    int negative_mse_j = 0;
    double rb_a = 0, rb_b = 0, rrmse_a = 0, rrmse_b = 0;
  };
  struct GroupRow {
    double c = 0;
    int n_areas = 0;
    double emse_direct = 0, emse_no_me = 0, emse_a = 0, emse_b = 0;
    /// group means of the per-area log EMSEs (the published tables'
    /// "logarithmic scale" convention)
    double mean_log_emse_direct = 0, mean_log_emse_no_me = 0;
    double mean_log_emse_a = 0, mean_log_emse_b = 0;
    double mean_r1 = 0;
    double mean_mse_j = 0;
    /// same log convention for the MSE estimates; nan when a per-area
    /// mean is nonpositive (negative jackknife totals)
    double mean_log_r1 = 0;
    double mean_log_mse_j = 0;
  };
  std::vector<AreaRow> areas;
  std::vector<GroupRow> groups;
  Table sample_predictions;  ///< one replicate's predictor table, log scale
  int reps_completed = 0;
  int failed_fits = 0;
  int jackknife_failed_reps = 0;
  bool with_jackknife = false;
};

inline EmseStudyResult emse_study(const SimulationConfig& cfg, bool with_jackknife,
                                  int threads = 1) {
  cfg.validate();
  const auto m = static_cast<std::size_t>(cfg.m);
  const auto reps = static_cast<std::size_t>(cfg.reps);
  const auto refit = [](const std::vector<AreaObservation>& sub) {
    return fit(sub);
  };

  struct RepData {
    bool ok = false;
    bool jk_ok = false;
    std::vector<double> truth, direct, no_me, a, b, r1, mse_j;
    std::vector<unsigned char> neg;
  };
  std::vector<RepData> results(reps);

  parallel_for(reps, threads, [&](std::size_t r) {
    const auto sim = generate(cfg, static_cast<int>(r));
    const auto obs = observations(sim);
    const FitResult fr = fit(obs);
    if (!fr.converged) return;
    RepData& rd = results[r];
    std::optional<ModelParams> separate;
    if (cfg.no_me_separate_fit) {
      std::vector<AreaObservation> zeroed;
      zeroed.reserve(m);
      for (const auto& o : obs)
        zeroed.emplace_back(o.area_id, o.z, o.w, o.psi, 0.0);
      const FitResult fz = fit(zeroed);
      if (!fz.converged) return;
      separate = fz.params;
    }
    rd.truth.resize(m);
    rd.direct.resize(m);
    rd.no_me.resize(m);
    rd.a.resize(m);
    rd.b.resize(m);
    rd.r1.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      rd.truth[i] = sim[i].truth;
      rd.direct[i] = std::exp(obs[i].z);
      rd.no_me[i] = separate
                        ? predictor_no_me(*separate, obs[i])
                        : std::exp(log_predictor_fheblup(fr.params, obs[i], sim[i].x));
      rd.a[i] = predictor_a(fr.params, obs[i]);
      rd.b[i] = predictor_b(fr.params, obs[i]);
      rd.r1[i] = r1_hat(fr.params, obs[i]);
    }
    if (with_jackknife) {
      try {
        const auto jk = jackknife_all(obs, fr.params, refit);
        rd.mse_j.resize(m);
        rd.neg.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
          rd.mse_j[i] = jk[i].mse_j;
          rd.neg[i] = jk[i].negative_flag ? 1 : 0;
        }
        rd.jk_ok = true;
      } catch (const numerical_error&) {
      }
    }
    rd.ok = true;
  });

  EmseStudyResult out;
  out.with_jackknife = with_jackknife;
  const auto design = generate(cfg, 0);

  // per-area series in replicate order
  std::vector<std::vector<double>> truth(m), direct(m), no_me(m), a(m), b(m);
  std::vector<double> r1_sum(m, 0.0), msej_sum(m, 0.0);
  std::vector<int> neg_count(m, 0);
  std::size_t jk_reps = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    const RepData& rd = results[r];
    if (!rd.ok) {
      ++out.failed_fits;
      continue;
    }
    ++out.reps_completed;
    for (std::size_t i = 0; i < m; ++i) {
      truth[i].push_back(rd.truth[i]);
      direct[i].push_back(rd.direct[i]);
      no_me[i].push_back(rd.no_me[i]);
      a[i].push_back(rd.a[i]);
      b[i].push_back(rd.b[i]);
      r1_sum[i] += rd.r1[i];
    }
    if (with_jackknife) {
      if (rd.jk_ok) {
        ++jk_reps;
        for (std::size_t i = 0; i < m; ++i) {
          msej_sum[i] += rd.mse_j[i];
          neg_count[i] += rd.neg[i];
        }
      } else {
        ++out.jackknife_failed_reps;
      }
    }
  }
  if (out.reps_completed == 0)
    throw numerical_error("emse_study: every replicate fit failed");

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < m; ++i) {
    EmseStudyResult::AreaRow row;
    row.area = static_cast<int>(i);
    row.c = design[i].obs.c;
    row.emse_direct = emse(direct[i], truth[i]);
    row.emse_no_me = emse(no_me[i], truth[i]);
    row.emse_a = emse(a[i], truth[i]);
    row.emse_b = emse(b[i], truth[i]);
    row.mean_r1 = r1_sum[i] / static_cast<double>(out.reps_completed);
    row.mean_mse_j =
        (with_jackknife && jk_reps > 0) ? msej_sum[i] / static_cast<double>(jk_reps) : nan;
    row.negative_mse_j = neg_count[i];
    std::tie(row.rb_a, row.rrmse_a) = rb_rrmse(a[i], truth[i]);
    std::tie(row.rb_b, row.rrmse_b) = rb_rrmse(b[i], truth[i]);
    out.areas.push_back(row);
  }

  // group rows: averages over areas sharing a C value (0 first)
  std::map<double, std::vector<std::size_t>> by_c;
  for (std::size_t i = 0; i < m; ++i) by_c[out.areas[i].c].push_back(i);
  for (const auto& [c, members] : by_c) {
    EmseStudyResult::GroupRow g;
    g.c = c;
    g.n_areas = static_cast<int>(members.size());
    for (std::size_t i : members) {
      g.emse_direct += out.areas[i].emse_direct;
      g.emse_no_me += out.areas[i].emse_no_me;
      g.emse_a += out.areas[i].emse_a;
      g.emse_b += out.areas[i].emse_b;
      g.mean_log_emse_direct += std::log(out.areas[i].emse_direct);
      g.mean_log_emse_no_me += std::log(out.areas[i].emse_no_me);
      g.mean_log_emse_a += std::log(out.areas[i].emse_a);
      g.mean_log_emse_b += std::log(out.areas[i].emse_b);
      g.mean_r1 += out.areas[i].mean_r1;
      g.mean_mse_j += out.areas[i].mean_mse_j;
      g.mean_log_r1 += std::log(out.areas[i].mean_r1);
      g.mean_log_mse_j += std::log(out.areas[i].mean_mse_j);  // nan if <= 0
    }
    const double n = static_cast<double>(members.size());
    g.emse_direct /= n;
    g.emse_no_me /= n;
    g.emse_a /= n;
    g.emse_b /= n;
    g.mean_log_emse_direct /= n;
    g.mean_log_emse_no_me /= n;
    g.mean_log_emse_a /= n;
    g.mean_log_emse_b /= n;
    g.mean_r1 /= n;
    g.mean_mse_j /= n;
    g.mean_log_r1 /= n;
    g.mean_log_mse_j /= n;
    out.groups.push_back(g);
  }

  // one replicate's predictor values, log scale, with both average
  // conventions (mean of logs, and log of the mean original-scale values)
  {
    std::size_t r0 = 0;
    while (r0 < reps && !results[r0].ok) ++r0;
    if (r0 < reps) {
      const RepData& rd = results[r0];
      Table& t = out.sample_predictions;
      t.header = {"area", "c", "log_truth", "log_direct", "log_no_me", "log_a", "log_b"};
      double sl[5] = {0, 0, 0, 0, 0};
      double so[5] = {0, 0, 0, 0, 0};
      for (std::size_t i = 0; i < m; ++i) {
        const double vals[5] = {rd.truth[i], rd.direct[i], rd.no_me[i], rd.a[i], rd.b[i]};
        std::vector<std::string> cells = {std::to_string(i), fmt_double(design[i].obs.c)};
        for (int k = 0; k < 5; ++k) {
          const double lg = std::log(vals[k]);
          cells.push_back(fmt_double(lg));
          sl[k] += lg;
          so[k] += vals[k];
        }
        t.rows.push_back(std::move(cells));
      }
      std::vector<std::string> avg_log = {"avg_of_logs", ""};
      std::vector<std::string> log_avg = {"log_of_avgs", ""};
      for (int k = 0; k < 5; ++k) {
        avg_log.push_back(fmt_double(sl[k] / static_cast<double>(m)));
        log_avg.push_back(fmt_double(std::log(so[k] / static_cast<double>(m))));
      }
      t.rows.push_back(std::move(avg_log));
      t.rows.push_back(std::move(log_avg));
    }
  }
  return out;
}

/// Ratio of C-group average MSE of each model predictor to the group
/// average MSE of the direct estimator.
struct MseRatioRow {
  double c = 0;
  double ratio_no_me = 0, ratio_a = 0, ratio_b = 0;
};

inline std::vector<MseRatioRow> mse_ratios(const EmseStudyResult& study) {
  std::vector<MseRatioRow> out;
  for (const auto& g : study.groups) {
    MseRatioRow r;
    r.c = g.c;
    r.ratio_no_me = g.emse_no_me / g.emse_direct;
    r.ratio_a = g.emse_a / g.emse_direct;
    r.ratio_b = g.emse_b / g.emse_direct;
    out.push_back(r);
  }
  return out;
}

enum class IntervalMethod { direct, estimated_mse, jackknife, bootstrap };

inline const char* method_name(IntervalMethod m) {
  switch (m) {
    case IntervalMethod::direct: return "direct";
    case IntervalMethod::estimated_mse: return "estimated_mse";
    case IntervalMethod::jackknife: return "jackknife";
    case IntervalMethod::bootstrap: return "bootstrap";
  }
  return "?";
}

struct IntervalStudyOptions {
  std::vector<double> levels{0.90, 0.95, 0.99};  ///< nominal coverage levels
  std::vector<IntervalMethod> methods{
      IntervalMethod::direct, IntervalMethod::estimated_mse,
      IntervalMethod::jackknife, IntervalMethod::bootstrap};
  int bt = 2000;
  int threads = 1;
  BootstrapEval eval = BootstrapEval::resampled_area;
  bool collect_log_lengths = false;  ///< keep raw log-lengths at the first level
};

/// Coverage / length comparison of the four interval constructions on the
/// simulation DGP. Every interval is built on the original scale:
///   direct:        exp(z) -+ q sqrt(psi)
///   estimated MSE: theta_B -+ q sqrt(R1^)
///   jackknife:     theta_B -+ q sqrt(max(mse_J, 0)), negatives flagged
///   bootstrap:     percentile interval of the replicate CDF
/// with q the normal quantile at the level. Truth containment is recorded
/// per (replicate, area) and pooled.
struct IntervalStudyResult {
  struct Cell {
    double level = 0;
    IntervalMethod method = IntervalMethod::direct;
    long n = 0;
    long covered = 0;
    double sum_log_length = 0;
    long finite_lengths = 0;
    long nonfinite_lengths = 0;

    double coverage() const {
      return n ? static_cast<double>(covered) / static_cast<double>(n) : 0.0;
    }
    double coverage_se() const {
      if (!n) return 0.0;
      const double p = coverage();
      return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    }
    double mean_log_length() const {
      return finite_lengths ? sum_log_length / static_cast<double>(finite_lengths)
                            : std::numeric_limits<double>::quiet_NaN();
    }
  };
  std::vector<Cell> cells;  ///< level-major, then method, in option order
  /// Raw per-(replicate, area) log-lengths at the first level, one series
  /// per method; only filled when requested.
  std::vector<std::vector<double>> log_lengths;
  long reps_completed = 0;
  long failed_fits = 0;
  long jackknife_failed_reps = 0;
  long bootstrap_failed_reps = 0;
  long negative_mse_j = 0;

  const Cell& cell(double level, IntervalMethod m) const {
    for (const auto& c : cells)
      if (c.level == level && c.method == m) return c;
    throw std::invalid_argument("interval study: no such cell");
  }

  Table to_table() const {
    Table t;
    t.header = {"level", "method", "coverage", "coverage_se", "mean_log_length",
                "n", "nonfinite_lengths"};
    for (const auto& c : cells) {
      t.rows.push_back({fmt_double(c.level), method_name(c.method),
                        fmt_double(c.coverage()), fmt_double(c.coverage_se()),
                        fmt_double(c.mean_log_length()), std::to_string(c.n),
                        std::to_string(c.nonfinite_lengths)});
    }
    return t;
  }
};

inline IntervalStudyResult interval_study(const SimulationConfig& cfg,
                                          const IntervalStudyOptions& opt) {
  cfg.validate();
  for (double lv : opt.levels)
    if (!(lv > 0.0 && lv < 1.0))
      throw std::invalid_argument("interval_study: levels must be in (0,1)");
  const auto m = static_cast<std::size_t>(cfg.m);
  const auto reps = static_cast<std::size_t>(cfg.reps);
  const std::size_t nl = opt.levels.size(), nm = opt.methods.size();
  const auto refit = [](const std::vector<AreaObservation>& sub) {
    return fit(sub);
  };
  const bool want_jk = std::count(opt.methods.begin(), opt.methods.end(),
                                  IntervalMethod::jackknife) > 0;
  const bool want_bt = std::count(opt.methods.begin(), opt.methods.end(),
                                  IntervalMethod::bootstrap) > 0;

  std::vector<double> qs(nl), alphas(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    alphas[l] = 1.0 - opt.levels[l];
    qs[l] = normal_quantile(1.0 - alphas[l] / 2.0);
  }

  struct RepCells {
    bool ok = false;
    bool jk_failed = false, bt_failed = false;
    long negative_mse_j = 0;
    std::vector<long> n, covered, finite, nonfinite;
    std::vector<double> sum_log_len;
    std::vector<std::vector<double>> lens;  ///< per method, first level only
  };
  std::vector<RepCells> partials(reps);

  parallel_for(reps, opt.threads, [&](std::size_t r) {
    const auto sim = generate(cfg, static_cast<int>(r));
    const auto obs = observations(sim);
    const FitResult fr = fit(obs);
    if (!fr.converged) return;
    RepCells& rc = partials[r];
    rc.n.assign(nl * nm, 0);
    rc.covered.assign(nl * nm, 0);
    rc.finite.assign(nl * nm, 0);
    rc.nonfinite.assign(nl * nm, 0);
    rc.sum_log_len.assign(nl * nm, 0.0);
    if (opt.collect_log_lengths) rc.lens.assign(nm, {});

    std::vector<MseEstimates> jk;
    if (want_jk) {
      try {
        jk = jackknife_all(obs, fr.params, refit);
      } catch (const numerical_error&) {
        rc.jk_failed = true;
      }
    }
    std::vector<std::vector<BootstrapInterval>> bt;
    if (want_bt) {
      BootstrapOptions bo;
      bo.bt = opt.bt;
      bo.seed = mix_stream(cfg.seed, detail::kStreamRepBoot, r);
      bo.eval = opt.eval;
      try {
        bt = bootstrap_all(obs, alphas, bo, refit);
      } catch (const numerical_error&) {
        rc.bt_failed = true;
      }
    }
    if (want_jk && !rc.jk_failed)
      for (std::size_t i = 0; i < m; ++i) rc.negative_mse_j += jk[i].negative_flag;

    for (std::size_t i = 0; i < m; ++i) {
      const double truth = sim[i].truth;
      const double theta_b = predictor_b(fr.params, obs[i]);
      const double r1 = r1_hat(fr.params, obs[i]);
      for (std::size_t l = 0; l < nl; ++l) {
        for (std::size_t k = 0; k < nm; ++k) {
          double lo, hi;
          switch (opt.methods[k]) {
            case IntervalMethod::direct: {
              const double y = std::exp(obs[i].z);
              const double half = qs[l] * std::sqrt(obs[i].psi);
              lo = y - half;
              hi = y + half;
              break;
            }
            case IntervalMethod::estimated_mse: {
              const double half = qs[l] * std::sqrt(r1);
              lo = theta_b - half;
              hi = theta_b + half;
              break;
            }
            case IntervalMethod::jackknife: {
              if (rc.jk_failed) continue;
              const double half = qs[l] * std::sqrt(std::max(jk[i].mse_j, 0.0));
              lo = theta_b - half;
              hi = theta_b + half;
              break;
            }
            case IntervalMethod::bootstrap: {
              if (rc.bt_failed) continue;
              lo = bt[i][l].lower;
              hi = bt[i][l].upper;
              break;
            }
            default:
              continue;
          }
          const std::size_t cell = l * nm + k;
          ++rc.n[cell];
          if (lo <= truth && truth <= hi) ++rc.covered[cell];
          const double len = std::log(hi - lo);
          if (std::isfinite(len)) {
            ++rc.finite[cell];
            rc.sum_log_len[cell] += len;
          } else {
            ++rc.nonfinite[cell];
          }
          if (opt.collect_log_lengths && l == 0) rc.lens[k].push_back(len);
        }
      }
    }
    rc.ok = true;
  });

  IntervalStudyResult out;
  out.cells.resize(nl * nm);
  for (std::size_t l = 0; l < nl; ++l)
    for (std::size_t k = 0; k < nm; ++k) {
      out.cells[l * nm + k].level = opt.levels[l];
      out.cells[l * nm + k].method = opt.methods[k];
    }
  if (opt.collect_log_lengths) out.log_lengths.assign(nm, {});
  for (std::size_t r = 0; r < reps; ++r) {
    const RepCells& rc = partials[r];
    if (!rc.ok) {
      ++out.failed_fits;
      continue;
    }
    ++out.reps_completed;
    out.jackknife_failed_reps += rc.jk_failed;
    out.bootstrap_failed_reps += rc.bt_failed;
    out.negative_mse_j += rc.negative_mse_j;
    for (std::size_t cell = 0; cell < nl * nm; ++cell) {
      out.cells[cell].n += rc.n[cell];
      out.cells[cell].covered += rc.covered[cell];
      out.cells[cell].finite_lengths += rc.finite[cell];
      out.cells[cell].nonfinite_lengths += rc.nonfinite[cell];
      out.cells[cell].sum_log_length += rc.sum_log_len[cell];
    }
    if (opt.collect_log_lengths)
      for (std::size_t k = 0; k < nm; ++k)
        out.log_lengths[k].insert(out.log_lengths[k].end(), rc.lens[k].begin(),
                                  rc.lens[k].end());
  }
  if (out.reps_completed == 0)
    throw numerical_error("interval_study: every replicate fit failed");
  return out;
}

/// Grid study over (m, k): C-group-averaged EMSE, analytic and jackknife
/// MSE means, one row per (m, k, C value).
struct S21Row {
  int m = 0;
  double k = 0;
  double c = 0;
  double emse_direct = 0, emse_no_me = 0, emse_a = 0, emse_b = 0;
  double mean_log_emse_direct = 0, mean_log_emse_no_me = 0;
  double mean_log_emse_a = 0, mean_log_emse_b = 0;
  double mean_r1 = 0, mean_mse_j = 0;
  double mean_log_r1 = 0, mean_log_mse_j = 0;
};

inline std::vector<S21Row> table_s21(const SimulationConfig& base,
                                     std::span<const int> ms,
                                     std::span<const double> ks,
                                     bool with_jackknife, int threads = 1) {
  std::vector<S21Row> out;
  for (int m : ms) {
    for (double k : ks) {
      SimulationConfig cfg = base;
      cfg.m = m;
      cfg.k_percent = k;
      cfg.seed = mix_stream(base.seed, detail::kStreamGrid,
                            static_cast<std::uint64_t>(m),
                            static_cast<std::uint64_t>(std::llround(k * 100)));
      const auto study = emse_study(cfg, with_jackknife, threads);
      for (const auto& g : study.groups) {
        S21Row row;
        row.m = m;
        row.k = k;
        row.c = g.c;
        row.emse_direct = g.emse_direct;
        row.emse_no_me = g.emse_no_me;
        row.emse_a = g.emse_a;
        row.emse_b = g.emse_b;
        row.mean_log_emse_direct = g.mean_log_emse_direct;
        row.mean_log_emse_no_me = g.mean_log_emse_no_me;
        row.mean_log_emse_a = g.mean_log_emse_a;
        row.mean_log_emse_b = g.mean_log_emse_b;
        row.mean_r1 = g.mean_r1;
        row.mean_mse_j = g.mean_mse_j;
        row.mean_log_r1 = g.mean_log_r1;
        row.mean_log_mse_j = g.mean_log_mse_j;
        out.push_back(row);
      }
    }
  }
  return out;
}

}  // namespace saeme
