// Acceptance suite: one pass/fail line per criterion, nonzero exit when
// any criterion fails. Budgets are desk scale; every tolerance is pinned
// here in code.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "saeme/saeme.hpp"
#include "support.hpp"

using namespace saeme;
namespace fs = std::filesystem;

namespace {

int g_threads = 2;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// ------------------------------------------------------------ criterion 1

Outcome c1_identity() {
  Rng rng(1001);
  double worst = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const ModelParams p{3 * rng.normal(), 3 * rng.normal(), 5 * rng.uniform()};
    const AreaObservation a("a", 5 * rng.normal(), 5 * rng.normal(),
                            0.1 + 5 * rng.uniform(), 0.05 + 5 * rng.uniform());
    worst = std::max(worst, std::fabs(identity_residual(p, a, 5 * rng.normal())));
  }
  return {worst < 1e-10, "max |residual| = " + fmt(worst) + " over 1e4 draws"};
}

// --------------------------------------------------------- criteria 2 & 3

struct FixedXMc {
  double mean_a, se_a, mean_b, se_b;
  double want_a, want_b, bias_factor;
};

FixedXMc run_fixed_x_mc() {
  const ModelParams truth{0, 3, 2};
  const double x = 1.0, psi = 1.0, c = 2.0;
  const auto dq = derive(truth, AreaObservation("a", 0, 0, psi, c));
  FixedXMc r;
  r.want_a = std::exp(truth.beta0 + truth.beta1 * x +
                      0.5 * (dq.gamma_tilde * (truth.sigma2v + psi) +
                             (1 - dq.gamma_tilde) * truth.beta1 * truth.beta1 * c));
  r.want_b = std::exp(truth.beta0 + truth.beta1 * x + 0.5 * truth.sigma2v);
  r.bias_factor = std::exp(0.5 * dq.d);
  Rng rng(1002);
  const int reps = 100000;
  double sa = 0, sa2 = 0, sb = 0, sb2 = 0;
  for (int t = 0; t < reps; ++t) {
    const auto d = oracle::draw_fixed_x(truth, x, psi, c, rng);
    const AreaObservation a("a", d.z, d.w, psi, c);
    const double va = predictor_a(truth, a), vb = predictor_b(truth, a);
    sa += va;
    sa2 += va * va;
    sb += vb;
    sb2 += vb * vb;
  }
  r.mean_a = sa / reps;
  r.se_a = std::sqrt((sa2 / reps - r.mean_a * r.mean_a) / reps);
  r.mean_b = sb / reps;
  r.se_b = std::sqrt((sb2 / reps - r.mean_b * r.mean_b) / reps);
  return r;
}

Outcome c2_theorem1(const FixedXMc& mc) {
  const double err = std::fabs(mc.mean_a - mc.want_a);
  return {err <= 3 * mc.se_a,
          "mean(A) = " + fmt(mc.mean_a) + " vs " + fmt(mc.want_a) + ", |err|/se = " +
              fmt(err / mc.se_a)};
}

Outcome c3_unbiased_b(const FixedXMc& mc) {
  const double err_b = std::fabs(mc.mean_b - mc.want_b);
  const double ratio_a = mc.mean_a / mc.want_b;
  const double err_a = std::fabs(ratio_a - mc.bias_factor);
  const bool pass = err_b <= 3 * mc.se_b && ratio_a > 1.0 &&
                    err_a <= 3 * mc.se_a / mc.want_b;
  return {pass, "mean(B)/E(theta) = " + fmt(mc.mean_b / mc.want_b) +
                    ", mean(A)/E(theta) = " + fmt(ratio_a) + " vs exp(d/2) = " +
                    fmt(mc.bias_factor)};
}

// ------------------------------------------------------------ criterion 4

Outcome c4_reduction() {
  SimulationConfig cfg;
  cfg.m = 25;
  cfg.d_value = 0;  // every area error-free
  cfg.seed = 1004;
  cfg.reps = 1;
  const auto obs = observations(generate(cfg, 0));
  const auto fr = fit(obs);
  if (!fr.converged) return {false, "fit failed on the C=0 dataset"};
  for (const auto& a : obs) {
    const double pa = predictor_a(fr.params, a);
    if (pa != predictor_b(fr.params, a) || pa != predictor_no_me(fr.params, a))
      return {false, "predictors differ on a C=0 area"};
  }
  Rng rng(1044);
  for (int t = 0; t < 1000; ++t) {
    const double b0 = rng.normal(), b1 = 2 * rng.normal(), s2 = 3 * rng.uniform();
    const double z = 3 * rng.normal(), w = 2 * rng.normal();
    const double psi = 0.1 + 2 * rng.uniform(), c = 2 * rng.uniform();
    const ModelParams sp{b0, b1, s2};
    const MultiParams mp{b0, {b1}, s2};
    const AreaObservation sa("a", z, w, psi, c);
    const MultivariateArea ma("a", z, psi, {w}, {c});
    if (log_predictor_a_multi(mp, ma) != log_predictor_a(sp, sa) ||
        log_predictor_b_multi(mp, ma) != log_predictor_b(sp, sa))
      return {false, "p=1 multivariate reduction not bit-identical"};
  }
  return {true, "A = B = No-ME exactly on 25 C=0 areas; p=1 reduction bit-identical "
                "over 1000 draws"};
}

// ------------------------------------------------------------ criterion 5

Outcome c5_estimating_equations() {
  SimulationConfig cfg;
  cfg.m = 50;
  cfg.seed = 1005;
  double worst_score = 0.0;
  for (int r = 0; r < 5; ++r) {
    const auto obs = observations(generate(cfg, r));
    const auto fr = fit(obs);
    if (!fr.converged) return {false, "fit " + std::to_string(r) + " failed"};
    worst_score = std::max(worst_score, fr.score_at_solution.max_abs());
  }
  if (worst_score > 1e-8)
    return {false, "scores at solution up to " + fmt(worst_score)};

  SimulationConfig mc;
  mc.m = 20;
  mc.seed = 1055;
  const ModelParams truth{mc.beta0, mc.beta1, mc.sigma2v};
  const int reps = 100000;
  double sum[3] = {0, 0, 0}, sumsq[3] = {0, 0, 0};
  for (int r = 0; r < reps; ++r) {
    const auto obs = observations(generate(mc, r));
    const auto u = unbiased_scores(truth, obs);
    const double v[3] = {u.u1, u.u2, u.u3};
    for (int k = 0; k < 3; ++k) {
      sum[k] += v[k];
      sumsq[k] += v[k] * v[k];
    }
  }
  std::string detail = "fit scores <= " + fmt(worst_score) + "; MC means";
  for (int k = 0; k < 3; ++k) {
    const double m = sum[k] / reps;
    const double se = std::sqrt((sumsq[k] / reps - m * m) / reps);
    detail += " " + fmt(m) + " (se " + fmt(se) + ")";
    if (std::fabs(m) > 3 * se) return {false, detail};
  }
  return {true, detail};
}

// ------------------------------------------------------------ criterion 6

Outcome c6_information_matrix() {
  SimulationConfig cfg;
  cfg.m = 20;
  cfg.seed = 4006;
  const ModelParams truth{cfg.beta0, cfg.beta1, cfg.sigma2v};
  const auto sim0 = generate(cfg, 0);
  std::vector<double> x_true;
  for (const auto& s : sim0) x_true.push_back(s.x);
  const auto im = information_matrix_with_x(truth, observations(sim0), x_true);
  if (im.entries[0][2] != 0.0 || im.entries[1][2] != 0.0 || im.entries[2][0] != 0.0 ||
      im.entries[2][1] != 0.0)
    return {false, "(.,3) off-diagonal pattern not exactly zero"};

  const int reps = 100000;
  double sum[3] = {0, 0, 0};
  double prod[3][3] = {{0}}, prodsq[3][3] = {{0}};
  for (int r = 0; r < reps; ++r) {
    const auto obs = observations(generate(cfg, r));
    const auto u = unbiased_scores(truth, obs);
    const double v[3] = {u.u1, u.u2, u.u3};
    for (int i = 0; i < 3; ++i) {
      sum[i] += v[i];
      for (int j = 0; j < 3; ++j) {
        prod[i][j] += v[i] * v[j];
        prodsq[i][j] += v[i] * v[j] * v[i] * v[j];
      }
    }
  }
  double worst_sigma = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double cov = prod[i][j] / reps - (sum[i] / reps) * (sum[j] / reps);
      const double vp = prodsq[i][j] / reps - (prod[i][j] / reps) * (prod[i][j] / reps);
      const double se = std::sqrt(std::max(vp, 0.0) / reps) + 1e-12;
      worst_sigma = std::max(worst_sigma, std::fabs(cov - im.entries[i][j]) / se);
    }
  return {worst_sigma <= 3.0,
          "max entrywise |cov - I|/se = " + fmt(worst_sigma) + " over 1e5 replicates"};
}

// ------------------------------------------------------------ criterion 7

Outcome c7_consistency() {
  SimulationConfig cfg;
  cfg.m = 100;
  cfg.seed = 1007;
  std::vector<double> b1s, s2s;
  int failed = 0;
  for (int r = 0; r < 200; ++r) {
    const auto obs = observations(generate(cfg, r));
    const auto fr = fit(obs);
    if (!fr.converged) {
      ++failed;
      continue;
    }
    b1s.push_back(fr.params.beta1);
    s2s.push_back(fr.params.sigma2v);
  }
  if (b1s.size() < 150) return {false, "too many failed fits"};
  std::sort(b1s.begin(), b1s.end());
  std::sort(s2s.begin(), s2s.end());
  const double med_b1 = b1s[b1s.size() / 2];
  const double med_s2 = s2s[s2s.size() / 2];
  const bool pass = std::fabs(med_b1 - 3.0) <= 0.2 && std::fabs(med_s2 - 2.0) <= 0.5;
  return {pass, "median beta1 = " + fmt(med_b1) + ", median sigma2v = " + fmt(med_s2) +
                    ", failed fits = " + std::to_string(failed)};
}

// -------------------------------------------------------- criteria 8 & 9

Outcome c8_mse_ordering(const EmseStudyResult& study) {
  const EmseStudyResult::GroupRow* g0 = nullptr;
  const EmseStudyResult::GroupRow* g2 = nullptr;
  for (const auto& g : study.groups) {
    if (g.c == 0.0) g0 = &g;
    if (g.c == 2.0) g2 = &g;
  }
  if (!g0 || !g2) return {false, "missing C groups"};
  const bool ties = g0->emse_a == g0->emse_b && g0->emse_a == g0->emse_no_me;
  const bool order = std::log(g2->emse_b) < std::log(g2->emse_a);
  return {ties && order,
          "C=2 log EMSE: B " + fmt(std::log(g2->emse_b)) + " < A " +
              fmt(std::log(g2->emse_a)) + "; C=0 ties " + (ties ? "exact" : "BROKEN")};
}

Outcome c9_ratio_pattern(const EmseStudyResult& study) {
  for (const auto& r : mse_ratios(study)) {
    if (r.c == 2.0) {
      const bool pass = r.ratio_b < 1.0 && r.ratio_a > 1.0;
      return {pass, "C=2 avgMSE ratios: B/direct = " + fmt(r.ratio_b) +
                        ", A/direct = " + fmt(r.ratio_a)};
    }
  }
  return {false, "no C=2 group"};
}

// ----------------------------------------------------------- criterion 10

Outcome c10_bootstrap_coverage() {
  SimulationConfig cfg;
  cfg.m = 50;
  cfg.reps = 200;
  cfg.seed = 1010;
  IntervalStudyOptions opt;
  opt.levels = {0.90, 0.95, 0.99};
  opt.methods = {IntervalMethod::direct, IntervalMethod::bootstrap};
  opt.bt = 300;
  opt.threads = g_threads;
  const auto res = interval_study(cfg, opt);
  const double boot95 = res.cell(0.95, IntervalMethod::bootstrap).coverage();
  const double boot90 = res.cell(0.90, IntervalMethod::bootstrap).coverage();
  const double boot99 = res.cell(0.99, IntervalMethod::bootstrap).coverage();
  const double direct95 = res.cell(0.95, IntervalMethod::direct).coverage();
  const bool pass = boot95 >= 0.89 && boot95 <= 1.0 && direct95 < 0.85 &&
                    std::fabs(boot90 - 0.928) <= 0.06 &&
                    std::fabs(boot95 - 0.948) <= 0.06 &&
                    std::fabs(boot99 - 0.992) <= 0.06;
  return {pass, "bootstrap coverage (90/95/99) = " + fmt(boot90) + "/" + fmt(boot95) +
                    "/" + fmt(boot99) + ", direct 95 = " + fmt(direct95) +
                    ", failed fits = " + std::to_string(res.failed_fits)};
}

// ----------------------------------------------------------- criterion 11

Outcome c11_mse_signs() {
  Rng rng(1011);
  for (int t = 0; t < 5000; ++t) {
    const ModelParams p{3 * rng.normal(), 3 * rng.normal(), 4 * rng.uniform()};
    const AreaObservation a("a", 4 * rng.normal(), 3 * rng.normal(),
                            0.05 + 4 * rng.uniform(), 4 * rng.uniform());
    if (!(r1_hat(p, a) >= 0.0)) return {false, "negative R1^ found"};
  }
  SimulationConfig cfg;
  cfg.m = 20;
  cfg.seed = 1111;
  const auto refit = [](const std::vector<AreaObservation>& sub) { return fit(sub); };
  long negatives = 0, checked = 0;
  for (int r = 0; r < 40 && negatives == 0; ++r) {
    const auto obs = observations(generate(cfg, r));
    const auto fr = fit(obs);
    if (!fr.converged) continue;
    const auto jk = jackknife_all(obs, fr.params, refit, g_threads);
    for (const auto& e : jk) {
      ++checked;
      if (!(e.r2_j >= 0.0)) return {false, "negative R2_J found"};
      if (e.mse_j != e.r1_j + e.r2_j) return {false, "mse_J decomposition broken"};
      if (e.mse_j < 0.0) {
        if (!e.negative_flag) return {false, "negative mse_J not flagged"};
        ++negatives;
      } else if (e.negative_flag) {
        return {false, "spurious negative flag"};
      }
    }
  }
  return {negatives > 0, "R1^ >= 0 on 5000 draws; R2_J >= 0 on " +
                             std::to_string(checked) + " area fits; " +
                             std::to_string(negatives) +
                             " negative mse_J flagged, reported unclamped"};
}

// ----------------------------------------------------------- criterion 12

Outcome c12_length_stability() {
  const auto areas = oracle::make_cog_like(49, 1012);
  const auto refit = [](const std::vector<AreaObservation>& sub) { return fit(sub); };
  const auto fr = fit(areas);
  if (!fr.converged) return {false, "fit failed on CoG-like data"};
  const auto jk = jackknife_all(areas, fr.params, refit, g_threads);
  BootstrapOptions bo;
  bo.bt = 400;
  bo.seed = 1212;
  bo.threads = g_threads;
  const std::vector<double> alphas{0.05};
  const auto bt = bootstrap_all(areas, alphas, bo, refit);
  const double q = normal_quantile(0.975);
  std::vector<double> boot_len, jack_len;
  for (std::size_t i = 0; i < areas.size(); ++i) {
    boot_len.push_back(std::log(bt[i][0].upper - bt[i][0].lower));
    const double half = q * std::sqrt(std::max(jk[i].mse_j, 0.0));
    jack_len.push_back(std::log(2.0 * half));
  }
  auto iqr = [](std::vector<double> v) {
    v = finite_values(v);
    std::sort(v.begin(), v.end());
    return quantile_type7(v, 0.75) - quantile_type7(v, 0.25);
  };
  const double bi = iqr(boot_len), ji = iqr(jack_len);
  return {bi < ji, "log-length IQR: bootstrap " + fmt(bi) + " < jackknife " + fmt(ji)};
}

// ----------------------------------------------------------- criterion 13

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) return "<missing " + p.string() + ">";
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome c13_cli_determinism() {
  const fs::path base = fs::temp_directory_path() /
                        ("saeme_accept_" + std::to_string(::getpid()));
  fs::remove_all(base);
  fs::create_directories(base);
  auto run = [&](const std::string& out, int threads) {
    const std::string cmd = std::string(SAEME_CLI_PATH) +
                            " simulate --study emse --m 12 --k 50 --reps 30"
                            " --seed 777 --threads " +
                            std::to_string(threads) + " --out " + (base / out).string() +
                            " > " + (base / (out + ".log")).string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  if (run("a", 1) != 0 || run("b", 1) != 0 || run("c", 4) != 0)
    return {false, "simulate run failed"};
  int compared = 0;
  for (const auto& entry : fs::directory_iterator(base / "a")) {
    if (entry.path().extension() != ".csv") continue;
    const auto name = entry.path().filename();
    const std::string va = slurp(base / "a" / name);
    if (va != slurp(base / "b" / name))
      return {false, name.string() + " differs across identical runs"};
    if (va != slurp(base / "c" / name))
      return {false, name.string() + " differs across thread counts"};
    ++compared;
  }
  return {compared >= 4, std::to_string(compared) +
                             " CSVs byte-identical across reruns and threads 1 vs 4"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) g_threads = std::max(1, std::atoi(argv[1]));

  const FixedXMc mc = run_fixed_x_mc();

  SimulationConfig c89;
  c89.m = 20;
  c89.k_percent = 50;
  c89.d_value = 2;
  c89.reps = 500;
  c89.seed = 1008;
  const auto study89 = emse_study(c89, /*with_jackknife=*/false, g_threads);

  struct Criterion {
    int id;
    std::string name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "algebraic identity residual < 1e-10 over 1e4 draws", c1_identity},
      {2, "MC mean of predictor A matches the bias formula", [&] { return c2_theorem1(mc); }},
      {3, "predictor B unbiased; A biased by exp(d/2)", [&] { return c3_unbiased_b(mc); }},
      {4, "C=0 reduction chain and p=1 multivariate reduction", c4_reduction},
      {5, "unbiased scores: zero at fit, zero-mean over MC draws", c5_estimating_equations},
      {6, "MC score covariance matches the information matrix", c6_information_matrix},
      {7, "consistency at m=100: medians near the truth", c7_consistency},
      {8, "group EMSE ordering and exact C=0 ties", [&] { return c8_mse_ordering(study89); }},
      {9, "original-scale average-MSE ratio pattern", [&] { return c9_ratio_pattern(study89); }},
      {10, "bootstrap interval coverage; direct interval fails", c10_bootstrap_coverage},
      {11, "MSE estimate signs; negative mse_J flagged unclamped", c11_mse_signs},
      {12, "bootstrap log-length IQR below jackknife IQR", c12_length_stability},
      {13, "CLI byte-identical across reruns and thread counts", c13_cli_determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s  criterion %2d: %s -- %s\n", o.pass ? "PASS" : "FAIL", c.id,
                c.name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
