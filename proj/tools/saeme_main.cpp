// saeme: small-area prediction for right-skewed responses when the
// covariate is measured with error. Batch CLI: simulate / fit-predict /
// intervals, CSV and SVG outputs only.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "saeme/saeme.hpp"

namespace fs = std::filesystem;
using namespace saeme;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumerical = 3;

std::string default_out_dir() {
  if (const char* env = std::getenv("SAEME_OUT_DIR")) return env;
  return "saeme_out";
}

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw io_error("cannot create output directory: " + dir);
  return p;
}

std::string fmt_alphas(const std::vector<double>& alphas) {
  std::string s;
  for (double a : alphas) {
    if (!s.empty()) s += ' ';
    s += fmt_double(a);
  }
  return s;
}

BootstrapEval parse_eval(const std::string& s) {
  if (s == "resampled") return BootstrapEval::resampled_area;
  if (s == "original") return BootstrapEval::original_area;
  throw std::invalid_argument("boot-eval must be 'resampled' or 'original'");
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string preset;
  std::string study = "emse";
  int m = 20;
  double k = 50.0;
  double d = 2.0;
  double sigma2v = 2.0;
  int reps = 200;
  std::uint64_t seed = 1;
  int bt = 2000;
  std::vector<double> alphas;
  std::string out = default_out_dir();
  int threads = 1;
  bool jackknife = true;
  std::string gamma_convention = "rate";
  std::string boot_eval = "resampled";
};

struct SimulateOptionRefs {
  CLI::Option *study = nullptr, *m = nullptr, *k = nullptr, *d = nullptr,
              *reps = nullptr, *bt = nullptr, *jackknife = nullptr;
};

void apply_preset(SimulateArgs& a, const SimulateOptionRefs& given) {
  if (a.preset.empty()) return;
  struct Preset {
    std::string study;
    int m;
    double k;
    double d;
    int reps;
    int bt;
    bool jackknife;
  };
  static const std::map<std::string, Preset> presets = {
      {"table2-desk", {"emse", 20, 50, 2, 200, 2000, true}},
      {"table2-full", {"emse", 20, 50, 2, 2000, 2000, true}},
      {"table3-desk", {"ratio", 20, 50, 2, 500, 2000, false}},
      {"table4-desk", {"coverage", 50, 50, 2, 200, 300, false}},
      {"table4-full", {"coverage", 50, 50, 2, 2000, 2000, true}},
      {"s21-desk", {"s21", 20, 50, 2, 100, 2000, true}},
      {"s21-full", {"s21", 20, 50, 2, 2000, 2000, true}},
  };
  auto it = presets.find(a.preset);
  if (it == presets.end())
    throw std::invalid_argument("unknown preset '" + a.preset + "'");
  const Preset& p = it->second;
  auto unset = [](CLI::Option* o) { return !o || o->count() == 0; };
  if (unset(given.study)) a.study = p.study;
  if (unset(given.m)) a.m = p.m;
  if (unset(given.k)) a.k = p.k;
  if (unset(given.d)) a.d = p.d;
  if (unset(given.reps)) a.reps = p.reps;
  if (unset(given.bt)) a.bt = p.bt;
  if (unset(given.jackknife)) a.jackknife = p.jackknife;
}

SimulationConfig make_config(const SimulateArgs& a) {
  SimulationConfig cfg;
  cfg.m = a.m;
  cfg.k_percent = a.k;
  cfg.d_value = a.d;
  cfg.sigma2v = a.sigma2v;
  cfg.reps = a.reps;
  cfg.seed = a.seed;
  cfg.psi_convention = (a.gamma_convention == "scale")
                           ? SimulationConfig::GammaConvention::scale
                           : SimulationConfig::GammaConvention::rate;
  cfg.validate();
  return cfg;
}

void write_simulate_snapshot(const fs::path& dir, const SimulateArgs& a) {
  std::map<std::string, std::string> kv{
      {"command", "simulate"},
      {"preset", a.preset.empty() ? "(none)" : a.preset},
      {"study", a.study},
      {"m", std::to_string(a.m)},
      {"k_percent", fmt_double(a.k)},
      {"d_value", fmt_double(a.d)},
      {"sigma2v", fmt_double(a.sigma2v)},
      {"reps", std::to_string(a.reps)},
      {"seed", std::to_string(a.seed)},
      {"bootstrap", std::to_string(a.bt)},
      {"alpha", fmt_alphas(a.alphas)},
      {"threads", std::to_string(a.threads)},
      {"jackknife", a.jackknife ? "true" : "false"},
      {"gamma_convention", a.gamma_convention},
      {"boot_eval", a.boot_eval},
      {"out", a.out},
  };
  write_config_file((dir / "simulate_config.cfg").string(), kv);
}

void run_emse_outputs(const fs::path& dir, const EmseStudyResult& study,
                      bool ratios_only) {
  if (!ratios_only) {
    Table by_area;
    by_area.header = {"area", "c", "emse_direct", "emse_no_me", "emse_a",
                      "emse_b", "mean_r1_hat", "mean_mse_j", "negative_mse_j",
                      "log_emse_direct", "log_emse_no_me", "log_emse_a", "log_emse_b"};
    for (const auto& r : study.areas) {
      by_area.rows.push_back(
          {std::to_string(r.area), fmt_double(r.c), fmt_double(r.emse_direct),
           fmt_double(r.emse_no_me), fmt_double(r.emse_a), fmt_double(r.emse_b),
           fmt_double(r.mean_r1), fmt_double(r.mean_mse_j),
           std::to_string(r.negative_mse_j), fmt_double(std::log(r.emse_direct)),
           fmt_double(std::log(r.emse_no_me)), fmt_double(std::log(r.emse_a)),
           fmt_double(std::log(r.emse_b))});
    }
    by_area.write((dir / "emse_by_area.csv").string());

    Table rb;
    rb.header = {"area", "c", "rb_a", "rb_b", "rrmse_a", "rrmse_b"};
    std::vector<ScatterSeries> rb_series(2), rrmse_series(2);
    rb_series[0] = {"predictor A", "#de2d26", {}};
    rb_series[1] = {"predictor B", "#3182bd", {}};
    rrmse_series[0] = {"predictor A", "#de2d26", {}};
    rrmse_series[1] = {"predictor B", "#3182bd", {}};
    for (const auto& r : study.areas) {
      rb.rows.push_back({std::to_string(r.area), fmt_double(r.c), fmt_double(r.rb_a),
                         fmt_double(r.rb_b), fmt_double(r.rrmse_a),
                         fmt_double(r.rrmse_b)});
      rb_series[0].points.emplace_back(r.area, r.rb_a);
      rb_series[1].points.emplace_back(r.area, r.rb_b);
      rrmse_series[0].points.emplace_back(r.area, r.rrmse_a);
      rrmse_series[1].points.emplace_back(r.area, r.rrmse_b);
    }
    rb.write((dir / "rb_rrmse.csv").string());
    write_scatter_svg((dir / "rb_scatter.svg").string(), rb_series,
                      "Relative bias by area", "area", "RB");
    write_scatter_svg((dir / "rrmse_scatter.svg").string(), rrmse_series,
                      "Relative root MSE by area", "area", "RRMSE");
    study.sample_predictions.write((dir / "predictors_sample.csv").string());
  }

  Table groups;
  groups.header = {"c", "n_areas", "emse_direct", "emse_no_me", "emse_a", "emse_b",
                   "mean_r1_hat", "mean_mse_j", "mean_log_emse_direct",
                   "mean_log_emse_no_me", "mean_log_emse_a", "mean_log_emse_b",
                   "mean_log_r1_hat", "mean_log_mse_j"};
  for (const auto& g : study.groups) {
    groups.rows.push_back(
        {fmt_double(g.c), std::to_string(g.n_areas), fmt_double(g.emse_direct),
         fmt_double(g.emse_no_me), fmt_double(g.emse_a), fmt_double(g.emse_b),
         fmt_double(g.mean_r1), fmt_double(g.mean_mse_j),
         fmt_double(g.mean_log_emse_direct), fmt_double(g.mean_log_emse_no_me),
         fmt_double(g.mean_log_emse_a), fmt_double(g.mean_log_emse_b),
         fmt_double(g.mean_log_r1), fmt_double(g.mean_log_mse_j)});
  }
  groups.write((dir / "emse_groups.csv").string());

  if (ratios_only) {
    Table ratio;
    ratio.header = {"c", "ratio_no_me", "ratio_a", "ratio_b"};
    for (const auto& r : mse_ratios(study)) {
      ratio.rows.push_back({fmt_double(r.c), fmt_double(r.ratio_no_me),
                            fmt_double(r.ratio_a), fmt_double(r.ratio_b)});
    }
    ratio.write((dir / "ratio.csv").string());
  }
}

int cmd_simulate(SimulateArgs a) {
  if (a.alphas.empty()) a.alphas = {0.10, 0.05, 0.01};
  const fs::path dir = prepare_out_dir(a.out);
  write_simulate_snapshot(dir, a);
  const SimulationConfig cfg = make_config(a);

  if (a.study == "emse" || a.study == "ratio") {
    const auto study = emse_study(cfg, a.jackknife, a.threads);
    run_emse_outputs(dir, study, a.study == "ratio");
    std::cerr << "simulate: " << study.reps_completed << " replicates, "
              << study.failed_fits << " failed fits\n";
  } else if (a.study == "coverage") {
    IntervalStudyOptions opt;
    opt.levels.clear();
    for (double al : a.alphas) opt.levels.push_back(1.0 - al);
    opt.bt = a.bt;
    opt.threads = a.threads;
    opt.eval = parse_eval(a.boot_eval);
    opt.collect_log_lengths = true;
    if (!a.jackknife) {
      opt.methods = {IntervalMethod::direct, IntervalMethod::estimated_mse,
                     IntervalMethod::bootstrap};
    }
    const auto res = interval_study(cfg, opt);
    Table t = res.to_table();
    t.write((dir / "coverage.csv").string());
    std::vector<std::string> labels;
    for (auto m : opt.methods) labels.emplace_back(method_name(m));
    write_boxplot_svg((dir / "lengths_boxplot.svg").string(), labels,
                      res.log_lengths, "Prediction interval log-lengths", "log length");
    std::cerr << "simulate: " << res.reps_completed << " replicates, "
              << res.failed_fits << " failed fits, " << res.negative_mse_j
              << " negative jackknife MSEs\n";
  } else if (a.study == "s21") {
    const int ms_desk[] = {20, 50};
    const int ms_full[] = {20, 50, 100};
    const double ks[] = {25, 50, 80, 100};
    std::span<const int> ms = (a.preset == "s21-full")
                                  ? std::span<const int>(ms_full)
                                  : std::span<const int>(ms_desk);
    const auto rows = table_s21(cfg, ms, ks, a.jackknife, a.threads);
    Table t;
    t.header = {"m", "k", "c", "emse_direct", "emse_no_me", "emse_a", "emse_b",
                "mean_r1_hat", "mean_mse_j", "mean_log_emse_direct",
                "mean_log_emse_no_me", "mean_log_emse_a", "mean_log_emse_b",
                "mean_log_r1_hat", "mean_log_mse_j"};
    for (const auto& r : rows) {
      t.rows.push_back({std::to_string(r.m), fmt_double(r.k), fmt_double(r.c),
                        fmt_double(r.emse_direct), fmt_double(r.emse_no_me),
                        fmt_double(r.emse_a), fmt_double(r.emse_b),
                        fmt_double(r.mean_r1), fmt_double(r.mean_mse_j),
                        fmt_double(r.mean_log_emse_direct),
                        fmt_double(r.mean_log_emse_no_me),
                        fmt_double(r.mean_log_emse_a),
                        fmt_double(r.mean_log_emse_b),
                        fmt_double(r.mean_log_r1),
                        fmt_double(r.mean_log_mse_j)});
    }
    t.write((dir / "s21.csv").string());
  } else {
    throw std::invalid_argument("unknown study '" + a.study + "'");
  }
  return kExitOk;
}

// ------------------------------------------------------------- fit-predict

struct IngestOutcome {
  std::vector<AreaObservation> areas;
  std::vector<RawAreaRecord> records;  ///< records backing `areas`, same order
  int accepted = 0;
  int rejected = 0;
};

IngestOutcome load_areas(const std::string& input, const std::string& mapping_path) {
  const ColumnMapping mapping = ColumnMapping::from_file(mapping_path);
  IngestResult in = read_records_csv(input, mapping);
  for (const auto& [row, msg] : in.row_errors)
    std::cerr << "ingest: row " << row << ": " << msg << '\n';
  IngestOutcome out;
  out.rejected = in.rejected;
  for (const auto& rec : in.records) {
    try {
      out.areas.push_back(log_transform_record(rec, mapping.moe_divisor));
      out.records.push_back(rec);
      ++out.accepted;
    } catch (const std::invalid_argument& e) {
      std::cerr << "ingest: row " << rec.source_row << ": " << e.what() << '\n';
      ++out.rejected;
    }
  }
  std::cerr << "ingest: accepted " << out.accepted << ", rejected " << out.rejected
            << '\n';
  return out;
}

struct FitPredictArgs {
  std::string input, mapping, out = default_out_dir();
  double tol = 1e-8;
  int max_iter = 200;
};

void write_fit_summary(const fs::path& path, const FitResult& fr,
                       const IngestOutcome& data,
                       const std::optional<FitResult>& fh) {
  Table t;
  t.header = {"key", "value"};
  auto add = [&](const std::string& k, const std::string& v) {
    t.rows.push_back({k, v});
  };
  add("areas_accepted", std::to_string(data.accepted));
  add("areas_rejected", std::to_string(data.rejected));
  add("beta0", fmt_double(fr.params.beta0, 17));
  add("beta1", fmt_double(fr.params.beta1, 17));
  add("sigma2v", fmt_double(fr.params.sigma2v, 17));
  add("iterations", std::to_string(fr.iterations));
  add("converged", fr.converged ? "true" : "false");
  add("sigma_truncated", fr.sigma_truncated ? "true" : "false");
  add("beta1_fallbacks", std::to_string(fr.beta1_fallbacks));
  add("score_u1", fmt_double(fr.score_at_solution.u1));
  add("score_u2", fmt_double(fr.score_at_solution.u2));
  add("score_u3", fmt_double(fr.score_at_solution.u3));
  add("info_singular", fr.info.singular ? "true" : "false");
  if (auto se = fr.info.standard_errors()) {
    add("se_beta0", fmt_double((*se)[0]));
    add("se_beta1", fmt_double((*se)[1]));
    add("se_sigma2v", fmt_double((*se)[2]));
  }
  if (fh) {
    add("fheblup_beta0", fmt_double(fh->params.beta0, 17));
    add("fheblup_beta1", fmt_double(fh->params.beta1, 17));
    add("fheblup_sigma2v", fmt_double(fh->params.sigma2v, 17));
    add("fheblup_converged", fh->converged ? "true" : "false");
  }
  t.write(path.string());
}

int cmd_fit_predict(const FitPredictArgs& a) {
  const fs::path dir = prepare_out_dir(a.out);
  write_config_file((dir / "fit_predict_config.cfg").string(),
                    {{"command", "fit-predict"},
                     {"input", a.input},
                     {"config", a.mapping},
                     {"tol", fmt_double(a.tol)},
                     {"max_iter", std::to_string(a.max_iter)},
                     {"out", a.out}});
  const IngestOutcome data = load_areas(a.input, a.mapping);
  if (data.areas.size() < 3)
    throw std::invalid_argument("fit-predict: need at least 3 valid areas, have " +
                                std::to_string(data.areas.size()));
  FitOptions fo;
  fo.tol = a.tol;
  fo.max_iter = a.max_iter;
  const FitResult fr = fit(data.areas, fo);
  if (!fr.converged)
    std::cerr << "fit-predict: fit did not converge (recorded in summary)\n";

  // FHeblup side model on the error-free covariate, where provided
  std::optional<FitResult> fh;
  std::vector<std::size_t> fh_rows;
  std::vector<AreaObservation> fh_areas;
  std::vector<double> fh_xlog_all(data.areas.size(), 0.0);
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& rec = data.records[i];
    if (rec.x_exact && *rec.x_exact > 0.0) {
      fh_rows.push_back(i);
      fh_xlog_all[i] = std::log(*rec.x_exact);
      const auto& o = data.areas[i];
      fh_areas.emplace_back(o.area_id, o.z, std::log(*rec.x_exact), o.psi, 0.0);
    }
  }
  if (fh_rows.size() >= 3 && fh_rows.size() == data.areas.size()) {
    fh = fit(fh_areas, fo);
  } else if (!fh_rows.empty()) {
    std::cerr << "fit-predict: x_exact present on " << fh_rows.size() << " of "
              << data.areas.size() << " rows; FHeblup skipped\n";
  }

  const auto preds = fh ? predict_all(fr.params, data.areas, fh->params, fh_xlog_all)
                        : predict_all(fr.params, data.areas);

  Table t;
  t.header = {"area_id", "z", "w", "psi", "c", "log_direct", "log_no_me", "log_a",
              "log_b", "log_fheblup", "direct", "pred_no_me", "pred_a", "pred_b",
              "pred_fheblup", "overflow"};
  double sum_log[5] = {0, 0, 0, 0, 0};
  double sum_orig[5] = {0, 0, 0, 0, 0};
  std::size_t n_fh = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    const auto& o = data.areas[i];
    t.rows.push_back(
        {p.area_id, fmt_full(o.z), fmt_full(o.w), fmt_full(o.psi), fmt_full(o.c),
         fmt_double(p.log_direct), fmt_double(p.log_no_me), fmt_double(p.log_a),
         fmt_double(p.log_b), p.log_fheblup ? fmt_double(*p.log_fheblup) : "",
         fmt_double(p.direct), fmt_double(p.pred_no_me), fmt_double(p.pred_a),
         fmt_double(p.pred_b), p.pred_fheblup ? fmt_double(*p.pred_fheblup) : "",
         p.overflow ? "true" : "false"});
    const double logs[5] = {p.log_direct, p.log_no_me, p.log_a, p.log_b,
                            p.log_fheblup.value_or(0)};
    const double origs[5] = {p.direct, p.pred_no_me, p.pred_a, p.pred_b,
                             p.pred_fheblup.value_or(0)};
    for (int k = 0; k < 5; ++k) {
      sum_log[k] += logs[k];
      sum_orig[k] += origs[k];
    }
    n_fh += p.log_fheblup.has_value();
  }
  t.write((dir / "predictions.csv").string());

  Table s;
  s.header = {"summary", "direct", "pred_no_me", "pred_a", "pred_b", "pred_fheblup"};
  const double n = static_cast<double>(preds.size());
  std::vector<std::string> avg_log = {"avg_of_logs"}, log_avg = {"log_of_avgs"};
  for (int k = 0; k < 5; ++k) {
    const double denom = (k == 4) ? static_cast<double>(n_fh) : n;
    avg_log.push_back(denom > 0 ? fmt_double(sum_log[k] / denom) : "");
    log_avg.push_back(denom > 0 ? fmt_double(std::log(sum_orig[k] / denom)) : "");
  }
  s.rows.push_back(avg_log);
  s.rows.push_back(log_avg);
  s.write((dir / "predictions_summary.csv").string());

  write_fit_summary(dir / "fit_summary.csv", fr, data, fh);
  return kExitOk;
}

// --------------------------------------------------------------- intervals

struct IntervalsArgs {
  std::string input, mapping, out = default_out_dir();
  std::vector<std::string> methods;
  std::vector<double> alphas;
  int bt = 2000;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string boot_eval = "resampled";
};

int cmd_intervals(const IntervalsArgs& a) {
  const fs::path dir = prepare_out_dir(a.out);
  std::vector<std::string> methods = a.methods;
  if (methods.empty())
    methods = {"direct", "estimated-mse", "jackknife", "bootstrap"};
  std::vector<double> alphas = a.alphas;
  if (alphas.empty()) alphas = {0.05};

  std::map<std::string, std::string> kv{
      {"command", "intervals"}, {"input", a.input},
      {"config", a.mapping},    {"bootstrap", std::to_string(a.bt)},
      {"seed", std::to_string(a.seed)},
      {"threads", std::to_string(a.threads)},
      {"alpha", fmt_alphas(alphas)},
      {"boot_eval", a.boot_eval},
      {"out", a.out}};
  {
    std::string ms;
    for (const auto& m : methods) ms += (ms.empty() ? "" : " ") + m;
    kv["methods"] = ms;
  }
  write_config_file((dir / "intervals_config.cfg").string(), kv);

  const IngestOutcome data = load_areas(a.input, a.mapping);
  if (data.areas.size() < 3)
    throw std::invalid_argument("intervals: need at least 3 valid areas");
  const auto refit = [](const std::vector<AreaObservation>& sub) { return fit(sub); };
  const FitResult fr = fit(data.areas);
  if (!fr.converged) std::cerr << "intervals: fit did not converge\n";

  const std::size_t m = data.areas.size();
  const bool want_jk =
      std::count(methods.begin(), methods.end(), "jackknife") > 0;
  const bool want_bt =
      std::count(methods.begin(), methods.end(), "bootstrap") > 0;

  std::vector<MseEstimates> jk;
  if (want_jk) jk = jackknife_all(data.areas, fr.params, refit, a.threads);
  std::vector<std::vector<BootstrapInterval>> bt;
  if (want_bt) {
    BootstrapOptions bo;
    bo.bt = a.bt;
    bo.seed = a.seed;
    bo.threads = a.threads;
    bo.eval = parse_eval(a.boot_eval);
    bt = bootstrap_all(data.areas, alphas, bo, refit);
  }

  Table t;
  t.header = {"area_id", "method", "level", "lower", "upper", "log_length", "flag"};
  std::map<std::pair<std::string, double>, std::vector<double>> lengths;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& o = data.areas[i];
    const double theta_b = predictor_b(fr.params, o);
    const double r1 = r1_hat(fr.params, o);
    for (const auto& method : methods) {
      for (std::size_t l = 0; l < alphas.size(); ++l) {
        const double level = 1.0 - alphas[l];
        const double q = normal_quantile(1.0 - alphas[l] / 2.0);
        double lo, hi;
        std::string flag;
        if (method == "direct") {
          const double y = std::exp(o.z);
          lo = y - q * std::sqrt(o.psi);
          hi = y + q * std::sqrt(o.psi);
        } else if (method == "estimated-mse") {
          lo = theta_b - q * std::sqrt(r1);
          hi = theta_b + q * std::sqrt(r1);
        } else if (method == "jackknife") {
          const double v = std::max(jk[i].mse_j, 0.0);
          if (jk[i].negative_flag) flag = "negative_mse_j";
          lo = theta_b - q * std::sqrt(v);
          hi = theta_b + q * std::sqrt(v);
        } else if (method == "bootstrap") {
          lo = bt[i][l].lower;
          hi = bt[i][l].upper;
          if (bt[i][l].replicate_failures)
            flag = std::to_string(bt[i][l].replicate_failures) + "_replicate_failures";
        } else {
          throw std::invalid_argument("unknown method '" + method + "'");
        }
        const double len = std::log(hi - lo);
        lengths[{method, level}].push_back(len);
        t.rows.push_back({o.area_id, method, fmt_double(level), fmt_double(lo),
                          fmt_double(hi), fmt_double(len), flag});
      }
    }
  }
  t.write((dir / "intervals.csv").string());

  Table s;
  s.header = {"method", "level", "min", "q1", "median", "mean", "q3", "max",
              "n_finite", "n_nonfinite"};
  for (const auto& [key, vals] : lengths) {
    const auto fin = finite_values(vals);
    const auto fns = five_number_summary(fin);
    s.rows.push_back({key.first, fmt_double(key.second), fmt_double(fns.min),
                      fmt_double(fns.q1), fmt_double(fns.median), fmt_double(fns.mean),
                      fmt_double(fns.q3), fmt_double(fns.max),
                      std::to_string(fin.size()),
                      std::to_string(vals.size() - fin.size())});
  }
  s.write((dir / "length_summary.csv").string());

  std::vector<std::string> labels;
  std::vector<std::vector<double>> series;
  const double first_level = 1.0 - alphas[0];
  for (const auto& method : methods) {
    labels.push_back(method);
    series.push_back(lengths[{method, first_level}]);
  }
  write_boxplot_svg((dir / "lengths_boxplot.svg").string(), labels, series,
                    "Prediction interval log-lengths (level " +
                        fmt_double(first_level) + ")",
                    "log length");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Small-area estimation for skewed responses with a covariate "
               "measured with error"};
  app.require_subcommand(1);

  SimulateArgs sa;
  SimulateOptionRefs refs;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo studies");
  sim->add_option("--preset", sa.preset,
                  "table2-desk|table2-full|table3-desk|table4-desk|table4-full|"
                  "s21-desk|s21-full");
  refs.study = sim->add_option("--study", sa.study, "emse|ratio|coverage|s21");
  refs.m = sim->add_option("--m", sa.m, "number of areas");
  refs.k = sim->add_option("--k", sa.k, "percent of areas with measurement error");
  refs.d = sim->add_option("--d", sa.d, "measurement error variance for the k% group");
  sim->add_option("--sigma2v", sa.sigma2v, "linking variance");
  refs.reps = sim->add_option("--reps", sa.reps, "Monte Carlo replicates");
  sim->add_option("--seed", sa.seed, "RNG seed");
  refs.bt = sim->add_option("--bootstrap", sa.bt, "bootstrap replicates");
  sim->add_option("--alpha", sa.alphas, "interval alpha (repeatable)");
  sim->add_option("--out", sa.out, "output directory");
  sim->add_option("--threads", sa.threads, "worker threads");
  refs.jackknife = sim->add_flag("--jackknife,!--no-jackknife", sa.jackknife,
                                 "compute jackknife MSE columns");
  sim->add_option("--gamma-convention", sa.gamma_convention,
                  "psi Gamma(4.5, 2) read as rate|scale");
  sim->add_option("--boot-eval", sa.boot_eval, "resampled|original");

  FitPredictArgs fa;
  auto* fp = app.add_subcommand("fit-predict", "fit the model, write predictions");
  fp->add_option("--input", fa.input, "area-level CSV")->required();
  fp->add_option("--config", fa.mapping, "column mapping file")->required();
  fp->add_option("--out", fa.out, "output directory");
  fp->add_option("--tol", fa.tol, "convergence tolerance");
  fp->add_option("--max-iter", fa.max_iter, "iteration cap");

  IntervalsArgs ia;
  auto* iv = app.add_subcommand("intervals", "per-area prediction intervals");
  iv->add_option("--input", ia.input, "area-level CSV")->required();
  iv->add_option("--config", ia.mapping, "column mapping file")->required();
  iv->add_option("--method", ia.methods,
                 "direct|estimated-mse|jackknife|bootstrap (repeatable)");
  iv->add_option("--alpha", ia.alphas, "interval alpha (repeatable)");
  iv->add_option("--bootstrap", ia.bt, "bootstrap replicates");
  iv->add_option("--seed", ia.seed, "RNG seed");
  iv->add_option("--threads", ia.threads, "worker threads");
  iv->add_option("--out", ia.out, "output directory");
  iv->add_option("--boot-eval", ia.boot_eval, "resampled|original");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim->parsed()) {
      apply_preset(sa, refs);
      return cmd_simulate(sa);
    }
    if (fp->parsed()) return cmd_fit_predict(fa);
    if (iv->parsed()) return cmd_intervals(ia);
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const numerical_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
