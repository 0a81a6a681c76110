#include <algorithm>

#include "doctest.h"
#include "support.hpp"

using namespace saeme;

TEST_CASE("predictor A and B: hand arithmetic") {
  const ModelParams p{0, 3, 2};
  const AreaObservation a("a", 10, 3, 1, 2);
  CHECK(log_predictor_a(p, a) == doctest::Approx(219.0 / 21.0).epsilon(1e-15));
  CHECK(log_predictor_b(p, a) == doctest::Approx(201.0 / 21.0).epsilon(1e-15));
  CHECK(predictor_b(p, a) == doctest::Approx(predictor_a(p, a) * std::exp(-6.0 / 7.0)));
}

TEST_CASE("reduction chain: c = 0 makes A, B and no-ME identical bitwise") {
  Rng rng(808);
  for (int t = 0; t < 300; ++t) {
    const ModelParams p{rng.normal(), 2 * rng.normal(), 3 * rng.uniform()};
    const AreaObservation a("a", 3 * rng.normal(), 2 * rng.normal(),
                            0.1 + 2 * rng.uniform(), 0.0);
    const double la = log_predictor_a(p, a);
    CHECK(la == log_predictor_b(p, a));
    CHECK(la == log_predictor_no_me(p, a));
    CHECK(la == log_predictor_fheblup(p, a, a.w));
  }
}

TEST_CASE("ordering: B <= A, strictly when beta1^2 c psi > 0") {
  Rng rng(909);
  for (int t = 0; t < 500; ++t) {
    const ModelParams p{rng.normal(), 0.2 + 2 * rng.uniform(), 3 * rng.uniform()};
    const AreaObservation a("a", 3 * rng.normal(), 2 * rng.normal(),
                            0.1 + 2 * rng.uniform(), 0.01 + 2 * rng.uniform());
    CHECK(log_predictor_b(p, a) < log_predictor_a(p, a));
  }
}

TEST_CASE("fheblup: limiting behavior") {
  const ModelParams p{0.5, 1.5, 2.0};
  SUBCASE("psi -> 0 returns the direct estimate") {
    const AreaObservation a("a", 2.3, 0, 1e-9, 0);
    CHECK(log_predictor_fheblup(p, a, 1.0) == doctest::Approx(2.3).epsilon(1e-8));
  }
  SUBCASE("sigma2v = 0 shrinks fully to the regression line") {
    const ModelParams flat{0.5, 1.5, 0.0};
    const AreaObservation a("a", 2.3, 0, 0.7, 0);
    CHECK(log_predictor_fheblup(flat, a, 2.0) == doctest::Approx(0.5 + 1.5 * 2.0));
  }
}

TEST_CASE("fheblup: tiny psi keeps it within 1% of the direct estimate") {
  // synthetic data inside the published psi range (6.6e-7 .. 6.8e-3)
  Rng rng(111);
  const ModelParams p{0.4, 0.95, 1.1};
  for (int t = 0; t < 200; ++t) {
    const double x = 8.0 + rng.normal();
    const double z = p.beta0 + p.beta1 * x + 0.3 * rng.normal();
    const double psi = 6.6e-7 + (3e-3 - 6.6e-7) * rng.uniform();
    const AreaObservation a("a", z, x, psi, 0);
    const double rel =
        std::exp(log_predictor_fheblup(p, a, x) - a.z) - 1.0;
    CHECK(std::fabs(rel) < 0.01);
  }
}

TEST_CASE("multivariate: p = 1 reduces bit-identically to the scalar forms") {
  Rng rng(121);
  for (int t = 0; t < 300; ++t) {
    const double b0 = rng.normal(), b1 = 2 * rng.normal();
    const double s2 = 3 * rng.uniform();
    const double z = 3 * rng.normal(), w = 2 * rng.normal();
    const double psi = 0.1 + 2 * rng.uniform(), c = 2 * rng.uniform();
    const ModelParams sp{b0, b1, s2};
    const AreaObservation sa("a", z, w, psi, c);
    const MultiParams mp{b0, {b1}, s2};
    const MultivariateArea ma("a", z, psi, {w}, {c});
    CHECK(log_predictor_a_multi(mp, ma) == log_predictor_a(sp, sa));
    CHECK(log_predictor_b_multi(mp, ma) == log_predictor_b(sp, sa));
  }
}

TEST_CASE("multivariate: zero C matrix equals the error-free predictor") {
  const MultiParams mp{0.3, {1.0, -0.5, 2.0}, 1.2};
  const MultivariateArea ma("a", 1.7, 0.6, {0.5, 1.0, -0.2}, {0.0, 0.0, 0.0});
  const double lin = 0.3 + 1.0 * 0.5 - 0.5 * 1.0 + 2.0 * -0.2;
  const double gs = 1.2 / (1.2 + 0.6);
  const double want = gs * 1.7 + (1 - gs) * lin + 0.5 * gs * 0.6;
  CHECK(log_predictor_a_multi(mp, ma) == doctest::Approx(want).epsilon(1e-15));
  CHECK(log_predictor_a_multi(mp, ma) == log_predictor_b_multi(mp, ma));
}

TEST_CASE("multivariate: p = 2 hand case") {
  const MultiParams mp{0.0, {1.0, 2.0}, 0.0};
  const MultivariateArea ma("a", 1.0, 1.0, {0.0, 0.0}, {1.0, 1.0});
  // beta'C beta = 5, S = 6, gamma~ = 5/6, d = 2*1*5/6 = 5/3
  const double la = log_predictor_a_multi(mp, ma);
  const double want_a = (5.0 / 6.0) * 1.0 + 0.0 + 0.5 * (5.0 / 6.0);
  CHECK(la == doctest::Approx(want_a).epsilon(1e-15));
  CHECK(log_predictor_b_multi(mp, ma) == doctest::Approx(want_a - 0.5 * 5.0 / 3.0));
}

TEST_CASE("multivariate: dimension mismatch throws") {
  const MultiParams mp{0.0, {1.0, 2.0}, 0.5};
  CHECK_THROWS_AS(MultivariateArea("a", 1, 1, {0.0}, {1.0, 1.0}),
                  std::invalid_argument);
  const MultivariateArea ma("a", 1, 1, {0.0}, {1.0});
  CHECK_THROWS_AS(log_predictor_a_multi(mp, ma), std::invalid_argument);
}

TEST_CASE("predictors: Monte Carlo bias oracle at fixed x") {
  // E[A] = exp(b0 + b1 x + (gamma~(s2+psi) + (1-gamma~) b1^2 c)/2) and
  // E[B] = E[theta] = exp(b0 + b1 x + s2/2); checked to 3 MC SEs.
  const ModelParams truth{0, 3, 2};
  const double x = 1.0, psi = 1.0, c = 2.0;
  const auto dq = derive(truth, AreaObservation("a", 0, 0, psi, c));
  const double want_a = std::exp(
      truth.beta0 + truth.beta1 * x +
      0.5 * (dq.gamma_tilde * (truth.sigma2v + psi) +
             (1 - dq.gamma_tilde) * truth.beta1 * truth.beta1 * c));
  const double want_b = std::exp(truth.beta0 + truth.beta1 * x + 0.5 * truth.sigma2v);

  Rng rng(333);
  const int reps = 40000;
  double sa = 0, sa2 = 0, sb = 0, sb2 = 0;
  for (int r = 0; r < reps; ++r) {
    const auto d = oracle::draw_fixed_x(truth, x, psi, c, rng);
    const AreaObservation a("a", d.z, d.w, psi, c);
    const double va = predictor_a(truth, a);
    const double vb = predictor_b(truth, a);
    sa += va;
    sa2 += va * va;
    sb += vb;
    sb2 += vb * vb;
  }
  const double ma = sa / reps, mb = sb / reps;
  const double se_a = std::sqrt((sa2 / reps - ma * ma) / reps);
  const double se_b = std::sqrt((sb2 / reps - mb * mb) / reps);
  CHECK(std::fabs(ma - want_a) <= 3 * se_a);
  CHECK(std::fabs(mb - want_b) <= 3 * se_b);
  // A's bias factor exp(d/2) over the unbiased target
  CHECK(ma / want_b > 1.5);
}

TEST_CASE("predict_all: structure, ordering and permutation invariance") {
  SUBCASE("empty input gives empty output") {
    const ModelParams p{0, 1, 1};
    CHECK(predict_all(p, std::vector<AreaObservation>{}).empty());
  }

  SimulationConfig cfg;
  cfg.m = 16;
  cfg.seed = 2024;
  const auto sim = generate(cfg, 0);
  auto areas = observations(sim);
  const auto fr = fit(areas);
  REQUIRE(fr.converged);
  const auto preds = predict_all(fr.params, areas);
  REQUIRE(preds.size() == areas.size());
  bool any_c0 = false, any_cpos = false;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    CHECK(preds[i].pred_b <= preds[i].pred_a);
    CHECK(preds[i].direct > 0);
    CHECK(preds[i].pred_b > 0);
    if (areas[i].c == 0.0) {
      any_c0 = true;
      CHECK(preds[i].pred_a == preds[i].pred_b);
      CHECK(preds[i].pred_a == preds[i].pred_no_me);
    } else {
      any_cpos = true;
      CHECK(preds[i].pred_b < preds[i].pred_a);
    }
    CHECK_FALSE(preds[i].pred_fheblup.has_value());
  }
  CHECK(any_c0);
  CHECK(any_cpos);

  auto shuffled = areas;
  std::reverse(shuffled.begin(), shuffled.end());
  const auto preds2 = predict_all(fr.params, shuffled);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& back = preds2[preds.size() - 1 - i];
    CHECK(back.area_id == preds[i].area_id);
    CHECK(back.log_b == preds[i].log_b);
    CHECK(back.log_a == preds[i].log_a);
  }
}

TEST_CASE("predict_all: fheblup column from a side model") {
  SimulationConfig cfg;
  cfg.m = 10;
  cfg.seed = 99;
  const auto sim = generate(cfg, 0);
  const auto areas = observations(sim);
  std::vector<double> xs;
  for (const auto& s : sim) xs.push_back(s.x);
  const ModelParams fh{0.1, 2.9, 1.8};
  const auto preds = predict_all(ModelParams{0, 3, 2}, areas, fh, xs);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    REQUIRE(preds[i].pred_fheblup.has_value());
    CHECK(*preds[i].log_fheblup ==
          doctest::Approx(log_predictor_fheblup(fh, areas[i], xs[i])));
  }
}

TEST_CASE("predictors: overflow carries the log-scale value") {
  const ModelParams p{0, 1, 100.0};
  const AreaObservation a("a", 800, 100, 0.01, 0.0);  // gamma~ ~ 1, log A ~ 800
  CHECK(std::isfinite(log_predictor_a(p, a)));
  CHECK(log_predictor_a(p, a) > kMaxLogPrediction);
  CHECK_THROWS_AS(predictor_a(p, a), std::overflow_error);
}
