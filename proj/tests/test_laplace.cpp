#include <doctest.h>

#include <cmath>

#include "slscert/laplace.hpp"
#include "slscert/oracle.hpp"
#include "slscert/pmle.hpp"
#include "slscert/rng.hpp"

using namespace sls;

namespace {

SlsModel ridge_model() {
  Mat design = Mat::Identity(2, 2);
  Vec y = (Vec(2) << 1.0, 2.0).finished();
  return builtin_linear_gaussian(design, y, 1.0, PsdOperator::identity(2));
}

}  // namespace

TEST_CASE("gaussian posteriors get a zero-error certificate") {
  SlsModel m = ridge_model();
  Vec center = (Vec(2) << 0.5, 1.0).finished();
  ProbeConfig cfg;
  cfg.n_directions = 64;
  LaplaceReport rep = laplace_report(m, center, 3.0, cfg);

  CHECK(rep.omega <= 1e-10);
  CHECK(rep.tau3 <= 1e-7);
  CHECK(rep.tau4 <= 1e-6);
  CHECK(rep.diamond2 <= 1e-9);
  CHECK(rep.diamond3 <= 1e-6);
  CHECK(rep.conditions.omega_ok);
  CHECK(rep.conditions.prod_ok);
  CHECK(rep.conditions.taylor_ok);

  // F = 2I, D^2 = F - G^2 = I: dimA = tr(D^2 F^{-1}) = 1, alpha = 1/2
  CHECK(rep.dimA == doctest::Approx(1.0));
  CHECK(rep.alpha == doctest::Approx(0.5));
  CHECK(rep.r == doctest::Approx(2.0 + std::sqrt(6.0)));
  CHECK(rep.alpha <= 1.0 + 1e-12);
}

TEST_CASE("report rejects non-stationary centers") {
  SlsModel m = ridge_model();
  CHECK_THROWS(laplace_report(m, Vec::Zero(2), 3.0));
}

TEST_CASE("diamond terms match hand arithmetic") {
  CHECK(diamond2_term(0.1, 4.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(diamond2_term(0.0, 10.0) == doctest::Approx(0.0));

  // tau3 = 0.01, dimA = 4, alpha = 1, x = 2: r = 6, omega_tau = 0.03
  double d3 = diamond3_term(0.01, 4.0, 1.0, 2.0);
  double expect3 = 0.01 * std::pow(5.0, 1.5) / (4.0 * std::pow(0.97, 1.5));
  CHECK(d3 == doctest::Approx(expect3).epsilon(1e-12));
  CHECK(d3 == doctest::Approx(0.0292570).epsilon(1e-4));

  double d4 = diamond4_term(0.01, 0.001, 4.0, 1.0, 2.0);
  double expect4 = (1e-4 * 216.0 + 2e-3 * 25.0) / (16.0 * 0.97 * 0.97);
  CHECK(d4 == doctest::Approx(expect4).epsilon(1e-12));
}

TEST_CASE("tv certificate evaluates both bounds") {
  LaplaceReport rep;
  rep.diamond2 = 0.02;
  rep.diamond3 = 0.05;
  rep.x = 3.0;
  rep.conditions = {true, true, true};
  // observed 0.3 sits between the two bounds: 0.279148 < 0.3 < 0.399148
  TvCertificate tv = tv_certificate(rep, 0.3);
  CHECK(tv.bound_tau == doctest::Approx(4.0 * (0.05 + std::exp(-3.0))).epsilon(1e-12));
  CHECK(tv.bound_tau == doctest::Approx(0.399148).epsilon(1e-5));
  CHECK(tv.bound_omega == doctest::Approx(4.0 * (0.02 + std::exp(-3.0))).epsilon(1e-12));
  CHECK(tv.bound_omega == doctest::Approx(0.279148).epsilon(1e-5));
  CHECK(tv.holds_tau);
  CHECK(!tv.holds_omega);
}

TEST_CASE("kl and posterior mean bounds") {
  CHECK(kl_bound(1.0, 3.0, 1.0, 400.0, 5.0) ==
        doctest::Approx(0.8 + 4.0 * std::exp(-5.0)).epsilon(1e-12));
  CHECK(kl_bound(0.0, 3.0, 1.0, 400.0, 5.0) ==
        doctest::Approx(4.0 * std::exp(-5.0)).epsilon(1e-12));
  CHECK(posterior_mean_bound(1.0, 3.0, 1.0, 400.0, 5.0, 1.0) ==
        doctest::Approx(0.96 + 4.0 * std::exp(-5.0)).epsilon(1e-12));
}

TEST_CASE("inexact approximation penalty") {
  // 3-dim isotropic curvature keeps the Frobenius dominance tight:
  // F = (1/sqrt(2)) I_3 so ||F^{-1}||_Fr = sqrt(2) * sqrt(3) ... scaled below
  // to land exactly on ||Q F^{-1} Q'||_Fr = 2.
  double c = 2.0 / std::sqrt(3.0);  // eigenvalues of F^{-1}
  Mat f = (1.0 / c) * Mat::Identity(3, 3);
  SlsModel m;
  m.dim = 3;
  m.eval = [f](const Vec& u) { return -0.5 * u.dot(f * u); };
  m.grad = [f](const Vec& u) { return Vec(-f * u); };
  m.neg_hess = [f](const Vec&) { return PsdOperator(f); };
  m.penalty = PsdOperator::zero(3);
  m.smooth_part = m.eval;

  ProbeConfig cfg;
  cfg.n_directions = 32;
  LaplaceReport rep = laplace_report(m, Vec::Zero(3), 3.0, cfg);
  Mat q = Mat::Identity(3, 3);

  InexactTv exact = inexact_tv_bound(rep, Vec::Zero(3), rep.F, q, 2.0);
  CHECK(exact.extra_term == doctest::Approx(0.0).epsilon(1e-9));

  Vec shifted = (Vec(3) << std::sqrt(0.1), 0.0, 0.0).finished();
  InexactTv sh = inexact_tv_bound(rep, shifted, rep.F, q, 2.0);
  CHECK(sh.extra_term == doctest::Approx(2.0 * 0.1 / 2.0).epsilon(1e-9));
  CHECK(sh.total_bound == doctest::Approx(4.0 * (rep.diamond3 + std::exp(-3.0)) +
                                          sh.extra_term).epsilon(1e-9));

  // 2-dim identity violates 3 ||QF^{-1}Q'||^2 <= ||QF^{-1}Q'||_Fr^2
  SlsModel m2 = ridge_model();
  LaplaceReport rep2 = laplace_report(m2, (Vec(2) << 0.5, 1.0).finished(), 3.0, cfg);
  CHECK_THROWS(inexact_tv_bound(rep2, rep2.center, rep2.F, Mat::Identity(2, 2)));
}

TEST_CASE("laplace bound covers the grid posterior for a logistic fit") {
  CounterRng rng(31);
  int n = 300;  // large enough that both condition families hold with margin
  Mat x(n, 2);
  Vec labels(n);
  Vec truth = (Vec(2) << 0.6, -0.4).finished();
  for (int i = 0; i < n; ++i) {
    x.row(i) = rng.normal_vector(2).transpose();
    double p = 1.0 / (1.0 + std::exp(-x.row(i).dot(truth)));
    labels[i] = rng.uniform() < p ? 1.0 : 0.0;
  }
  SlsModel m = builtin_logistic(x, labels, PsdOperator::identity(2));
  PmleResult r = fit(m, Vec::Zero(2));
  REQUIRE(r.converged);

  ProbeConfig cfg;
  cfg.n_directions = 256;
  LaplaceReport rep = laplace_report(m, r.maximizer, 3.0, cfg);
  REQUIRE(rep.conditions.omega_ok);
  REQUIRE(rep.conditions.taylor_ok);

  Mat cov = rep.F.inverse();
  std::vector<std::array<double, 2>> box;
  for (int i = 0; i < 2; ++i) {
    double sd = std::sqrt(cov(i, i));
    box.push_back({r.maximizer[i] - 8.0 * sd, r.maximizer[i] + 8.0 * sd});
  }
  GridPosterior grid = grid_posterior(m.eval, box, std::vector<int>{161, 161});
  double tv = total_variation(grid, r.maximizer, PsdOperator(Mat(0.5 * (cov + cov.transpose()))));
  TvCertificate cert = tv_certificate(rep, tv);
  CHECK(cert.holds_omega);
  CHECK(cert.holds_tau);
  CHECK(tv < 0.5);
}
