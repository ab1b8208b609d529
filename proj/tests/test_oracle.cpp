#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "slscert/oracle.hpp"
#include "slscert/rng.hpp"

using namespace sls;

namespace {

double std_normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

LogDensity std_gaussian(int d) {
  return [d](const Vec& u) {
    (void)d;
    return -0.5 * u.squaredNorm();
  };
}

}  // namespace

TEST_CASE("grid posterior recovers gaussian moments") {
  std::vector<std::array<double, 2>> box{{-8.0, 8.0}};
  GridPosterior g = grid_posterior(std_gaussian(1), box, {1001});
  CHECK(std::abs(g.mean()[0]) <= 1e-6);
  CHECK(g.covariance()(0, 0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(g.boundary_mass_estimate <= 1e-6);

  double inner = g.mass_where([](const Vec& u) { return std::abs(u[0]) <= 1.0; });
  CHECK(inner == doctest::Approx(2.0 * std_normal_cdf(1.0) - 1.0).epsilon(1e-3));
}

TEST_CASE("grid posterior recovers correlated moments via schur") {
  // f = -1/2 u' H u with H = [[2,1],[1,2]]: covariance H^{-1}, Var = 2/3
  Mat h(2, 2);
  h << 2.0, 1.0, 1.0, 2.0;
  LogDensity f = [h](const Vec& u) { return -0.5 * u.dot(h * u); };
  std::vector<std::array<double, 2>> box{{-7.0, 7.0}, {-7.0, 7.0}};
  GridPosterior g = grid_posterior(f, box, {181, 181});
  Mat cov = g.covariance();
  CHECK(cov(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-3));
  CHECK(cov(0, 1) == doctest::Approx(-1.0 / 3.0).epsilon(2e-3));
}

TEST_CASE("leaky boxes are rejected") {
  std::vector<std::array<double, 2>> tight{{-1.0, 1.0}};
  CHECK_THROWS(grid_posterior(std_gaussian(1), tight, {101}));
}

TEST_CASE("total variation against shifted and scaled gaussians") {
  std::vector<std::array<double, 2>> box{{-9.0, 9.0}};
  GridPosterior g = grid_posterior(std_gaussian(1), box, {1201});

  // same law: only discretization error remains
  CHECK(total_variation(g, Vec::Zero(1), PsdOperator::identity(1)) <= 2e-4);

  // mean shift 0.5: TV = 2 Phi(1/4) - 1
  double shift_exact = 2.0 * std_normal_cdf(0.25) - 1.0;
  double shift_tv = total_variation(g, (Vec(1) << 0.5).finished(), PsdOperator::identity(1));
  CHECK(shift_tv == doctest::Approx(shift_exact).epsilon(1e-3));
  CHECK(shift_exact == doctest::Approx(0.197413).epsilon(1e-4));

  // variance 4: crossing points at t^2 = (8/3) log 2, TV = 2(Phi(t) - Phi(t/2))
  double t = std::sqrt(8.0 * std::log(2.0) / 3.0);
  double scale_exact = 2.0 * (std_normal_cdf(t) - std_normal_cdf(t / 2.0));
  PsdOperator four = PsdOperator::diagonal((Vec(1) << 4.0).finished());
  CHECK(total_variation(g, Vec::Zero(1), four) == doctest::Approx(scale_exact).epsilon(1e-3));
  CHECK(scale_exact == doctest::Approx(0.322689).epsilon(1e-4));
}

TEST_CASE("kl against the matching gaussian is tiny") {
  std::vector<std::array<double, 2>> box{{-9.0, 9.0}};
  GridPosterior g = grid_posterior(std_gaussian(1), box, {1201});
  CHECK(std::abs(kl_vs_gaussian(g, Vec::Zero(1), PsdOperator::identity(1))) <= 1e-4);
}

TEST_CASE("mcmc is deterministic per seed and calibrated") {
  LogDensity f = std_gaussian(2);
  Vec init = Vec::Zero(2);
  SampleSet a = mcmc_sample(f, init, 20000, 123);
  SampleSet b = mcmc_sample(f, init, 20000, 123);
  CHECK((a.draws - b.draws).norm() == 0.0);

  CHECK(a.acceptance_rate >= 0.1);
  CHECK(a.acceptance_rate <= 0.6);
  REQUIRE(a.ess_per_dim.size() == 2);
  double ess = a.ess_per_dim.minCoeff();
  CHECK(ess >= 100.0);

  CHECK(a.mean().norm() <= 5.0 / std::sqrt(ess));
  Mat cov = a.covariance();
  CHECK(cov(0, 0) == doctest::Approx(1.0).epsilon(0.15));
  CHECK(cov(1, 1) == doctest::Approx(1.0).epsilon(0.15));

  SampleSet c = mcmc_sample(f, init, 20000, 124);
  CHECK((a.draws - c.draws).norm() > 0.0);
}

TEST_CASE("sample save and load round trip") {
  SampleSet a = mcmc_sample(std_gaussian(1), Vec::Zero(1), 500, 5, 500);
  std::string path = "oracle_roundtrip_samples.json";
  save_samples(a, path);
  SampleSet back = load_samples(path);
  std::remove(path.c_str());
  CHECK((a.draws - back.draws).norm() == 0.0);
  CHECK(back.seed == a.seed);
  CHECK(back.acceptance_rate == doctest::Approx(a.acceptance_rate));
}

TEST_CASE("elliptic tv from the exact grid") {
  Mat h = Mat::Identity(2, 2);
  LogDensity f = [](const Vec& u) { return -0.5 * u.squaredNorm(); };
  std::vector<std::array<double, 2>> box{{-7.5, 7.5}, {-7.5, 7.5}};
  GridPosterior g = grid_posterior(f, box, {161, 161});
  Mat q = Mat::Identity(2, 2);

  // matching gaussian: statistic distributions coincide
  double same = empirical_tv_elliptic_grid(g, q, Vec::Zero(2), PsdOperator::identity(2),
                                           200000, 7);
  CHECK(same <= 2.0 * dkw_envelope(200000) + 5e-3);

  // Sigma = 2I: ||X||^2 ~ chi^2_2 vs statistic CDF scaled by 2; the sup of
  // |e^{-u} - e^{-2u}| over u >= 0 is exactly 1/4
  PsdOperator two = PsdOperator(Mat(2.0 * Mat::Identity(2, 2)));
  double scaled = empirical_tv_elliptic_grid(g, q, Vec::Zero(2), two, 200000, 7);
  CHECK(scaled == doctest::Approx(0.25).epsilon(0.04));
}

TEST_CASE("elliptic tv from mcmc draws") {
  SampleSet s = mcmc_sample(std_gaussian(2), Vec::Zero(2), 30000, 99);
  double ess = s.ess_per_dim.minCoeff();
  double tv = empirical_tv_elliptic(s, Mat::Identity(2, 2), Vec::Zero(2),
                                    PsdOperator::identity(2), 11);
  CHECK(tv <= 2.0 * dkw_envelope(int(ess)) + 0.02);
}

TEST_CASE("dkw envelope formula") {
  CHECK(dkw_envelope(100000) == doctest::Approx(std::sqrt(std::log(2000.0) / 2e5)).epsilon(1e-12));
  CHECK(dkw_envelope(100) > dkw_envelope(10000));
  CHECK_THROWS(dkw_envelope(0));
}
