#include <doctest.h>

#include <cmath>

#include "slscert/marginal.hpp"
#include "slscert/rng.hpp"

using namespace sls;

namespace {

double std_normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

// joint quadratic f = -(theta^2 + theta eta + eta^2), curvature [[2,1],[1,2]]
SlsModel coupled_quadratic() {
  Mat h(2, 2);
  h << 2.0, 1.0, 1.0, 2.0;
  SlsModel m;
  m.dim = 2;
  m.eval = [h](const Vec& u) { return -0.5 * u.dot(h * u); };
  m.grad = [h](const Vec& u) { return Vec(-h * u); };
  m.neg_hess = [h](const Vec&) { return PsdOperator(h); };
  m.penalty = PsdOperator::zero(2);
  m.smooth_part = m.eval;
  return m;
}

SlsModel quadratic_from(const Mat& h) {
  SlsModel m;
  m.dim = int(h.rows());
  m.eval = [h](const Vec& u) { return -0.5 * u.dot(h * u); };
  m.grad = [h](const Vec& u) { return Vec(-h * u); };
  m.neg_hess = [h](const Vec&) { return PsdOperator(h); };
  m.penalty = PsdOperator::zero(int(h.rows()));
  m.smooth_part = m.eval;
  return m;
}

}  // namespace

TEST_CASE("marginal problem and profiles of the coupled quadratic") {
  SlsModel m = coupled_quadratic();
  MarginalProblem prob = make_marginal_problem(m, 1, Vec::Zero(2));
  CHECK(prob.ups_star.norm() <= 1e-10);
  CHECK(prob.F_theta_star.matrix()(0, 0) == doctest::Approx(2.0));

  NuisanceProfile pr = profile(prob, (Vec(1) << 0.6).finished(), Vec::Zero(1));
  CHECK(pr.theta_eta[0] == doctest::Approx(-0.3).epsilon(1e-9));  // argmax -theta^2-0.6 theta
  CHECK(pr.F_eta.matrix()(0, 0) == doctest::Approx(2.0));
  CHECK(pr.phi_eta == doctest::Approx(-0.75 * 0.36).epsilon(1e-9));
  CHECK(pr.phi_eta <= 0.0);
  CHECK(pr.delta_eta == doctest::Approx(0.0));
  CHECK(pr.weight == doctest::Approx(std::exp(pr.phi_eta)).epsilon(1e-12));
}

TEST_CASE("separability of the 2x2 instance") {
  Mat h(2, 2);
  h << 2.0, 1.0, 1.0, 2.0;
  Separability sep = separability(BlockOperator::split(h, 1));
  CHECK(sep.rho == doctest::Approx(0.25));
  CHECK(sep.efficient.matrix()(0, 0) == doctest::Approx(1.5));
  CHECK(sep.sandwich_ok);  // (1 - 1/4) * 2 = 3/2 exactly
}

TEST_CASE("orthogonalization kills the cross curvature") {
  SlsModel m = coupled_quadratic();
  OrthogonalizedModel om = orthogonalize(m, 1, Vec::Zero(2));
  CHECK(om.C(0, 0) == doctest::Approx(0.5).epsilon(1e-9));  // eta-eta^{-1} eta-theta

  Mat h2 = om.model.neg_hess(Vec::Zero(2)).matrix();
  CHECK(std::abs(h2(0, 1)) <= 1e-9);
  CHECK(h2(0, 0) == doctest::Approx(1.5).epsilon(1e-9));  // efficient curvature surfaces
  CHECK(h2(1, 1) == doctest::Approx(2.0).epsilon(1e-9));

  // pointwise equality under the substitution nu = eta + C(theta - theta*)
  CounterRng rng(3);
  for (int k = 0; k < 20; ++k) {
    Vec u = rng.normal_vector(2);
    Vec v = u;
    v[1] = u[1] + om.C(0, 0) * u[0];
    double lhs = om.model.eval(v);
    double rhs = m.eval(u);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * (1.0 + std::abs(rhs)));
  }

  // already block-diagonal: the transform is the identity
  Mat d = Mat::Zero(2, 2);
  d.diagonal() << 3.0, 5.0;
  OrthogonalizedModel od = orthogonalize(quadratic_from(d), 1, Vec::Zero(2));
  CHECK(od.C.norm() <= 1e-12);
}

TEST_CASE("nuisance grid covers eta star symmetrically") {
  SlsModel m = coupled_quadratic();
  MarginalProblem prob = make_marginal_problem(m, 1, Vec::Zero(2));
  std::vector<Vec> grid = nuisance_grid(prob, 9, 3.0);
  REQUIRE(grid.size() == 9);
  CHECK(std::abs(grid[4][0]) <= 1e-12);  // odd count pins eta*
  CHECK(grid.front()[0] == doctest::Approx(-grid.back()[0]));
  CHECK_THROWS(nuisance_grid(prob, 8));
}

TEST_CASE("mixture marginal of the coupled quadratic is N(0, 2/3)") {
  SlsModel m = coupled_quadratic();
  MarginalProblem prob = make_marginal_problem(m, 1, Vec::Zero(2));
  std::vector<Vec> grid = nuisance_grid(prob, 41, 5.0);
  Mat q = Mat::Identity(1, 1);
  MixtureMarginal mix = build_mixture(prob, grid, q);
  REQUIRE(mix.profiles.size() == grid.size());

  // closed-form mixture moments: Var = Var_w(theta_eta) + E_w[F_eta^{-1}]
  double wsum = 0.0, m1 = 0.0, m2 = 0.0;
  for (const auto& pr : mix.profiles) {
    wsum += pr.weight;
    m1 += pr.weight * pr.theta_eta[0];
    double second = pr.theta_eta[0] * pr.theta_eta[0] + 1.0 / pr.F_eta.matrix()(0, 0);
    m2 += pr.weight * second;
  }
  double var = m2 / wsum - (m1 / wsum) * (m1 / wsum);
  CHECK(m1 / wsum == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(var == doctest::Approx(2.0 / 3.0).epsilon(2e-3));

  // rank-1 CDF path is exact, so the mixture ball mass matches N(0, 2/3)
  double sd = std::sqrt(2.0 / 3.0);
  for (double r : {0.4, 0.8, 1.3}) {
    double mass = mixture_marginal(mix.profiles, q, Vec::Zero(1), r);
    double exact = 2.0 * std_normal_cdf(r / sd) - 1.0;
    CHECK(mass == doctest::Approx(exact).epsilon(2e-3));
  }

  std::vector<double> radii{0.4, 0.8, 1.3};
  std::vector<double> cdf = mixture_cdf(mix.profiles, q, Vec::Zero(1), radii);
  REQUIRE(cdf.size() == 3);
  CHECK(cdf[0] <= cdf[1]);
  CHECK(cdf[1] <= cdf[2]);
}

TEST_CASE("homogenization error vanishes for constant slice curvature") {
  SlsModel m = coupled_quadratic();
  MarginalProblem prob = make_marginal_problem(m, 1, Vec::Zero(2));
  std::vector<Vec> grid = nuisance_grid(prob, 11, 3.0);
  Mat q = Mat::Identity(1, 1);
  MixtureMarginal mix = build_mixture(prob, grid, q);
  HomogenizationError err = homogenization_error(mix.profiles, q, mix.F_ref);
  CHECK(err.delta_plus <= 1e-10);
  CHECK(err.Delta_F <= 1e-10);
}

TEST_CASE("homogenization scalar equality case") {
  // single slice with F_eta = 0.8 F_ref: delta+ = 0.2 and the defect equals
  // its bound delta+/(1-delta+) = 0.25
  NuisanceProfile pr;
  pr.eta = Vec::Zero(1);
  pr.theta_eta = Vec::Zero(1);
  pr.F_eta = PsdOperator::diagonal((Vec(1) << 0.8).finished());
  pr.phi_eta = 0.0;
  pr.delta_eta = 0.0;
  pr.weight = 1.0;
  HomogenizationError err = homogenization_error({pr}, Mat::Identity(1, 1),
                                                 PsdOperator::identity(1));
  CHECK(err.delta_plus == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(err.Delta_F == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(err.bound == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("marginal tv terms match hand arithmetic") {
  MarginalTvTerms t = marginal_tv_terms(1.0, 4.0, 2.0, 6.0, 2.0, 1e4, 3.0);
  CHECK(t.term_profile == doctest::Approx(0.08).epsilon(1e-12));
  CHECK(t.term_mix == doctest::Approx(6.0 * std::sqrt(2.0) / 100.0).epsilon(1e-12));
  CHECK(t.term_quad == doctest::Approx(1296.0 / (1e4 * std::sqrt(2.0))).epsilon(1e-12));
  CHECK(t.term_tail == doctest::Approx(std::exp(-3.0)).epsilon(1e-12));
  CHECK(t.total == doctest::Approx(0.306281).epsilon(1e-5));

  // calibration scales the structural terms, not the tail
  MarginalTvTerms c = marginal_tv_terms(1.0, 4.0, 2.0, 6.0, 2.0, 1e4, 3.0, 2.0);
  CHECK(c.total == doctest::Approx(2.0 * (t.total - t.term_tail) + t.term_tail).epsilon(1e-12));

  // zero self-concordance leaves only the tail
  MarginalTvTerms z = marginal_tv_terms(0.0, 4.0, 2.0, 6.0, 2.0, 1e4, 3.0);
  CHECK(z.total == doctest::Approx(std::exp(-3.0)).epsilon(1e-12));
}

TEST_CASE("marginal threshold arithmetic") {
  CHECK(marginal_threshold(1.2, 2.0 / 3.0, 3.0, 0.5) == doctest::Approx(6.98).epsilon(1e-12));
  CHECK(marginal_threshold(1.0, 2.0 / 3.0, 0.0, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("bias sup over profiles") {
  SlsModel m = coupled_quadratic();
  MarginalProblem prob = make_marginal_problem(m, 1, Vec::Zero(2));
  std::vector<Vec> grid = nuisance_grid(prob, 11, 3.0);
  Mat q = Mat::Identity(1, 1);
  MixtureMarginal mix = build_mixture(prob, grid, q);
  PsdOperator d_ref(Mat(std::sqrt(1.5) * Mat::Identity(1, 1)));
  double sup = bias_sup_over_profiles(mix.profiles, d_ref, Vec::Zero(1));
  // theta_eta = -eta/2, so the sup sits at the grid edge
  double eta_max = std::abs(grid.back()[0]);
  CHECK(sup == doctest::Approx(std::sqrt(1.5) * eta_max / 2.0).epsilon(1e-9));
}

TEST_CASE("full marginal bound dominates the exact gaussian marginal") {
  SlsModel m = coupled_quadratic();
  MarginalProblem prob = make_marginal_problem(m, 1, Vec::Zero(2));
  ProbeConfig cfg;
  cfg.n_directions = 64;
  LaplaceReport full = laplace_report(m, prob.ups_star, 3.0, cfg);
  Separability sep = separability(BlockOperator::split(prob.F_full.matrix(), 1));
  NuisanceProfile at_star = profile(prob, Vec::Zero(1), Vec::Zero(1));
  MarginalTvTerms t = marginal_tv_bound(full, at_star, PsdOperator::zero(1),
                                        Mat::Identity(1, 1), sep.efficient, 0.0, 100.0, 1.0);
  // quadratic joint: structural terms vanish, leaving the tail
  CHECK(t.total == doctest::Approx(std::exp(-3.0)).epsilon(1e-9));
  CHECK(t.dimA_Q > 0.0);
}
