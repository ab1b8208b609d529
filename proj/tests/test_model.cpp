#include <doctest.h>

#include <cmath>

#include "slscert/model.hpp"
#include "slscert/rng.hpp"

using namespace sls;

namespace {

// 1-dim model with analytic derivatives, penalty folded into eval by hand.
SlsModel scalar_model(std::function<double(double)> f, std::function<double(double)> df,
                      std::function<double(double)> d2f) {
  SlsModel m;
  m.dim = 1;
  m.eval = [f](const Vec& u) { return f(u[0]); };
  m.grad = [df](const Vec& u) { return (Vec(1) << df(u[0])).finished(); };
  m.neg_hess = [d2f](const Vec& u) {
    return PsdOperator((Mat(1, 1) << -d2f(u[0])).finished());
  };
  m.penalty = PsdOperator::zero(1);
  m.smooth_part = m.eval;
  return m;
}

Vec fd_grad(const SlsModel& m, const Vec& x, double h = 1e-6) {
  Vec g(m.dim);
  for (int i = 0; i < m.dim; ++i) {
    Vec e = Vec::Zero(m.dim);
    e[i] = h;
    g[i] = (m.eval(x + e) - m.eval(x - e)) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("linear gaussian model: derivatives and decomposition") {
  Mat design = Mat::Identity(2, 2);
  Vec y = (Vec(2) << 1.0, 2.0).finished();
  SlsModel m = builtin_linear_gaussian(design, y, 1.0, PsdOperator::identity(2));

  // constant curvature: X'X/sd^2 + G^2 = 2 I
  Vec a = Vec::Zero(2);
  Vec b = (Vec(2) << 3.0, -2.0).finished();
  CHECK((m.neg_hess(a).matrix() - 2.0 * Mat::Identity(2, 2)).norm() <= 1e-12);
  CHECK((m.neg_hess(a).matrix() - m.neg_hess(b).matrix()).norm() <= 1e-12);

  // f = smooth part - 0.5 ||G ups||^2
  CounterRng rng(5);
  for (int k = 0; k < 10; ++k) {
    Vec u = rng.normal_vector(2);
    double pen = 0.5 * u.dot(m.penalty.matrix() * u);
    CHECK(m.eval(u) == doctest::Approx(m.smooth_part(u) - pen).epsilon(1e-12));
    CHECK((m.grad(u) - fd_grad(m, u)).norm() <= 1e-5 * (1.0 + m.grad(u).norm()));
  }

  // stationarity at the ridge solution (2I)^{-1} y
  Vec hat = (Vec(2) << 0.5, 1.0).finished();
  CHECK(m.grad(hat).norm() <= 1e-12);
}

TEST_CASE("logistic model gradients") {
  Mat design = (Mat(1, 1) << 1.0).finished();
  Vec labels = (Vec(1) << 1.0).finished();
  SlsModel m = builtin_logistic(design, labels, PsdOperator::zero(1));
  Vec zero = Vec::Zero(1);
  CHECK(m.grad(zero)[0] == doctest::Approx(0.5));  // y - sigma(0)

  // all-zero design: objective flat, gradient vanishes
  SlsModel flat = builtin_logistic(Mat::Zero(3, 2), Vec::Zero(3), PsdOperator::zero(2));
  CHECK(flat.grad(Vec::Zero(2)).norm() == doctest::Approx(0.0));

  // random instance: analytic grad and hess against finite differences
  CounterRng rng(7);
  Mat x(6, 2);
  for (int i = 0; i < 6; ++i) x.row(i) = rng.normal_vector(2).transpose();
  Vec lab = (Vec(6) << 1, 0, 1, 1, 0, 1).finished();
  SlsModel lm = builtin_logistic(x, lab, PsdOperator::identity(2));
  Vec at = (Vec(2) << 0.3, -0.4).finished();
  CHECK((lm.grad(at) - fd_grad(lm, at)).norm() <= 1e-5);
  Mat h = lm.neg_hess(at).matrix();
  double step = 1e-5;
  for (int i = 0; i < 2; ++i) {
    Vec e = Vec::Zero(2);
    e[i] = step;
    Vec col = -(lm.grad(at + e) - lm.grad(at - e)) / (2.0 * step);
    CHECK((h.col(i) - col).norm() <= 1e-5);
  }
}

TEST_CASE("model_from_json supported kinds") {
  nlohmann::json spec = {{"kind", "linear_gaussian"},
                         {"design", {{1.0, 0.0}, {0.0, 1.0}}},
                         {"y", {1.0, 2.0}},
                         {"noise_sd", 1.0},
                         {"G2", 1.0}};
  SlsModel m = model_from_json(spec);
  CHECK(m.dim == 2);
  CHECK(m.grad((Vec(2) << 0.5, 1.0).finished()).norm() <= 1e-12);

  CHECK_THROWS(model_from_json(nlohmann::json{{"kind", "nope"}}));
}

TEST_CASE("custom grid model reproduces tabulated quadratic") {
  // values for f(u) = -u^2/2 on [-2, 2], 401 nodes
  int n = 401;
  nlohmann::json payload;
  payload["lower"] = {-2.0};
  payload["upper"] = {2.0};
  payload["shape"] = {n};
  std::vector<double> vals(n);
  for (int i = 0; i < n; ++i) {
    double u = -2.0 + 4.0 * i / double(n - 1);
    vals[i] = -0.5 * u * u;
  }
  payload["values"] = vals;
  SlsModel m = custom_grid_model_from_json(payload);
  CHECK(m.eval((Vec(1) << 0.0).finished()) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(m.eval((Vec(1) << 1.0).finished()) == doctest::Approx(-0.5).epsilon(1e-4));
  CHECK(m.grad((Vec(1) << 1.0).finished())[0] == doctest::Approx(-1.0).epsilon(1e-3));
}

TEST_CASE("omega vanishes for quadratic models") {
  Mat design = Mat::Identity(2, 2);
  Vec y = (Vec(2) << 1.0, 2.0).finished();
  SlsModel m = builtin_linear_gaussian(design, y, 1.0, PsdOperator::identity(2));
  SmoothnessProbe probe;
  probe.center = (Vec(2) << 0.5, 1.0).finished();
  probe.metric = PsdOperator(Mat(std::sqrt(2.0) * Mat::Identity(2, 2)));
  probe.radius = 3.0;
  probe.n_directions = 64;
  double omega = estimate_omega(m, probe);
  CHECK(omega <= 1e-12);
  CHECK(probe.omega_hat == omega);
}

TEST_CASE("omega of a cubic perturbation is 2 eps r") {
  // f(u) = -u^2/2 + eps u^3: delta3 = eps u^3, so 2|delta3|/u^2 = 2 eps |u|
  double eps = 0.01;
  SlsModel m = scalar_model([eps](double u) { return -0.5 * u * u + eps * u * u * u; },
                            [eps](double u) { return -u + 3.0 * eps * u * u; },
                            [eps](double u) { return -1.0 + 6.0 * eps * u; });
  SmoothnessProbe probe;
  probe.center = Vec::Zero(1);
  probe.metric = PsdOperator::identity(1);
  probe.radius = 0.5;
  probe.n_directions = 16;
  double omega = estimate_omega(m, probe);
  CHECK(omega == doctest::Approx(2.0 * eps * probe.radius).epsilon(1e-9));
}

TEST_CASE("self concordance constants vanish for quadratics") {
  Mat design = Mat::Identity(2, 2);
  Vec y = (Vec(2) << 1.0, 2.0).finished();
  SlsModel m = builtin_linear_gaussian(design, y, 1.0, PsdOperator::identity(2));
  SmoothnessProbe probe;
  probe.center = Vec::Zero(2);
  probe.metric = PsdOperator::identity(2);
  probe.radius = 1.0;
  probe.n_directions = 32;
  SelfConcordance sc = estimate_self_concordance(m, probe, 100.0);
  CHECK(sc.tau3 <= 1e-6);
  CHECK(sc.tau4 <= 1e-6);
  CHECK(sc.c3 <= 1e-5);
  CHECK(sc.c4 <= 1e-4);
}

TEST_CASE("quartic scalar model has c4 = 24 under unit metric") {
  // l(u) = -u^2/2 - u^4: fourth derivative -24, third derivative -24u = 0 at 0.
  // With D = 1, n = 1: tau4 = 24 and c4 = tau4 * n = 24.
  SlsModel m = scalar_model([](double u) { return -0.5 * u * u - u * u * u * u; },
                            [](double u) { return -u - 4.0 * u * u * u; },
                            [](double u) { return -1.0 - 12.0 * u * u; });
  SmoothnessProbe probe;
  probe.center = Vec::Zero(1);
  probe.metric = PsdOperator::identity(1);
  probe.radius = 1.0;
  probe.n_directions = 8;
  SelfConcordance sc = estimate_self_concordance(m, probe, 1.0);
  CHECK(sc.c4 == doctest::Approx(24.0).epsilon(1e-5));
  CHECK(sc.c3 <= 1e-4);
  CHECK(probe.c4_hat == sc.c4);
}

TEST_CASE("delta3 ignores affine parts") {
  double eps = 0.02;
  SlsModel base = scalar_model([eps](double u) { return -0.5 * u * u + eps * u * u * u; },
                               [eps](double u) { return -u + 3.0 * eps * u * u; },
                               [eps](double u) { return -1.0 + 6.0 * eps * u; });
  SlsModel shifted = scalar_model(
      [eps](double u) { return -0.5 * u * u + eps * u * u * u + 7.0 * u - 3.0; },
      [eps](double u) { return -u + 3.0 * eps * u * u + 7.0; },
      [eps](double u) { return -1.0 + 6.0 * eps * u; });
  Vec x = (Vec(1) << 0.2).finished();
  Vec u = (Vec(1) << 0.3).finished();
  CHECK(delta3(base, x, u) == doctest::Approx(delta3(shifted, x, u)).epsilon(1e-10));
}

TEST_CASE("probe seeding is reproducible") {
  CounterRng rng(3);
  Mat x(8, 2);
  for (int i = 0; i < 8; ++i) x.row(i) = rng.normal_vector(2).transpose();
  Vec lab = (Vec(8) << 1, 0, 1, 1, 0, 1, 0, 0).finished();
  SlsModel m = builtin_logistic(x, lab, PsdOperator::identity(2));
  SmoothnessProbe a, b;
  a.center = b.center = Vec::Zero(2);
  a.metric = b.metric = PsdOperator::identity(2);
  a.radius = b.radius = 0.7;
  a.n_directions = b.n_directions = 64;
  a.seed = b.seed = 42;
  CHECK(estimate_omega(m, a) == estimate_omega(m, b));
}
