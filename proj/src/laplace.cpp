#include "slscert/laplace.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace sls {

double diamond2_term(double omega, double dimA) {
  if (omega >= 1.0) return std::numeric_limits<double>::infinity();
  return 0.75 * omega * dimA / (1.0 - omega);
}

double diamond3_term(double tau3, double dimA, double alpha, double x, double nu) {
  double r = 2.0 * std::sqrt(dimA) + std::sqrt(2.0 * x);
  double omega_tau = tau3 * r / nu / 3.0;
  if (omega_tau >= 1.0) return std::numeric_limits<double>::infinity();
  return tau3 * std::pow(dimA + alpha, 1.5) / (4.0 * std::pow(1.0 - omega_tau, 1.5));
}

double diamond4_term(double tau3, double tau4, double dimA, double alpha, double x, double nu) {
  double r = 2.0 * std::sqrt(dimA) + std::sqrt(2.0 * x);
  double omega_tau = tau3 * r / nu / 3.0;
  if (omega_tau >= 1.0) return std::numeric_limits<double>::infinity();
  double num = tau3 * tau3 * std::pow(dimA + 2.0 * alpha, 3.0) +
               2.0 * tau4 * std::pow(dimA + alpha, 2.0);
  return num / (16.0 * (1.0 - omega_tau) * (1.0 - omega_tau));
}

LaplaceReport laplace_report(const SlsModel& model, const Vec& center, double x,
                             const ProbeConfig& cfg) {
  Vec g = model.grad(center);
  double grad_scale = 1.0;

  PsdOperator F;
  try {
    F = PsdOperator(model.neg_hess(center).matrix());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("laplace_report: curvature at center: ") + e.what());
  }
  if (F.min_eigenvalue() <= F.psd_tol())
    throw std::invalid_argument("laplace_report: F singular at the center");
  grad_scale = F.operator_norm() * (1.0 + center.norm());
  if (g.norm() > 1e-6 * (1.0 + grad_scale)) {
    std::ostringstream os;
    os << "laplace_report: center is not stationary, ||grad f|| = " << g.norm();
    throw std::invalid_argument(os.str());
  }

  LaplaceReport rep;
  rep.center = center;
  rep.F = F;
  rep.G2 = model.penalty;
  try {
    rep.D2 = PsdOperator(F.matrix() - model.penalty.matrix());
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument(
        "laplace_report: penalty exceeds the curvature, F - G^2 is not PSD");
  }
  rep.x = x;
  rep.dimA = F.solve(rep.D2.matrix()).trace();
  Mat D = rep.D2.sqrt();
  rep.alpha = spectral_norm(D * F.solve(D));
  rep.r = 2.0 * std::sqrt(rep.dimA) + std::sqrt(2.0 * x);

  SmoothnessProbe probe;
  probe.center = center;
  probe.metric = rep.D2.sqrt_operator();
  probe.radius = rep.r / rep.nu;
  probe.n_directions = cfg.n_directions;
  probe.seed = cfg.seed;
  rep.omega = estimate_omega(model, probe);
  SelfConcordance sc = estimate_self_concordance(model, probe, 1.0);
  rep.tau3 = sc.tau3;
  rep.tau4 = sc.tau4;
  rep.omega_tau = rep.tau3 * (rep.r / rep.nu) / 3.0;

  rep.diamond2 = diamond2_term(rep.omega, rep.dimA);
  rep.diamond3 = diamond3_term(rep.tau3, rep.dimA, rep.alpha, x, rep.nu);
  rep.diamond4 = diamond4_term(rep.tau3, rep.tau4, rep.dimA, rep.alpha, x, rep.nu);

  rep.conditions.omega_ok = rep.omega <= 1.0 / 3.0;
  rep.conditions.prod_ok = rep.omega * rep.dimA <= 2.0 / 3.0;
  rep.conditions.taylor_ok = rep.tau3 * (rep.r / rep.nu) * rep.dimA <= 2.0;
  return rep;
}

nlohmann::json LaplaceReport::to_json() const {
  nlohmann::json j;
  j["dim"] = center.size();
  j["center"] = std::vector<double>(center.data(), center.data() + center.size());
  j["dimA"] = dimA;
  j["alpha"] = alpha;
  j["x"] = x;
  j["r"] = r;
  j["nu"] = nu;
  j["omega"] = omega;
  j["tau3"] = tau3;
  j["tau4"] = tau4;
  j["omega_tau"] = omega_tau;
  j["diamond2"] = diamond2;
  j["diamond3"] = diamond3;
  j["diamond4"] = diamond4;
  j["conditions"] = {{"omega_ok", conditions.omega_ok},
                     {"prod_ok", conditions.prod_ok},
                     {"taylor_ok", conditions.taylor_ok}};
  return j;
}

TvCertificate tv_certificate(const LaplaceReport& report, double tv_observed) {
  TvCertificate c;
  c.tv_observed = tv_observed;
  double tail = std::exp(-report.x);
  c.bound_omega = 4.0 * (report.diamond2 + tail);
  c.bound_tau = 4.0 * (report.diamond3 + tail);
  c.holds_omega = tv_observed <= c.bound_omega;
  c.holds_tau = tv_observed <= c.bound_tau;
  return c;
}

double kl_bound(double c3, double dimA, double alpha, double n, double x) {
  if (n <= 0.0) throw std::invalid_argument("kl_bound: n must be positive");
  return 2.0 * c3 * std::sqrt(std::pow(dimA + alpha, 3.0) / n) + 4.0 * std::exp(-x);
}

double posterior_mean_bound(double c3, double dimA, double alpha, double n, double x,
                            double QFQ_norm) {
  if (n <= 0.0) throw std::invalid_argument("posterior_mean_bound: n must be positive");
  return 2.4 * c3 * std::sqrt(QFQ_norm) * std::sqrt(std::pow(dimA + alpha, 3.0) / n) +
         4.0 * std::exp(-x);
}

InexactTv inexact_tv_bound(const LaplaceReport& report, const Vec& center_used,
                           const PsdOperator& F_used, const Mat& Q, double C) {
  Mat Finv = report.F.inverse();
  Mat QFQ = Q * Finv * Q.transpose();
  double spec = spectral_norm(QFQ);
  double fro = QFQ.norm();
  // relative slack so the exact-equality case (isotropic 3-dim F) is admitted
  if (3.0 * spec * spec > fro * fro * (1.0 + 1e-9))
    throw std::invalid_argument(
        "inexact_tv_bound: Frobenius dominance fails, 3||QFQ||^2 > ||QFQ||_Fr^2");

  Mat diff = Q * (Finv - F_used.inverse()) * Q.transpose();
  double shift2 = (Q * (center_used - report.center)).squaredNorm();

  InexactTv out;
  out.extra_term = C * (nuclear_norm_sym(diff) + shift2) / fro;
  out.total_bound = 4.0 * (report.diamond3 + std::exp(-report.x)) + out.extra_term;
  return out;
}

}  // namespace sls
