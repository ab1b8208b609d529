#include "slscert/pmle.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "slscert/rng.hpp"

namespace sls {

PmleResult fit(const SlsModel& model, const Vec& init) {
  if (init.size() != model.dim) throw std::invalid_argument("fit: init dim mismatch");
  const int max_iter = 200;
  const double armijo_slope = 0.1;

  Vec u = init;
  double fu = model.eval(u);
  std::ostringstream trace;
  int it = 0;
  for (; it < max_iter; ++it) {
    Vec g = model.grad(u);
    double gn = g.norm();
    if (gn <= 1e-8 * (1.0 + u.norm())) {
      PmleResult out;
      out.maximizer = u;
      out.objective_at_max = fu;
      out.grad_norm = gn;
      out.FG_at_max = PsdOperator(model.neg_hess(u).matrix());
      out.iterations = it;
      out.converged = true;
      return out;
    }
    if (it % 20 == 0) trace << " it" << it << ":|g|=" << gn;

    PsdOperator H = model.neg_hess(u);
    Vec dir;
    bool newton = H.min_eigenvalue() > H.psd_tol();
    if (newton) {
      dir = H.solve(g);
    } else {
      dir = g;  // gradient fallback; concavity is re-checked by the line search
    }
    double slope = g.dot(dir);
    if (slope <= 0.0) {
      std::ostringstream os;
      os << "fit: ascent direction lost at iteration " << it
         << "; objective not concave (smallest eigenvalue of -hess = " << H.min_eigenvalue()
         << ")";
      throw std::runtime_error(os.str());
    }

    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      Vec cand_u = u + t * dir;
      if ((cand_u - u).isZero(0.0)) break;  // step below the resolution of u
      double cand = model.eval(cand_u);
      if (std::isfinite(cand) && cand >= fu + armijo_slope * t * slope) {
        u = cand_u;
        fu = cand;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // A Newton step whose predicted gain sits at the rounding floor of the
      // objective cannot be validated by the line search; the iterate is the
      // numerical optimum even though the gradient norm may sit a hair above
      // its tolerance.
      if (newton && slope <= 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(fu))) {
        PmleResult out;
        out.maximizer = u;
        out.objective_at_max = fu;
        out.grad_norm = gn;
        out.FG_at_max = PsdOperator(model.neg_hess(u).matrix());
        out.iterations = it;
        out.converged = true;
        return out;
      }
      std::ostringstream os;
      os << "fit: line search failed after maximal damping at iteration " << it
         << "; objective not concave (smallest eigenvalue of -hess = " << H.min_eigenvalue()
         << ")";
      throw std::runtime_error(os.str());
    }
  }
  std::ostringstream os;
  os << "fit: no convergence after " << max_iter << " iterations; grad norm "
     << model.grad(u).norm() << "; trace:" << trace.str();
  throw std::runtime_error(os.str());
}

ConcentrationSpec concentration_spec(const PsdOperator& DG2, const PsdOperator& V2,
                                     double x, double nu) {
  if (DG2.min_eigenvalue() <= DG2.psd_tol())
    throw std::invalid_argument("concentration_spec: DG2 must be SPD");
  if (x < 0.0) throw std::invalid_argument("concentration_spec: x must be nonnegative");
  if (nu <= 0.0 || nu > 1.0) throw std::invalid_argument("concentration_spec: nu not in (0,1]");

  ConcentrationSpec s;
  s.x = x;
  s.nu = nu;
  s.pG = (DG2.solve(V2.matrix())).trace();
  Mat w = DG2.inv_sqrt();
  s.lambdaG = PsdOperator(w * V2.matrix() * w).operator_norm();
  s.rG = std::sqrt(s.pG) + std::sqrt(2.0 * x * s.lambdaG);
  s.n_eff = DG2.min_eigenvalue();
  return s;
}

FisherWilksReport fisher_wilks_certificate(const SlsModel& model, const PmleResult& result,
                                           const Vec& population_max, const Vec& grad_noise,
                                           double omega) {
  if (omega >= 1.0) throw std::invalid_argument("fisher_wilks_certificate: omega must be < 1");
  if (omega < 0.0) throw std::invalid_argument("fisher_wilks_certificate: omega negative");

  FisherWilksReport r;
  r.xi_norm2 = grad_noise.squaredNorm();
  r.wilks_residual =
      2.0 * result.objective_at_max - 2.0 * model.eval(population_max) - r.xi_norm2;
  r.wilks_lower = -omega * r.xi_norm2;
  r.wilks_upper = omega * r.xi_norm2 / (1.0 - omega);
  // tolerance band for exact-zero (quadratic) cases hit by roundoff
  double slack = 1e-9 * (1.0 + r.xi_norm2);
  r.wilks_ok = r.wilks_residual >= r.wilks_lower - slack &&
               r.wilks_residual <= r.wilks_upper + slack;

  Mat DG = PsdOperator(model.neg_hess(population_max).matrix()).sqrt();
  Vec dev = DG * (result.maximizer - population_max) - grad_noise;
  r.fisher_residual = dev.squaredNorm();
  r.fisher_bound = 3.0 * omega * r.xi_norm2 / ((1.0 - omega) * (1.0 - omega));
  r.fisher_ok = r.fisher_residual <= r.fisher_bound + slack;
  return r;
}

HessianStability hessian_stability(const PsdOperator& FG_star, const PsdOperator& FG_hat,
                                   int n_probes, std::uint64_t seed) {
  if (FG_star.dim() != FG_hat.dim())
    throw std::invalid_argument("hessian_stability: dimension mismatch");
  Mat w = FG_star.inv_sqrt();
  Mat m = w * FG_hat.matrix() * w - Mat::Identity(FG_star.dim(), FG_star.dim());
  HessianStability out;
  out.delta_plus = spectral_norm(m);

  CounterRng rng(seed);
  bool ok = true;
  double tol = 1e-9 * (1.0 + out.delta_plus);
  for (int k = 0; k < n_probes && ok; ++k) {
    Vec u = rng.normal_vector(FG_star.dim());
    double a = u.dot(FG_star.matrix() * u);
    double b = u.dot(FG_hat.matrix() * u);
    ok = b >= (1.0 - out.delta_plus) * a - tol * a && b <= (1.0 + out.delta_plus) * a + tol * a;
  }
  out.sandwich_ok = ok;
  return out;
}

BiasCertificate bias_certificate(const PsdOperator& Q, const Vec& ups_star,
                                 const PsdOperator& G2, const PsdOperator& F_at_star,
                                 double delta_star) {
  if (delta_star >= 1.0)
    throw std::invalid_argument("bias_certificate: delta_star >= 1, variability regime invalid");
  if (delta_star < 0.0) throw std::invalid_argument("bias_certificate: delta_star negative");

  PsdOperator FG(F_at_star.matrix() + G2.matrix());
  BiasCertificate c;
  c.Q = Q;
  c.delta_star = delta_star;
  c.bG = (Q.matrix() * FG.solve(Vec(G2.matrix() * ups_star))).norm();
  c.bound = c.bG / (1.0 - delta_star);
  c.refined_residual_bound = delta_star * c.bG / (1.0 - delta_star);
  return c;
}

double estimate_delta_star(const SlsModel& model, const Vec& ups_star, const PsdOperator& Q,
                           int n_directions, std::uint64_t seed, double nu) {
  if (Q.min_eigenvalue() <= Q.psd_tol())
    throw std::invalid_argument("estimate_delta_star: Q must be SPD for direction sampling");

  PsdOperator FG(model.neg_hess(ups_star).matrix());
  Mat w = FG.inv_sqrt();
  double bG = (Q.matrix() * FG.solve(Vec(model.penalty.matrix() * ups_star))).norm();
  double radius = bG / nu;
  if (radius == 0.0) return 0.0;

  Mat Qinv = Q.inverse();
  CounterRng rng(seed);
  double sup = 0.0;
  const int shells = 8;
  const int d = model.dim;
  for (int k = 0; k < n_directions; ++k) {
    Vec g = rng.normal_vector(d);
    Vec dir = Qinv * g;
    double qn = (Q.matrix() * dir).norm();
    if (qn <= 0.0) continue;
    dir /= qn;
    for (int s = 1; s <= shells; ++s) {
      Vec u = (radius * double(s) / double(shells)) * dir;
      Mat m = w * model.neg_hess(ups_star + u).matrix() * w - Mat::Identity(d, d);
      sup = std::max(sup, spectral_norm(m));
    }
  }
  return sup;
}

RiskCertificate risk_certificate(const ConcentrationSpec& spec, double omega,
                                 double delta_star, double bias_norm, double x, double C1) {
  if (omega >= 1.0 || omega < 0.0)
    throw std::invalid_argument("risk_certificate: omega outside [0,1)");
  if (delta_star >= 1.0 || delta_star < 0.0)
    throw std::invalid_argument("risk_certificate: delta_star outside [0,1)");

  RiskCertificate r;
  r.loss_bound =
      (1.0 + std::sqrt(2.0 * omega)) / (1.0 - omega) * spec.rG + bias_norm / (1.0 - delta_star);
  r.mean_bound = bias_norm / (1.0 - delta_star) +
                 std::sqrt(3.0 * omega) * std::sqrt(spec.pG) / (1.0 - omega) +
                 C1 * std::exp(-x);
  double variance_factor = 1.0 + std::sqrt(2.0 * omega) / (1.0 - omega);
  r.risk_bound = variance_factor * variance_factor * spec.pG + r.mean_bound * r.mean_bound;
  r.bias_variance_sum = spec.pG + bias_norm * bias_norm;
  return r;
}

}  // namespace sls
