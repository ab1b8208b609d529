#include "slscert/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "slscert/rng.hpp"

namespace sls {

namespace {

// theta-slice of a joint model at fixed eta; its smooth part keeps the
// eta-dependent pieces so the decomposition invariant still holds.
SlsModel restrict_to_theta(const SlsModel& joint, int p, const Vec& eta) {
  const int q = joint.dim - p;
  Mat G2t = joint.penalty.matrix().topLeftCorner(p, p);
  PsdOperator pen(G2t);

  auto embed = [p, q, eta](const Vec& theta) {
    Vec u(p + q);
    u.head(p) = theta;
    u.tail(q) = eta;
    return u;
  };

  SlsModel m;
  m.dim = p;
  m.penalty = pen;
  m.eval = [&joint, embed](const Vec& t) { return joint.eval(embed(t)); };
  m.smooth_part = [&joint, embed, pen](const Vec& t) {
    return joint.eval(embed(t)) + 0.5 * t.dot(pen.matrix() * t);
  };
  m.grad = [&joint, embed, p](const Vec& t) { return Vec(joint.grad(embed(t)).head(p)); };
  m.neg_hess = [&joint, embed, p](const Vec& t) {
    return PsdOperator::unchecked(joint.neg_hess(embed(t)).matrix().topLeftCorner(p, p));
  };
  return m;
}

double half_logdet_ratio(const PsdOperator& F_eta, const PsdOperator& F_ref) {
  Mat w = F_eta.inv_sqrt();
  PsdOperator m(w * F_ref.matrix() * w);
  return 0.5 * m.logdet();
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

MarginalProblem make_marginal_problem(const SlsModel& joint, int p, const Vec& init) {
  if (p < 1 || p >= joint.dim)
    throw std::invalid_argument("make_marginal_problem: target dim out of range");
  PmleResult fitres = fit(joint, init);

  MarginalProblem prob;
  prob.model = joint;
  prob.p = p;
  prob.ups_star = fitres.maximizer;
  prob.f_star = fitres.objective_at_max;
  prob.F_full = fitres.FG_at_max;
  prob.F_theta_star = PsdOperator(prob.F_full.matrix().topLeftCorner(p, p));
  return prob;
}

NuisanceProfile profile(const MarginalProblem& prob, const Vec& eta, const Vec& warm_theta) {
  SlsModel slice = restrict_to_theta(prob.model, prob.p, eta);
  PmleResult res;
  try {
    res = fit(slice, warm_theta);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string("profile: divergence at a nuisance point: ") +
                             e.what());
  }

  NuisanceProfile out;
  out.eta = eta;
  out.theta_eta = res.maximizer;
  out.F_eta = res.FG_at_max;
  out.phi_eta = res.objective_at_max - prob.f_star;
  if (out.phi_eta > 1e-9 * (1.0 + std::abs(prob.f_star)))
    throw std::runtime_error("profile: deficiency positive; global maximizer inconsistent");
  out.delta_eta = half_logdet_ratio(out.F_eta, prob.F_theta_star);
  out.weight = std::exp(out.phi_eta + out.delta_eta);
  return out;
}

Separability separability(const BlockOperator& F) {
  Separability s;
  s.rho = separability_rho(F);
  s.efficient = schur_efficient(F);
  Mat lhs = (1.0 - s.rho) * F.tt;
  s.sandwich_ok = psd_leq(lhs, s.efficient.matrix()) && psd_leq(s.efficient.matrix(), F.tt);
  return s;
}

OrthogonalizedModel orthogonalize(const SlsModel& joint, int p, const Vec& ups_star) {
  const int q = joint.dim - p;
  BlockOperator H = BlockOperator::split(joint.neg_hess(ups_star).matrix(), p);
  PsdOperator nn(H.nn);
  if (nn.min_eigenvalue() <= nn.psd_tol())
    throw std::invalid_argument("orthogonalize: nuisance curvature block singular");
  Mat C = nn.solve(Mat(H.tn.transpose()));  // q x p

  Mat J(p + q, p + q);  // (theta, nu) -> (theta, eta)
  J.setZero();
  J.topLeftCorner(p, p).setIdentity();
  J.bottomRightCorner(q, q).setIdentity();
  J.bottomLeftCorner(q, p) = -C;
  Vec offset = Vec::Zero(p + q);
  offset.tail(q) = C * ups_star.head(p);

  SlsModel base = joint;
  auto map = [J, offset](const Vec& w) { return Vec(J * w + offset); };

  SlsModel m;
  m.dim = joint.dim;
  m.penalty = PsdOperator(J.transpose() * joint.penalty.matrix() * J);
  m.eval = [base, map](const Vec& w) { return base.eval(map(w)); };
  m.grad = [base, map, J](const Vec& w) { return Vec(J.transpose() * base.grad(map(w))); };
  m.neg_hess = [base, map, J](const Vec& w) {
    return PsdOperator::unchecked(J.transpose() * base.neg_hess(map(w)).matrix() * J);
  };
  m.smooth_part = [m_eval = m.eval, pen = m.penalty](const Vec& w) {
    return m_eval(w) + 0.5 * w.dot(pen.matrix() * w);
  };

  OrthogonalizedModel out;
  out.model = std::move(m);
  out.C = C;
  out.ups_star = ups_star;
  return out;
}

std::vector<Vec> nuisance_grid(const MarginalProblem& prob, int per_axis, double span_sd) {
  const int q = prob.model.dim - prob.p;
  if (q > 3) throw std::invalid_argument("nuisance_grid: tensor grid limited to nuisance dim 3");
  if (per_axis < 3 || per_axis % 2 == 0)
    throw std::invalid_argument("nuisance_grid: per_axis must be odd and >= 3");
  if (span_sd <= 0.0) {
    double dim_bound = double(prob.model.dim);
    double rbar = 2.0 * std::sqrt(dim_bound) + std::sqrt(2.0 * 3.0);
    span_sd = 1.5 * rbar;  // nu^{-1} rbar with nu = 2/3
  }

  Mat cov = prob.F_full.inverse();
  Vec eta_star = prob.ups_star.tail(q);
  std::vector<std::vector<double>> axes(q);
  for (int a = 0; a < q; ++a) {
    double sd = std::sqrt(cov(prob.p + a, prob.p + a));
    for (int i = 0; i < per_axis; ++i) {
      double t = (2.0 * i / double(per_axis - 1) - 1.0);
      axes[a].push_back(eta_star[a] + span_sd * sd * t);
    }
  }

  std::vector<Vec> grid;
  std::vector<int> idx(q, 0);
  while (true) {
    Vec eta(q);
    for (int a = 0; a < q; ++a) eta[a] = axes[a][idx[a]];
    grid.push_back(eta);
    int a = 0;
    for (; a < q; ++a) {
      if (++idx[a] < per_axis) break;
      idx[a] = 0;
    }
    if (a == q) break;
  }
  return grid;
}

MixtureMarginal build_mixture(const MarginalProblem& prob, const std::vector<Vec>& grid,
                              const Mat& Q) {
  if (grid.empty()) throw std::invalid_argument("build_mixture: empty nuisance grid");
  MixtureMarginal mix;
  mix.Q = Q;
  mix.F_ref = prob.F_theta_star;
  mix.profiles.reserve(grid.size());

  Vec theta_star = prob.ups_star.head(prob.p);
  Vec warm = theta_star;
  for (const Vec& eta : grid) {
    NuisanceProfile pr = profile(prob, eta, warm);
    warm = pr.theta_eta;  // chain warm starts along the grid walk
    mix.profiles.push_back(std::move(pr));
  }

  // uniform tensor cell volume from the per-axis spacing of the first steps
  const int q = prob.model.dim - prob.p;
  double vol = 1.0;
  if (grid.size() > 1) {
    std::vector<double> spacing(q, 0.0);
    for (std::size_t k = 1; k < grid.size(); ++k) {
      Vec d = grid[k] - grid[0];
      for (int a = 0; a < q; ++a)
        if (d[a] > 0 && (spacing[a] == 0.0 || d[a] < spacing[a])) spacing[a] = d[a];
    }
    for (int a = 0; a < q; ++a) vol *= spacing[a] > 0 ? spacing[a] : 1.0;
  }
  mix.quadrature_weights = Vec::Constant(Eigen::Index(grid.size()), vol);
  return mix;
}

std::vector<double> mixture_cdf(const std::vector<NuisanceProfile>& profiles, const Mat& Q,
                                const Vec& theta_star, const std::vector<double>& radii,
                                int n_mc, std::uint64_t seed) {
  if (profiles.empty()) throw std::invalid_argument("mixture_cdf: empty profile grid");
  const int p = int(theta_star.size());

  Eigen::JacobiSVD<Mat> svd(Q, Eigen::ComputeThinU | Eigen::ComputeThinV);
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] > 1e-12 * svd.singularValues()[0]) ++rank;

  double wsum = 0.0;
  for (const auto& pr : profiles) wsum += pr.weight;
  std::vector<double> acc(radii.size(), 0.0);

  if (rank == 1) {
    // ||Q x|| = s |v' x|; exact normal interval probabilities
    double s = svd.singularValues()[0];
    Vec v = svd.matrixV().col(0);
    for (const auto& pr : profiles) {
      double mu = s * v.dot(pr.theta_eta - theta_star);
      Mat cov = pr.F_eta.inverse();
      double sd = s * std::sqrt(v.dot(cov * v));
      for (std::size_t i = 0; i < radii.size(); ++i) {
        double prob = norm_cdf((radii[i] - mu) / sd) - norm_cdf((-radii[i] - mu) / sd);
        acc[i] += pr.weight * prob;
      }
    }
  } else {
    // common random numbers across profiles
    CounterRng rng(seed, /*stream=*/3);
    Mat z(n_mc, p);
    for (int t = 0; t < n_mc; ++t) z.row(t) = rng.normal_vector(p).transpose();
    std::vector<double> rvals(n_mc);
    for (const auto& pr : profiles) {
      Mat root = pr.F_eta.inv_sqrt();
      Vec shift = pr.theta_eta - theta_star;
      for (int t = 0; t < n_mc; ++t)
        rvals[t] = (Q * (shift + root * z.row(t).transpose())).norm();
      std::sort(rvals.begin(), rvals.end());
      for (std::size_t i = 0; i < radii.size(); ++i) {
        auto it = std::upper_bound(rvals.begin(), rvals.end(), radii[i]);
        acc[i] += pr.weight * double(it - rvals.begin()) / n_mc;
      }
    }
  }
  for (double& a : acc) a /= wsum;
  return acc;
}

double mixture_marginal(const std::vector<NuisanceProfile>& profiles, const Mat& Q,
                        const Vec& theta_star, double r, int n_mc, std::uint64_t seed) {
  return mixture_cdf(profiles, Q, theta_star, {r}, n_mc, seed)[0];
}

HomogenizationError homogenization_error(const std::vector<NuisanceProfile>& profiles,
                                         const Mat& Q, const PsdOperator& F_ref) {
  if (profiles.empty()) throw std::invalid_argument("homogenization_error: empty profiles");
  Mat ref_inv = F_ref.inverse();
  Mat QFQ = Q * ref_inv * Q.transpose();
  double fro = QFQ.norm();
  Mat w = F_ref.inv_sqrt();

  HomogenizationError h;
  double wsum = 0.0, defect = 0.0;
  for (const auto& pr : profiles) {
    Mat diff = Q * (ref_inv - pr.F_eta.inverse()) * Q.transpose();
    defect += pr.weight * nuclear_norm_sym(diff);
    wsum += pr.weight;
    Mat dev = w * pr.F_eta.matrix() * w - Mat::Identity(F_ref.dim(), F_ref.dim());
    h.delta_plus = std::max(h.delta_plus, spectral_norm(dev));
  }
  h.Delta_F = defect / wsum / fro;
  if (h.delta_plus < 1.0)
    h.bound = h.delta_plus / (1.0 - h.delta_plus) * QFQ.trace() / fro;
  else
    h.bound = std::numeric_limits<double>::infinity();
  return h;
}

MarginalTvTerms marginal_tv_terms(double c3, double r_eta_star, double dimA_eta_star,
                                  double r_bar, double dimA_Q, double n, double x,
                                  double calib) {
  if (n <= 0.0) throw std::invalid_argument("marginal_tv_terms: n must be positive");
  if (dimA_Q <= 0.0) throw std::invalid_argument("marginal_tv_terms: dimA_Q must be positive");
  MarginalTvTerms t;
  t.dimA_Q = dimA_Q;
  double rn = std::sqrt(n);
  t.term_profile = calib * c3 * r_eta_star * dimA_eta_star / rn;
  t.term_mix = calib * c3 * r_bar * std::sqrt(dimA_Q) / rn;
  t.term_quad = calib * c3 * c3 * std::pow(r_bar, 4.0) / (n * std::sqrt(dimA_Q));
  t.term_tail = std::exp(-x);
  t.total = t.term_profile + t.term_mix + t.term_quad + t.term_tail;
  return t;
}

MarginalTvTerms marginal_tv_bound(const LaplaceReport& full_report,
                                  const NuisanceProfile& profile_at_eta_star,
                                  const PsdOperator& G2_theta, const Mat& Q,
                                  const PsdOperator& F_breve, double c3, double n,
                                  double C0, double calib) {
  Mat BQ = Q * F_breve.inverse() * Q.transpose();
  double top = spectral_norm(BQ);
  BQ /= top;
  double dimA_Q = BQ.trace();
  double fro2 = BQ.squaredNorm();
  if (fro2 < C0 * C0 * dimA_Q)
    throw std::invalid_argument(
        "marginal_tv_bound: Frobenius dominance ||B_Q||_Fr^2 >= C0^2 tr(B_Q) fails");

  const PsdOperator& Fe = profile_at_eta_star.F_eta;
  double dimA_eta = Fe.solve(Mat(Fe.matrix() - G2_theta.matrix())).trace();
  double r_eta = 2.0 * std::sqrt(std::max(0.0, dimA_eta)) + std::sqrt(2.0 * full_report.x);
  return marginal_tv_terms(c3, r_eta, dimA_eta, full_report.r, dimA_Q, n, full_report.x,
                           calib);
}

double marginal_threshold(double C0, double nu, double r_eta_star, double b_sup) {
  if (C0 < 1.0) throw std::invalid_argument("marginal_threshold: C0 must be >= 1");
  return C0 * C0 * r_eta_star / nu + b_sup;
}

double bias_sup_over_profiles(const std::vector<NuisanceProfile>& profiles,
                              const PsdOperator& D_ref, const Vec& theta_star) {
  double sup = 0.0;
  for (const auto& pr : profiles)
    sup = std::max(sup, (D_ref.matrix() * (pr.theta_eta - theta_star)).norm());
  return sup;
}

}  // namespace sls
