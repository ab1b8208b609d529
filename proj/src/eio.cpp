#include "slscert/eio.hpp"

#include <cmath>
#include <sstream>

namespace sls {

namespace {

Mat k2_or_zero(const EioProblem& prob, int m) {
  if (prob.K2.empty()) return Mat::Zero(prob.p(), prob.p());
  return prob.K2[std::size_t(m)].matrix();
}

}  // namespace

void EioProblem::validate() const {
  if (A_hat.rows() != z.size())
    throw std::invalid_argument("eio: pilot row count != image length");
  if (A_hat.cols() < 1 || A_hat.rows() < 1) throw std::invalid_argument("eio: empty pilot");
  if (!(mu > 0.0)) throw std::invalid_argument("eio: mu must be positive");
  if (G2.dim() != p()) throw std::invalid_argument("eio: G2 dim != p");
  if (G02.dim() != p()) throw std::invalid_argument("eio: G02 dim != p");
  if (!psd_leq(G02, G2)) throw std::invalid_argument("eio: G02 exceeds G2 in the PSD order");
  if (!K2.empty() && int(K2.size()) != q())
    throw std::invalid_argument("eio: K2 must have one block per image coordinate");
  for (const auto& k : K2)
    if (k.dim() != p()) throw std::invalid_argument("eio: K2 block dim != p");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("eio: rho must be in (0,1)");
  if (!z.allFinite() || !A_hat.allFinite())
    throw std::invalid_argument("eio: non-finite problem data");
}

Vec EioState::stacked() const {
  const int p = int(theta.size());
  const int q = int(A.rows());
  Vec v(p * (1 + q));
  v.head(p) = theta;
  for (int m = 0; m < q; ++m) v.segment(p + m * p, p) = A.row(m).transpose();
  return v;
}

EioState EioState::unstack(const Vec& v, int p, int q) {
  if (v.size() != p * (1 + q)) throw std::invalid_argument("eio: stacked vector length mismatch");
  EioState s;
  s.theta = v.head(p);
  s.A = Mat(q, p);
  for (int m = 0; m < q; ++m) s.A.row(m) = v.segment(p + m * p, p).transpose();
  return s;
}

Mat EioDerivatives::stacked_information() const {
  const int p = int(F_theta_theta.rows());
  const int q = int(F_AA.size());
  Mat H = Mat::Zero(p * (1 + q), p * (1 + q));
  H.topLeftCorner(p, p) = F_theta_theta;
  for (int m = 0; m < q; ++m) {
    const int off = p + m * p;
    H.block(0, off, p, p) = F_theta_A[std::size_t(m)];
    H.block(off, 0, p, p) = F_theta_A[std::size_t(m)].transpose();
    H.block(off, off, p, p) = F_AA[std::size_t(m)];
  }
  return H;
}

BlockOperator EioDerivatives::blocks() const {
  const int p = int(F_theta_theta.rows());
  const int q = int(F_AA.size());
  BlockOperator b;
  b.tt = F_theta_theta;
  b.tn = Mat::Zero(p, p * q);
  b.nn = Mat::Zero(p * q, p * q);
  for (int m = 0; m < q; ++m) {
    b.tn.block(0, m * p, p, p) = F_theta_A[std::size_t(m)];
    b.nn.block(m * p, m * p, p, p) = F_AA[std::size_t(m)];
  }
  return b;
}

EioDerivatives objective_grad_hess(const EioProblem& prob, const EioState& state) {
  prob.validate();
  const int p = prob.p(), q = prob.q();
  if (state.theta.size() != p || state.A.rows() != q || state.A.cols() != p)
    throw std::invalid_argument("eio: state shape mismatch");

  const Vec resid = prob.z - state.A * state.theta;  // z_m - A_m . theta
  const Mat drift = state.A - prob.A_hat;

  EioDerivatives d;
  d.f = -0.5 * resid.squaredNorm() - 0.5 * prob.mu * prob.mu * drift.squaredNorm() -
        0.5 * state.theta.dot(prob.G2.matrix() * state.theta);
  d.grad = Vec(prob.stacked_dim());
  d.grad.head(p) = state.A.transpose() * resid - prob.G2.matrix() * state.theta;

  d.F_theta_theta = state.A.transpose() * state.A + prob.G2.matrix();
  const Mat outer = state.theta * state.theta.transpose();
  d.F_AA.reserve(std::size_t(q));
  d.F_theta_A.reserve(std::size_t(q));
  for (int m = 0; m < q; ++m) {
    const Mat K2m = k2_or_zero(prob, m);
    const Vec Am = state.A.row(m).transpose();
    d.f -= 0.5 * Am.dot(K2m * Am);
    d.grad.segment(p + m * p, p) =
        resid[m] * state.theta - prob.mu * prob.mu * drift.row(m).transpose() - K2m * Am;
    d.F_AA.push_back(outer + prob.mu * prob.mu * Mat::Identity(p, p) + K2m);
    d.F_theta_A.push_back(-resid[m] * Mat::Identity(p, p) + Am * state.theta.transpose());
  }
  return d;
}

WarmStartCheck warm_start_check(const EioProblem& prob, const EioState& state) {
  prob.validate();
  const double cap = prob.rho * prob.mu * prob.mu;
  WarmStartCheck w;
  w.margin_theta = cap - 4.0 * state.theta.squaredNorm();

  const double resid2 = (state.A * state.theta - prob.z).squaredNorm();
  Mat M = cap * (state.A.transpose() * state.A + 2.0 * prob.G02.matrix());
  M.diagonal().array() -= 4.0 * resid2;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (M + M.transpose()));
  w.margin_residual = es.eigenvalues().minCoeff();

  const double tol_t = 1e-9 * (1.0 + cap);
  const double tol_r = 1e-9 * (1.0 + M.cwiseAbs().maxCoeff());
  w.in_region = w.margin_theta >= -tol_t && w.margin_residual >= -tol_r;
  return w;
}

EioDims dims(const EioProblem& prob, const EioState& state) {
  prob.validate();
  const int p = prob.p();
  const Mat AtA = state.A.transpose() * state.A;
  PsdOperator penalized(AtA + prob.G2.matrix());
  Mat inv;
  try {
    inv = penalized.inverse();
  } catch (const std::runtime_error&) {
    throw std::runtime_error("eio dims: A'A + G^2 is singular");
  }

  EioDims d;
  d.p_target = ((AtA + prob.G02.matrix()) * inv).trace();
  for (int m = 0; m < prob.q(); ++m) {
    Mat block = prob.mu * prob.mu * Mat::Identity(p, p) + k2_or_zero(prob, m);
    d.q_nuis += prob.mu * prob.mu * PsdOperator(block).inverse().trace();
  }
  d.p_full_bound = d.p_target / (1.0 - prob.rho) +
                   (1.0 + prob.rho / 4.0) * d.q_nuis / (1.0 - prob.rho);
  return d;
}

Vec plug_in(const EioProblem& prob) {
  prob.validate();
  PsdOperator system(prob.A_hat.transpose() * prob.A_hat + prob.G2.matrix());
  return system.solve(Vec(prob.A_hat.transpose() * prob.z));
}

EioFit fit_joint(const EioProblem& prob, const EioState& init) {
  prob.validate();
  if (!warm_start_check(prob, init).in_region)
    throw std::invalid_argument("eio fit: initial state outside the warm-start region");

  EioState cur = init;
  EioDerivatives d = objective_grad_hess(prob, cur);
  const int max_iter = 200;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    Vec x = cur.stacked();
    if (d.grad.norm() <= 1e-8 * (1.0 + x.norm())) break;

    Mat H = d.stacked_information();
    Eigen::LDLT<Mat> ldlt(H);
    Vec dir;
    if (ldlt.info() == Eigen::Success && ldlt.isPositive())
      dir = ldlt.solve(d.grad);
    else
      dir = d.grad / std::max(1.0, H.cwiseAbs().maxCoeff());
    const double slope = d.grad.dot(dir);
    // Newton decrement at the rounding floor: extreme mu puts a mu^2 * eps
    // noise floor under the raw gradient norm, so the decrement is the
    // scale-free convergence signal.
    if (std::abs(slope) <= 1e-16 * (1.0 + std::abs(d.f))) break;
    if (!(slope > 0.0)) {
      std::ostringstream os;
      os << "eio fit: ascent direction lost at iteration " << iter
         << " (grad.dir = " << slope << ")";
      throw std::runtime_error(os.str());
    }

    double t = 1.0;
    bool accepted = false;
    for (int half = 0; half < 60; ++half, t *= 0.5) {
      EioState cand = EioState::unstack(x + t * dir, prob.p(), prob.q());
      if (!warm_start_check(prob, cand).in_region) continue;
      EioDerivatives dc = objective_grad_hess(prob, cand);
      if (dc.f >= d.f + 0.1 * t * slope) {
        cur = cand;
        d = dc;
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw std::runtime_error(
          "eio fit: step collapsed at the warm-start boundary; enlarge rho or improve the pilot");
  }
  if (iter == max_iter)
    throw std::runtime_error("eio fit: no convergence after 200 Newton steps");

  EioFit out;
  out.state = cur;
  out.info.maximizer = cur.stacked();
  out.info.objective_at_max = d.f;
  out.info.grad_norm = d.grad.norm();
  out.info.FG_at_max = PsdOperator(d.stacked_information());
  out.info.iterations = iter;
  out.info.converged = true;
  return out;
}

EioFit fit_alternating(const EioProblem& prob, const EioState& init, int max_sweeps) {
  prob.validate();
  const int p = prob.p(), q = prob.q();
  EioState cur = init;
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    PsdOperator theta_sys(cur.A.transpose() * cur.A + prob.G2.matrix());
    cur.theta = theta_sys.solve(Vec(cur.A.transpose() * prob.z));
    const Mat outer = cur.theta * cur.theta.transpose();
    for (int m = 0; m < q; ++m) {
      Mat sys = outer + prob.mu * prob.mu * Mat::Identity(p, p) + k2_or_zero(prob, m);
      Vec rhs = prob.z[m] * cur.theta + prob.mu * prob.mu * prob.A_hat.row(m).transpose();
      cur.A.row(m) = sys.ldlt().solve(rhs).transpose();
    }
    EioDerivatives d = objective_grad_hess(prob, cur);
    if (d.grad.norm() <= 1e-8 * (1.0 + cur.stacked().norm())) {
      EioFit out;
      out.state = cur;
      out.info.maximizer = cur.stacked();
      out.info.objective_at_max = d.f;
      out.info.grad_norm = d.grad.norm();
      out.info.FG_at_max = PsdOperator(d.stacked_information());
      out.info.iterations = sweep + 1;
      out.info.converged = true;
      return out;
    }
  }
  throw std::runtime_error("eio fit: alternation did not converge");
}

EioConstants self_concordance_constants(const EioProblem& prob) {
  prob.validate();
  EioConstants c;
  c.c3 = 6.0 / prob.mu;
  c.c4 = 3.0 / (prob.mu * prob.mu);
  return c;
}

SlsModel eio_model(const EioProblem& prob) {
  prob.validate();
  const int p = prob.p(), q = prob.q();
  Mat pen = Mat::Zero(prob.stacked_dim(), prob.stacked_dim());
  pen.topLeftCorner(p, p) = prob.G2.matrix();
  for (int m = 0; m < q; ++m)
    pen.block(p + m * p, p + m * p, p, p) = k2_or_zero(prob, m);

  SlsModel m;
  m.dim = prob.stacked_dim();
  m.penalty = PsdOperator(pen);
  m.smooth_part = [prob, p, q](const Vec& v) {
    EioState s = EioState::unstack(v, p, q);
    return -0.5 * (prob.z - s.A * s.theta).squaredNorm() -
           0.5 * prob.mu * prob.mu * (s.A - prob.A_hat).squaredNorm();
  };
  m.eval = [smooth = m.smooth_part, pen](const Vec& v) {
    return smooth(v) - 0.5 * v.dot(pen * v);
  };
  m.grad = [prob, p, q](const Vec& v) {
    return objective_grad_hess(prob, EioState::unstack(v, p, q)).grad;
  };
  m.neg_hess = [prob, p, q](const Vec& v) {
    return PsdOperator::unchecked(
        objective_grad_hess(prob, EioState::unstack(v, p, q)).stacked_information());
  };
  return m;
}

PsdOperator eio_probe_metric(const EioProblem& prob, const EioState& state) {
  prob.validate();
  const int p = prob.p();
  Mat D2 = Mat::Zero(prob.stacked_dim(), prob.stacked_dim());
  D2.topLeftCorner(p, p) = state.A.transpose() * state.A + prob.G02.matrix();
  D2.diagonal().tail(p * prob.q()).setConstant(prob.mu * prob.mu);
  return PsdOperator(D2).sqrt_operator();
}

double eio_n_eff(const EioProblem& prob, const EioState& state) {
  prob.validate();
  PsdOperator D2(state.A.transpose() * state.A + prob.G02.matrix());
  const double lmin = D2.min_eigenvalue();
  if (lmin <= D2.psd_tol())
    throw std::runtime_error("eio: effective sample size undefined, A'A + G0^2 singular");
  return lmin;
}

EioProblem ingest_regression(const Mat& X, const Vec& Y, const FeatureMap& psi,
                             const FeatureMap& phi, double sigma, double sigma_X) {
  const int n = int(X.rows());
  if (n == 0) throw std::invalid_argument("eio ingest: empty design");
  if (Y.size() != n) throw std::invalid_argument("eio ingest: response length != design rows");
  if (!(sigma > 0.0) || !(sigma_X > 0.0))
    throw std::invalid_argument("eio ingest: scales must be positive");

  const Vec psi0 = psi(X.row(0).transpose());
  const Vec phi0 = phi(X.row(0).transpose());
  const int p = int(psi0.size()), q = int(phi0.size());

  EioProblem prob;
  prob.A_hat = Mat::Zero(q, p);
  prob.z = Vec::Zero(q);
  for (int i = 0; i < n; ++i) {
    const Vec ps = i ? psi(X.row(i).transpose()) : psi0;
    const Vec ph = i ? phi(X.row(i).transpose()) : phi0;
    if (!ps.allFinite() || !ph.allFinite())
      throw std::invalid_argument("eio ingest: non-finite feature evaluation");
    prob.A_hat += ph * ps.transpose();
    prob.z += (Y[i] / sigma) * ph;
  }
  prob.mu = std::sqrt(double(n)) / sigma_X;
  prob.sigma = sigma;
  prob.G2 = PsdOperator::identity(p);
  prob.G02 = PsdOperator::identity(p);
  return prob;
}

nlohmann::json EioCertificate::to_json() const {
  return nlohmann::json{
      {"n_eff", n_eff},
      {"p_target", p_target},
      {"q_nuis", q_nuis},
      {"p_full_bound", p_full_bound},
      {"r_target", r_target},
      {"r_bar", r_bar},
      {"c3", c3},
      {"flag_value", flag_value},
      {"applicable", applicable},
      {"rho_at_fit", rho_at_fit},
      {"dominance_ratio", dominance_ratio},
      {"warm_in_region", warm.in_region},
      {"warm_margin_theta", warm.margin_theta},
      {"warm_margin_residual", warm.margin_residual},
      {"F_breve", F_breve.to_json()},
      {"tv_term_profile", tv.term_profile},
      {"tv_term_mix", tv.term_mix},
      {"tv_term_quad", tv.term_quad},
      {"tv_term_tail", tv.term_tail},
      {"tv_total", tv.total},
      {"dimA_Q", tv.dimA_Q},
      {"x", x},
  };
}

EioCertificate eio_laplace_certificate(const EioProblem& prob, const EioFit& fit,
                                       const Mat& Q, double x, double calib) {
  prob.validate();
  if (Q.cols() != prob.p()) throw std::invalid_argument("eio certificate: Q columns != p");

  EioCertificate cert;
  cert.x = x;
  cert.warm = warm_start_check(prob, fit.state);

  // Dimension budget and effective sample size are design quantities: they
  // are evaluated at the pilot operator, not the fitted one, so the
  // certificate is computable before any refitting.
  EioState pilot{fit.state.theta, prob.A_hat};
  cert.n_eff = eio_n_eff(prob, pilot);

  const EioDims d = dims(prob, pilot);
  cert.p_target = d.p_target;
  cert.q_nuis = d.q_nuis;
  cert.p_full_bound = d.p_full_bound;
  cert.r_target = 2.0 * std::sqrt(d.p_target) + std::sqrt(2.0 * x);
  cert.r_bar = 2.0 * std::sqrt(d.p_full_bound) + std::sqrt(2.0 * x);
  cert.c3 = 6.0 / prob.mu;
  cert.flag_value = cert.c3 * cert.r_bar / std::sqrt(cert.n_eff);
  cert.applicable = cert.flag_value <= 1.0 / 3.0 + 1e-12;

  const EioDerivatives der = objective_grad_hess(prob, fit.state);
  const BlockOperator blocks = der.blocks();
  cert.rho_at_fit = separability_rho(blocks);
  cert.F_breve = schur_efficient(blocks);

  const Mat BQraw = Q * PsdOperator(der.F_theta_theta).inverse() * Q.transpose();
  const double top = spectral_norm(BQraw);
  if (top <= 0.0) throw std::runtime_error("eio certificate: Q F^{-1} Q' vanishes");
  const Mat BQ = BQraw / top;
  const double dimQ = BQ.trace();
  cert.dominance_ratio = BQ.squaredNorm() / dimQ;

  cert.tv = marginal_tv_terms(cert.c3, cert.r_target, cert.p_target, cert.r_bar, dimQ,
                              cert.n_eff, x, calib);
  return cert;
}

namespace {

Mat eio_mat_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("eio: matrix JSON must be rows");
  const int rows = int(j.size());
  const int cols = int(j[0].size());
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (int(j[i].size()) != cols) throw std::invalid_argument("eio: ragged matrix JSON");
    for (int k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

PsdOperator eio_penalty_from_json(const nlohmann::json& j, int dim) {
  if (j.is_number()) return PsdOperator(j.get<double>() * Mat::Identity(dim, dim));
  if (j.is_object()) return PsdOperator::from_json(j);
  return PsdOperator(eio_mat_from_json(j));
}

}  // namespace

EioProblem eio_problem_from_json(const nlohmann::json& payload) {
  EioProblem prob;
  prob.A_hat = eio_mat_from_json(payload.at("A_hat"));
  const auto& zj = payload.at("z");
  prob.z = Vec(zj.size());
  for (std::size_t i = 0; i < zj.size(); ++i) prob.z[int(i)] = zj[i].get<double>();
  prob.mu = payload.at("mu").get<double>();
  prob.G2 = eio_penalty_from_json(payload.at("G2"), prob.p());
  prob.G02 = payload.contains("G02") ? eio_penalty_from_json(payload.at("G02"), prob.p())
                                     : prob.G2;
  if (payload.contains("K2"))
    for (const auto& k : payload.at("K2")) prob.K2.push_back(eio_penalty_from_json(k, prob.p()));
  prob.rho = payload.value("rho", 0.5);
  prob.sigma = payload.value("sigma", 1.0);
  prob.validate();
  return prob;
}

SlsModel eio_model_from_json(const nlohmann::json& payload) {
  return eio_model(eio_problem_from_json(payload));
}

}  // namespace sls
