#include "slscert/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "slscert/eio.hpp"
#include "slscert/gauss.hpp"
#include "slscert/marginal.hpp"
#include "slscert/oracle.hpp"
#include "slscert/rng.hpp"
#include "slscert/sobolev.hpp"

namespace sls {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {
      "pmle-cert", "laplace-cert", "marginal-cert", "eio-demo", "gauss-suite", "sobolev-rate"};
  return names;
}

// Every number in report.json carries the slug saying where it came from.
json num(double v, const char* source) { return json{{"source", source}, {"value", v}}; }

json vec_num(const Vec& v, const char* source) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i], source));
  return a;
}

Vec vec_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument(where + ": expected a nonempty array");
  Vec v(Eigen::Index(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw std::invalid_argument(where + ": entries must be numbers");
    v[Eigen::Index(i)] = j[i].get<double>();
  }
  return v;
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Command-specific sections plus the enforced boolean checks; false checks
// become violations and drive exit code 2.
struct Sections {
  json body = json::object();
  json checks = json::object();
  std::vector<std::pair<std::string, std::string>> tables;  // name -> csv text
};

void flatten_numbers(const json& node, const std::string& path, std::string& csv) {
  if (node.is_object()) {
    if (node.size() == 2 && node.contains("value") && node.contains("source") &&
        node.at("value").is_number()) {
      csv += path + "," + fmt(node.at("value").get<double>()) + "," +
             node.at("source").get<std::string>() + "\n";
      return;
    }
    for (auto it = node.begin(); it != node.end(); ++it)
      flatten_numbers(it.value(), path.empty() ? it.key() : path + "." + it.key(), csv);
  } else if (node.is_array()) {
    for (std::size_t i = 0; i < node.size(); ++i)
      flatten_numbers(node[i], path + "[" + std::to_string(i) + "]", csv);
  }
}

std::string numbers_csv(const json& body) {
  std::string csv = "path,value,source\n";
  flatten_numbers(body, "", csv);
  return csv;
}

std::vector<std::array<double, 2>> gaussian_box(const Vec& center, const Mat& cov, double span) {
  std::vector<std::array<double, 2>> box(std::size_t(center.size()));
  for (Eigen::Index i = 0; i < center.size(); ++i) {
    double sd = std::sqrt(std::max(cov(i, i), 1e-300));
    box[std::size_t(i)] = {center[i] - span * sd, center[i] + span * sd};
  }
  return box;
}

int default_grid_resolution(int dim) {
  if (dim <= 1) return 2001;
  if (dim == 2) return 161;
  if (dim == 3) return 41;
  return 17;
}

json laplace_section(const LaplaceReport& rep) {
  json j;
  j["dimA"] = num(rep.dimA, "local effective dimension tr(D^2 F^-1)");
  j["alpha"] = num(rep.alpha, "spectral norm of D F^-1 D");
  j["r"] = num(rep.r, "concentration radius 2 sqrt(dimA) + sqrt(2x)");
  j["omega"] = num(rep.omega, "sampled Bregman remainder sup over the r/nu vicinity");
  j["tau3"] = num(rep.tau3, "sampled third-derivative constant");
  j["tau4"] = num(rep.tau4, "sampled fourth-derivative constant");
  j["omega_tau"] = num(rep.omega_tau, "Taylor-side omega tau3 r / (3 nu)");
  j["diamond2"] = num(rep.diamond2, "omega-family Gaussian defect");
  j["diamond3"] = num(rep.diamond3, "third-order Taylor defect");
  j["diamond4"] = num(rep.diamond4, "fourth-order Taylor defect");
  j["conditions"] = json{{"omega_ok", rep.conditions.omega_ok},
                         {"prod_ok", rep.conditions.prod_ok},
                         {"taylor_ok", rep.conditions.taylor_ok}};
  return j;
}

// ---------------------------------------------------------------- pmle-cert

void run_pmle(const ExperimentConfig& cfg, Sections& s) {
  SlsModel model = model_from_json(cfg.model_spec);
  PmleResult res = fit(model, Vec::Zero(model.dim));

  const PsdOperator& DG2 = res.FG_at_max;
  Mat v2 = DG2.matrix() - model.penalty.matrix();
  PsdOperator V2(0.5 * (v2 + v2.transpose()));
  ConcentrationSpec spec = concentration_spec(DG2, V2, cfg.x);

  SmoothnessProbe probe;
  probe.center = res.maximizer;
  probe.metric = DG2.sqrt_operator();
  probe.radius = spec.rG / spec.nu;
  probe.n_directions = int(cfg.tol("probe_directions", 512));
  probe.seed = cfg.seeds.front();
  double omega = estimate_omega(model, probe);

  json fj;
  fj["converged"] = res.converged;
  fj["iterations"] = num(res.iterations, "newton iterations used by the fit");
  fj["grad_norm"] = num(res.grad_norm, "gradient norm at the maximizer");
  fj["objective"] = num(res.objective_at_max, "penalized objective at the maximizer");
  fj["maximizer"] = vec_num(res.maximizer, "fitted penalized maximizer");
  s.body["fit"] = fj;

  json cj;
  cj["pG"] = num(spec.pG, "effective dimension tr(DG^-2 V^2)");
  cj["lambdaG"] = num(spec.lambdaG, "top eigenvalue of the whitened variance");
  cj["rG"] = num(spec.rG, "deviation radius sqrt(pG) + sqrt(2 x lambdaG)");
  cj["n_eff"] = num(spec.n_eff, "smallest eigenvalue of DG^2");
  cj["nu"] = num(spec.nu, "vicinity inflation constant");
  cj["omega"] = num(omega, "sampled Bregman remainder sup over the rG/nu vicinity");
  s.body["concentration"] = cj;

  s.checks["fit_converged"] = res.converged;
  s.checks["omega_small"] = omega <= 1.0 / 3.0 + 1e-12;

  if (!cfg.model_spec.contains("truth")) return;
  if (cfg.model_spec.value("kind", "") != "linear_gaussian")
    throw std::invalid_argument(
        "config.model_spec.truth: population residuals need kind linear_gaussian");
  Vec truth = vec_from_json(cfg.model_spec.at("truth"), "config.model_spec.truth");
  if (truth.size() != model.dim)
    throw std::invalid_argument("config.model_spec.truth: length must match the model dimension");

  // Constant Hessian: FG = F + G^2 everywhere, so the population maximizer
  // of the penalized mean objective is (F + G^2)^{-1} F truth.
  PsdOperator FG = model.neg_hess(truth);
  Mat fm = FG.matrix() - model.penalty.matrix();
  Mat f_sym = 0.5 * (fm + fm.transpose());
  Vec ups_star = FG.solve(Vec(f_sym * truth));
  Vec xi = FG.inv_sqrt() * model.grad(ups_star);

  FisherWilksReport fw = fisher_wilks_certificate(model, res, ups_star, xi, omega);
  PsdOperator DG = FG.sqrt_operator();
  double delta_star = estimate_delta_star(model, ups_star, DG,
                                          int(cfg.tol("delta_star_directions", 128)),
                                          cfg.seeds.front() + 1);
  BiasCertificate bias = bias_certificate(DG, ups_star, model.penalty, PsdOperator(f_sym),
                                          delta_star);
  RiskCertificate risk = risk_certificate(spec, omega, delta_star, bias.bG, cfg.x);

  json rj;
  rj["xi_norm2"] = num(fw.xi_norm2, "squared whitened score at the population maximizer");
  rj["wilks_residual"] = num(fw.wilks_residual, "observed Wilks expansion residual");
  rj["wilks_lower"] = num(fw.wilks_lower, "omega lower band for the Wilks residual");
  rj["wilks_upper"] = num(fw.wilks_upper, "omega upper band for the Wilks residual");
  rj["fisher_residual"] = num(fw.fisher_residual, "observed Fisher expansion residual");
  rj["fisher_bound"] = num(fw.fisher_bound, "omega bound for the Fisher residual");
  s.body["residuals"] = rj;

  json bj;
  bj["bG"] = num(bias.bG, "penalty-induced bias in the DG norm");
  bj["delta_star"] = num(bias.delta_star, "sampled Hessian variability over the bias vicinity");
  bj["bias_bound"] = num(bias.bound, "bias certificate bG / (1 - delta*)");
  bj["loss_bound"] = num(risk.loss_bound, "high-probability loss bound");
  bj["mean_bound"] = num(risk.mean_bound, "conditioned mean error bound");
  bj["risk_bound"] = num(risk.risk_bound, "conditioned quadratic risk bound");
  bj["bias_variance_sum"] = num(risk.bias_variance_sum, "pG plus squared bias benchmark");
  s.body["bias_risk"] = bj;

  s.checks["wilks_in_band"] = fw.wilks_ok;
  s.checks["fisher_within_bound"] = fw.fisher_ok;
}

// -------------------------------------------------------------- laplace-cert

void run_laplace(const ExperimentConfig& cfg, Sections& s) {
  SlsModel model = model_from_json(cfg.model_spec);
  PmleResult res = fit(model, Vec::Zero(model.dim));
  ProbeConfig pc{int(cfg.tol("probe_directions", 512)), cfg.seeds.front()};
  LaplaceReport rep = laplace_report(model, res.maximizer, cfg.x, pc);

  s.body["laplace"] = laplace_section(rep);
  s.checks["fit_converged"] = res.converged;

  bool want_oracle = cfg.tol("oracle", model.dim <= 4 ? 1.0 : 0.0) > 0.5;
  if (want_oracle && model.dim > 4)
    throw std::invalid_argument("config.tolerances.oracle: grid oracle supports dim <= 4");
  if (!want_oracle) return;

  Mat cov = rep.F.inverse();
  auto box = gaussian_box(rep.center, cov, cfg.tol("box_sd", 8.0));
  int resolution = int(cfg.tol("grid_resolution", default_grid_resolution(model.dim)));
  GridPosterior grid = grid_posterior(model.eval, box, std::vector<int>(box.size(), resolution));
  double tv = total_variation(grid, rep.center, PsdOperator(0.5 * (cov + cov.transpose())));
  TvCertificate cert = tv_certificate(rep, tv);

  json oj;
  oj["tv_observed"] = num(cert.tv_observed, "grid posterior TV against the Laplace Gaussian");
  oj["bound_omega"] = num(cert.bound_omega, "omega-family TV bound 4(diamond2 + e^-x)");
  oj["bound_tau"] = num(cert.bound_tau, "Taylor-family TV bound 4(diamond3 + e^-x)");
  oj["boundary_mass"] = num(grid.boundary_mass_estimate, "posterior mass leak at the grid edge");
  s.body["oracle"] = oj;

  // Each bound is enforced only when its own preconditions hold.
  bool omega_applies = rep.conditions.omega_ok && rep.conditions.prod_ok;
  s.checks["tv_within_omega_bound"] = !omega_applies || cert.holds_omega;
  s.checks["tv_within_taylor_bound"] = !rep.conditions.taylor_ok || cert.holds_tau;
}

// ------------------------------------------------------------- marginal-cert

void run_marginal(const ExperimentConfig& cfg, Sections& s) {
  json mspec = cfg.model_spec;
  if (!mspec.contains("target_dim"))
    throw std::invalid_argument("config.model_spec.target_dim: required for marginal-cert");
  if (!mspec.at("target_dim").is_number_integer())
    throw std::invalid_argument("config.model_spec.target_dim: expected an integer");
  int p = mspec.at("target_dim").get<int>();
  mspec.erase("target_dim");

  SlsModel joint = model_from_json(mspec);
  if (p < 1 || p >= joint.dim)
    throw std::invalid_argument("config.model_spec.target_dim: must split the parameter");

  MarginalProblem mp = make_marginal_problem(joint, p, Vec::Zero(joint.dim));
  BlockOperator blocks = BlockOperator::split(mp.F_full.matrix(), p);
  Separability sep = separability(blocks);

  auto grid = nuisance_grid(mp, int(cfg.tol("grid_per_axis", 21)), cfg.tol("grid_span_sd", -1.0));
  Mat Q = Mat::Identity(p, p);
  MixtureMarginal mix = build_mixture(mp, grid, Q);
  HomogenizationError hom = homogenization_error(mix.profiles, Q, mix.F_ref);

  ProbeConfig pc{int(cfg.tol("probe_directions", 512)), cfg.seeds.front()};
  LaplaceReport full = laplace_report(joint, mp.ups_star, cfg.x, pc);
  double n_eff = full.F.min_eigenvalue();
  double c3 = full.tau3 * std::sqrt(std::max(n_eff, 0.0));

  Vec eta_star = mp.ups_star.tail(joint.dim - p);
  NuisanceProfile prof_star = profile(mp, eta_star, mp.ups_star.head(p));
  Mat pen_tt = joint.penalty.matrix().topLeftCorner(p, p);
  PsdOperator G2_theta(0.5 * (pen_tt + pen_tt.transpose()));

  double C0 = cfg.tol("C0", 1.0);
  double calib = cfg.tol("calib", 1.0);
  MarginalTvTerms terms =
      marginal_tv_bound(full, prof_star, G2_theta, Q, sep.efficient, c3, n_eff, C0, calib);

  double dimA_eta = p - (G2_theta.matrix() * prof_star.F_eta.inverse()).trace();
  double r_eta = 2.0 * std::sqrt(std::max(dimA_eta, 0.0)) + std::sqrt(2.0 * cfg.x);
  double b_sup =
      bias_sup_over_profiles(mix.profiles, sep.efficient.sqrt_operator(), mp.ups_star.head(p));
  double threshold = marginal_threshold(C0, full.nu, r_eta, b_sup);

  json sj;
  sj["rho"] = num(sep.rho, "separability of the information blocks");
  sj["delta_plus"] = num(hom.delta_plus, "curvature homogenization defect over the grid");
  sj["Delta_F"] = num(hom.Delta_F, "weighted nuclear curvature defect");
  sj["homogenization_bound"] = num(hom.bound, "mixture-vs-Gaussian defect bound");
  sj["n_eff"] = num(n_eff, "smallest eigenvalue of the full information");
  sj["c3"] = num(c3, "normalized third-derivative constant tau3 sqrt(n_eff)");
  sj["dimA_eta_star"] = num(dimA_eta, "target effective dimension on the eta* slice");
  sj["r_eta_star"] = num(r_eta, "target concentration radius on the eta* slice");
  sj["bias_sup"] = num(b_sup, "observed profile drift sup over the nuisance grid");
  sj["threshold"] = num(threshold, "marginal concentration threshold");
  s.body["structure"] = sj;

  json tj;
  tj["term_profile"] = num(terms.term_profile, "eta* slice Laplace term");
  tj["term_mix"] = num(terms.term_mix, "mixture aggregation term");
  tj["term_quad"] = num(terms.term_quad, "quadratic remainder term");
  tj["term_tail"] = num(terms.term_tail, "deviation tail e^-x");
  tj["total"] = num(terms.total, "marginal TV bound, all four terms");
  tj["dimA_Q"] = num(terms.dimA_Q, "target effective dimension through Q");
  s.body["tv_bound"] = tj;

  s.checks["separability_sandwich"] = sep.sandwich_ok;
  s.checks["homogenization_contractive"] = hom.delta_plus < 1.0;

  // Mixture CDF trace along the Q radii, for plots and regression diffs.
  double scale = std::sqrt((Q * sep.efficient.inverse() * Q.transpose()).trace());
  std::vector<double> radii;
  for (int k = 1; k <= 32; ++k) radii.push_back(4.0 * scale * k / 32.0);
  std::vector<double> cdf = mixture_cdf(mix.profiles, Q, mp.ups_star.head(p), radii,
                                        int(cfg.tol("n_mc", 100000)), cfg.seeds.front() + 3);
  std::string csv = "radius,mixture_cdf\n";
  for (std::size_t i = 0; i < radii.size(); ++i)
    csv += fmt(radii[i]) + "," + fmt(cdf[i]) + "\n";
  s.tables.emplace_back("mixture_cdf.csv", csv);

  bool want_oracle = cfg.tol("oracle", joint.dim <= 4 ? 1.0 : 0.0) > 0.5;
  if (want_oracle && joint.dim > 4)
    throw std::invalid_argument("config.tolerances.oracle: grid oracle supports dim <= 4");
  if (!want_oracle) return;

  Mat cov = mp.F_full.inverse();
  auto box = gaussian_box(mp.ups_star, cov, cfg.tol("box_sd", 8.0));
  int resolution = int(cfg.tol("grid_resolution", default_grid_resolution(joint.dim)));
  GridPosterior gp = grid_posterior(joint.eval, box, std::vector<int>(box.size(), resolution));

  Mat Qfull = Mat::Zero(p, joint.dim);
  Qfull.leftCols(p) = Q;
  Mat sig = Mat::Identity(joint.dim, joint.dim);
  sig.topLeftCorner(p, p) = sep.efficient.inverse();
  double observed = empirical_tv_elliptic_grid(gp, Qfull, mp.ups_star,
                                               PsdOperator(0.5 * (sig + sig.transpose())),
                                               int(cfg.tol("n_gauss", 200000)),
                                               cfg.seeds.front() + 2);
  json oj;
  oj["tv_observed"] = num(observed, "grid marginal elliptic distance to the efficient Gaussian");
  oj["boundary_mass"] = num(gp.boundary_mass_estimate, "posterior mass leak at the grid edge");
  s.body["oracle"] = oj;
  s.checks["marginal_tv_within_bound"] = observed <= terms.total + 1e-12;
}

// ----------------------------------------------------------------- eio-demo

void run_eio(const ExperimentConfig& cfg, Sections& s) {
  EioProblem prob = eio_problem_from_json(cfg.model_spec);
  int p = prob.p();

  EioState init{plug_in(prob), prob.A_hat};
  WarmStartCheck warm0 = warm_start_check(prob, init);
  EioFit fit = warm0.in_region ? fit_joint(prob, init) : fit_alternating(prob, init);

  Mat Q = Mat::Identity(p, p);
  double calib = cfg.tol("calib", 2.0);
  EioCertificate cert = eio_laplace_certificate(prob, fit, Q, cfg.x, calib);

  SlsModel model = eio_model(prob);
  SmoothnessProbe probe;
  probe.center = fit.state.stacked();
  probe.metric = eio_probe_metric(prob, fit.state);
  probe.radius = cert.r_bar;
  probe.n_directions = int(cfg.tol("probe_directions", 1024));
  probe.seed = cfg.seeds.front();
  SelfConcordance sc = estimate_self_concordance(model, probe, cert.n_eff);
  EioConstants analytic = self_concordance_constants(prob);
  double slack = cfg.tol("constant_slack", 1.0);

  json fj;
  fj["converged"] = fit.info.converged;
  fj["pilot_started_in_region"] = warm0.in_region;
  fj["iterations"] = num(fit.info.iterations, "newton iterations used by the joint fit");
  fj["grad_norm"] = num(fit.info.grad_norm, "gradient norm at the joint maximizer");
  fj["theta"] = vec_num(fit.state.theta, "fitted signal");
  fj["plug_in_gap"] = num((fit.state.theta - init.theta).norm(),
                          "distance from the plug-in signal to the joint fit");
  fj["operator_drift"] = num((fit.state.A - prob.A_hat).norm(),
                             "Frobenius distance from the pilot to the fitted operator");
  s.body["fit"] = fj;

  json cj;
  cj["n_eff"] = num(cert.n_eff, "effective sample size from the target information");
  cj["p_target"] = num(cert.p_target, "target effective dimension");
  cj["q_nuis"] = num(cert.q_nuis, "nuisance effective dimension");
  cj["p_full_bound"] = num(cert.p_full_bound, "joint effective dimension bound");
  cj["r_target"] = num(cert.r_target, "target concentration radius");
  cj["r_bar"] = num(cert.r_bar, "joint concentration radius");
  cj["c3"] = num(cert.c3, "closed-form third-derivative constant 6/mu");
  cj["flag_value"] = num(cert.flag_value, "applicability statistic c3 r_bar / sqrt(n_eff)");
  cj["applicable"] = cert.applicable;
  cj["rho_at_fit"] = num(cert.rho_at_fit, "separability of the information blocks at the fit");
  cj["dominance_ratio"] = num(cert.dominance_ratio, "Frobenius over trace dominance ratio");
  cj["warm_in_region"] = cert.warm.in_region;
  cj["warm_margin_theta"] = num(cert.warm.margin_theta, "warm-start slack on the signal norm");
  cj["warm_margin_residual"] =
      num(cert.warm.margin_residual, "warm-start slack on the residual operator inequality");
  cj["tv_term_profile"] = num(cert.tv.term_profile, "eta* slice Laplace term");
  cj["tv_term_mix"] = num(cert.tv.term_mix, "mixture aggregation term");
  cj["tv_term_quad"] = num(cert.tv.term_quad, "quadratic remainder term");
  cj["tv_term_tail"] = num(cert.tv.term_tail, "deviation tail e^-x");
  cj["tv_total"] = num(cert.tv.total, "marginal TV bound, all four terms");
  cj["dimA_Q"] = num(cert.tv.dimA_Q, "target effective dimension through Q");
  s.body["certificate"] = cj;

  json pj;
  pj["c3_hat"] = num(sc.c3, "sampled normalized third-derivative constant");
  pj["c3_analytic"] = num(analytic.c3, "closed-form constant 6/mu");
  pj["c4_hat"] = num(sc.c4, "sampled normalized fourth-derivative constant");
  pj["c4_analytic"] = num(analytic.c4, "closed-form constant 3/mu^2");
  s.body["probe"] = pj;

  s.checks["fit_converged"] = fit.info.converged;
  s.checks["warm_start_at_fit"] = cert.warm.in_region;
  s.checks["c3_within_analytic"] = sc.c3 <= slack * analytic.c3 + 1e-12;
  s.checks["c4_within_analytic"] = sc.c4 <= slack * analytic.c4 + 1e-12;

  if (cfg.tol("oracle", 1.0) <= 0.5) return;

  int sd = prob.stacked_dim();
  int n_draws = int(cfg.tol("mcmc_draws", 40000));
  SampleSet samples = mcmc_sample(model.eval, fit.state.stacked(), n_draws,
                                  cfg.seeds.front() + 4);
  Mat Qfull = Mat::Zero(p, sd);
  Qfull.leftCols(p).setIdentity();
  Mat sig = Mat::Identity(sd, sd);
  sig.topLeftCorner(p, p) = cert.F_breve.inverse();
  double observed = empirical_tv_elliptic(samples, Qfull, fit.state.stacked(),
                                          PsdOperator(0.5 * (sig + sig.transpose())),
                                          cfg.seeds.front() + 5);
  double ess_min = samples.ess_per_dim.size() ? samples.ess_per_dim.minCoeff() : 1.0;
  double mc_slack = dkw_envelope(std::max(1, int(ess_min)));

  json oj;
  oj["tv_observed"] = num(observed, "sampled marginal elliptic distance to the efficient Gaussian");
  oj["mc_slack"] = num(mc_slack, "DKW envelope at the effective sample size");
  oj["acceptance_rate"] = num(samples.acceptance_rate, "random-walk acceptance rate");
  oj["ess_min"] = num(ess_min, "smallest per-coordinate effective sample size");
  s.body["oracle"] = oj;

  // The TV bound is only claimed when the applicability flag holds; an
  // inapplicable certificate is reported, not counted as a violation.
  if (cert.applicable)
    s.checks["marginal_tv_within_bound"] = observed <= cert.tv.total + mc_slack;
}

// --------------------------------------------------------------- gauss-suite

struct GaussCase {
  int dim = 0;
  double kappa_xi = 0.0, kappa_eta = 0.0;
  double sand_xi = 0.0, sand_eta = 0.0;
  bool sandwich_ok = false;
  double bound = 0.0, mc = 0.0, ratio = 0.0;
  double anti_ratio = 0.0;
};

Vec random_spectrum(CounterRng& rng, int d, int family) {
  Vec lam(d);
  double u = rng.uniform();
  if (family == 0) {
    double gamma = 0.25 + 1.5 * u;
    for (int j = 0; j < d; ++j) lam[j] = std::pow(j + 1.0, -gamma);
  } else if (family == 1) {
    double gamma = 0.1 + 0.8 * u;
    for (int j = 0; j < d; ++j) lam[j] = std::exp(-gamma * j);
  } else {
    lam.setOnes();
    lam[0] = 1.0 + 5.0 * u;
  }
  return lam * (0.5 + rng.uniform());
}

void run_gauss(const ExperimentConfig& cfg, Sections& s) {
  int n_cases = int(cfg.tol("n_cases", 50));
  int mc_samples = int(cfg.tol("mc_samples", 20000));
  double cap = cfg.tol("ratio_cap", 5.0);
  double eps_frac = cfg.tol("epsilon_frac", 0.25);
  std::uint64_t seed = cfg.seeds.front();
  if (n_cases < 1) throw std::invalid_argument("config.tolerances.n_cases: must be positive");

  std::vector<GaussCase> cases;
  cases.resize(std::size_t(n_cases));
  parallel_for(n_cases, [&](int i) {
    CounterRng rng(seed, 1000 + std::uint64_t(i));
    int d = 2 + int(rng.uniform() * 7.0);
    Vec lam_xi = random_spectrum(rng, d, i % 3);

    // Perturbed partner spectrum; kept within +-20% so the comparison bound
    // stays well above the MC noise floor.
    Vec lam_eta(d);
    for (int j = 0; j < d; ++j) lam_eta[j] = lam_xi[j] * (0.8 + 0.4 * rng.uniform());
    std::sort(lam_eta.data(), lam_eta.data() + d, std::greater<double>());

    Vec a = 0.3 * rng.uniform() * rng.normal_vector(d).normalized();

    SpectrumProfile px = kappa_profile(lam_xi);
    SpectrumProfile pe = kappa_profile(lam_eta);
    GaussCase c;
    c.dim = d;
    c.kappa_xi = px.kappa;
    c.kappa_eta = pe.kappa;
    c.sand_xi = px.kappa * std::sqrt(px.Lambda1 * px.Lambda2);
    c.sand_eta = pe.kappa * std::sqrt(pe.Lambda1 * pe.Lambda2);
    c.sandwich_ok = c.sand_xi >= 0.9 && c.sand_xi <= 1.8 && c.sand_eta >= 0.9 && c.sand_eta <= 1.8;

    c.bound = comparison_bound(px, pe, a.squaredNorm(), lambda_l1_diff(px, pe));
    c.mc = mc_ball_sup_distance(PsdOperator::diagonal(lam_xi), PsdOperator::diagonal(lam_eta), a,
                                mc_samples, seed + 7000 + std::uint64_t(i));
    c.ratio = c.bound > 1e-12 ? c.mc / c.bound : 0.0;

    double eps = eps_frac * px.Lambda1;
    AntiConcentrationBand band = anti_concentration_band(px, a, eps, mc_samples,
                                                         seed + 9000 + std::uint64_t(i));
    c.anti_ratio = band.kappa_eps > 1e-12 ? band.band_mass_sup / band.kappa_eps : 0.0;
    cases[std::size_t(i)] = c;
  });

  int sandwich_violations = 0;
  double max_ratio = 0.0, max_anti = 0.0;
  std::string csv =
      "case,dim,kappa_xi,kappa_eta,sandwich_xi,sandwich_eta,bound,mc_distance,ratio,anti_ratio\n";
  for (int i = 0; i < n_cases; ++i) {
    const GaussCase& c = cases[std::size_t(i)];
    if (!c.sandwich_ok) ++sandwich_violations;
    max_ratio = std::max(max_ratio, c.ratio);
    max_anti = std::max(max_anti, c.anti_ratio);
    csv += std::to_string(i) + "," + std::to_string(c.dim) + "," + fmt(c.kappa_xi) + "," +
           fmt(c.kappa_eta) + "," + fmt(c.sand_xi) + "," + fmt(c.sand_eta) + "," + fmt(c.bound) +
           "," + fmt(c.mc) + "," + fmt(c.ratio) + "," + fmt(c.anti_ratio) + "\n";
  }
  s.tables.emplace_back("spectra.csv", csv);

  json gj;
  gj["n_cases"] = num(n_cases, "number of randomized spectrum pairs");
  gj["sandwich_violations"] = num(sandwich_violations, "spectra outside the kappa sandwich");
  gj["max_ratio"] = num(max_ratio, "worst observed MC distance over comparison bound");
  gj["max_anti_ratio"] = num(max_anti, "worst observed band mass over kappa epsilon");
  gj["ratio_cap"] = num(cap, "allowed ratio ceiling");
  s.body["suite"] = gj;

  s.checks["sandwich_all_ok"] = sandwich_violations == 0;
  s.checks["comparison_ratio_capped"] = max_ratio <= cap;
  s.checks["anti_concentration_capped"] = max_anti <= cap;
}

// -------------------------------------------------------------- sobolev-rate

void run_sobolev(const ExperimentConfig& cfg, Sections& s) {
  const json& mspec = cfg.model_spec;
  RateConfig rc;
  rc.s0 = mspec.value("s0", 1.0);
  rc.C0_ball = mspec.value("C0", 1.0);
  rc.reps = mspec.value("reps", 200);
  rc.p = mspec.value("p", 256);
  rc.mismatch_s = mspec.value("mismatch_s", 0.0);
  rc.seed = cfg.seeds.front();
  if (mspec.contains("n_list")) {
    Vec nl = vec_from_json(mspec.at("n_list"), "config.model_spec.n_list");
    rc.n_list.assign(nl.data(), nl.data() + nl.size());
  } else {
    for (int k = 7; k <= 13; ++k) rc.n_list.push_back(std::pow(2.0, k));
  }

  RateResult rr = rate_experiment(rc);
  double slope_tol = cfg.tol("slope_tol", 0.15);

  double n_max = rc.n_list.back();
  double w_aware = aware_scale(rc.s0, rc.C0_ball, n_max);
  double w_used = rc.mismatch_s > 0.0 ? mismatch_scale(rc.mismatch_s, rc.s0, rc.C0_ball, n_max)
                                      : w_aware;
  Vec g2 = rc.mismatch_s > 0.0 ? mismatch_penalty(rc.mismatch_s, w_used, rc.p)
                               : sobolev_penalty(rc.s0, rc.C0_ball, w_used, rc.p);
  double p_at_w = effective_dim_of_scale(PsdOperator::diagonal(Vec::Constant(rc.p, n_max)),
                                         PsdOperator::diagonal(g2 / w_used), w_used);

  json jj;
  jj["slope"] = num(rr.slope, "log-log regression slope of the mean squared error");
  jj["slope_se"] = num(rr.slope_se, "standard error of the regression slope");
  jj["target_slope"] = num(rr.target_slope, "minimax exponent -2 s0 / (2 s0 + 1)");
  jj["intercept"] = num(rr.intercept, "log-log regression intercept");
  jj["scale_at_n_max"] = num(w_used, "penalty scale used at the largest sample size");
  jj["aware_scale_at_n_max"] = num(w_aware, "smoothness-aware scale at the largest sample size");
  jj["effective_dim_at_n_max"] = num(p_at_w, "effective dimension at the chosen scale");
  s.body["rate"] = jj;

  std::string csv = "n,mean_mse,se\n";
  for (const RatePoint& pt : rr.per_n)
    csv += fmt(pt.n) + "," + fmt(pt.mean_mse) + "," + fmt(pt.se) + "\n";
  s.tables.emplace_back("rate.csv", csv);

  s.checks["slope_matches_rate"] = std::abs(rr.slope - rr.target_slope) <= slope_tol;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("harness: cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("harness: short write to " + path.string());
}

}  // namespace

// --------------------------------------------------------------- config I/O

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a json object");
  static const std::vector<std::string> known = {"command",    "model_spec", "seeds",
                                                 "x",          "output_dir", "tolerances"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw std::invalid_argument("config." + it.key() + ": unknown key");

  ExperimentConfig cfg;
  if (!j.contains("command") || !j.at("command").is_string())
    throw std::invalid_argument("config.command: required string");
  cfg.command = j.at("command").get<std::string>();
  const auto& names = command_names();
  if (std::find(names.begin(), names.end(), cfg.command) == names.end())
    throw std::invalid_argument("config.command: unknown command '" + cfg.command + "'");

  bool needs_model = cfg.command == "pmle-cert" || cfg.command == "laplace-cert" ||
                     cfg.command == "marginal-cert" || cfg.command == "eio-demo";
  if (j.contains("model_spec")) {
    if (!j.at("model_spec").is_object())
      throw std::invalid_argument("config.model_spec: expected an object");
    cfg.model_spec = j.at("model_spec");
  } else if (needs_model) {
    throw std::invalid_argument("config.model_spec: required for " + cfg.command);
  } else {
    cfg.model_spec = json::object();
  }

  if (j.contains("seeds")) {
    const json& sj = j.at("seeds");
    if (!sj.is_array() || sj.empty())
      throw std::invalid_argument("config.seeds: expected a nonempty array");
    cfg.seeds.clear();
    for (const auto& e : sj) {
      if (!e.is_number_integer() || e.get<long long>() < 0)
        throw std::invalid_argument("config.seeds: entries must be nonnegative integers");
      cfg.seeds.push_back(e.get<std::uint64_t>());
    }
  }

  if (j.contains("x")) {
    if (!j.at("x").is_number() || !(j.at("x").get<double>() > 0.0))
      throw std::invalid_argument("config.x: expected a positive number");
    cfg.x = j.at("x").get<double>();
  }

  if (j.contains("output_dir")) {
    if (!j.at("output_dir").is_string() || j.at("output_dir").get<std::string>().empty())
      throw std::invalid_argument("config.output_dir: expected a nonempty string");
    cfg.output_dir = j.at("output_dir").get<std::string>();
  }

  if (j.contains("tolerances")) {
    if (!j.at("tolerances").is_object())
      throw std::invalid_argument("config.tolerances: expected an object");
    for (auto it = j.at("tolerances").begin(); it != j.at("tolerances").end(); ++it)
      if (!it.value().is_number())
        throw std::invalid_argument("config.tolerances." + it.key() + ": expected a number");
    cfg.tolerances = j.at("tolerances");
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config: " + path + " is not valid json: " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json j;
  j["command"] = command;
  j["model_spec"] = model_spec;
  j["seeds"] = seeds;
  j["x"] = x;
  j["output_dir"] = output_dir;
  j["tolerances"] = tolerances;
  return j;
}

double ExperimentConfig::tol(const std::string& name, double fallback) const {
  if (!tolerances.contains(name)) return fallback;
  return tolerances.at(name).get<double>();
}

// ------------------------------------------------------------------ threads

int thread_count() {
  const char* env = std::getenv("SLSCERT_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  if (n < 1) return 1;
  return std::min(n, 64);
}

void parallel_for(int n, const std::function<void(int)>& body) {
  int workers = std::min(thread_count(), std::max(n, 1));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto drain = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(std::size_t(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(drain);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------- run

RunResult run(const ExperimentConfig& cfg) {
  Sections s;
  if (cfg.command == "pmle-cert")
    run_pmle(cfg, s);
  else if (cfg.command == "laplace-cert")
    run_laplace(cfg, s);
  else if (cfg.command == "marginal-cert")
    run_marginal(cfg, s);
  else if (cfg.command == "eio-demo")
    run_eio(cfg, s);
  else if (cfg.command == "gauss-suite")
    run_gauss(cfg, s);
  else if (cfg.command == "sobolev-rate")
    run_sobolev(cfg, s);
  else
    throw std::invalid_argument("config.command: unknown command '" + cfg.command + "'");

  json report;
  report["command"] = cfg.command;
  report["version"] = kHarnessVersion;
  report["inputs"] = json{{"x", num(cfg.x, "config.x")},
                          {"seed", num(double(cfg.seeds.front()), "config.seeds[0]")}};
  report["checks"] = s.checks;
  json violations = json::array();
  for (auto it = s.checks.begin(); it != s.checks.end(); ++it)
    if (!it.value().get<bool>()) violations.push_back(it.key());
  report["violations"] = violations;
  for (auto it = s.body.begin(); it != s.body.end(); ++it) report[it.key()] = it.value();

  s.tables.emplace_back("report_numbers.csv", numbers_csv(s.body));
  std::sort(s.tables.begin(), s.tables.end());

  fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir / "tables", ec);
  if (ec) throw std::runtime_error("config.output_dir: cannot create " + dir.string());

  RunResult rr;
  rr.report = report;
  rr.exit_code = violations.empty() ? 0 : 2;

  json manifest;
  manifest["command"] = cfg.command;
  manifest["version"] = kHarnessVersion;
  manifest["config"] = cfg.to_json();
  json outputs = json::array();
  outputs.push_back("report.json");
  for (const auto& [name, text] : s.tables) outputs.push_back("tables/" + name);
  manifest["outputs"] = outputs;

  write_text(dir / "report.json", report.dump(2) + "\n");
  rr.files.push_back("report.json");
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  rr.files.push_back("manifest.json");
  for (const auto& [name, text] : s.tables) {
    write_text(dir / "tables" / name, text);
    rr.files.push_back("tables/" + name);
  }
  return rr;
}

// ------------------------------------------------------------- compare_runs

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("compare: missing " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double leaf_value(const json& node) {
  if (node.is_object() && node.contains("value")) return node.at("value").get<double>();
  return node.get<double>();
}

bool is_numeric_leaf(const json& node) {
  if (node.is_number()) return true;
  return node.is_object() && node.size() == 2 && node.contains("value") &&
         node.contains("source") && node.at("value").is_number();
}

void walk(const std::string& path, const json& a, const json& b, DiffReport& out) {
  if (is_numeric_leaf(a) && is_numeric_leaf(b)) {
    double va = leaf_value(a), vb = leaf_value(b);
    if (va == vb) return;
    double rel = std::abs(va - vb) / std::max({1.0, std::abs(va), std::abs(vb)});
    DiffEntry e;
    e.path = path;
    e.a = va;
    e.b = vb;
    e.severity = rel <= 1e-12 ? "negligible" : (rel <= 1e-6 ? "small" : "large");
    out.numeric.push_back(e);
    return;
  }
  if (a.type() != b.type()) {
    out.structural.push_back(path + ": type changed");
    return;
  }
  if (a.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it) {
      std::string sub = path.empty() ? it.key() : path + "." + it.key();
      if (!b.contains(it.key()))
        out.structural.push_back(sub + ": only in first run");
      else
        walk(sub, it.value(), b.at(it.key()), out);
    }
    for (auto it = b.begin(); it != b.end(); ++it)
      if (!a.contains(it.key()))
        out.structural.push_back((path.empty() ? it.key() : path + "." + it.key()) +
                                 ": only in second run");
    return;
  }
  if (a.is_array()) {
    std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i)
      walk(path + "[" + std::to_string(i) + "]", a[i], b[i], out);
    if (a.size() != b.size()) out.structural.push_back(path + ": array length changed");
    return;
  }
  if (a != b) out.structural.push_back(path + ": " + a.dump() + " vs " + b.dump());
}

}  // namespace

DiffReport compare_runs(const std::string& dir_a, const std::string& dir_b) {
  fs::path pa(dir_a), pb(dir_b);
  std::string raw_a = read_file(pa / "report.json");
  std::string raw_b = read_file(pb / "report.json");
  json ja = json::parse(raw_a);
  json jb = json::parse(raw_b);
  json ma = json::parse(read_file(pa / "manifest.json"));
  json mb = json::parse(read_file(pb / "manifest.json"));

  std::string ca = ma.value("command", ""), cb = mb.value("command", "");
  if (ca != cb)
    throw std::runtime_error("compare: manifest command mismatch: '" + ca + "' vs '" + cb + "'");

  DiffReport rep;
  rep.identical_bytes = raw_a == raw_b;
  std::string va = ma.value("version", ""), vb = mb.value("version", "");
  rep.version_match = va == vb;
  if (!rep.version_match)
    rep.note = "runs come from different versions: '" + va + "' vs '" + vb + "'";
  if (!rep.identical_bytes) walk("", ja, jb, rep);
  return rep;
}

}  // namespace sls
