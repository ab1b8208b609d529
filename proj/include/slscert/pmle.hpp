#pragma once

#include <cstdint>

#include "slscert/model.hpp"

namespace sls {

struct PmleResult {
  Vec maximizer;
  double objective_at_max = 0.0;
  double grad_norm = 0.0;
  PsdOperator FG_at_max;
  int iterations = 0;
  bool converged = false;
};

// Concentration geometry of the penalized estimator: pG = tr(DG^{-2} V^2),
// lambdaG the top eigenvalue of the D-whitened variance, rG the deviation
// radius at exponent x, n_eff the smallest eigenvalue of DG^2.
struct ConcentrationSpec {
  double pG = 0.0;
  double lambdaG = 0.0;
  double x = 0.0;
  double rG = 0.0;
  double nu = 2.0 / 3.0;
  double n_eff = 0.0;
};

struct BiasCertificate {
  PsdOperator Q;
  double bG = 0.0;
  double delta_star = 0.0;
  double bound = 0.0;
  double refined_residual_bound = 0.0;
};

struct FisherWilksReport {
  double xi_norm2 = 0.0;
  double wilks_residual = 0.0;  // 2 L(u~) - 2 L(ups*) - ||xi||^2
  double wilks_lower = 0.0;
  double wilks_upper = 0.0;
  bool wilks_ok = false;
  double fisher_residual = 0.0;  // ||D (u~ - ups*) - xi||^2
  double fisher_bound = 0.0;
  bool fisher_ok = false;
};

struct HessianStability {
  double delta_plus = 0.0;
  bool sandwich_ok = false;
};

struct RiskCertificate {
  double loss_bound = 0.0;        // high-probability D-norm loss
  double mean_bound = 0.0;        // norm of the conditioned mean error
  double risk_bound = 0.0;        // conditioned quadratic risk
  double bias_variance_sum = 0.0; // pG + bias^2, the clean-regime benchmark
};

// Damped Newton ascent with Armijo backtracking (halving, slope 0.1) and a
// gradient fallback when the Hessian is not SPD. Stops at
// ||grad|| <= 1e-8 (1 + ||u||); throws on non-concavity or after 200 steps.
PmleResult fit(const SlsModel& model, const Vec& init);

ConcentrationSpec concentration_spec(const PsdOperator& DG2, const PsdOperator& V2,
                                     double x, double nu = 2.0 / 3.0);

// Wilks and Fisher expansion residuals with their omega-bounds. grad_noise
// is the whitened score xi = DG^{-1} grad zeta at ups*; DG^2 is taken from
// the model Hessian at population_max.
FisherWilksReport fisher_wilks_certificate(const SlsModel& model, const PmleResult& result,
                                           const Vec& population_max, const Vec& grad_noise,
                                           double omega);

HessianStability hessian_stability(const PsdOperator& FG_star, const PsdOperator& FG_hat,
                                   int n_probes = 1000, std::uint64_t seed = 7);

// bG = ||Q FG^{-1} G^2 ups*|| with FG = F_at_star + G2 (F_at_star is the
// unpenalized information at ups*); bound = bG / (1 - delta_star).
BiasCertificate bias_certificate(const PsdOperator& Q, const Vec& ups_star,
                                 const PsdOperator& G2, const PsdOperator& F_at_star,
                                 double delta_star);

// Sampled estimate of the Hessian variability delta* over the bias vicinity
// {u : ||Q u|| <= bG / nu}. The model must expose the penalized expected
// Hessian through neg_hess. Q must be SPD for the direction sampling.
double estimate_delta_star(const SlsModel& model, const Vec& ups_star, const PsdOperator& Q,
                           int n_directions = 128, std::uint64_t seed = 11,
                           double nu = 2.0 / 3.0);

// bias_norm = ||DG^{-1} G^2 ups*||. C1 scales the e^{-x} remainder; the
// certificate keeps that additive term verbatim.
RiskCertificate risk_certificate(const ConcentrationSpec& spec, double omega,
                                 double delta_star, double bias_norm, double x,
                                 double C1 = 1.0);

}  // namespace sls
