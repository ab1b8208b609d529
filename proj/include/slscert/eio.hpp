#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "slscert/marginal.hpp"
#include "slscert/model.hpp"
#include "slscert/pmle.hpp"

namespace sls {

// Error-in-operator inverse problem: z = A theta + noise where the operator A
// is itself only known through a pilot A_hat. The rows of A are nuisance
// coordinates; the stacked parameter is (theta, A_1, ..., A_q).
struct EioProblem {
  Vec z;                        // image vector, length q
  Mat A_hat;                    // pilot, q x p
  double mu = 1.0;              // operator-noise scale
  PsdOperator G2;               // signal penalty
  PsdOperator G02;              // identifiability floor, G02 <= G2
  std::vector<PsdOperator> K2;  // per-row smoothness blocks; empty = none
  double rho = 0.5;             // warm-start parameter in (0,1)
  double sigma = 1.0;           // recorded observation scale; z is stored pre-divided

  int p() const { return int(A_hat.cols()); }
  int q() const { return int(A_hat.rows()); }
  int stacked_dim() const { return p() * (1 + q()); }

  void validate() const;
};

struct EioState {
  Vec theta;
  Mat A;

  Vec stacked() const;
  static EioState unstack(const Vec& v, int p, int q);
};

// Value, gradient and information blocks at a state. The information is the
// negative Hessian: the theta block depends only on A, the A_m blocks only on
// theta, and distinct rows never couple.
struct EioDerivatives {
  double f = 0.0;
  Vec grad;                    // stacked layout
  Mat F_theta_theta;           // A^T A + G^2
  std::vector<Mat> F_AA;       // theta theta^T + mu^2 I + K_m^2, one per row
  std::vector<Mat> F_theta_A;  // (A_m . theta - z_m) I + A_m theta^T

  Mat stacked_information() const;
  BlockOperator blocks() const;  // (theta | all rows) split
};

EioDerivatives objective_grad_hess(const EioProblem& prob, const EioState& state);

struct WarmStartCheck {
  bool in_region = false;
  double margin_theta = 0.0;     // rho mu^2 - 4 ||theta||^2
  double margin_residual = 0.0;  // min eig of rho mu^2 (A'A + 2 G0^2) - 4 ||A theta - z||^2 I
};

WarmStartCheck warm_start_check(const EioProblem& prob, const EioState& state);

struct EioDims {
  double p_target = 0.0;      // tr{(A'A + G0^2)(A'A + G^2)^{-1}}
  double q_nuis = 0.0;        // sum_m mu^2 tr(mu^2 I + K_m^2)^{-1}
  double p_full_bound = 0.0;  // p_target/(1-rho) + (1+rho/4) q_nuis/(1-rho)
};

EioDims dims(const EioProblem& prob, const EioState& state);

// (A_hat' A_hat + G^2)^{-1} A_hat' z, the baseline that trusts the pilot.
Vec plug_in(const EioProblem& prob);

struct EioFit {
  EioState state;
  PmleResult info;  // stacked-parameter view of the solve
};

// Full Newton on the stacked parameter with the exact block Hessian; every
// iterate is kept inside the warm-start region by step halving, and a step
// that collapses at the region boundary is an error. init must be inside.
EioFit fit_joint(const EioProblem& prob, const EioState& init);

// Closed-form block sweeps theta <-> rows of A. Fallback solver; does not
// police the warm-start region.
EioFit fit_alternating(const EioProblem& prob, const EioState& init, int max_sweeps = 200);

struct EioConstants {
  double c3 = 0.0;  // 6 / mu
  double c4 = 0.0;  // 3 / mu^2
};

EioConstants self_concordance_constants(const EioProblem& prob);

// Stacked SlsModel view (theta first, then rows of A). neg_hess is carried
// unchecked: it may be indefinite outside the warm-start region.
SlsModel eio_model(const EioProblem& prob);

// Probe metric D with D^2 = block{A'A + G0^2, mu^2 I}; pairs with
// eio_n_eff so estimate_self_concordance reports c3_hat = tau3 sqrt(n_eff).
PsdOperator eio_probe_metric(const EioProblem& prob, const EioState& state);

// Effective sample size: 1 / ||(A'A + G0^2)^{-1}||.
double eio_n_eff(const EioProblem& prob, const EioState& state);

using FeatureMap = std::function<Vec(const Vec&)>;

// A_hat = sum_i phi(X_i) psi(X_i)^T, z_k = sum_i (Y_i / sigma) phi_k(X_i),
// mu^2 = n / sigma_X^2. The fidelity term keeps Lagrange multiplier 1;
// penalties default to identity and can be overwritten by the caller.
EioProblem ingest_regression(const Mat& X, const Vec& Y, const FeatureMap& psi,
                             const FeatureMap& phi, double sigma, double sigma_X);

struct EioCertificate {
  double n_eff = 0.0;
  double p_target = 0.0;
  double q_nuis = 0.0;
  double p_full_bound = 0.0;
  double r_target = 0.0;  // 2 sqrt(p_target) + sqrt(2x)
  double r_bar = 0.0;     // 2 sqrt(p_full_bound) + sqrt(2x)
  double c3 = 0.0;
  double flag_value = 0.0;       // c3 r_bar / sqrt(n_eff)
  bool applicable = false;       // flag_value <= 1/3
  double rho_at_fit = 0.0;       // separability of the stacked information
  double dominance_ratio = 0.0;  // ||B_Q||_Fr^2 / dim_Q
  WarmStartCheck warm;
  PsdOperator F_breve;  // efficient theta information at the fit
  MarginalTvTerms tv;
  double x = 3.0;

  nlohmann::json to_json() const;
};

// Four-term marginal certificate for the theta block against N(theta*,
// F_breve^{-1}). Q maps R^p; calib multiplies the structural terms. An
// inapplicable certificate (flag false) is still fully reported.
EioCertificate eio_laplace_certificate(const EioProblem& prob, const EioFit& fit,
                                       const Mat& Q, double x = 3.0, double calib = 1.0);

// JSON payload {z, A_hat, mu, G2, [G02], [K2], [rho], [sigma]}.
EioProblem eio_problem_from_json(const nlohmann::json& payload);

}  // namespace sls
