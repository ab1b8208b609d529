#pragma once

#include <cstdint>
#include <vector>

#include "slscert/laplace.hpp"
#include "slscert/pmle.hpp"

namespace sls {

// One nuisance slice: profiled target maximizer, curvature, deficiency and
// the mixture weight exp(phi + delta).
struct NuisanceProfile {
  Vec eta;
  Vec theta_eta;
  PsdOperator F_eta;      // -grad^2_{theta theta} f at (theta_eta, eta)
  double phi_eta = 0.0;   // f(theta_eta, eta) - f(ups*), <= 0
  double delta_eta = 0.0; // 0.5 logdet(F_eta^{-1} F_ref)
  double weight = 0.0;
};

// Joint model split into target (first p coordinates) and nuisance, anchored
// at the fitted global maximizer.
struct MarginalProblem {
  SlsModel model;
  int p = 0;
  Vec ups_star;
  double f_star = 0.0;
  PsdOperator F_full;        // -grad^2 f at ups*
  PsdOperator F_theta_star;  // its theta-theta block, the delta_eta reference
};

MarginalProblem make_marginal_problem(const SlsModel& joint, int p, const Vec& init);

NuisanceProfile profile(const MarginalProblem& prob, const Vec& eta, const Vec& warm_theta);

struct Separability {
  double rho = 0.0;
  PsdOperator efficient;  // Schur complement F_breve
  bool sandwich_ok = false;
};

Separability separability(const BlockOperator& F);

// Linear nuisance transform nu = eta + C (theta - theta*) with C chosen so
// the transformed objective has vanishing cross curvature at ups*.
struct OrthogonalizedModel {
  SlsModel model;
  Mat C;
  Vec ups_star;  // unchanged: nu*(theta*, eta*) = eta*
};

OrthogonalizedModel orthogonalize(const SlsModel& joint, int p, const Vec& ups_star);

// Tensor grid over the nuisance slice of the concentration set: per-axis
// span span_sd posterior standard deviations around eta*. Nuisance dim <= 3.
std::vector<Vec> nuisance_grid(const MarginalProblem& prob, int per_axis = 21,
                               double span_sd = -1.0);

struct MixtureMarginal {
  std::vector<NuisanceProfile> profiles;
  Mat Q;
  PsdOperator F_ref;
  Vec quadrature_weights;  // per-cell volumes (uniform tensor grid)
};

MixtureMarginal build_mixture(const MarginalProblem& prob, const std::vector<Vec>& grid,
                              const Mat& Q);

// P(||Q(theta - theta*)|| <= r) under the normalized Gaussian mixture.
// Ball probabilities by common-random-number MC (rank Q > 1) or the exact
// error-function formula (rank 1).
std::vector<double> mixture_cdf(const std::vector<NuisanceProfile>& profiles, const Mat& Q,
                                const Vec& theta_star, const std::vector<double>& radii,
                                int n_mc = 100000, std::uint64_t seed = 5);
double mixture_marginal(const std::vector<NuisanceProfile>& profiles, const Mat& Q,
                        const Vec& theta_star, double r, int n_mc = 100000,
                        std::uint64_t seed = 5);

struct HomogenizationError {
  double delta_plus = 0.0;  // max_eta ||F_ref^{-1/2} F_eta F_ref^{-1/2} - I||
  double Delta_F = 0.0;     // weighted nuclear-norm defect, Frobenius-normalized
  double bound = 0.0;       // delta+/(1-delta+) tr(Q Fref^{-1} Q')/||Q Fref^{-1} Q'||_Fr
};

HomogenizationError homogenization_error(const std::vector<NuisanceProfile>& profiles,
                                         const Mat& Q, const PsdOperator& F_ref);

struct MarginalTvTerms {
  double term_profile = 0.0;  // c3 r_{eta*} dimA_{eta*} / sqrt(n)
  double term_mix = 0.0;      // c3 rbar sqrt(dimA_Q) / sqrt(n)
  double term_quad = 0.0;     // c3^2 rbar^4 / (n sqrt(dimA_Q))
  double term_tail = 0.0;     // e^{-x}
  double total = 0.0;
  double dimA_Q = 0.0;
};

// Direct evaluation of the four-term marginal TV bound; calib multiplies the
// three structural terms (the paper's unnamed absolute constant).
MarginalTvTerms marginal_tv_terms(double c3, double r_eta_star, double dimA_eta_star,
                                  double r_bar, double dimA_Q, double n, double x,
                                  double calib = 1.0);

// Full version: derives dimA_Q and the dominance check from Q and F_breve,
// r_bar and x from the full-dimensional report, and the eta*-slice geometry
// from its profile and the theta-block penalty.
MarginalTvTerms marginal_tv_bound(const LaplaceReport& full_report,
                                  const NuisanceProfile& profile_at_eta_star,
                                  const PsdOperator& G2_theta, const Mat& Q,
                                  const PsdOperator& F_breve, double c3, double n,
                                  double C0, double calib = 1.0);

// Concentration threshold C0^2 r_{eta*}/nu + b_sup for the target marginal.
double marginal_threshold(double C0, double nu, double r_eta_star, double b_sup);

// Observed sup of ||D_ref (theta_eta - theta*)|| over the profile grid.
double bias_sup_over_profiles(const std::vector<NuisanceProfile>& profiles,
                              const PsdOperator& D_ref, const Vec& theta_star);

}  // namespace sls
