#pragma once

#include <cstdint>

#include "slscert/operator.hpp"

namespace sls {

enum class KappaBranch { many, spike, two };

// Spectral-tail profile of a covariance: Lambda_k^2 = sum_{j>=k} lambda_j^2
// and the three-case density functional kappa. Ties resolve to `many`.
struct SpectrumProfile {
  Vec lambdas;  // descending, nonnegative
  double Lambda1 = 0.0;
  double Lambda2 = 0.0;
  double kappa = 0.0;
  KappaBranch branch = KappaBranch::many;
};

SpectrumProfile kappa_profile(const Vec& lambdas);
inline SpectrumProfile kappa_profile(const PsdOperator& Sigma) {
  return kappa_profile(Sigma.eigenvalues());
}

// l1 distance of the two eigenvalue sequences, shorter one zero-padded.
double lambda_l1_diff(const SpectrumProfile& a, const SpectrumProfile& b);

// (kappa_xi + kappa_eta) (lambda_l1_diff + a_norm_sq); pass the nuclear norm
// of the covariance difference for the operator-difference variant.
double comparison_bound(const SpectrumProfile& spec_xi, const SpectrumProfile& spec_eta,
                        double a_norm_sq, double lambda_l1_diff);

// sup_x |P(||xi - a|| <= x) - P(||eta|| <= x)| by MC over a 2048-point
// quantile-pooled radius grid.
double mc_ball_sup_distance(const PsdOperator& Sigma_xi, const PsdOperator& Sigma_eta,
                            const Vec& a, int n_samples, std::uint64_t seed);

struct AntiConcentrationBand {
  double band_mass_sup = 0.0;  // sup_x P(x < ||xi - a||^2 <= x + eps)
  double kappa_eps = 0.0;      // kappa(Sigma) * eps
};

AntiConcentrationBand anti_concentration_band(const SpectrumProfile& spectrum, const Vec& a,
                                              double epsilon, int n_samples,
                                              std::uint64_t seed);

}  // namespace sls
