#pragma once

#include <cstdint>
#include <functional>

#include "slscert/operator.hpp"

namespace sls {

// Penalized objective f = smooth_part - 0.5 * ||G ups||^2 with analytic
// derivatives. neg_hess returns -grad^2 f, stored unclamped: it may be
// indefinite away from the optimum.
struct SlsModel {
  int dim = 0;
  std::function<double(const Vec&)> eval;
  std::function<Vec(const Vec&)> grad;
  std::function<PsdOperator(const Vec&)> neg_hess;
  PsdOperator penalty;  // G^2
  std::function<double(const Vec&)> smooth_part;
};

// y = design * ups + N(0, noise_sd^2) errors; quadratic in ups.
SlsModel builtin_linear_gaussian(const Mat& design, const Vec& y, double noise_sd,
                                 const PsdOperator& G2);

// Bernoulli labels with logit link; concave log-likelihood.
SlsModel builtin_logistic(const Mat& design, const Vec& labels, const PsdOperator& G2);

// Local smoothness probing over the elliptic vicinity {u : ||metric u|| <= radius}.
// Directions are seeded counter-based draws; each direction is also scanned
// over 8 interior radial shells so the sup sees the whole ray, not just the
// boundary point.
struct SmoothnessProbe {
  Vec center;
  PsdOperator metric;  // D, the shaping matrix (not D^2)
  double radius = 1.0;
  int n_directions = 512;
  std::uint64_t seed = 1;

  // filled by the estimators; negative = not yet computed
  double omega_hat = -1.0;
  double tau3_hat = -1.0;
  double tau4_hat = -1.0;
  double c3_hat = -1.0;
  double c4_hat = -1.0;
};

// omega = sup 2 |delta3(center, u)| / ||D u||^2 over the sampled vicinity,
// delta3 the second-order Bregman remainder of f (affine parts cancel).
double estimate_omega(const SlsModel& model, SmoothnessProbe& probe);

struct SelfConcordance {
  double tau3 = 0.0, tau4 = 0.0;  // |<grad^k f, u^k>| / ||D u||^k sups
  double c3 = 0.0, c4 = 0.0;      // n-normalized: c3 = tau3 sqrt(n), c4 = tau4 n
};

// Third/fourth directional derivatives of the smooth part by central finite
// differences on t -> l(center + t u).
SelfConcordance estimate_self_concordance(const SlsModel& model, SmoothnessProbe& probe,
                                          double n);

// Second-order Bregman remainder f(x+u) - f(x) - <grad f(x), u> - <hess, u^2>/2.
double delta3(const SlsModel& model, const Vec& x, const Vec& u);

// Model loading from JSON specs: {"kind": ..., payload}. Supported kinds:
// linear_gaussian {design, y, noise_sd, G2}, logistic {design, labels, G2},
// eio {A_hat, z, mu, G2, G02, K2}, custom_grid {lower, upper, shape, values}.
SlsModel model_from_json(const nlohmann::json& j);

// Defined with the error-in-operator code; takes the payload object.
SlsModel eio_model_from_json(const nlohmann::json& payload);

// Tabulated log-objective on a rectangular grid, multilinearly interpolated.
// Derivatives come from node-spanning central differences, so this kind is
// meant for oracle ingestion and sanity plots, not certificates.
SlsModel custom_grid_model_from_json(const nlohmann::json& payload);

}  // namespace sls
