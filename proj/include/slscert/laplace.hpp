#pragma once

#include <cstdint>

#include "slscert/model.hpp"

namespace sls {

struct ProbeConfig {
  int n_directions = 512;
  std::uint64_t seed = 1;
};

struct LaplaceConditions {
  bool omega_ok = false;   // omega <= 1/3
  bool prod_ok = false;    // omega * dimA <= 2/3
  bool taylor_ok = false;  // tau3 * r / nu * dimA <= 2
};

// Gaussian-approximation certificate at a stationary point. Both error
// families (sampled omega and Taylor tau3/tau4) are computed; the condition
// flags say which preconditions each satisfies, nothing is selected silently.
struct LaplaceReport {
  Vec center;
  PsdOperator F;   // -grad^2 f at the center
  PsdOperator D2;  // F - G^2, the data information
  PsdOperator G2;
  double dimA = 0.0;  // tr(D^2 F^{-1})
  double alpha = 0.0; // ||D F^{-1} D|| <= 1
  double x = 3.0;
  double r = 0.0;  // 2 sqrt(dimA) + sqrt(2x)
  double nu = 2.0 / 3.0;
  double omega = 0.0;
  double tau3 = 0.0;
  double tau4 = 0.0;
  double omega_tau = 0.0;  // tau3 * (r/nu) / 3, the Taylor-side omega
  double diamond2 = 0.0;
  double diamond3 = 0.0;
  double diamond4 = 0.0;
  LaplaceConditions conditions;

  nlohmann::json to_json() const;
};

double diamond2_term(double omega, double dimA);
double diamond3_term(double tau3, double dimA, double alpha, double x, double nu = 2.0 / 3.0);
double diamond4_term(double tau3, double tau4, double dimA, double alpha, double x,
                     double nu = 2.0 / 3.0);

LaplaceReport laplace_report(const SlsModel& model, const Vec& center, double x,
                             const ProbeConfig& cfg = {});

struct TvCertificate {
  double tv_observed = 0.0;
  double bound_omega = 0.0;  // 4 (diamond2 + e^{-x})
  double bound_tau = 0.0;    // 4 (diamond3 + e^{-x})
  bool holds_omega = false;
  bool holds_tau = false;
};

// tv_observed comes from an oracle (grid quadrature or samples); this only
// evaluates the bounds.
TvCertificate tv_certificate(const LaplaceReport& report, double tv_observed);

// 2 c3 sqrt((dimA+alpha)^3 / n) + 4 e^{-x}
double kl_bound(double c3, double dimA, double alpha, double n, double x);

// 2.4 c3 sqrt(QFQ_norm) sqrt((dimA+alpha)^3 / n) + 4 e^{-x}, QFQ_norm the
// spectral norm of Q F^{-1} Q^T.
double posterior_mean_bound(double c3, double dimA, double alpha, double n, double x,
                            double QFQ_norm);

struct InexactTv {
  double extra_term = 0.0;
  double total_bound = 0.0;
};

// Elliptic TV penalty for approximating the center and curvature. Requires
// Frobenius dominance 3 ||Q F^{-1} Q^T||^2 <= ||Q F^{-1} Q^T||_Fr^2; the
// multiplier C calibrates the paper's unnamed absolute constant.
InexactTv inexact_tv_bound(const LaplaceReport& report, const Vec& center_used,
                           const PsdOperator& F_used, const Mat& Q, double C = 2.0);

}  // namespace sls
