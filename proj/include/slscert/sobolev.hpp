#pragma once

#include <cstdint>
#include <vector>

#include "slscert/operator.hpp"

namespace sls {

// p(w) = tr{D^2 (D^2 + w G0^2)^{-1}}, the effective dimension of the scaled
// penalty family. Strictly decreasing in w for SPD G0^2; p(0) = dim.
double effective_dim_of_scale(const PsdOperator& D2, const PsdOperator& G02, double w);

// Unique w with sqrt(p(w)) + sqrt(2x) = C0 sqrt(w). Bisection on the
// monotone gap over [1e-8, 1e12]; throws if the bracket has no sign change.
double solve_tradeoff(const PsdOperator& D2, const PsdOperator& G02, double x, double C0);

// Smoothness-aware spectrum g_j^2 = w C0_ball^{-1} j^{2 s0}, j = 1..p.
Vec sobolev_penalty(double s0, double C0_ball, double w, int p);

// Rate-optimal scale m0 = (C0_ball n)^{1/(2 s0 + 1)}.
double aware_scale(double s0, double C0_ball, double n);

// Scale for an (s, w)-smooth prior when the truth has smoothness s0 <= s:
// w = n^{-1} (C0_ball n)^{2s/(2 s0 + 1)}. Keeps the cutoff (w n)^{1/(2s)}
// equal to m0 exactly.
double mismatch_scale(double s, double s0, double C0_ball, double n);

// Mismatch-family spectrum g_j^2 = j^{2s} / w.
Vec mismatch_penalty(double s, double w, int p);

// Near-boundary Sobolev ball member: ups_j proportional to j^{-s0-1/2-0.01},
// scaled so sum_j j^{2 s0} ups_j^2 = C0_ball.
Vec ball_boundary_signal(double s0, double C0_ball, int p);

struct RatePoint {
  double n = 0.0;
  double mean_mse = 0.0;
  double se = 0.0;
};

struct RateResult {
  double slope = 0.0;
  double slope_se = 0.0;
  double intercept = 0.0;
  double target_slope = 0.0;  // -2 s0 / (2 s0 + 1)
  std::vector<RatePoint> per_n;
};

struct RateConfig {
  double s0 = 1.0;
  double C0_ball = 1.0;
  std::vector<double> n_list;  // at least 4 values
  int reps = 200;
  int p = 256;
  std::uint64_t seed = 1;
  double mismatch_s = 0.0;  // > 0 switches to the mismatch penalty family
};

// Sequence-space Gaussian replicates with the closed-form diagonal pMLE
// u~_j = n y_j / (n + g_j^2); log-log regression of mean ||u~ - ups*||^2
// on n.
RateResult rate_experiment(const RateConfig& cfg);

}  // namespace sls
