#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "slscert/operator.hpp"

namespace sls {

using LogDensity = std::function<double(const Vec&)>;

// Normalized quadrature posterior on a rectangular box, midpoint cells.
// Construction rejects grids leaking more than 1e-6 of mass into the
// outermost cell shell.
struct GridPosterior {
  std::vector<std::array<double, 2>> box;
  std::vector<int> resolution;
  std::vector<double> log_density;  // raw values at cell midpoints, row-major
  std::vector<double> cell_mass;    // normalized, sums to 1
  double boundary_mass_estimate = 0.0;

  int dim() const { return int(box.size()); }
  double step(int axis) const {
    return (box[axis][1] - box[axis][0]) / double(resolution[axis]);
  }
  double node(int axis, int i) const { return box[axis][0] + (i + 0.5) * step(axis); }
  double cell_volume() const;
  std::size_t cells() const { return cell_mass.size(); }
  Vec point(std::size_t flat) const;

  Vec mean() const;
  Mat covariance() const;
  // total mass of cells whose midpoint satisfies the predicate
  double mass_where(const std::function<bool(const Vec&)>& pred) const;
  // per-axis marginal: (node, mass) pairs
  std::vector<std::pair<double, double>> marginal(int axis) const;
};

GridPosterior grid_posterior(const LogDensity& f, const std::vector<std::array<double, 2>>& box,
                             const std::vector<int>& resolution);

// 1/2 sum over cells |cell_mass - Gaussian mass|, Gaussian cell masses by
// midpoint rule refined until the TV value moves < 1e-4.
double total_variation(const GridPosterior& grid, const Vec& mean, const PsdOperator& Sigma);

// sum cell_mass * log(posterior density / Gaussian density)
double kl_vs_gaussian(const GridPosterior& grid, const Vec& mean, const PsdOperator& Sigma);

struct SampleSet {
  Mat draws;  // n x dim
  double acceptance_rate = 0.0;
  Vec ess_per_dim;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;

  int dim() const { return int(draws.cols()); }
  int size() const { return int(draws.rows()); }
  Vec mean() const;
  Mat covariance() const;
};

// Adaptive random-walk Metropolis targeting 0.234 acceptance. The proposal
// is tuned (scale + covariance) during n_adapt iterations, then frozen; the
// recorded chain is entirely post-adaptation. Deterministic per seed.
SampleSet mcmc_sample(const LogDensity& f, const Vec& init, int n_draws, std::uint64_t seed,
                      int n_adapt = 5000);

void save_samples(const SampleSet& s, const std::string& path);
SampleSet load_samples(const std::string& path);

// sup_r |P1(||Q(X - center)|| <= r) - P2(...)| where P2 is N(center, Sigma)
// pushed through the same statistic; the Gaussian side uses 10x the sample
// count. Exact sup over the pooled radius values.
double empirical_tv_elliptic(const SampleSet& samples, const Mat& Q, const Vec& center,
                             const PsdOperator& Sigma, std::uint64_t seed = 99);
double empirical_tv_elliptic_grid(const GridPosterior& grid, const Mat& Q, const Vec& center,
                                  const PsdOperator& Sigma, int n_gauss = 200000,
                                  std::uint64_t seed = 99);

// Dvoretzky-Kiefer-Wolfowitz envelope at confidence 1 - delta.
double dkw_envelope(int n, double delta = 1e-3);

}  // namespace sls
