#include "slscert/gauss.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "slscert/rng.hpp"

namespace sls {

SpectrumProfile kappa_profile(const Vec& lambdas) {
  Vec l = lambdas;
  std::sort(l.data(), l.data() + l.size(), std::greater<double>());
  double top = l.size() ? l[0] : 0.0;
  for (int i = 0; i < l.size(); ++i) {
    if (l[i] < -1e-12 * top)
      throw std::invalid_argument("kappa_profile: negative eigenvalue");
    if (l[i] < 0) l[i] = 0.0;
  }
  int positive = 0;
  for (int i = 0; i < l.size(); ++i)
    if (l[i] > 0) ++positive;
  if (positive < 2)
    throw std::invalid_argument("kappa_profile: need at least 2 positive eigenvalues");

  SpectrumProfile s;
  s.lambdas = l;
  double sum2 = l.squaredNorm();
  s.Lambda1 = std::sqrt(sum2);
  s.Lambda2 = std::sqrt(sum2 - l[0] * l[0]);

  // ties resolve to the denser branch; compare against the raw sums so an
  // exact tie is not lost to the sqrt round trip
  double l1 = l[0], l2 = l[1];
  if (3.0 * l1 * l1 <= sum2) {
    s.branch = KappaBranch::many;
    s.kappa = 1.0 / s.Lambda1;
  } else if (3.0 * l2 * l2 <= sum2 - l1 * l1) {
    s.branch = KappaBranch::spike;
    s.kappa = 1.0 / std::sqrt(l1 * s.Lambda2);
  } else {
    s.branch = KappaBranch::two;
    s.kappa = 1.0 / std::sqrt(l1 * l2);
  }
  return s;
}

double lambda_l1_diff(const SpectrumProfile& a, const SpectrumProfile& b) {
  int n = int(std::max(a.lambdas.size(), b.lambdas.size()));
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    double la = i < a.lambdas.size() ? a.lambdas[i] : 0.0;
    double lb = i < b.lambdas.size() ? b.lambdas[i] : 0.0;
    s += std::abs(la - lb);
  }
  return s;
}

double comparison_bound(const SpectrumProfile& spec_xi, const SpectrumProfile& spec_eta,
                        double a_norm_sq, double lambda_l1_diff) {
  return (spec_xi.kappa + spec_eta.kappa) * (lambda_l1_diff + a_norm_sq);
}

namespace {

// two-sample sup CDF difference over a quantile-pooled radius grid
double grid_sup_distance(std::vector<double>& a, std::vector<double>& b, int grid_points) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> pool;
  pool.reserve(a.size() + b.size());
  pool.insert(pool.end(), a.begin(), a.end());
  pool.insert(pool.end(), b.begin(), b.end());
  std::sort(pool.begin(), pool.end());

  double sup = 0.0;
  for (int g = 0; g < grid_points; ++g) {
    std::size_t idx = std::size_t(double(g) / (grid_points - 1) * (pool.size() - 1));
    double r = pool[idx];
    double fa = double(std::upper_bound(a.begin(), a.end(), r) - a.begin()) / a.size();
    double fb = double(std::upper_bound(b.begin(), b.end(), r) - b.begin()) / b.size();
    sup = std::max(sup, std::abs(fa - fb));
  }
  return sup;
}

}  // namespace

double mc_ball_sup_distance(const PsdOperator& Sigma_xi, const PsdOperator& Sigma_eta,
                            const Vec& a, int n_samples, std::uint64_t seed) {
  if (n_samples < 100) throw std::invalid_argument("mc_ball_sup_distance: n_samples too small");
  Mat rx = Sigma_xi.sqrt();
  Mat re = Sigma_eta.sqrt();
  CounterRng rng_x(seed, 1), rng_e(seed, 2);

  std::vector<double> radii_x(n_samples), radii_e(n_samples);
  for (int t = 0; t < n_samples; ++t) {
    radii_x[t] = (rx * rng_x.normal_vector(Sigma_xi.dim()) - a).norm();
    radii_e[t] = (re * rng_e.normal_vector(Sigma_eta.dim())).norm();
  }
  return grid_sup_distance(radii_x, radii_e, 2048);
}

AntiConcentrationBand anti_concentration_band(const SpectrumProfile& spectrum, const Vec& a,
                                              double epsilon, int n_samples,
                                              std::uint64_t seed) {
  if (epsilon < 0.0) throw std::invalid_argument("anti_concentration_band: epsilon negative");
  AntiConcentrationBand out;
  out.kappa_eps = spectrum.kappa * epsilon;
  if (epsilon == 0.0) return out;

  const int d = int(spectrum.lambdas.size());
  if (a.size() != d)
    throw std::invalid_argument("anti_concentration_band: shift dim mismatch");
  Vec sd = spectrum.lambdas.cwiseSqrt();
  CounterRng rng(seed, 4);
  std::vector<double> s(n_samples);
  for (int t = 0; t < n_samples; ++t) {
    Vec z = rng.normal_vector(d);
    s[t] = (sd.cwiseProduct(z) - a).squaredNorm();
  }
  std::sort(s.begin(), s.end());

  // widest epsilon-window: slide the right end with two pointers
  std::size_t best = 0, i = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    while (s[k] - s[i] > epsilon) ++i;
    best = std::max(best, k - i + 1);
  }
  out.band_mass_sup = double(best) / n_samples;
  return out;
}

}  // namespace sls
