#include "slscert/sobolev.hpp"

#include <cmath>
#include <sstream>

#include "slscert/rng.hpp"

namespace sls {

double effective_dim_of_scale(const PsdOperator& D2, const PsdOperator& G02, double w) {
  if (D2.dim() != G02.dim()) throw std::invalid_argument("effective dim: operator dims differ");
  if (w < 0.0) throw std::invalid_argument("effective dim: negative scale");
  PsdOperator sum(D2.matrix() + w * G02.matrix());
  Mat inv;
  try {
    inv = sum.inverse();
  } catch (const std::runtime_error&) {
    throw std::runtime_error("effective dim: D^2 + w G0^2 is singular");
  }
  return (D2.matrix() * inv).trace();
}

double solve_tradeoff(const PsdOperator& D2, const PsdOperator& G02, double x, double C0) {
  if (x < 0.0) throw std::invalid_argument("solve_tradeoff: x must be nonnegative");
  if (!(C0 > 0.0)) throw std::invalid_argument("solve_tradeoff: C0 must be positive");
  if (G02.min_eigenvalue() <= G02.psd_tol())
    throw std::invalid_argument("solve_tradeoff: G0^2 must be SPD");

  auto gap = [&](double w) {
    return C0 * std::sqrt(w) - std::sqrt(effective_dim_of_scale(D2, G02, w)) -
           std::sqrt(2.0 * x);
  };

  double lo = 1e-8, hi = 1e12;
  double glo = gap(lo), ghi = gap(hi);
  if (glo > 0.0 || ghi < 0.0) {
    std::ostringstream os;
    os << "solve_tradeoff: no sign change on [1e-8, 1e12], gap(lo) = " << glo
       << ", gap(hi) = " << ghi;
    throw std::runtime_error(os.str());
  }
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (gap(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  double w = 0.5 * (lo + hi);
  if (std::abs(gap(w)) > 1e-10 * C0 * std::sqrt(w) + 1e-12)
    throw std::runtime_error("solve_tradeoff: bisection residual above tolerance");
  return w;
}

Vec sobolev_penalty(double s0, double C0_ball, double w, int p) {
  if (!(s0 > 0.5)) throw std::invalid_argument("sobolev_penalty: needs s0 > 1/2");
  if (!(C0_ball > 0.0) || !(w > 0.0) || p < 1)
    throw std::invalid_argument("sobolev_penalty: bad parameters");
  Vec g2(p);
  for (int j = 1; j <= p; ++j) g2[j - 1] = w / C0_ball * std::pow(double(j), 2.0 * s0);
  return g2;
}

double aware_scale(double s0, double C0_ball, double n) {
  return std::pow(C0_ball * n, 1.0 / (2.0 * s0 + 1.0));
}

double mismatch_scale(double s, double s0, double C0_ball, double n) {
  if (s < s0)
    throw std::invalid_argument("mismatch_scale: prior smoothness s below the truth s0");
  if (!(s > 0.5)) throw std::invalid_argument("mismatch_scale: needs s > 1/2");
  return std::pow(C0_ball * n, 2.0 * s / (2.0 * s0 + 1.0)) / n;
}

Vec mismatch_penalty(double s, double w, int p) {
  if (!(w > 0.0) || p < 1) throw std::invalid_argument("mismatch_penalty: bad parameters");
  Vec g2(p);
  for (int j = 1; j <= p; ++j) g2[j - 1] = std::pow(double(j), 2.0 * s) / w;
  return g2;
}

Vec ball_boundary_signal(double s0, double C0_ball, int p) {
  Vec u(p);
  for (int j = 1; j <= p; ++j) u[j - 1] = std::pow(double(j), -s0 - 0.5 - 0.01);
  double weighted = 0.0;
  for (int j = 1; j <= p; ++j) weighted += std::pow(double(j), 2.0 * s0) * u[j - 1] * u[j - 1];
  return u * std::sqrt(C0_ball / weighted);
}

RateResult rate_experiment(const RateConfig& cfg) {
  if (cfg.n_list.size() < 4)
    throw std::invalid_argument("rate_experiment: need at least 4 sample sizes");
  if (cfg.reps < 2) throw std::invalid_argument("rate_experiment: need at least 2 replicates");
  if (cfg.p < 2) throw std::invalid_argument("rate_experiment: need at least 2 coordinates");

  const Vec ups = ball_boundary_signal(cfg.s0, cfg.C0_ball, cfg.p);

  RateResult out;
  out.target_slope = -2.0 * cfg.s0 / (2.0 * cfg.s0 + 1.0);

  std::vector<double> logn, logm;
  for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
    const double n = cfg.n_list[ni];
    if (!(n > 0.0)) throw std::invalid_argument("rate_experiment: sample sizes must be positive");
    Vec g2;
    if (cfg.mismatch_s > 0.0)
      g2 = mismatch_penalty(cfg.mismatch_s,
                            mismatch_scale(cfg.mismatch_s, cfg.s0, cfg.C0_ball, n), cfg.p);
    else
      g2 = sobolev_penalty(cfg.s0, cfg.C0_ball, aware_scale(cfg.s0, cfg.C0_ball, n), cfg.p);

    double sum = 0.0, sumsq = 0.0;
    for (int rep = 0; rep < cfg.reps; ++rep) {
      CounterRng rng(cfg.seed, std::uint64_t(ni) * std::uint64_t(cfg.reps) + std::uint64_t(rep));
      double loss = 0.0;
      for (int j = 0; j < cfg.p; ++j) {
        const double y = ups[j] + rng.normal() / std::sqrt(n);
        const double shrunk = n * y / (n + g2[j]);
        loss += (shrunk - ups[j]) * (shrunk - ups[j]);
      }
      sum += loss;
      sumsq += loss * loss;
    }
    const double mean = sum / cfg.reps;
    const double var = std::max(0.0, sumsq / cfg.reps - mean * mean);
    RatePoint pt;
    pt.n = n;
    pt.mean_mse = mean;
    pt.se = std::sqrt(var / cfg.reps);
    out.per_n.push_back(pt);
    logn.push_back(std::log(n));
    logm.push_back(std::log(mean));
  }

  const double k = double(logn.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < logn.size(); ++i) {
    sx += logn[i];
    sy += logm[i];
    sxx += logn[i] * logn[i];
    sxy += logn[i] * logm[i];
  }
  const double denom = sxx - sx * sx / k;
  out.slope = (sxy - sx * sy / k) / denom;
  out.intercept = (sy - out.slope * sx) / k;
  double rss = 0.0;
  for (std::size_t i = 0; i < logn.size(); ++i) {
    const double r = logm[i] - out.intercept - out.slope * logn[i];
    rss += r * r;
  }
  out.slope_se = std::sqrt(rss / std::max(1.0, k - 2.0) / denom);
  return out;
}

}  // namespace sls
