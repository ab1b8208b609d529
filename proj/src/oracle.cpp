#include "slscert/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "slscert/rng.hpp"

namespace sls {

namespace {

std::vector<int> unflatten(std::size_t flat, const std::vector<int>& res) {
  std::vector<int> idx(res.size());
  for (int a = int(res.size()) - 1; a >= 0; --a) {
    idx[a] = int(flat % std::size_t(res[a]));
    flat /= std::size_t(res[a]);
  }
  return idx;
}

double log_gauss_density(const Vec& x, const Vec& mean, const PsdOperator& Sigma,
                         double logdet_sigma) {
  Vec d = x - mean;
  double quad = d.dot(Sigma.solve(d));
  return -0.5 * (quad + logdet_sigma + d.size() * std::log(2.0 * M_PI));
}

}  // namespace

double GridPosterior::cell_volume() const {
  double v = 1.0;
  for (int a = 0; a < dim(); ++a) v *= step(a);
  return v;
}

Vec GridPosterior::point(std::size_t flat) const {
  std::vector<int> idx = unflatten(flat, resolution);
  Vec x(dim());
  for (int a = 0; a < dim(); ++a) x[a] = node(a, idx[a]);
  return x;
}

Vec GridPosterior::mean() const {
  Vec m = Vec::Zero(dim());
  for (std::size_t k = 0; k < cells(); ++k) m += cell_mass[k] * point(k);
  return m;
}

Mat GridPosterior::covariance() const {
  Vec m = mean();
  Mat c = Mat::Zero(dim(), dim());
  for (std::size_t k = 0; k < cells(); ++k) {
    Vec d = point(k) - m;
    c += cell_mass[k] * d * d.transpose();
  }
  return c;
}

double GridPosterior::mass_where(const std::function<bool(const Vec&)>& pred) const {
  double m = 0.0;
  for (std::size_t k = 0; k < cells(); ++k)
    if (pred(point(k))) m += cell_mass[k];
  return m;
}

std::vector<std::pair<double, double>> GridPosterior::marginal(int axis) const {
  std::vector<std::pair<double, double>> out(resolution[axis]);
  for (int i = 0; i < resolution[axis]; ++i) out[i] = {node(axis, i), 0.0};
  for (std::size_t k = 0; k < cells(); ++k) {
    std::vector<int> idx = unflatten(k, resolution);
    out[idx[axis]].second += cell_mass[k];
  }
  return out;
}

GridPosterior grid_posterior(const LogDensity& f, const std::vector<std::array<double, 2>>& box,
                             const std::vector<int>& resolution) {
  const int d = int(box.size());
  if (d < 1 || d > 4) throw std::invalid_argument("grid_posterior: dim must be 1..4");
  if (int(resolution.size()) != d)
    throw std::invalid_argument("grid_posterior: resolution/box dims disagree");
  std::size_t n = 1;
  for (int r : resolution) {
    if (r < 3) throw std::invalid_argument("grid_posterior: resolution must be >= 3 per axis");
    n *= std::size_t(r);
  }

  GridPosterior g;
  g.box = box;
  g.resolution = resolution;
  g.log_density.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    double v = f(g.point(k));
    if (std::isnan(v)) throw std::runtime_error("grid_posterior: log density NaN at a node");
    g.log_density[k] = v;
  }

  double mx = *std::max_element(g.log_density.begin(), g.log_density.end());
  double z = 0.0;
  for (double v : g.log_density) z += std::exp(v - mx);
  g.cell_mass.resize(n);
  for (std::size_t k = 0; k < n; ++k) g.cell_mass[k] = std::exp(g.log_density[k] - mx) / z;

  double bmass = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<int> idx = unflatten(k, resolution);
    for (int a = 0; a < d; ++a) {
      if (idx[a] == 0 || idx[a] == resolution[a] - 1) {
        bmass += g.cell_mass[k];
        break;
      }
    }
  }
  g.boundary_mass_estimate = bmass;
  if (bmass > 1e-6) {
    std::ostringstream os;
    os << "grid_posterior: boundary mass " << bmass << " exceeds 1e-6; widen the box";
    throw std::runtime_error(os.str());
  }
  return g;
}

namespace {

// Gaussian mass of each grid cell at subdivision level m (m^d midpoints).
std::vector<double> gaussian_cell_masses(const GridPosterior& grid, const Vec& mean,
                                         const PsdOperator& Sigma, int m) {
  const int d = grid.dim();
  const double logdet = Sigma.logdet();
  std::vector<double> out(grid.cells());
  const double subvol = grid.cell_volume() / std::pow(double(m), d);
  std::vector<int> sub(d, 0);
  for (std::size_t k = 0; k < grid.cells(); ++k) {
    Vec base = grid.point(k);
    double mass = 0.0;
    std::fill(sub.begin(), sub.end(), 0);
    while (true) {
      Vec x = base;
      for (int a = 0; a < d; ++a)
        x[a] += grid.step(a) * ((sub[a] + 0.5) / double(m) - 0.5);
      mass += std::exp(log_gauss_density(x, mean, Sigma, logdet)) * subvol;
      int a = 0;
      for (; a < d; ++a) {
        if (++sub[a] < m) break;
        sub[a] = 0;
      }
      if (a == d) break;
    }
    out[k] = mass;
  }
  return out;
}

double tv_against(const GridPosterior& grid, const std::vector<double>& gmass) {
  double s = 0.0;
  for (std::size_t k = 0; k < grid.cells(); ++k) s += std::abs(grid.cell_mass[k] - gmass[k]);
  // Gaussian mass outside the box counts once on each side of the coupling
  double inside = 0.0;
  for (double v : gmass) inside += v;
  return 0.5 * (s + std::max(0.0, 1.0 - inside));
}

}  // namespace

double total_variation(const GridPosterior& grid, const Vec& mean, const PsdOperator& Sigma) {
  double prev = tv_against(grid, gaussian_cell_masses(grid, mean, Sigma, 1));
  for (int m : {2, 4}) {
    double cur = tv_against(grid, gaussian_cell_masses(grid, mean, Sigma, m));
    if (std::abs(cur - prev) <= 1e-4) return cur;
    prev = cur;
  }
  return prev;
}

double kl_vs_gaussian(const GridPosterior& grid, const Vec& mean, const PsdOperator& Sigma) {
  const double logdet = Sigma.logdet();
  const double vol = grid.cell_volume();
  double kl = 0.0;
  for (std::size_t k = 0; k < grid.cells(); ++k) {
    double p = grid.cell_mass[k];
    if (p <= 0.0) continue;
    double logp = std::log(p / vol);
    double logq = log_gauss_density(grid.point(k), mean, Sigma, logdet);
    kl += p * (logp - logq);
  }
  return kl;
}

Vec SampleSet::mean() const { return draws.colwise().mean(); }

Mat SampleSet::covariance() const {
  Mat centered = draws.rowwise() - draws.colwise().mean();
  return centered.transpose() * centered / double(draws.rows() - 1);
}

namespace {

double ess_one_dim(const Eigen::VectorXd& x) {
  const int n = int(x.size());
  double mu = x.mean();
  Eigen::VectorXd c = (x.array() - mu).matrix();
  double var = c.squaredNorm() / n;
  if (var <= 0.0) return double(n);
  double acsum = 0.0;
  int max_lag = std::min(n - 2, 2000);
  // Geyer-style truncation: stop when a lag pair turns nonpositive
  for (int k = 1; k + 1 <= max_lag; k += 2) {
    double r1 = c.head(n - k).dot(c.tail(n - k)) / (n * var);
    double r2 = c.head(n - k - 1).dot(c.tail(n - k - 1)) / (n * var);
    if (r1 + r2 <= 0.0) break;
    acsum += r1 + r2;
  }
  return double(n) / (1.0 + 2.0 * acsum);
}

}  // namespace

SampleSet mcmc_sample(const LogDensity& f, const Vec& init, int n_draws, std::uint64_t seed,
                      int n_adapt) {
  const int d = int(init.size());
  if (n_draws < 10) throw std::invalid_argument("mcmc_sample: n_draws too small");
  double fx = f(init);
  if (!std::isfinite(fx)) throw std::invalid_argument("mcmc_sample: f not finite at init");

  CounterRng rng(seed);
  Vec x = init;
  double log_scale = std::log(2.38 / std::sqrt(double(d)));
  Mat L = Mat::Identity(d, d);

  // adaptation: Robbins-Monro on the scale, one covariance recomputation
  Vec running_mean = Vec::Zero(d);
  Mat running_cov = Mat::Zero(d, d);
  int cov_count = 0;
  for (int t = 0; t < n_adapt; ++t) {
    Vec y = x + std::exp(log_scale) * (L * rng.normal_vector(d));
    double fy = f(y);
    double la = fy - fx;
    double alpha = std::isfinite(fy) ? std::min(1.0, std::exp(la)) : 0.0;
    if (alpha > 0.0 && std::log(rng.uniform() + 1e-300) < la) {
      x = y;
      fx = fy;
    }
    log_scale += std::pow(t + 1.0, -0.6) * (alpha - 0.234);
    if (t >= n_adapt / 4) {
      ++cov_count;
      Vec delta = x - running_mean;
      running_mean += delta / cov_count;
      running_cov += delta * (x - running_mean).transpose();
    }
    if (t == (3 * n_adapt) / 4 && cov_count > 2 * d) {
      Mat c = running_cov / (cov_count - 1);
      c += 1e-10 * c.trace() / d * Mat::Identity(d, d) +
           1e-12 * Mat::Identity(d, d);
      Eigen::LLT<Mat> llt(c);
      if (llt.info() == Eigen::Success) L = llt.matrixL();
    }
  }

  SampleSet s;
  s.seed = seed;
  s.draws.resize(n_draws, d);
  int accepted = 0;
  const double scale = std::exp(log_scale);
  for (int t = 0; t < n_draws; ++t) {
    Vec y = x + scale * (L * rng.normal_vector(d));
    double fy = f(y);
    if (std::isfinite(fy) && std::log(rng.uniform() + 1e-300) < fy - fx) {
      x = y;
      fx = fy;
      ++accepted;
    }
    s.draws.row(t) = x;
  }
  if (accepted == 0) throw std::runtime_error("mcmc_sample: zero acceptance after adaptation");
  s.acceptance_rate = double(accepted) / n_draws;
  if (s.acceptance_rate < 0.1 || s.acceptance_rate > 0.6) {
    std::ostringstream os;
    os << "acceptance rate " << s.acceptance_rate << " outside [0.1, 0.6]";
    s.warnings.push_back(os.str());
  }

  s.ess_per_dim.resize(d);
  for (int a = 0; a < d; ++a) s.ess_per_dim[a] = ess_one_dim(s.draws.col(a));
  if (s.ess_per_dim.minCoeff() < 100.0) {
    std::ostringstream os;
    os << "min ESS per dim " << s.ess_per_dim.minCoeff() << " below 100";
    s.warnings.push_back(os.str());
  }
  return s;
}

void save_samples(const SampleSet& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_samples: cannot open " + path);
  // column file: each dimension stored contiguously
  for (int a = 0; a < s.dim(); ++a) {
    Eigen::VectorXd col = s.draws.col(a);
    out.write(reinterpret_cast<const char*>(col.data()),
              std::streamsize(sizeof(double) * col.size()));
  }
  nlohmann::json j;
  j["n"] = s.size();
  j["dim"] = s.dim();
  j["seed"] = s.seed;
  j["acceptance_rate"] = s.acceptance_rate;
  j["ess_per_dim"] =
      std::vector<double>(s.ess_per_dim.data(), s.ess_per_dim.data() + s.ess_per_dim.size());
  j["warnings"] = s.warnings;
  std::ofstream side(path + ".json");
  side << j.dump(2) << "\n";
}

SampleSet load_samples(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw std::runtime_error("load_samples: missing sidecar " + path + ".json");
  nlohmann::json j;
  side >> j;
  SampleSet s;
  int n = j.at("n").get<int>();
  int d = j.at("dim").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.acceptance_rate = j.at("acceptance_rate").get<double>();
  std::vector<double> ess = j.at("ess_per_dim").get<std::vector<double>>();
  s.ess_per_dim = Eigen::Map<Vec>(ess.data(), ess.size());
  s.warnings = j.at("warnings").get<std::vector<std::string>>();
  s.draws.resize(n, d);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_samples: cannot open " + path);
  for (int a = 0; a < d; ++a) {
    Eigen::VectorXd col(n);
    in.read(reinterpret_cast<char*>(col.data()), std::streamsize(sizeof(double) * n));
    if (!in) throw std::runtime_error("load_samples: truncated column file");
    s.draws.col(a) = col;
  }
  return s;
}

namespace {

// sup_r |F1(r) - F2(r)| for weighted radius samples, exact over the pooled set
double weighted_ks(std::vector<std::pair<double, double>>& a,
                   std::vector<std::pair<double, double>>& b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double wa = 0.0, wb = 0.0;
  for (auto& p : a) wa += p.second;
  for (auto& p : b) wb += p.second;
  double ca = 0.0, cb = 0.0, sup = 0.0;
  std::size_t i = 0, k = 0;
  while (i < a.size() || k < b.size()) {
    double r;
    if (k >= b.size() || (i < a.size() && a[i].first <= b[k].first)) {
      r = a[i].first;
    } else {
      r = b[k].first;
    }
    while (i < a.size() && a[i].first <= r) ca += a[i++].second;
    while (k < b.size() && b[k].first <= r) cb += b[k++].second;
    sup = std::max(sup, std::abs(ca / wa - cb / wb));
  }
  return sup;
}

std::vector<std::pair<double, double>> gauss_radii(const Mat& Q, const PsdOperator& Sigma,
                                                   int n, std::uint64_t seed) {
  Mat root = Sigma.sqrt();
  CounterRng rng(seed, /*stream=*/17);
  std::vector<std::pair<double, double>> out(n);
  const int d = Sigma.dim();
  for (int t = 0; t < n; ++t)
    out[t] = {(Q * (root * rng.normal_vector(d))).norm(), 1.0};
  return out;
}

}  // namespace

double empirical_tv_elliptic(const SampleSet& samples, const Mat& Q, const Vec& center,
                             const PsdOperator& Sigma, std::uint64_t seed) {
  std::vector<std::pair<double, double>> a(samples.size());
  for (int t = 0; t < samples.size(); ++t)
    a[t] = {(Q * (samples.draws.row(t).transpose() - center)).norm(), 1.0};
  auto b = gauss_radii(Q, Sigma, 10 * samples.size(), seed);
  return weighted_ks(a, b);
}

double empirical_tv_elliptic_grid(const GridPosterior& grid, const Mat& Q, const Vec& center,
                                  const PsdOperator& Sigma, int n_gauss, std::uint64_t seed) {
  std::vector<std::pair<double, double>> a(grid.cells());
  for (std::size_t k = 0; k < grid.cells(); ++k)
    a[k] = {(Q * (grid.point(k) - center)).norm(), grid.cell_mass[k]};
  auto b = gauss_radii(Q, Sigma, n_gauss, seed);
  return weighted_ks(a, b);
}

double dkw_envelope(int n, double delta) {
  if (n <= 0) throw std::invalid_argument("dkw_envelope: sample count must be positive");
  if (delta <= 0.0 || delta >= 1.0)
    throw std::invalid_argument("dkw_envelope: delta must lie in (0,1)");
  return std::sqrt(std::log(2.0 / delta) / (2.0 * n));
}

}  // namespace sls
