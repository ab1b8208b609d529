#include "slscert/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "slscert/rng.hpp"

namespace sls {

namespace {

double penalty_half_norm(const PsdOperator& G2, const Vec& u) {
  return 0.5 * u.dot(G2.matrix() * u);
}

// log(1 + e^t) without overflow for large |t|
double log1pexp(double t) {
  if (t > 35.0) return t + std::exp(-t);
  if (t < -35.0) return std::exp(t);
  return std::log1p(std::exp(t));
}

double sigmoid(double t) {
  if (t >= 0.0) {
    double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

SlsModel builtin_linear_gaussian(const Mat& design, const Vec& y, double noise_sd,
                                 const PsdOperator& G2) {
  if (design.rows() != y.size())
    throw std::invalid_argument("builtin_linear_gaussian: design rows != y size");
  if (noise_sd <= 0.0)
    throw std::invalid_argument("builtin_linear_gaussian: noise_sd must be positive");
  const int p = int(design.cols());
  if (G2.dim() != p)
    throw std::invalid_argument("builtin_linear_gaussian: penalty dim != design cols");

  const double inv_var = 1.0 / (noise_sd * noise_sd);
  Mat info = design.transpose() * design * inv_var + G2.matrix();
  // Rank-deficient design with no penalty leaves flat directions: reject.
  PsdOperator info_op(info);
  if (info_op.min_eigenvalue() <= info_op.psd_tol())
    throw std::invalid_argument(
        "builtin_linear_gaussian: ill-posed (design rank-deficient and penalty "
        "does not fill the null space)");

  Mat X = design;
  Vec yy = y;
  PsdOperator pen = G2;

  SlsModel m;
  m.dim = p;
  m.penalty = pen;
  m.smooth_part = [X, yy, inv_var](const Vec& u) {
    return -0.5 * inv_var * (yy - X * u).squaredNorm();
  };
  m.eval = [X, yy, inv_var, pen](const Vec& u) {
    return -0.5 * inv_var * (yy - X * u).squaredNorm() - penalty_half_norm(pen, u);
  };
  m.grad = [X, yy, inv_var, pen](const Vec& u) {
    return Vec(inv_var * (X.transpose() * (yy - X * u)) - pen.matrix() * u);
  };
  m.neg_hess = [info](const Vec&) { return PsdOperator(info); };
  return m;
}

SlsModel builtin_logistic(const Mat& design, const Vec& labels, const PsdOperator& G2) {
  if (design.rows() != labels.size())
    throw std::invalid_argument("builtin_logistic: design rows != labels size");
  for (int i = 0; i < labels.size(); ++i)
    if (labels[i] != 0.0 && labels[i] != 1.0)
      throw std::invalid_argument("builtin_logistic: labels must be 0 or 1");
  const int p = int(design.cols());
  if (G2.dim() != p)
    throw std::invalid_argument("builtin_logistic: penalty dim != design cols");

  Mat X = design;
  Vec y = labels;
  PsdOperator pen = G2;

  SlsModel m;
  m.dim = p;
  m.penalty = pen;
  m.smooth_part = [X, y](const Vec& u) {
    double ll = 0.0;
    Vec eta = X * u;
    for (int i = 0; i < eta.size(); ++i) ll += y[i] * eta[i] - log1pexp(eta[i]);
    return ll;
  };
  m.eval = [m_smooth = m.smooth_part, pen](const Vec& u) {
    return m_smooth(u) - penalty_half_norm(pen, u);
  };
  m.grad = [X, y, pen](const Vec& u) {
    Vec eta = X * u;
    Vec resid(eta.size());
    for (int i = 0; i < eta.size(); ++i) resid[i] = y[i] - sigmoid(eta[i]);
    return Vec(X.transpose() * resid - pen.matrix() * u);
  };
  m.neg_hess = [X, pen](const Vec& u) {
    Vec eta = X * u;
    Vec w(eta.size());
    for (int i = 0; i < eta.size(); ++i) {
      double s = sigmoid(eta[i]);
      w[i] = s * (1.0 - s);
    }
    Mat h = X.transpose() * w.asDiagonal() * X + pen.matrix();
    return PsdOperator::unchecked(std::move(h));
  };
  return m;
}

double delta3(const SlsModel& model, const Vec& x, const Vec& u) {
  double fx = model.eval(x);
  double fxu = model.eval(x + u);
  double lin = model.grad(x).dot(u);
  // -grad^2 f = neg_hess, so the quadratic term of f is -u' neg_hess u / 2
  double quad = -0.5 * u.dot(model.neg_hess(x).matrix() * u);
  return fxu - fx - lin - quad;
}

double estimate_omega(const SlsModel& model, SmoothnessProbe& probe) {
  if (probe.center.size() != model.dim)
    throw std::invalid_argument("estimate_omega: probe center dim mismatch");
  if (probe.radius <= 0.0) throw std::invalid_argument("estimate_omega: radius must be positive");
  if (probe.metric.min_eigenvalue() <= probe.metric.psd_tol())
    throw std::invalid_argument("estimate_omega: local metric must be SPD");

  const Mat Dinv = probe.metric.inverse();
  CounterRng rng(probe.seed);
  double sup = 0.0;
  const int shells = 8;
  for (int k = 0; k < probe.n_directions; ++k) {
    Vec g = rng.normal_vector(model.dim);
    Vec dir = Dinv * g;
    double dn = (probe.metric.matrix() * dir).norm();
    if (dn <= 0.0) continue;
    dir /= dn;  // now ||D dir|| = 1
    for (int s = 1; s <= shells; ++s) {
      double rad = probe.radius * double(s) / double(shells);
      Vec u = rad * dir;
      double d3 = delta3(model, probe.center, u);
      if (!std::isfinite(d3)) {
        std::ostringstream os;
        os << "estimate_omega: objective not finite along probe direction " << k
           << " at ||Du|| = " << rad;
        throw std::runtime_error(os.str());
      }
      double val = 2.0 * std::abs(d3) / (rad * rad);
      if (val > sup) sup = val;
    }
  }
  probe.omega_hat = sup;
  return sup;
}

SelfConcordance estimate_self_concordance(const SlsModel& model, SmoothnessProbe& probe,
                                          double n) {
  if (probe.center.size() != model.dim)
    throw std::invalid_argument("estimate_self_concordance: probe center dim mismatch");
  if (n <= 0.0) throw std::invalid_argument("estimate_self_concordance: n must be positive");

  const Mat Dinv = probe.metric.inverse();
  const double eps = std::numeric_limits<double>::epsilon();
  CounterRng rng(probe.seed);

  double t3 = 0.0, t4 = 0.0;
  for (int k = 0; k < probe.n_directions; ++k) {
    Vec g = rng.normal_vector(model.dim);
    Vec u = Dinv * g;
    double un = u.norm();
    if (un <= 0.0) continue;
    u /= un;  // unit Euclidean direction; the ratios are scale-free in u
    double du = (probe.metric.matrix() * u).norm();
    if (du <= 0.0) continue;
    double du3 = du * du * du;
    double du4 = du3 * du;
    // Stencil spacing at 5% of the vicinity extent along u keeps the
    // difference quotients far above the rounding floor; the eps^(1/6)
    // fallback guards degenerate radii. The 5-point stencil is exact for
    // cubic and quartic objectives at any spacing.
    double h = std::max(0.05 * probe.radius / du, std::pow(eps, 1.0 / 6.0));
    if (h <= 0.0) throw std::runtime_error("estimate_self_concordance: step underflow");

    auto gfun = [&](double t) { return model.smooth_part(probe.center + t * u); };
    double gm2 = gfun(-2 * h), gm1 = gfun(-h), g0 = gfun(0.0), gp1 = gfun(h), gp2 = gfun(2 * h);
    double d3 = (gp2 - 2 * gp1 + 2 * gm1 - gm2) / (2 * h * h * h);
    double d4 = (gp2 - 4 * gp1 + 6 * g0 - 4 * gm1 + gm2) / (h * h * h * h);
    if (!std::isfinite(d3) || !std::isfinite(d4))
      throw std::runtime_error("estimate_self_concordance: non-finite stencil value");

    t3 = std::max(t3, std::abs(d3) / du3);
    t4 = std::max(t4, std::abs(d4) / du4);
  }

  SelfConcordance out;
  out.tau3 = t3;
  out.tau4 = t4;
  out.c3 = t3 * std::sqrt(n);
  out.c4 = t4 * n;
  probe.tau3_hat = t3;
  probe.tau4_hat = t4;
  probe.c3_hat = out.c3;
  probe.c4_hat = out.c4;
  return out;
}

namespace {

Mat mat_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix JSON must be array of rows");
  int rows = int(j.size());
  int cols = int(j[0].size());
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (int(j[i].size()) != cols) throw std::invalid_argument("ragged matrix JSON");
    for (int k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

Vec vec_from_json(const nlohmann::json& j) {
  Vec v(j.size());
  for (int i = 0; i < int(j.size()); ++i) v[i] = j[i].get<double>();
  return v;
}

PsdOperator penalty_from_json(const nlohmann::json& j, int dim) {
  if (j.is_number()) return PsdOperator(j.get<double>() * Mat::Identity(dim, dim));
  if (j.is_object()) return PsdOperator::from_json(j);
  return PsdOperator(mat_from_json(j));
}

}  // namespace

SlsModel model_from_json(const nlohmann::json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "linear_gaussian") {
    Mat X = mat_from_json(j.at("design"));
    Vec y = vec_from_json(j.at("y"));
    double sd = j.value("noise_sd", 1.0);
    PsdOperator G2 = penalty_from_json(j.at("G2"), int(X.cols()));
    return builtin_linear_gaussian(X, y, sd, G2);
  }
  if (kind == "logistic") {
    Mat X = mat_from_json(j.at("design"));
    Vec y = vec_from_json(j.at("labels"));
    PsdOperator G2 = penalty_from_json(j.at("G2"), int(X.cols()));
    return builtin_logistic(X, y, G2);
  }
  if (kind == "eio") return eio_model_from_json(j);
  if (kind == "custom_grid") return custom_grid_model_from_json(j);
  throw std::invalid_argument("model_from_json: unsupported kind '" + kind + "'");
}

SlsModel custom_grid_model_from_json(const nlohmann::json& payload) {
  Vec lower = vec_from_json(payload.at("lower"));
  Vec upper = vec_from_json(payload.at("upper"));
  std::vector<int> shape;
  for (const auto& s : payload.at("shape")) shape.push_back(s.get<int>());
  const int d = int(shape.size());
  if (lower.size() != d || upper.size() != d)
    throw std::invalid_argument("custom_grid: lower/upper/shape dims disagree");
  std::vector<double> values;
  for (const auto& v : payload.at("values")) values.push_back(v.get<double>());
  std::size_t expect = 1;
  for (int s : shape) {
    if (s < 2) throw std::invalid_argument("custom_grid: each axis needs >= 2 nodes");
    expect *= std::size_t(s);
  }
  if (values.size() != expect)
    throw std::invalid_argument("custom_grid: values length != product of shape");

  Vec step(d);
  for (int a = 0; a < d; ++a) {
    if (upper[a] <= lower[a]) throw std::invalid_argument("custom_grid: upper <= lower");
    step[a] = (upper[a] - lower[a]) / double(shape[a] - 1);
  }

  // row-major node index
  auto node = [shape, values](const std::vector<int>& idx) {
    std::size_t flat = 0;
    for (std::size_t a = 0; a < idx.size(); ++a) flat = flat * std::size_t(shape[a]) + idx[a];
    return values[flat];
  };

  auto eval = [=](const Vec& x) {
    std::vector<int> base(d);
    Vec frac(d);
    for (int a = 0; a < d; ++a) {
      double t = (x[a] - lower[a]) / step[a];
      t = std::min(std::max(t, 0.0), double(shape[a] - 1));  // clamp to the box
      int i = std::min(int(std::floor(t)), shape[a] - 2);
      base[a] = i;
      frac[a] = t - i;
    }
    double acc = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
      double w = 1.0;
      std::vector<int> idx(d);
      for (int a = 0; a < d; ++a) {
        int bit = (corner >> a) & 1;
        idx[a] = base[a] + bit;
        w *= bit ? frac[a] : (1.0 - frac[a]);
      }
      acc += w * node(idx);
    }
    return acc;
  };

  SlsModel m;
  m.dim = d;
  m.penalty = PsdOperator::zero(d);
  m.smooth_part = eval;
  m.eval = eval;
  m.grad = [eval, step, d](const Vec& x) {
    Vec g(d);
    for (int a = 0; a < d; ++a) {
      Vec e = Vec::Zero(d);
      e[a] = step[a];
      g[a] = (eval(x + e) - eval(x - e)) / (2.0 * step[a]);
    }
    return g;
  };
  m.neg_hess = [eval, step, d](const Vec& x) {
    Mat h(d, d);
    for (int a = 0; a < d; ++a) {
      for (int b = a; b < d; ++b) {
        Vec ea = Vec::Zero(d), eb = Vec::Zero(d);
        ea[a] = step[a];
        eb[b] = step[b];
        double v;
        if (a == b) {
          v = (eval(x + ea) - 2.0 * eval(x) + eval(x - ea)) / (step[a] * step[a]);
        } else {
          v = (eval(x + ea + eb) - eval(x + ea - eb) - eval(x - ea + eb) + eval(x - ea - eb)) /
              (4.0 * step[a] * step[b]);
        }
        h(a, b) = -v;
        h(b, a) = -v;
      }
    }
    return PsdOperator::unchecked(std::move(h));
  };
  return m;
}

}  // namespace sls
