#include "slscert/operator.hpp"

#include <sstream>

namespace sls {

PsdOperator::PsdOperator(Mat m, bool enforce_psd) {
  if (m.rows() != m.cols()) throw std::invalid_argument("operator must be square");
  const double scale = m.cwiseAbs().maxCoeff();
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (scale > 0 && asym > 1e-12 * scale) {
    std::ostringstream os;
    os << "matrix not symmetric: relative asymmetry " << asym / scale;
    throw std::invalid_argument(os.str());
  }
  matrix_ = 0.5 * (m + m.transpose());  // kill roundoff asymmetry

  Eigen::SelfAdjointEigenSolver<Mat> es(matrix_);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  // Eigen returns ascending order
  evals_ = es.eigenvalues().reverse();
  evecs_ = es.eigenvectors().rowwise().reverse();

  const double lmax = evals_.size() ? std::max(evals_[0], 0.0) : 0.0;
  psd_tol_ = 1e-12 * lmax;
  if (enforce_psd) {
    for (int i = 0; i < evals_.size(); ++i) {
      if (evals_[i] < -psd_tol_) {
        std::ostringstream os;
        os << "operator not PSD: eigenvalue " << evals_[i] << " below -" << psd_tol_;
        throw std::invalid_argument(os.str());
      }
      if (evals_[i] < 0) evals_[i] = 0.0;
    }
  }
}

Mat PsdOperator::sqrt() const {
  for (int i = 0; i < evals_.size(); ++i)
    if (evals_[i] < -psd_tol_)
      throw std::runtime_error("sqrt of indefinite operator");
  Vec r = evals_.cwiseMax(0.0).cwiseSqrt();
  return evecs_ * r.asDiagonal() * evecs_.transpose();
}

Mat PsdOperator::inv_sqrt() const {
  Vec r(evals_.size());
  for (int i = 0; i < evals_.size(); ++i) {
    if (evals_[i] <= psd_tol_) {
      std::ostringstream os;
      os << "inverse square root of singular operator: eigenvalue " << evals_[i]
         << " at position " << i;
      throw std::runtime_error(os.str());
    }
    r[i] = 1.0 / std::sqrt(evals_[i]);
  }
  return evecs_ * r.asDiagonal() * evecs_.transpose();
}

Mat PsdOperator::inverse() const {
  Vec r(evals_.size());
  for (int i = 0; i < evals_.size(); ++i) {
    if (evals_[i] <= psd_tol_) {
      std::ostringstream os;
      os << "inverse of singular operator: eigenvalue " << evals_[i] << " at position " << i;
      throw std::runtime_error(os.str());
    }
    r[i] = 1.0 / evals_[i];
  }
  return evecs_ * r.asDiagonal() * evecs_.transpose();
}

Vec PsdOperator::solve(const Vec& b) const {
  return inverse() * b;
}

Mat PsdOperator::solve(const Mat& b) const {
  return inverse() * b;
}

double PsdOperator::logdet() const {
  double s = 0.0;
  for (int i = 0; i < evals_.size(); ++i) {
    if (evals_[i] <= psd_tol_) throw std::runtime_error("logdet of singular operator");
    s += std::log(evals_[i]);
  }
  return s;
}

nlohmann::json PsdOperator::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < matrix_.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < matrix_.cols(); ++j) row.push_back(matrix_(i, j));
    rows.push_back(std::move(row));
  }
  return nlohmann::json{{"dim", dim()}, {"rows", std::move(rows)}};
}

PsdOperator PsdOperator::from_json(const nlohmann::json& j) {
  const int d = j.at("dim").get<int>();
  const auto& rows = j.at("rows");
  if (int(rows.size()) != d) throw std::invalid_argument("dim does not match row count");
  Mat m(d, d);
  for (int i = 0; i < d; ++i) {
    if (int(rows[i].size()) != d) throw std::invalid_argument("ragged operator rows");
    for (int k = 0; k < d; ++k) m(i, k) = rows[i][k].get<double>();
  }
  return PsdOperator(std::move(m));
}

bool psd_leq(const Mat& a, const Mat& b) {
  Mat d = b - a;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (d + d.transpose()));
  const double tol = 1e-9 * spectral_norm(b);
  return es.eigenvalues().minCoeff() >= -tol;
}

BlockOperator BlockOperator::split(const Mat& full, int p) {
  if (full.rows() != full.cols() || p <= 0 || p >= full.rows())
    throw std::invalid_argument("bad block split");
  const int q = int(full.rows()) - p;
  BlockOperator b;
  b.tt = full.topLeftCorner(p, p);
  b.tn = full.topRightCorner(p, q);
  b.nn = full.bottomRightCorner(q, q);
  return b;
}

PsdOperator schur_efficient(const BlockOperator& blocks) {
  PsdOperator nn(blocks.nn);
  if (nn.min_eigenvalue() <= nn.psd_tol())
    throw std::runtime_error("nuisance block singular in Schur complement");
  Mat s = blocks.tt - blocks.tn * nn.solve(Mat(blocks.tn.transpose()));
  return PsdOperator(0.5 * (s + s.transpose()));
}

double separability_rho(const BlockOperator& blocks) {
  PsdOperator tt(blocks.tt), nn(blocks.nn);
  Mat tti = tt.inv_sqrt();
  Mat cross = tti * blocks.tn * nn.solve(Mat(blocks.tn.transpose())) * tti;
  return spectral_norm(cross);
}

double spectral_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  return m.jacobiSvd().singularValues()[0];
}

double nuclear_norm_sym(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  return es.eigenvalues().cwiseAbs().sum();
}

}  // namespace sls
