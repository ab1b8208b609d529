#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

namespace sls {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Symmetric PSD operator with a cached spectral decomposition.
// Eigenvalues are held in descending order; negatives inside the tolerance
// band psd_tol = 1e-12 * lambda_max are clamped to zero at construction.
// Immutable after construction.
class PsdOperator {
 public:
  PsdOperator() = default;
  explicit PsdOperator(Mat m) : PsdOperator(std::move(m), /*enforce_psd=*/true) {}

  // Carries possibly indefinite symmetric matrices (e.g. Hessians away from
  // the optimum) without clamping; PSD-only operations still validate.
  static PsdOperator unchecked(Mat m) { return PsdOperator(std::move(m), false); }

  static PsdOperator identity(int dim) { return PsdOperator(Mat::Identity(dim, dim)); }
  static PsdOperator zero(int dim) { return PsdOperator(Mat::Zero(dim, dim)); }
  static PsdOperator diagonal(const Vec& d) {
    return PsdOperator(Mat(d.asDiagonal()));
  }

  int dim() const { return int(matrix_.rows()); }
  const Mat& matrix() const { return matrix_; }
  const Vec& eigenvalues() const { return evals_; }   // descending
  const Mat& eigenvectors() const { return evecs_; }  // columns match evals_
  double psd_tol() const { return psd_tol_; }

  double operator_norm() const { return evals_.size() ? evals_.cwiseAbs().maxCoeff() : 0.0; }
  double frobenius() const { return std::sqrt(evals_.squaredNorm()); }
  double nuclear() const { return evals_.cwiseAbs().sum(); }
  double trace() const { return evals_.sum(); }
  double min_eigenvalue() const { return evals_.size() ? evals_.minCoeff() : 0.0; }

  Mat sqrt() const;      // spectral square root; requires PSD
  Mat inv_sqrt() const;  // requires strictly positive spectrum
  Mat inverse() const;
  Vec solve(const Vec& b) const;
  Mat solve(const Mat& b) const;
  double logdet() const;

  PsdOperator sqrt_operator() const { return PsdOperator(sqrt()); }
  PsdOperator inverse_operator() const { return PsdOperator(inverse()); }

  nlohmann::json to_json() const;
  static PsdOperator from_json(const nlohmann::json& j);

 private:
  PsdOperator(Mat m, bool enforce_psd);

  Mat matrix_;
  Vec evals_;
  Mat evecs_;
  double psd_tol_ = 0.0;
};

// a <= b in the PSD order: min eigenvalue of b - a >= -1e-9 * ||b||.
bool psd_leq(const Mat& a, const Mat& b);
inline bool psd_leq(const PsdOperator& a, const PsdOperator& b) {
  return psd_leq(a.matrix(), b.matrix());
}

// 2x2 block arrangement of a symmetric operator over (target, nuisance).
struct BlockOperator {
  Mat tt;  // p x p
  Mat tn;  // p x q; the nuisance-target block is tn^T by construction
  Mat nn;  // q x q

  int p() const { return int(tt.rows()); }
  int q() const { return int(nn.rows()); }

  Mat full() const {
    Mat f(p() + q(), p() + q());
    f.topLeftCorner(p(), p()) = tt;
    f.topRightCorner(p(), q()) = tn;
    f.bottomLeftCorner(q(), p()) = tn.transpose();
    f.bottomRightCorner(q(), q()) = nn;
    return f;
  }

  static BlockOperator split(const Mat& full, int p);
};

// Efficient (Schur-complement) block: tt - tn * nn^{-1} * tn^T.
PsdOperator schur_efficient(const BlockOperator& blocks);

// Operator norm of tt^{-1/2} tn nn^{-1} tn^T tt^{-1/2}; the separability
// parameter rho. Requires both diagonal blocks SPD.
double separability_rho(const BlockOperator& blocks);

double spectral_norm(const Mat& m);   // largest singular value of a general matrix
double nuclear_norm_sym(const Mat& m);  // sum |lambda_i| of a symmetric matrix

}  // namespace sls
