#pragma once

#include <Eigen/Dense>

#include "sidlab/tensor.hpp"

namespace sidlab {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat to_eigen(const Tensor& t);       // 2-D tensor -> matrix
Vec to_eigen_vec(const Tensor& t);   // any tensor, flattened
Tensor from_eigen(const Mat& m);
Tensor from_eigen_vec(const Vec& v);

// Symmetrizes the input (rejecting asymmetry above 1e-10 relative), then
// applies the spectral definition. Negative eigenvalues in [-1e-10*scale, 0)
// are clipped to 0; anything lower is rejected.
Mat psd_sqrt(const Mat& m);

// Moore-Penrose pseudoinverse of a symmetric matrix via eigendecomposition.
Mat pinv(const Mat& m);

// Eigenvalues of a symmetric matrix, ascending.
Vec eigvals_sym(const Mat& m);

// Condition number of a symmetric positive definite matrix.
double cond_sym(const Mat& m);

}  // namespace sidlab
