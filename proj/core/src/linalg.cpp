#include "sidlab/linalg.hpp"

#include <stdexcept>

namespace sidlab {

Mat to_eigen(const Tensor& t) {
  if (t.ndim() != 2) throw std::invalid_argument("to_eigen: tensor not 2-D");
  Mat m(t.rows(), t.cols());
  for (int r = 0; r < t.rows(); ++r)
    for (int c = 0; c < t.cols(); ++c) m(r, c) = t.at(r, c);
  return m;
}

Vec to_eigen_vec(const Tensor& t) {
  Vec v(t.size());
  for (std::int64_t i = 0; i < t.size(); ++i) v(i) = t[i];
  return v;
}

Tensor from_eigen(const Mat& m) {
  Tensor t({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) t.at(r, c) = m(r, c);
  return t;
}

Tensor from_eigen_vec(const Vec& v) {
  Tensor t({static_cast<int>(v.size())});
  for (int i = 0; i < v.size(); ++i) t[i] = v(i);
  return t;
}

namespace {

Mat symmetrized(const Mat& m, const char* who) {
  if (m.rows() != m.cols())
    throw std::invalid_argument(std::string(who) + ": matrix not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale)
    throw std::invalid_argument(std::string(who) +
                                ": input asymmetry exceeds tolerance");
  return 0.5 * (m + m.transpose());
}

}  // namespace

Mat psd_sqrt(const Mat& m) {
  const Mat s = symmetrized(m, "psd_sqrt");
  Eigen::SelfAdjointEigenSolver<Mat> es(s);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("psd_sqrt: eigendecomposition failed");
  Vec ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-10 * scale)
      throw std::domain_error("psd_sqrt: materially negative eigenvalue " +
                              std::to_string(ev(i)));
    ev(i) = ev(i) > 0.0 ? std::sqrt(ev(i)) : 0.0;
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Mat pinv(const Mat& m) {
  const Mat s = symmetrized(m, "pinv");
  Eigen::SelfAdjointEigenSolver<Mat> es(s);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("pinv: eigendecomposition failed");
  Vec ev = es.eigenvalues();
  const double tol = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (int i = 0; i < ev.size(); ++i)
    ev(i) = std::fabs(ev(i)) > tol ? 1.0 / ev(i) : 0.0;
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Vec eigvals_sym(const Mat& m) {
  const Mat s = symmetrized(m, "eigvals_sym");
  Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("eigvals_sym: eigendecomposition failed");
  return es.eigenvalues();
}

double cond_sym(const Mat& m) {
  const Vec ev = eigvals_sym(m);
  const double lo = ev.minCoeff(), hi = ev.maxCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace sidlab
