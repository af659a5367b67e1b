#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "sidlab/classifiers.hpp"
#include "sidlab/data.hpp"
#include "sidlab/linalg.hpp"

namespace sidlab {

// Standard normal upper tail P(Z >= x).
double std_normal_upper_tail(double x);

// Marcum-Q of order 1/2 via its Gaussian-tail closed form:
//   Q_{1/2}(a, b) = PhiBar(b - a) + PhiBar(b + a).
double marcum_q_half(double a, double b);

// P(sum_j lambda_j Z_j^2 <= x) for i.i.d. standard normal Z_j, by numerical
// inversion of the characteristic function (Imhof quadrature) to absolute
// tolerance `tol`. All-zero coefficients degenerate to a unit step at 0.
// Throws on quadrature non-convergence, reporting the achieved error bound.
double chi2_combo_cdf(double x, const std::vector<double>& lambda,
                      double tol = 1e-6);

// Lower regularized incomplete gamma P(s, x) = gamma(s,x)/Gamma(s), by the
// classic series / continued-fraction pair.
double reg_lower_gamma(double s, double x);

// Independent-class reduction of the quadratic tail bound:
//   1 - T(3p/8, sqrt((t+delta)/(4 (1+eta)^4)))
// with T the lower regularized incomplete gamma function.
double corollary2_bound(double t, double delta, double eta, int p);

// Everything the tail bounds consume. `transform` is the materialized H;
// the mixture provides class means, covariances and the pooled covariance;
// delta is the measured normal-example deviation cap.
struct BoundInput {
  Mat transform;
  GaussianMixtureSpec mixture;
  double eta = 0.5;
  double delta = 0.0;
};

struct AffineClassBound {
  double marcum_a = 0.0;  // |C_k (I/2 - eta S^-1) mu_k|
  double marcum_b = 0.0;  // sqrt((t+delta) / (C_k S_k C_k^T))
  double c_norm = 0.0;    // ||C_k||
  double c_sigma_c = 0.0; // C_k S_k C_k^T
  double value = 0.0;
  bool degenerate = false;  // C_k vanished (invertible-H regime)
};

struct AffineBoundResult {
  double bound = 0.0;  // min over classes
  std::vector<AffineClassBound> per_class;
};

// Affine-classifier tail bound: per class k,
//   C_k = mu_k^T (S^-1 - H^T (H S H^T)^-1 H),
//   Q_{1/2}(|C_k (I/2 - eta S^-1) mu_k|, sqrt((t+delta)/(C_k S_k C_k^T))),
// minimized over k. A vanished C_k contributes 0 (the bound degenerates);
// a materially negative C_k S_k C_k^T is rejected with the class index.
AffineBoundResult affine_bound(const BoundInput& in, double t);

struct QuadraticClassBound {
  std::vector<double> lambdas;  // kept nonzero eigenvalues
  double value = 0.0;
};

struct QuadraticBoundResult {
  double bound = 0.0;
  std::vector<QuadraticClassBound> per_class;
};

// Quadratic-classifier tail bound: per class k the kept eigenvalues of
//   S_hat_k^{1/2} (S_k^-1 - H^T (H S_k H^T)^-1 H) S_hat_k^{1/2},
//   S_hat_k = (I + eta S_k^-1) S_k (I + eta S_k^-1)^T,
// feed 1 - P(sqrt(delta+t); lambda) + P(-sqrt(delta+t); lambda).
// Eigenvalues below 1e-9 * max|lambda| are truncated.
QuadraticBoundResult quadratic_bound(const BoundInput& in, double t);

// Mixture family for bound verification: class means carry most of their
// energy inside the row space of the analysis transform, plus a controlled
// perpendicular component (relative to the noise scale) that drives the
// class-gap rows C_k.
struct BoundsMixtureConfig {
  int classes = 10;
  int per_class = 100;
  int dim = 256;
  double sigma = 0.18;
  double sigma_spread = 0.05;      // sigma_k in sigma * [1-spread, 1+spread]
  double mean_row = 2.5;           // row-space mean norm
  double mean_perp_frac = 0.85;    // perpendicular mean norm, units of sigma
  double bump_scale = 0.1;
  int bump_rank = 4;
};

std::pair<Dataset, GaussianMixtureSpec> make_bounds_mixture(
    const BoundsMixtureConfig& cfg, std::uint64_t seed, const Mat& transform);

// Perturbation constructions matching the tail analyses:
//   affine:    x_hat = x - eta * S^-1 mu_label          (pooled S)
//   quadratic: x_hat = x + eta * S_label^-1 (x - mu_label)
// Returned closures are pure and reusable across examples.
std::function<Tensor(const Tensor&, int)> make_model_attack_affine(
    const GaussianMixtureSpec& spec, double eta);
std::function<Tensor(const Tensor&, int)> make_model_attack_quadratic(
    const GaussianMixtureSpec& spec, double eta);

struct DeviationCurve {
  double delta = 0.0;              // max over normals of ||F(x)-G(x)||^2
  std::vector<double> t_fracs;     // grid of t as fractions of delta
  std::vector<double> empirical;   // P-hat(||F(x_hat)-G(x_hat)||^2 >= t+delta)
  std::vector<double> stderr_;     // binomial standard error per grid point
  std::vector<double> ci_lo, ci_hi;
  int n_adversarial = 0;
};

// Measures delta over `normals`, generates one adversarial counterpart per
// example through `attack` (nullopt = failed, skipped), and evaluates the
// empirical exceedance over the t-grid. Throws if no attack succeeds.
// With `t_absolute` the grid entries are raw t values instead of fractions
// of delta (needed when delta is 0, e.g. identical classifiers).
DeviationCurve monte_carlo_deviation(
    const IClassifier& f, const IClassifier& g, const Dataset& normals,
    const std::function<std::optional<Tensor>(const Tensor&, int)>& attack,
    const std::vector<double>& t_fracs, bool t_absolute = false);

}  // namespace sidlab
