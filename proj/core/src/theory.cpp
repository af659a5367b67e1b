#include "sidlab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace sidlab {

double std_normal_upper_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double marcum_q_half(double a, double b) {
  if (a < 0.0 || b < 0.0 || !std::isfinite(a))
    throw std::invalid_argument("marcum_q_half: arguments must be finite and >= 0");
  if (!std::isfinite(b)) return 0.0;  // threshold at infinity
  return std_normal_upper_tail(b - a) + std_normal_upper_tail(b + a);
}

// ---------------------------------------------------------------------------
// Imhof inversion for linear combinations of chi-squares
// ---------------------------------------------------------------------------

namespace {

struct ImhofIntegrand {
  const std::vector<double>& lam;
  double x;

  double theta(double u) const {
    double s = 0.0;
    for (double l : lam) s += std::atan(l * u);
    return 0.5 * s - 0.5 * x * u;
  }
  double theta_prime(double u) const {
    double s = 0.0;
    for (double l : lam) s += l / (1.0 + l * l * u * u);
    return 0.5 * (s - x);
  }
  double operator()(double u) const {
    if (u <= 0.0) {
      double s = 0.0;
      for (double l : lam) s += l;
      return 0.5 * (s - x);
    }
    double lnrho = 0.0;
    for (double l : lam) lnrho += std::log1p(l * l * u * u);
    return std::sin(theta(u)) * std::exp(-0.25 * lnrho) / u;
  }
};

// 15-point Gauss-Legendre on [-1, 1].
constexpr double kGlNodes[15] = {
    -0.9879925180204854, -0.9372733924007060, -0.8482065834104272,
    -0.7244177313601701, -0.5709721726085388, -0.3941513470775634,
    -0.2011940939974345, 0.0,                 0.2011940939974345,
    0.3941513470775634,  0.5709721726085388,  0.7244177313601701,
    0.8482065834104272,  0.9372733924007060,  0.9879925180204854};
constexpr double kGlWeights[15] = {
    0.0307532419961173, 0.0703660474881081, 0.1071592204671719,
    0.1395706779261543, 0.1662692058169939, 0.1861610000155622,
    0.1984314853271116, 0.2025782419255613, 0.1984314853271116,
    0.1861610000155622, 0.1662692058169939, 0.1395706779261543,
    0.1071592204671719, 0.0703660474881081, 0.0307532419961173};

template <typename F>
double gauss15(const F& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < 15; ++i) s += kGlWeights[i] * f(c + h * kGlNodes[i]);
  return h * s;
}

template <typename F>
double adaptive_simpson_rec(const F& f, double a, double fa, double b, double fb,
                            double c, double fc, double whole, double tol,
                            int depth) {
  const double m1 = 0.5 * (a + c), m2 = 0.5 * (c + b);
  const double f1 = f(m1), f2 = f(m2);
  const double left = (c - a) / 6.0 * (fa + 4.0 * f1 + fc);
  const double right = (b - c) / 6.0 * (fc + 4.0 * f2 + fb);
  if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson_rec(f, a, fa, c, fc, m1, f1, left, tol / 2.0, depth - 1) +
         adaptive_simpson_rec(f, c, fc, b, fb, m2, f2, right, tol / 2.0, depth - 1);
}

template <typename F>
double adaptive_simpson(const F& f, double a, double b, double tol) {
  const double c = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fc = f(c);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
  return adaptive_simpson_rec(f, a, fa, b, fb, c, fc, whole, tol, 28);
}

}  // namespace

double chi2_combo_cdf(double x, const std::vector<double>& lambda, double tol) {
  if (!std::isfinite(x)) return x > 0.0 ? 1.0 : 0.0;
  std::vector<double> lam;
  for (double l : lambda) {
    if (!std::isfinite(l))
      throw std::invalid_argument("chi2_combo_cdf: non-finite coefficient");
    if (l != 0.0) lam.push_back(l);
  }
  if (lam.empty()) return x >= 0.0 ? 1.0 : 0.0;  // point mass at zero

  // Negligible total coefficient mass: P(|Q| >= |x|) <= sum|lambda| / |x|
  // by Markov's inequality, so the CDF is a step to within tolerance.
  if (x != 0.0) {
    double mass = 0.0;
    for (double l : lam) mass += std::fabs(l);
    if (mass <= 0.25 * tol * std::fabs(x)) return x > 0.0 ? 1.0 : 0.0;
  }

  const ImhofIntegrand f{lam, x};
  const int m = static_cast<int>(lam.size());

  // Split point beyond which theta is strictly monotone: terms with
  // |l| <= |x|/(4m) contribute at most |x|/4 in total; each remaining term
  // falls below |x|/(4m) once u >= sqrt(4m/(|l||x|)).
  double u_mono = 0.0;
  if (x != 0.0) {
    for (double l : lam) {
      const double al = std::fabs(l);
      if (al > std::fabs(x) / (4.0 * m))
        u_mono = std::max(u_mono, std::sqrt(4.0 * m / (al * std::fabs(x))));
    }
  } else {
    // No oscillation to exploit; integrate far enough that the envelope
    // tail (Imhof's bound) drops below tol.
    double lnprod = 0.0;
    for (double l : lam) lnprod += 0.5 * std::log(std::fabs(l));
    // tail(U) = (2/m) * exp(-lnprod) / U^(m/2) <= tol/2
    const double lnU = (std::log(4.0 / m) - lnprod - std::log(tol / 2.0)) * 2.0 / m;
    if (lnU > std::log(1e9))
      throw std::runtime_error(
          "chi2_combo_cdf: quadrature does not converge for x == 0 with few "
          "coefficients; achieved error bound exceeds tolerance");
    u_mono = std::exp(std::max(0.0, lnU));
  }

  double integral = 0.0;
  if (u_mono > 0.0) {
    // Oscillation count on [0, u_mono] sets the panelization.
    const double range = std::fabs(f.theta(u_mono) - f.theta(0.0)) +
                         0.5 * std::fabs(x) * u_mono + m;
    const int panels = std::max(8, std::min(20000, static_cast<int>(range / 1.5) + 8));
    const double h = u_mono / panels;
    for (int i = 0; i < panels; ++i)
      integral += adaptive_simpson(f, i * h, (i + 1) * h, tol / (4.0 * panels));
  }

  if (x != 0.0) {
    // March half-periods of sin(theta); contributions alternate in sign with
    // decreasing envelope, so truncation error is bounded by the last term.
    double u0 = std::max(u_mono, 1e-12);
    double th0 = f.theta(u0);
    const double dir = x > 0.0 ? -1.0 : 1.0;  // theta monotone direction
    const int max_segments = 200000;
    bool converged = false;
    double last = 0.0;
    for (int seg = 0; seg < max_segments; ++seg) {
      const double target = th0 + dir * M_PI;
      // bracket the target crossing
      double step_guess = M_PI / std::max(std::fabs(f.theta_prime(u0)), 1e-12);
      double hi = u0 + step_guess;
      int expand = 0;
      while ((f.theta(hi) - target) * dir < 0.0 && expand < 200) {
        hi = u0 + (hi - u0) * 2.0;
        ++expand;
      }
      double lo = u0;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((f.theta(mid) - target) * dir >= 0.0)
          hi = mid;
        else
          lo = mid;
      }
      const double u1 = 0.5 * (lo + hi);
      last = gauss15(f, u0, u1);
      integral += last;
      u0 = u1;
      th0 = target;
      if (std::fabs(last) < tol / 2.0) {
        converged = true;
        break;
      }
    }
    if (!converged)
      throw std::runtime_error(
          "chi2_combo_cdf: quadrature non-convergence; achieved error bound " +
          std::to_string(std::fabs(last)));
  }

  double p = 0.5 - integral / M_PI;
  return std::min(1.0, std::max(0.0, p));
}

// ---------------------------------------------------------------------------
// Regularized incomplete gamma
// ---------------------------------------------------------------------------

double reg_lower_gamma(double s, double x) {
  if (s <= 0.0 || x < 0.0)
    throw std::invalid_argument("reg_lower_gamma: require s > 0 and x >= 0");
  if (x == 0.0) return 0.0;
  if (x < s + 1.0) {
    // series expansion of gamma(s, x)
    double term = 1.0 / s;
    double sum = term;
    for (int n = 1; n < 10000; ++n) {
      term *= x / (s + n);
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * 1e-16)
        return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
    }
    throw std::runtime_error("reg_lower_gamma: series failed to converge");
  }
  // Lentz continued fraction for the upper function Q(s, x)
  const double tiny = 1e-300;
  double b = x + 1.0 - s;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -double(i) * (double(i) - s);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) {
      const double q = std::exp(-x + s * std::log(x) - std::lgamma(s)) * h;
      return 1.0 - q;
    }
  }
  throw std::runtime_error("reg_lower_gamma: continued fraction failed to converge");
}

double corollary2_bound(double t, double delta, double eta, int p) {
  if (t < 0.0 || delta < 0.0 || eta <= 0.0 || p <= 0)
    throw std::invalid_argument("corollary2_bound: arguments must be positive");
  const double s = 3.0 * p / 8.0;
  const double arg = std::sqrt((t + delta) / (4.0 * std::pow(1.0 + eta, 4.0)));
  return 1.0 - reg_lower_gamma(s, arg);
}

// ---------------------------------------------------------------------------
// Tail bounds
// ---------------------------------------------------------------------------

namespace {

Mat spd_solve(const Mat& a, const Mat& rhs, const std::string& who) {
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error(who + ": matrix not positive definite");
  return llt.solve(rhs);
}

}  // namespace

AffineBoundResult affine_bound(const BoundInput& in, double t) {
  if (t < 0.0) throw std::invalid_argument("affine_bound: t must be >= 0");
  const Mat& H = in.transform;
  const GaussianMixtureSpec& mix = in.mixture;
  const int p = mix.dim;
  if (H.cols() != p)
    throw std::invalid_argument("affine_bound: transform/mixture dim mismatch");

  const Mat hsh = H * mix.pooled * H.transpose();
  AffineBoundResult out;
  out.bound = std::numeric_limits<double>::infinity();
  for (int k = 0; k < mix.num_classes; ++k) {
    const Vec& mu = mix.means[static_cast<size_t>(k)];
    const Vec s_inv_mu =
        spd_solve(mix.pooled, mu, "affine_bound: pooled covariance");
    const Vec hz = spd_solve(hsh, H * mu, "affine_bound: H Sigma H^T");
    const Vec c = s_inv_mu - H.transpose() * hz;  // C_k^T

    AffineClassBound cb;
    cb.c_norm = c.norm();
    cb.c_sigma_c = c.dot(mix.covariances[static_cast<size_t>(k)] * c);

    // Cancellation scale of the two solve branches; below it C_k is zero
    // (the dimension-preserving degeneracy) and the class bound vanishes.
    const double cancel = 1e-9 * (s_inv_mu.norm() + (H.transpose() * hz).norm());
    if (cb.c_norm <= cancel) {
      cb.degenerate = true;
      cb.value = 0.0;
    } else {
      if (cb.c_sigma_c <= 0.0)
        throw std::runtime_error(
            "affine_bound: C_k Sigma_k C_k^T is numerically non-positive for "
            "class " + std::to_string(k));
      cb.marcum_a = std::fabs(0.5 * c.dot(mu) - in.eta * c.dot(s_inv_mu));
      cb.marcum_b = std::sqrt((t + in.delta) / cb.c_sigma_c);
      cb.value = marcum_q_half(cb.marcum_a, cb.marcum_b);
    }
    out.bound = std::min(out.bound, cb.value);
    out.per_class.push_back(std::move(cb));
  }
  return out;
}

QuadraticBoundResult quadratic_bound(const BoundInput& in, double t) {
  if (t < 0.0) throw std::invalid_argument("quadratic_bound: t must be >= 0");
  const Mat& H = in.transform;
  const GaussianMixtureSpec& mix = in.mixture;
  const int p = mix.dim;
  if (H.cols() != p)
    throw std::invalid_argument("quadratic_bound: transform/mixture dim mismatch");

  QuadraticBoundResult out;
  out.bound = std::numeric_limits<double>::infinity();
  const Mat eye = Mat::Identity(p, p);
  for (int k = 0; k < mix.num_classes; ++k) {
    const Mat& cov = mix.covariances[static_cast<size_t>(k)];
    const Mat prec = spd_solve(cov, eye, "quadratic_bound: class covariance");
    const Mat hsh = H * cov * H.transpose();
    const Mat hsh_inv_h =
        spd_solve(hsh, H, "quadratic_bound: H Sigma_k H^T");
    const Mat m = prec - H.transpose() * hsh_inv_h;
    const Mat amp = eye + in.eta * prec;
    const Mat sigma_hat = amp * cov * amp.transpose();
    const Mat root = psd_sqrt(sigma_hat);
    Mat w = root * m * root;
    w = 0.5 * (w + w.transpose());
    const Vec ev = eigvals_sym(w);

    QuadraticClassBound cb;
    const double scale = ev.cwiseAbs().maxCoeff();
    // Cancellation scale: when H is dimension-preserving the two terms of m
    // cancel exactly and the surviving spectrum is numerical noise relative
    // to the positive part alone.
    const double cancel = 1e-9 * (root * prec * root).norm();
    if (scale > cancel)
      for (int i = 0; i < ev.size(); ++i)
        if (std::fabs(ev(i)) > 1e-9 * scale) cb.lambdas.push_back(ev(i));
    const double thr = std::sqrt(in.delta + t);
    cb.value = 1.0 - chi2_combo_cdf(thr, cb.lambdas) +
               chi2_combo_cdf(-thr, cb.lambdas);
    cb.value = std::min(1.0, std::max(0.0, cb.value));
    out.bound = std::min(out.bound, cb.value);
    out.per_class.push_back(std::move(cb));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model-aligned perturbations and the Monte Carlo curve
// ---------------------------------------------------------------------------

std::pair<Dataset, GaussianMixtureSpec> make_bounds_mixture(
    const BoundsMixtureConfig& cfg, std::uint64_t seed, const Mat& transform) {
  const int p = cfg.dim;
  if (transform.cols() != p)
    throw std::invalid_argument("make_bounds_mixture: transform/dim mismatch");
  std::mt19937_64 rng(derive_seed(seed, 0xb0));
  std::normal_distribution<double> gauss(0.0, 1.0);

  const Mat hht = transform * transform.transpose();
  Eigen::LLT<Mat> llt(hht);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("make_bounds_mixture: H H^T not positive definite");

  std::vector<Vec> means;
  for (int k = 0; k < cfg.classes; ++k) {
    Vec z(transform.rows());
    for (int i = 0; i < z.size(); ++i) z(i) = gauss(rng);
    Vec row_part = transform.transpose() * z;
    row_part *= cfg.mean_row / row_part.norm();
    Vec g(p);
    for (int i = 0; i < p; ++i) g(i) = gauss(rng);
    Vec perp = g - transform.transpose() * llt.solve(transform * g);
    perp *= cfg.mean_perp_frac * cfg.sigma / perp.norm();
    means.push_back(row_part + perp);
  }

  MixtureConfig mc;
  mc.num_classes = cfg.classes;
  mc.per_class = cfg.per_class;
  mc.dim = p;
  mc.sigma_lo = cfg.sigma * (1.0 - cfg.sigma_spread);
  mc.sigma_hi = cfg.sigma * (1.0 + cfg.sigma_spread);
  mc.bump_scale = cfg.bump_scale;
  mc.bump_rank = cfg.bump_rank;
  mc.seed = derive_seed(seed, 0xb1);
  mc.mean_override = means;
  return gen_gaussian_mixture(mc);
}

std::function<Tensor(const Tensor&, int)> make_model_attack_affine(
    const GaussianMixtureSpec& spec, double eta) {
  auto dirs = std::make_shared<std::vector<Vec>>();
  for (int k = 0; k < spec.num_classes; ++k)
    dirs->push_back(spd_solve(spec.pooled, spec.means[static_cast<size_t>(k)],
                              "model_attack_affine"));
  return [dirs, eta](const Tensor& x, int label) {
    Tensor out = x;
    const Vec& d = (*dirs)[static_cast<size_t>(label)];
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= eta * d(i);
    return out;
  };
}

std::function<Tensor(const Tensor&, int)> make_model_attack_quadratic(
    const GaussianMixtureSpec& spec, double eta) {
  auto llts = std::make_shared<std::vector<Eigen::LLT<Mat>>>();
  auto means = std::make_shared<std::vector<Vec>>(spec.means);
  for (int k = 0; k < spec.num_classes; ++k) {
    llts->emplace_back(spec.covariances[static_cast<size_t>(k)]);
    if (llts->back().info() != Eigen::Success)
      throw std::runtime_error("model_attack_quadratic: covariance not SPD");
  }
  return [llts, means, eta](const Tensor& x, int label) {
    const Vec xv = to_eigen_vec(x);
    const Vec d =
        (*llts)[static_cast<size_t>(label)].solve(xv - (*means)[static_cast<size_t>(label)]);
    Tensor out = x;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += eta * d(i);
    return out;
  };
}

DeviationCurve monte_carlo_deviation(
    const IClassifier& f, const IClassifier& g, const Dataset& normals,
    const std::function<std::optional<Tensor>(const Tensor&, int)>& attack,
    const std::vector<double>& t_fracs, bool t_absolute) {
  if (f.num_classes() != g.num_classes())
    throw std::invalid_argument("monte_carlo_deviation: class count mismatch");
  if (normals.size() == 0)
    throw std::invalid_argument("monte_carlo_deviation: empty normal set");

  auto sqdev = [&](const Tensor& x) {
    const std::vector<double> a = f.logits(x), b = g.logits(x);
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
  };

  DeviationCurve curve;
  curve.t_fracs = t_fracs;
  for (size_t i = 0; i < normals.size(); ++i)
    curve.delta = std::max(curve.delta, sqdev(normals.examples[i]));

  std::vector<double> adv_dev;
  for (size_t i = 0; i < normals.size(); ++i) {
    const auto x_hat = attack(normals.examples[i], normals.labels[i]);
    if (x_hat) adv_dev.push_back(sqdev(*x_hat));
  }
  if (adv_dev.empty())
    throw std::runtime_error(
        "monte_carlo_deviation: attack produced no adversarial examples");
  curve.n_adversarial = static_cast<int>(adv_dev.size());

  const double n = static_cast<double>(adv_dev.size());
  for (double frac : t_fracs) {
    const double thr =
        t_absolute ? curve.delta + frac : curve.delta * (1.0 + frac);
    int count = 0;
    for (double d : adv_dev)
      if (d >= thr) ++count;
    const double p = count / n;
    const double se = std::sqrt(std::max(p * (1.0 - p), 0.0) / n);
    curve.empirical.push_back(p);
    curve.stderr_.push_back(se);
    curve.ci_lo.push_back(std::max(0.0, p - 1.96 * se));
    curve.ci_hi.push_back(std::min(1.0, p + 1.96 * se));
  }
  return curve;
}

}  // namespace sidlab
