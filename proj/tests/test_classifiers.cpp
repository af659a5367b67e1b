#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "sidlab/classifiers.hpp"
#include "sidlab/data.hpp"
#include "sidlab/wavelet.hpp"

using namespace sidlab;

namespace {

Tensor randn_vec(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Tensor t({n});
  for (int i = 0; i < n; ++i) t[i] = g(rng);
  return t;
}

GaussianMixtureSpec symmetric_two_class(int p, double mean) {
  GaussianMixtureSpec spec;
  spec.num_classes = 2;
  spec.dim = p;
  Vec mu = Vec::Zero(p);
  mu(0) = mean;
  spec.means = {mu, -mu};
  spec.covariances = {Mat::Identity(p, p), Mat::Identity(p, p)};
  spec.priors = {0.5, 0.5};
  spec.pooled = Mat::Identity(p, p);
  return spec;
}

Dataset blobs_16d(int per_class, double scale, std::uint64_t seed) {
  // two well-separated classes on a 4x4 grid, smooth mean patterns
  MixtureConfig cfg;
  cfg.num_classes = 2;
  cfg.per_class = per_class;
  cfg.dim = 16;
  cfg.mean_scale = scale;
  cfg.sigma_lo = cfg.sigma_hi = 1.0;
  cfg.bump_scale = 0.0;
  cfg.seed = seed;
  return gen_gaussian_mixture(cfg).first;
}

}  // namespace

TEST_CASE("symmetric LDA: the decision boundary is the mean hyperplane") {
  const GaussianMixtureSpec spec = symmetric_two_class(4, 2.0);
  const AffineClassifier clf = fit_affine(spec);
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor x = randn_vec(4, rng, 3.0);
    const std::vector<double> l = clf.logits(x);
    // f_0 - f_1 = 2 mu^T x for this symmetric construction
    const double gap = l[0] - l[1];
    CHECK(gap == doctest::Approx(2.0 * 2.0 * x[0]).epsilon(1e-10));
    if (std::fabs(x[0]) > 1e-6)
      CHECK(clf.label(x) == (x[0] > 0.0 ? 0 : 1));
  }
}

TEST_CASE("single-class fit is rejected") {
  GaussianMixtureSpec spec = symmetric_two_class(4, 1.0);
  spec.num_classes = 1;
  spec.means.resize(1);
  spec.covariances.resize(1);
  spec.priors = {1.0};
  CHECK_THROWS_AS(fit_affine(spec), std::invalid_argument);
  CHECK_THROWS_AS(fit_quadratic(spec), std::invalid_argument);
}

TEST_CASE("LDA beats the nearest-class-mean baseline on the big mixture") {
  MixtureConfig cfg;
  cfg.num_classes = 10;
  cfg.per_class = 100;
  cfg.dim = 256;
  cfg.mean_scale = 2.2;
  cfg.seed = 11;
  const auto [ds, spec] = gen_gaussian_mixture(cfg);
  const AffineClassifier clf = fit_affine(ds);
  const GaussianMixtureSpec est = estimate_mixture(ds);

  int ncm_ok = 0, lda_ok = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    const Vec x = to_eigen_vec(ds.examples[i]);
    int best = 0;
    double best_d = (x - est.means[0]).squaredNorm();
    for (int k = 1; k < 10; ++k) {
      const double dk = (x - est.means[static_cast<size_t>(k)]).squaredNorm();
      if (dk < best_d) {
        best_d = dk;
        best = k;
      }
    }
    ncm_ok += best == ds.labels[i] ? 1 : 0;
    lda_ok += clf.label(ds.examples[i]) == ds.labels[i] ? 1 : 0;
  }
  CHECK(lda_ok >= ncm_ok);
}

TEST_CASE("QDA reduces to LDA when class covariances are equal") {
  GaussianMixtureSpec spec;
  spec.num_classes = 3;
  spec.dim = 8;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  Mat a(8, 8);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) a(r, c) = g(rng);
  const Mat shared = a * a.transpose() + 8.0 * Mat::Identity(8, 8);
  for (int k = 0; k < 3; ++k) {
    Vec mu(8);
    for (int i = 0; i < 8; ++i) mu(i) = 3.0 * g(rng);
    spec.means.push_back(mu);
    spec.covariances.push_back(shared);
    spec.priors.push_back(1.0 / 3.0);
  }
  spec.pooled = shared;
  const AffineClassifier lda = fit_affine(spec);
  const QuadraticClassifier qda = fit_quadratic(spec);
  for (int rep = 0; rep < 100; ++rep) {
    const Tensor x = randn_vec(8, rng, 4.0);
    CHECK(lda.label(x) == qda.label(x));
  }
}

TEST_CASE("QDA separates one Gaussian class from a far outlier class") {
  GaussianMixtureSpec spec;
  spec.num_classes = 2;
  spec.dim = 4;
  Vec mu0 = Vec::Zero(4), mu1 = Vec::Constant(4, 50.0);
  spec.means = {mu0, mu1};
  spec.covariances = {Mat::Identity(4, 4), 4.0 * Mat::Identity(4, 4)};
  spec.priors = {0.5, 0.5};
  spec.pooled = 2.5 * Mat::Identity(4, 4);
  const QuadraticClassifier qda = fit_quadratic(spec);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor a({4}), b({4});
    for (int i = 0; i < 4; ++i) {
      a[i] = g(rng);
      b[i] = 50.0 + 2.0 * g(rng);
    }
    CHECK(qda.label(a) == 0);
    CHECK(qda.label(b) == 1);
  }
}

TEST_CASE("QDA labels agree with a brute-force log-density evaluator") {
  MixtureConfig cfg;
  cfg.num_classes = 5;
  cfg.per_class = 200;
  cfg.dim = 64;
  cfg.mean_scale = 2.5;
  cfg.seed = 19;
  const auto [ds, true_spec] = gen_gaussian_mixture(cfg);
  const GaussianMixtureSpec est = estimate_mixture(ds, 0.1);
  const QuadraticClassifier qda = fit_quadratic(est);

  // independent route: dense inverse and determinant per class
  std::vector<Mat> inv;
  std::vector<double> logdet;
  for (const Mat& c : est.covariances) {
    inv.push_back(c.inverse());
    logdet.push_back(std::log(c.determinant()));
  }
  int agree = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    const Vec x = to_eigen_vec(ds.examples[i]);
    int best = 0;
    double best_v = -1e300;
    for (int k = 0; k < 5; ++k) {
      const Vec d = x - est.means[static_cast<size_t>(k)];
      const double v = -0.5 * d.dot(inv[static_cast<size_t>(k)] * d) -
                       0.5 * logdet[static_cast<size_t>(k)] +
                       std::log(est.priors[static_cast<size_t>(k)]);
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    }
    agree += best == qda.label(ds.examples[i]) ? 1 : 0;
  }
  CHECK(agree == static_cast<int>(ds.size()));
}

TEST_CASE("MLP reaches 99% on linearly separable blobs") {
  const Dataset ds = blobs_16d(100, 12.0, 23);
  MlpConfig cfg;
  cfg.hidden = {8};
  cfg.epochs = 200;
  cfg.batch = 32;
  cfg.seed = 5;
  const MlpClassifier mlp = fit_mlp(ds, cfg);
  CHECK(accuracy(mlp, ds) >= 0.99);
  CHECK(mlp.loss_trace.size() == 200);
}

TEST_CASE("zero learning rate leaves parameters at their initialization") {
  const Dataset ds = blobs_16d(40, 8.0, 29);
  MlpConfig cfg;
  cfg.hidden = {6};
  cfg.epochs = 3;
  cfg.adam.lr = 0.0;
  cfg.seed = 9;
  const MlpClassifier trained = fit_mlp(ds, cfg);
  const MlpClassifier fresh = init_mlp(16, {6}, 2, 9);
  for (size_t l = 0; l < trained.weights.size(); ++l) {
    for (std::int64_t i = 0; i < trained.weights[l].size(); ++i)
      CHECK(trained.weights[l][i] == fresh.weights[l][i]);
    for (std::int64_t i = 0; i < trained.biases[l].size(); ++i)
      CHECK(trained.biases[l][i] == fresh.biases[l][i]);
  }
}

TEST_CASE("fit_mlp is bit-deterministic in the seed") {
  const Dataset ds = blobs_16d(60, 6.0, 31);
  MlpConfig cfg;
  cfg.hidden = {10, 6};
  cfg.epochs = 15;
  cfg.seed = 77;
  const MlpClassifier a = fit_mlp(ds, cfg);
  const MlpClassifier b = fit_mlp(ds, cfg);
  for (size_t l = 0; l < a.weights.size(); ++l)
    for (std::int64_t i = 0; i < a.weights[l].size(); ++i)
      CHECK(a.weights[l][i] == b.weights[l][i]);
  CHECK(a.loss_trace == b.loss_trace);
}

TEST_CASE("graph logits match direct logits") {
  const Dataset ds = blobs_16d(40, 6.0, 37);
  MlpConfig cfg;
  cfg.hidden = {8};
  cfg.epochs = 10;
  cfg.seed = 3;
  const MlpClassifier mlp = fit_mlp(ds, cfg);
  const AffineClassifier lda = fit_affine(ds);
  std::mt19937_64 rng(41);
  for (int rep = 0; rep < 10; ++rep) {
    const Tensor x = randn_vec(16, rng, 4.0);
    for (const IClassifier* c :
         std::initializer_list<const IClassifier*>{&mlp, &lda}) {
      const std::vector<double> direct = c->logits(x);
      Tape tape;
      const int xn = tape.leaf(x.reshaped({1, 16}));
      const Tensor& via_graph = tape.value(c->build_logits(tape, xn));
      for (size_t k = 0; k < direct.size(); ++k)
        CHECK(direct[k] == doctest::Approx(via_graph[static_cast<std::int64_t>(k)])
                               .epsilon(1e-12));
    }
  }
}

TEST_CASE("affine dual: the class-gap identity holds to 1e-8") {
  MixtureConfig cfg;
  cfg.num_classes = 3;
  cfg.per_class = 100;
  cfg.dim = 64;
  cfg.mean_scale = 2.0;
  cfg.seed = 43;
  const auto [ds, true_spec] = gen_gaussian_mixture(cfg);
  const GaussianMixtureSpec est = estimate_mixture(ds);
  const AffineClassifier f = fit_affine(est);

  DualConfig dc;
  dc.kind = ClassifierKind::kAffine;
  dc.filter = WaveletFilter::haar();
  const DualClassifier g = build_dual(ds, dc);

  const Mat h = to_eigen(g.transform);
  const Mat hsh = h * est.pooled * h.transpose();
  std::mt19937_64 rng(47);
  double worst = 0.0;
  for (int k = 0; k < 3; ++k) {
    const Vec& mu = est.means[static_cast<size_t>(k)];
    const Vec c = est.pooled.llt().solve(mu) -
                  h.transpose() * hsh.llt().solve(h * mu);  // C_k^T
    const double bias = -0.5 * c.dot(mu);
    for (int rep = 0; rep < 20; ++rep) {
      const Tensor x = randn_vec(64, rng, 2.0);
      const double lhs =
          f.logits(x)[static_cast<size_t>(k)] - g.logits(x)[static_cast<size_t>(k)];
      const double rhs = c.dot(to_eigen_vec(x)) + bias;
      worst = std::max(worst, std::fabs(lhs - rhs));
    }
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("identity transform stub collapses the class gap to zero") {
  // A dimension-preserving dual (H = I) is the same classifier, so the
  // per-class gap rows vanish identically.
  MixtureConfig cfg;
  cfg.num_classes = 3;
  cfg.per_class = 60;
  cfg.dim = 16;
  cfg.seed = 53;
  const auto [ds, spec] = gen_gaussian_mixture(cfg);
  const GaussianMixtureSpec est = estimate_mixture(ds);
  const AffineClassifier f = fit_affine(est);
  const Mat h = Mat::Identity(16, 16);
  const Mat hsh = h * est.pooled * h.transpose();
  for (int k = 0; k < 3; ++k) {
    const Vec& mu = est.means[static_cast<size_t>(k)];
    const Vec c = est.pooled.llt().solve(mu) -
                  h.transpose() * hsh.llt().solve(h * mu);
    CHECK(c.norm() <= 1e-9 * est.pooled.llt().solve(mu).norm());
  }
  (void)f;
}

TEST_CASE("MLP dual agrees with the primal on held-out examples") {
  const Dataset all = blobs_16d(150, 14.0, 59);
  SplitSpec sp;
  sp.train = 0.7;
  sp.test = 0.3;
  sp.seed = 2;
  const Splits s = split(all, sp);

  MlpConfig mc;
  mc.hidden = {16, 8};
  mc.epochs = 120;
  mc.seed = 5;
  const MlpClassifier f = fit_mlp(s.train, mc);

  DualConfig dc;
  dc.kind = ClassifierKind::kMlp;
  dc.filter = WaveletFilter::haar();
  dc.mlp = mc;
  dc.mlp.seed = 6;
  const DualClassifier g = build_dual(s.train, dc);

  CHECK(agreement(f, g, s.test) >= 0.95);
  // dual accuracy within ten points of the primal
  CHECK(accuracy(g, s.test) >= accuracy(f, s.test) - 0.10);
  // the trained sub-band weights moved off their initialization
  const WawtWeights w = g.wawt_weights;
  const bool moved = w.w1 != 0.25 || w.w2 != 0.25 || w.w3 != 0.25 || w.w4 != 0.25;
  CHECK(moved);
}

TEST_CASE("track_objective endpoints") {
  MixtureConfig cfg;
  cfg.num_classes = 2;
  cfg.per_class = 30;
  cfg.dim = 16;
  cfg.seed = 61;
  const auto [ds, spec] = gen_gaussian_mixture(cfg);
  const AffineClassifier f = fit_affine(ds);

  SUBCASE("identical classifiers give zero objective and constraint") {
    const ObjectiveTrack t =
        track_objective(f, f, ds.examples, ds.examples);
    CHECK(t.objective == 0.0);
    CHECK(t.constraint == 0.0);
  }
  SUBCASE("singleton sets return the two squared norms directly") {
    DualConfig dc;
    dc.kind = ClassifierKind::kAffine;
    dc.filter = WaveletFilter::haar();
    const DualClassifier g = build_dual(ds, dc);
    const Tensor& a = ds.examples[0];
    const Tensor& b = ds.examples[1];
    const ObjectiveTrack t = track_objective(f, g, {a}, {b});
    auto sq = [&](const Tensor& x) {
      const auto fa = f.logits(x), gb = g.logits(x);
      double s = 0.0;
      for (size_t i = 0; i < fa.size(); ++i)
        s += (fa[i] - gb[i]) * (fa[i] - gb[i]);
      return s;
    };
    CHECK(t.objective == doctest::Approx(sq(a)).epsilon(1e-14));
    CHECK(t.constraint == doctest::Approx(sq(b)).epsilon(1e-14));
  }
  SUBCASE("empty sets are rejected") {
    CHECK_THROWS_AS(track_objective(f, f, {}, ds.examples),
                    std::invalid_argument);
  }
}

TEST_CASE("label ties break toward the lowest class index") {
  AffineClassifier clf;
  clf.weights = Mat::Zero(3, 2);
  clf.biases = Vec::Zero(3);
  CHECK(clf.label(Tensor({2}, {1.0, -1.0})) == 0);
  clf.biases(1) = 5.0;
  clf.biases(2) = 5.0;
  CHECK(clf.label(Tensor({2}, {0.0, 0.0})) == 1);
}

TEST_CASE("analytic fits are deterministic") {
  MixtureConfig cfg;
  cfg.num_classes = 3;
  cfg.per_class = 50;
  cfg.dim = 16;
  cfg.seed = 67;
  const auto [ds, spec] = gen_gaussian_mixture(cfg);
  const AffineClassifier a = fit_affine(ds), b = fit_affine(ds);
  CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.biases - b.biases).cwiseAbs().maxCoeff() == 0.0);
}
