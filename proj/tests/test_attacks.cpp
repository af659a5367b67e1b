#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "sidlab/attacks.hpp"
#include "sidlab/classifiers.hpp"
#include "sidlab/data.hpp"

using namespace sidlab;

namespace {

const Domain kFree{-1e308, 1e308, false};

AffineClassifier binary_affine(const Vec& w, double bias) {
  // f_0 - f_1 = w.x + bias
  AffineClassifier clf;
  clf.weights = Mat::Zero(2, w.size());
  clf.weights.row(0) = 0.5 * w.transpose();
  clf.weights.row(1) = -0.5 * w.transpose();
  clf.biases = Vec::Zero(2);
  clf.biases(0) = 0.5 * bias;
  clf.biases(1) = -0.5 * bias;
  return clf;
}

Dataset unit_mixture(int classes, int per_class, double mean_scale,
                     std::uint64_t seed) {
  MixtureConfig cfg;
  cfg.num_classes = classes;
  cfg.per_class = per_class;
  cfg.dim = 16;
  cfg.mean_scale = mean_scale;
  cfg.sigma_lo = cfg.sigma_hi = 1.0;
  cfg.bump_scale = 0.0;
  cfg.seed = seed;
  return rescale_to_unit(gen_gaussian_mixture(cfg).first);
}

double median(std::vector<double> v) {
  REQUIRE(!v.empty());
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("fgsm on a linear score moves against the true class") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  Vec w(8);
  for (int i = 0; i < 8; ++i) w(i) = g(rng) + (g(rng) > 0 ? 0.5 : -0.5);
  const AffineClassifier clf = binary_affine(w, 0.0);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x({8});
    for (int i = 0; i < 8; ++i) x[i] = g(rng);
    if (clf.label(x) != 0) continue;  // attack from the class-0 side
    const double eps = 0.3;
    const AdversarialResult r = fgsm(clf, x, 0, eps, kFree);
    CHECK(r.linf == doctest::Approx(eps).epsilon(1e-12));
    for (int i = 0; i < 8; ++i)
      CHECK(r.perturbation[i] == doctest::Approx(-eps * (w(i) > 0 ? 1.0 : -1.0))
                                     .epsilon(1e-12));
  }
}

TEST_CASE("zero budget returns the input unchanged") {
  const AffineClassifier clf = binary_affine(Vec::Ones(4), 0.0);
  const Tensor x({4}, {1.0, 2.0, 3.0, 4.0});
  const AdversarialResult r = fgsm(clf, x, 0, 0.0, kFree);
  CHECK_FALSE(r.success);
  for (int i = 0; i < 4; ++i) CHECK(r.example[i] == x[i]);
  CHECK(r.l2 == 0.0);
}

TEST_CASE("a flat classifier yields the zero-gradient flag") {
  AffineClassifier clf;
  clf.weights = Mat::Zero(2, 4);
  clf.biases = Vec::Zero(2);
  const Tensor x({4}, {0.3, 0.4, 0.5, 0.6});
  const AdversarialResult r = fgsm(clf, x, 0, 0.1, Domain{});
  CHECK(r.zero_gradient);
  CHECK_FALSE(r.success);
  for (int i = 0; i < 4; ++i) CHECK(r.example[i] == x[i]);
}

TEST_CASE("fgsm success rate is non-decreasing in the budget") {
  const Dataset ds = unit_mixture(3, 170, 3.0, 7);
  MlpConfig mc;
  mc.hidden = {12};
  mc.epochs = 60;
  mc.seed = 2;
  const MlpClassifier f = fit_mlp(ds, mc);
  const Domain dom = domain_of(ds);
  double prev = -1.0;
  for (double eps : {0.01, 0.03, 0.08, 0.2}) {
    int succ = 0, n = 0;
    for (size_t i = 0; i < ds.size(); ++i) {
      if (f.label(ds.examples[i]) != ds.labels[i]) continue;
      ++n;
      succ += fgsm(f, ds.examples[i], ds.labels[i], eps, dom).success ? 1 : 0;
    }
    REQUIRE(n >= 500 / 2);
    const double rate = double(succ) / n;
    CHECK(rate >= prev);
    prev = rate;
  }
}

TEST_CASE("bim with one step equals fgsm bit-exactly") {
  const Dataset ds = unit_mixture(3, 20, 3.0, 9);
  MlpConfig mc;
  mc.hidden = {10};
  mc.epochs = 30;
  mc.seed = 4;
  const MlpClassifier f = fit_mlp(ds, mc);
  const Domain dom = domain_of(ds);
  for (size_t i = 0; i < 10; ++i) {
    const AdversarialResult a = fgsm(f, ds.examples[i], ds.labels[i], 0.07, dom);
    const AdversarialResult b =
        bim(f, ds.examples[i], ds.labels[i], 0.07, 0.07, 1, dom);
    CHECK(a.success == b.success);
    for (std::int64_t q = 0; q < a.example.size(); ++q)
      CHECK(a.example[q] == b.example[q]);  // bit-exact
  }
}

TEST_CASE("bim rejects a non-positive iteration count") {
  const AffineClassifier clf = binary_affine(Vec::Ones(4), 0.0);
  CHECK_THROWS_AS(bim(clf, Tensor({4}), 0, 0.1, 0.1, 0, kFree),
                  std::invalid_argument);
}

TEST_CASE("more bim iterations never hurt the success rate") {
  const Dataset ds = unit_mixture(3, 170, 3.5, 13);
  MlpConfig mc;
  mc.hidden = {12};
  mc.epochs = 60;
  mc.seed = 6;
  const MlpClassifier f = fit_mlp(ds, mc);
  const Domain dom = domain_of(ds);
  const double eps = 0.05;
  int s1 = 0, s10 = 0, n = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    if (f.label(ds.examples[i]) != ds.labels[i]) continue;
    ++n;
    s1 += bim(f, ds.examples[i], ds.labels[i], eps, eps, 1, dom).success;
    s10 += bim(f, ds.examples[i], ds.labels[i], eps, eps / 4.0, 10, dom).success;
  }
  REQUIRE(n >= 250);
  CHECK(s10 >= s1);
}

TEST_CASE("deepfool on an affine binary model is the one-step projection") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 1.0);
  Vec w(12);
  for (int i = 0; i < 12; ++i) w(i) = g(rng);
  const double bias = 0.4;
  const AffineClassifier clf = binary_affine(w, bias);
  const double nu = 0.02;
  for (int rep = 0; rep < 25; ++rep) {
    Tensor x({12});
    for (int i = 0; i < 12; ++i) x[i] = g(rng);
    const double score = w.dot(to_eigen_vec(x)) + bias;
    if (std::fabs(score) < 1e-3) continue;
    const int lab = clf.label(x);
    const AdversarialResult r = deepfool(clf, x, 50, nu, kFree, lab);
    CHECK(r.iterations == 1);
    CHECK(r.success);
    const double expect = (1.0 + nu) * std::fabs(score) / w.norm();
    CHECK(std::fabs(r.l2 - expect) <= 1e-8);
  }
}

TEST_CASE("deepfool returns immediately on a pre-flipped input") {
  const AffineClassifier clf = binary_affine(Vec::Ones(4), 0.0);
  Tensor x({4}, {-1.0, -1.0, -1.0, -1.0});  // classified as 1
  REQUIRE(clf.label(x) == 1);
  const AdversarialResult r = deepfool(clf, x, 50, 0.02, kFree, 0);
  CHECK(r.iterations == 0);
  CHECK(r.l2 == 0.0);
}

TEST_CASE("deepfool finds smaller perturbations than minimally successful fgsm") {
  const Dataset ds = unit_mixture(4, 60, 3.0, 21);
  MlpConfig mc;
  mc.hidden = {16};
  mc.epochs = 60;
  mc.seed = 8;
  const MlpClassifier f = fit_mlp(ds, mc);
  const Domain dom = domain_of(ds);
  std::vector<double> df_norms, fgsm_norms;
  for (size_t i = 0; i < ds.size(); ++i) {
    if (f.label(ds.examples[i]) != ds.labels[i]) continue;
    const AdversarialResult r =
        deepfool(f, ds.examples[i], 50, 0.02, dom, ds.labels[i]);
    if (!r.success) continue;
    for (double eps : {0.005, 0.01, 0.02, 0.04, 0.08, 0.16, 0.32}) {
      const AdversarialResult q = fgsm(f, ds.examples[i], ds.labels[i], eps, dom);
      if (q.success) {
        df_norms.push_back(r.l2);
        fgsm_norms.push_back(q.l2);
        break;
      }
    }
  }
  REQUIRE(df_norms.size() >= 50);
  CHECK(median(df_norms) <= median(fgsm_norms));
}

TEST_CASE("carlini-wagner leaves a pre-misclassified input in place") {
  const Dataset ds = unit_mixture(2, 30, 2.0, 23);
  const AffineClassifier f = fit_affine(ds);
  const Domain dom = domain_of(ds);
  for (size_t i = 0; i < ds.size(); ++i) {
    const int lab = f.label(ds.examples[i]);
    if (lab == ds.labels[i]) continue;  // want a misclassified one
    const AdversarialResult r = carlini_wagner(f, ds.examples[i], ds.labels[i],
                                               1.0, 0.0, 150, 5e-2, dom);
    CHECK(r.l2 <= 1e-3);
    return;
  }
  FAIL("no misclassified example found for the stub check");
}

TEST_CASE("carlini-wagner success implies a non-positive margin") {
  const Dataset ds = unit_mixture(3, 40, 2.6, 27);
  MlpConfig mc;
  mc.hidden = {10};
  mc.epochs = 50;
  mc.seed = 12;
  const MlpClassifier f = fit_mlp(ds, mc);
  const Domain dom = domain_of(ds);
  int checked = 0;
  for (size_t i = 0; i < ds.size() && checked < 25; ++i) {
    if (f.label(ds.examples[i]) != ds.labels[i]) continue;
    const AdversarialResult r = carlini_wagner(f, ds.examples[i], ds.labels[i],
                                               2.0, 0.0, 200, 5e-2, dom);
    if (!r.success) continue;
    ++checked;
    const std::vector<double> lg = f.logits(r.example);
    double runner = -1e300;
    for (int j = 0; j < 3; ++j)
      if (j != ds.labels[i]) runner = std::max(runner, lg[static_cast<size_t>(j)]);
    CHECK(lg[static_cast<size_t>(ds.labels[i])] <= runner + 1e-6);
  }
  CHECK(checked >= 10);
}

TEST_CASE("carlini-wagner needs a bounded domain") {
  const AffineClassifier clf = binary_affine(Vec::Ones(4), 0.0);
  CHECK_THROWS_AS(
      carlini_wagner(clf, Tensor({4}), 0, 1.0, 0.0, 10, 1e-2, kFree),
      std::invalid_argument);
}

TEST_CASE("successful carlini-wagner perturbs less than successful bim") {
  const Dataset ds = unit_mixture(3, 60, 2.6, 29);
  MlpConfig mc;
  mc.hidden = {12};
  mc.epochs = 60;
  mc.seed = 14;
  const MlpClassifier f = fit_mlp(ds, mc);
  const Domain dom = domain_of(ds);
  std::vector<double> cw_norms, bim_norms;
  for (size_t i = 0; i < ds.size(); ++i) {
    if (f.label(ds.examples[i]) != ds.labels[i]) continue;
    const AdversarialResult c = carlini_wagner(f, ds.examples[i], ds.labels[i],
                                               2.0, 0.0, 250, 5e-2, dom);
    if (c.success) cw_norms.push_back(c.l2);
    const AdversarialResult b =
        bim(f, ds.examples[i], ds.labels[i], 0.1, 0.025, 10, dom);
    if (b.success) bim_norms.push_back(b.l2);
  }
  REQUIRE(cw_norms.size() >= 20);
  REQUIRE(bim_norms.size() >= 20);
  const double mean_cw =
      std::accumulate(cw_norms.begin(), cw_norms.end(), 0.0) / cw_norms.size();
  const double mean_bim =
      std::accumulate(bim_norms.begin(), bim_norms.end(), 0.0) / bim_norms.size();
  CHECK(mean_cw <= mean_bim);
}

TEST_CASE("whitebox with zero trade-off reduces to the projected L2 attack") {
  const Dataset ds = unit_mixture(3, 30, 2.6, 31);
  MlpConfig mc;
  mc.hidden = {10};
  mc.epochs = 40;
  mc.seed = 16;
  const MlpClassifier f = fit_mlp(ds, mc);
  const Domain dom = domain_of(ds);
  for (size_t i = 0; i < 10; ++i) {
    const AdversarialResult a =
        whitebox(f, ds.examples[i], ds.labels[i], 0.0, 0.4, 15, dom, nullptr);
    const AdversarialResult b =
        pgd_l2(f, ds.examples[i], ds.labels[i], 0.4, 15, dom);
    for (std::int64_t q = 0; q < a.example.size(); ++q)
      CHECK(a.example[q] == b.example[q]);
  }
}

TEST_CASE("vanishing L2 budget returns the input") {
  const Dataset ds = unit_mixture(2, 10, 2.0, 37);
  const AffineClassifier f = fit_affine(ds);
  const AdversarialResult r =
      pgd_l2(f, ds.examples[0], ds.labels[0], 1e-300, 10, domain_of(ds));
  CHECK(r.l2 <= 1e-299);
  for (std::int64_t q = 0; q < r.example.size(); ++q)
    CHECK(r.example[q] == doctest::Approx(ds.examples[0][q]).epsilon(1e-12));
}

TEST_CASE("L2-budgeted attacks respect the budget after projection and clipping") {
  const Dataset ds = unit_mixture(3, 50, 2.6, 41);
  MlpConfig mc;
  mc.hidden = {10};
  mc.epochs = 40;
  mc.seed = 18;
  const MlpClassifier f = fit_mlp(ds, mc);
  const Domain dom = domain_of(ds);
  const double eta = 0.35;
  for (size_t i = 0; i < ds.size(); ++i) {
    const AdversarialResult r =
        pgd_l2(f, ds.examples[i], ds.labels[i], eta, 12, dom);
    CHECK(r.l2 <= eta + 1e-9);
  }
}

TEST_CASE("matched noise") {
  const Tensor x({4}, {0.2, 0.4, 0.6, 0.8});
  SUBCASE("zero reference magnitude returns the input") {
    const Tensor y = matched_noise(x, 0.0, 5, Domain{});
    for (int i = 0; i < 4; ++i) CHECK(y[i] == x[i]);
  }
  SUBCASE("the pre-clip magnitude matches exactly") {
    const Tensor y = matched_noise(x, 0.123, 5, kFree);
    double n = 0.0;
    for (int i = 0; i < 4; ++i) n += (y[i] - x[i]) * (y[i] - x[i]);
    CHECK(std::fabs(std::sqrt(n) - 0.123) <= 1e-12);
  }
  SUBCASE("fixed seed reproduces the noise") {
    const Tensor a = matched_noise(x, 0.5, 17, Domain{});
    const Tensor b = matched_noise(x, 0.5, 17, Domain{});
    for (int i = 0; i < 4; ++i) CHECK(a[i] == b[i]);
  }
  SUBCASE("pixel-domain output stays in the box") {
    const Tensor y = matched_noise(x, 10.0, 23, Domain{});
    for (int i = 0; i < 4; ++i) {
      CHECK(y[i] >= 0.0);
      CHECK(y[i] <= 1.0);
    }
  }
}

TEST_CASE("adversarial results keep x_hat = x + r exactly") {
  const Dataset ds = unit_mixture(3, 20, 2.6, 43);
  MlpConfig mc;
  mc.hidden = {8};
  mc.epochs = 30;
  mc.seed = 20;
  const MlpClassifier f = fit_mlp(ds, mc);
  const Domain dom = domain_of(ds);
  for (size_t i = 0; i < 10; ++i) {
    const AdversarialResult r =
        deepfool(f, ds.examples[i], 50, 0.02, dom, ds.labels[i]);
    for (std::int64_t q = 0; q < r.example.size(); ++q)
      CHECK(r.example[q] == ds.examples[i][q] + r.perturbation[q]);
  }
}
