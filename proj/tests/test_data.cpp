#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "sidlab/classifiers.hpp"
#include "sidlab/data.hpp"

using namespace sidlab;

TEST_CASE("mixture generation is deterministic in the seed") {
  MixtureConfig cfg;
  cfg.num_classes = 3;
  cfg.per_class = 10;
  cfg.dim = 16;
  cfg.seed = 42;
  const auto [a, sa] = gen_gaussian_mixture(cfg);
  const auto [b, sb] = gen_gaussian_mixture(cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a.labels[i] == b.labels[i]);
    for (std::int64_t q = 0; q < a.examples[i].size(); ++q)
      CHECK(a.examples[i][q] == b.examples[i][q]);
  }
  for (int k = 0; k < 3; ++k)
    CHECK((sa.means[static_cast<size_t>(k)] - sb.means[static_cast<size_t>(k)]).norm() == 0.0);
}

TEST_CASE("sample class means track the specified means") {
  MixtureConfig cfg;
  cfg.num_classes = 3;
  cfg.per_class = 400;
  cfg.dim = 64;
  cfg.sigma_lo = cfg.sigma_hi = 1.0;
  cfg.bump_scale = 0.0;
  cfg.seed = 9;
  const auto [ds, spec] = gen_gaussian_mixture(cfg);
  const GaussianMixtureSpec est = estimate_mixture(ds);
  // per-coordinate tolerance 4 sigma / sqrt(n); deterministic by fixed seed
  const double tol = 4.0 / std::sqrt(double(cfg.per_class));
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < cfg.dim; ++i)
      CHECK(std::fabs(est.means[static_cast<size_t>(k)](i) -
                      spec.means[static_cast<size_t>(k)](i)) <= tol);
}

TEST_CASE("well-separated mixture trains to perfect accuracy") {
  MixtureConfig cfg;
  cfg.num_classes = 4;
  cfg.per_class = 50;
  cfg.dim = 16;
  cfg.mean_scale = 40.0;
  cfg.sigma_lo = cfg.sigma_hi = 1.0;
  cfg.bump_scale = 0.0;
  cfg.seed = 3;
  const auto [ds, spec] = gen_gaussian_mixture(cfg);
  const AffineClassifier clf = fit_affine(ds);
  CHECK(accuracy(clf, ds) == 1.0);
}

TEST_CASE("generator output is finite") {
  MixtureConfig cfg;
  cfg.num_classes = 2;
  cfg.per_class = 20;
  cfg.dim = 25;
  cfg.seed = 5;
  const auto [ds, spec] = gen_gaussian_mixture(cfg);
  for (const Tensor& x : ds.examples) CHECK(x.all_finite());
}

TEST_CASE("non-square dimension is rejected") {
  MixtureConfig cfg;
  cfg.dim = 15;
  CHECK_THROWS_AS(gen_gaussian_mixture(cfg), std::invalid_argument);
}

TEST_CASE("IDX round trip through the byte-layout writer") {
  const std::string imgs = "/tmp/sidlab_test_images.idx";
  const std::string labs = "/tmp/sidlab_test_labels.idx";
  std::vector<std::vector<std::uint8_t>> pix = {
      {0, 51, 102, 153}, {204, 255, 10, 20}};
  write_idx(imgs, labs, pix, 2, 2, {3, 7});
  const Dataset ds = load_idx(imgs, labs);
  REQUIRE(ds.size() == 2);
  CHECK(ds.labels[0] == 3);
  CHECK(ds.labels[1] == 7);
  CHECK(ds.examples[0][0] == doctest::Approx(0.0));
  CHECK(ds.examples[0][1] == doctest::Approx(51.0 / 255.0));
  CHECK(ds.examples[1][1] == doctest::Approx(1.0));
  CHECK(ds.clip_domain);
  for (const Tensor& x : ds.examples)
    for (double v : x.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  std::remove(imgs.c_str());
  std::remove(labs.c_str());
}

TEST_CASE("truncated IDX is rejected with a byte offset") {
  const std::string imgs = "/tmp/sidlab_trunc_images.idx";
  const std::string labs = "/tmp/sidlab_trunc_labels.idx";
  write_idx(imgs, labs, {{1, 2, 3, 4}, {5, 6, 7, 8}}, 2, 2, {0, 1});
  // chop the image payload
  {
    std::ifstream in(imgs, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    std::ofstream out(imgs, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
  }
  CHECK_THROWS_WITH_AS(load_idx(imgs, labs),
                       doctest::Contains("byte offset"), std::runtime_error);
  std::remove(imgs.c_str());
  std::remove(labs.c_str());
}

TEST_CASE("wrong IDX magic is rejected") {
  const std::string path = "/tmp/sidlab_badmagic.idx";
  std::ofstream out(path, std::ios::binary);
  const unsigned char bytes[16] = {0, 0, 8, 9};
  out.write(reinterpret_cast<const char*>(bytes), 16);
  out.close();
  CHECK_THROWS_WITH_AS(load_idx(path, path), doctest::Contains("magic"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("CIFAR binary record parsing") {
  const std::string path = "/tmp/sidlab_test_cifar.bin";
  {
    std::ofstream out(path, std::ios::binary);
    std::vector<unsigned char> rec(3073, 0);
    rec[0] = 4;           // label
    rec[1] = 255;         // R plane, first pixel
    rec[1 + 1024] = 128;  // G plane, first pixel
    rec[1 + 2048] = 51;   // B plane, first pixel
    out.write(reinterpret_cast<char*>(rec.data()), 3073);
    rec[0] = 9;
    out.write(reinterpret_cast<char*>(rec.data()), 3073);
  }
  const Dataset ds = load_cifar_binary(path);
  REQUIRE(ds.size() == 2);  // record count = file size / 3073
  CHECK(ds.labels[0] == 4);
  CHECK(ds.labels[1] == 9);
  CHECK(ds.channels == 3);
  CHECK(ds.examples[0][0] == doctest::Approx(1.0));
  CHECK(ds.examples[0][1024] == doctest::Approx(128.0 / 255.0));
  CHECK(ds.examples[0][2048] == doctest::Approx(51.0 / 255.0));
  std::remove(path.c_str());
}

TEST_CASE("partial CIFAR record is rejected with offset information") {
  const std::string path = "/tmp/sidlab_test_cifar_bad.bin";
  {
    std::ofstream out(path, std::ios::binary);
    std::vector<char> bytes(3073 + 100, 0);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_WITH_AS(load_cifar_binary(path), doctest::Contains("3073"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("splits are disjoint, exhaustive and idempotent in the seed") {
  MixtureConfig cfg;
  cfg.num_classes = 2;
  cfg.per_class = 50;
  cfg.dim = 16;
  cfg.seed = 17;
  const auto [ds, spec] = gen_gaussian_mixture(cfg);
  SplitSpec sp;
  sp.train = 0.6;
  sp.validation = 0.2;
  sp.test = 0.2;
  sp.seed = 99;
  const Splits a = split(ds, sp);
  const Splits b = split(ds, sp);

  std::set<std::int64_t> seen;
  for (const Dataset* part : {&a.train, &a.validation, &a.test})
    for (std::int64_t id : part->ids) CHECK(seen.insert(id).second);
  CHECK(seen.size() == ds.size());

  CHECK(a.train.ids == b.train.ids);
  CHECK(a.validation.ids == b.validation.ids);
  CHECK(a.test.ids == b.test.ids);

  SplitSpec bad = sp;
  bad.test = 0.5;
  CHECK_THROWS_AS(split(ds, bad), std::invalid_argument);
}

TEST_CASE("select_correct filters by the classifier's labels") {
  MixtureConfig cfg;
  cfg.num_classes = 3;
  cfg.per_class = 30;
  cfg.dim = 16;
  cfg.seed = 23;
  const auto [ds, spec] = gen_gaussian_mixture(cfg);

  SUBCASE("a perfect oracle keeps everything") {
    size_t i = 0;
    std::vector<int> truth = ds.labels;
    const Dataset kept =
        select_correct(ds, [&](const Tensor&) { return truth[i++]; });
    CHECK(kept.size() == ds.size());
    CHECK(kept.ids == ds.ids);
  }
  SUBCASE("a constant classifier keeps exactly one class") {
    const Dataset kept = select_correct(ds, [](const Tensor&) { return 1; });
    CHECK(kept.size() == 30);
    for (int lab : kept.labels) CHECK(lab == 1);
  }
  SUBCASE("kept fraction equals measured accuracy exactly") {
    const AffineClassifier clf = fit_affine(ds);
    const Dataset kept =
        select_correct(ds, [&](const Tensor& x) { return clf.label(x); });
    const double acc = accuracy(clf, ds);
    CHECK(double(kept.size()) / double(ds.size()) == acc);
  }
  SUBCASE("empty result is rejected") {
    CHECK_THROWS_AS(select_correct(ds, [](const Tensor&) { return 999; }),
                    std::runtime_error);
  }
}

TEST_CASE("rescale_to_unit maps onto [0,1] and marks the domain clipped") {
  MixtureConfig cfg;
  cfg.num_classes = 2;
  cfg.per_class = 20;
  cfg.dim = 16;
  cfg.seed = 31;
  const Dataset ds = rescale_to_unit(gen_gaussian_mixture(cfg).first);
  CHECK(ds.clip_domain);
  double lo = 1e300, hi = -1e300;
  for (const Tensor& x : ds.examples)
    for (double v : x.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  CHECK(lo == doctest::Approx(0.0));
  CHECK(hi == doctest::Approx(1.0));
}

TEST_CASE("derive_seed decorrelates indices") {
  const std::uint64_t a = derive_seed(1, 0);
  const std::uint64_t b = derive_seed(1, 1);
  const std::uint64_t c = derive_seed(2, 0);
  CHECK(a != b);
  CHECK(a != c);
  CHECK(derive_seed(1, 0) == a);
}
