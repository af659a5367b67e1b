#include "sidlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace sidlab {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void Dataset::validate() const {
  if (examples.size() != labels.size() || examples.size() != ids.size())
    throw std::invalid_argument("Dataset: parallel array lengths differ");
  std::set<std::int64_t> seen;
  for (size_t i = 0; i < examples.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw std::invalid_argument("Dataset: label out of range at index " +
                                  std::to_string(i));
    if (!seen.insert(ids[i]).second)
      throw std::invalid_argument("Dataset: duplicate id " +
                                  std::to_string(ids[i]));
    if (!examples[i].same_shape(examples[0]))
      throw std::invalid_argument("Dataset: non-uniform example shapes");
  }
}

namespace {

// Bilinear upsampling matrix from a (d/2)^2 coarse grid to the d^2 image;
// its column space is the "smooth" subspace of the mixture family.
Mat upsample_matrix(int root) {
  const int c = std::max(2, root / 2);
  Mat b = Mat::Zero(root * root, c * c);
  for (int i = 0; i < root; ++i)
    for (int j = 0; j < root; ++j) {
      const double fi = (i + 0.5) * c / root - 0.5;
      const double fj = (j + 0.5) * c / root - 0.5;
      const int i0 = std::clamp(static_cast<int>(std::floor(fi)), 0, c - 1);
      const int j0 = std::clamp(static_cast<int>(std::floor(fj)), 0, c - 1);
      const int i1 = std::min(i0 + 1, c - 1);
      const int j1 = std::min(j0 + 1, c - 1);
      const double wi = std::clamp(fi - i0, 0.0, 1.0);
      const double wj = std::clamp(fj - j0, 0.0, 1.0);
      b(i * root + j, i0 * c + j0) += (1 - wi) * (1 - wj);
      b(i * root + j, i0 * c + j1) += (1 - wi) * wj;
      b(i * root + j, i1 * c + j0) += wi * (1 - wj);
      b(i * root + j, i1 * c + j1) += wi * wj;
    }
  return b;
}

}  // namespace

std::pair<Dataset, GaussianMixtureSpec> gen_gaussian_mixture(
    const MixtureConfig& cfg) {
  const int p = cfg.dim;
  const int root = static_cast<int>(std::lround(std::sqrt(double(p))));
  if (root * root != p)
    throw std::invalid_argument("gen_gaussian_mixture: dim " +
                                std::to_string(p) + " is not a perfect square");
  if (cfg.per_class < 2)
    throw std::invalid_argument("gen_gaussian_mixture: per_class must be >= 2");
  if (!cfg.mean_override.empty() &&
      static_cast<int>(cfg.mean_override.size()) != cfg.num_classes)
    throw std::invalid_argument(
        "gen_gaussian_mixture: mean_override size != num_classes");
  if (cfg.mean_rough_frac < 0.0 || cfg.mean_rough_frac > 1.0)
    throw std::invalid_argument(
        "gen_gaussian_mixture: mean_rough_frac outside [0,1]");
  if (cfg.rough_noise_std <= 0.0)
    throw std::invalid_argument(
        "gen_gaussian_mixture: rough_noise_std must be > 0");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // Smooth-subspace projector, needed for structured means or noise.
  const bool structured = cfg.smooth_means || cfg.mean_rough_frac > 0.0 ||
                          cfg.rough_noise_std != 1.0;
  Mat smooth_proj;
  if (structured) {
    const Mat b = upsample_matrix(root);
    smooth_proj = b * (b.transpose() * b).llt().solve(b.transpose());
  }

  GaussianMixtureSpec spec;
  spec.num_classes = cfg.num_classes;
  spec.dim = p;
  spec.priors.assign(static_cast<size_t>(cfg.num_classes),
                     1.0 / cfg.num_classes);

  struct ClassSampler {
    double sigma;
    Mat bump_dirs;  // p x r orthonormal
    Vec bump_sq;    // sqrt of bump eigenvalues
  };
  std::vector<ClassSampler> samplers;

  for (int k = 0; k < cfg.num_classes; ++k) {
    Vec mu(p);
    if (!cfg.mean_override.empty()) {
      mu = cfg.mean_override[static_cast<size_t>(k)];
      if (mu.size() != p)
        throw std::invalid_argument(
            "gen_gaussian_mixture: mean_override dimension mismatch");
    } else if (cfg.smooth_means) {
      Vec u(p), g(p);
      for (int i = 0; i < p; ++i) u(i) = gauss(rng);
      for (int i = 0; i < p; ++i) g(i) = gauss(rng);
      Vec smooth = smooth_proj * u;
      smooth.normalize();
      const double f = cfg.mean_rough_frac;
      mu = std::sqrt(1.0 - f) * smooth;
      if (f > 0.0) {
        Vec rough = g - smooth_proj * g;
        rough.normalize();
        mu += std::sqrt(f) * rough;
      }
      mu *= cfg.mean_scale;
    } else {
      for (int i = 0; i < p; ++i) mu(i) = gauss(rng);
      mu *= cfg.mean_scale / mu.norm();
    }
    spec.means.push_back(mu);

    ClassSampler cs;
    cs.sigma = cfg.sigma_lo + (cfg.sigma_hi - cfg.sigma_lo) * unif(rng);
    Mat V(p, cfg.bump_rank);
    for (int j = 0; j < cfg.bump_rank; ++j)
      for (int i = 0; i < p; ++i) V(i, j) = gauss(rng);
    // Gram-Schmidt
    for (int j = 0; j < cfg.bump_rank; ++j) {
      for (int l = 0; l < j; ++l) V.col(j) -= V.col(l).dot(V.col(j)) * V.col(l);
      V.col(j).normalize();
    }
    cs.bump_dirs = V;
    cs.bump_sq = Vec(cfg.bump_rank);
    for (int j = 0; j < cfg.bump_rank; ++j)
      cs.bump_sq(j) = std::sqrt(cfg.bump_scale * cs.sigma * cs.sigma * unif(rng));

    Mat cov;
    if (structured && cfg.rough_noise_std != 1.0) {
      const double rho = cfg.rough_noise_std;
      cov = cs.sigma * cs.sigma *
            (rho * rho * Mat::Identity(p, p) +
             (1.0 - rho * rho) * smooth_proj);
    } else {
      cov = cs.sigma * cs.sigma * Mat::Identity(p, p);
    }
    for (int j = 0; j < cfg.bump_rank; ++j)
      cov += cs.bump_sq(j) * cs.bump_sq(j) * V.col(j) * V.col(j).transpose();
    spec.covariances.push_back(cov);
    samplers.push_back(std::move(cs));
  }

  spec.pooled = Mat::Zero(p, p);
  for (int k = 0; k < cfg.num_classes; ++k)
    spec.pooled +=
        spec.priors[static_cast<size_t>(k)] * spec.covariances[static_cast<size_t>(k)];

  Dataset ds;
  ds.name = "gaussian-mixture";
  ds.num_classes = cfg.num_classes;
  ds.clip_domain = false;
  ds.range_lo = -std::numeric_limits<double>::infinity();
  ds.range_hi = std::numeric_limits<double>::infinity();
  ds.image_side = root;
  std::int64_t next_id = 0;
  const bool aniso = structured && cfg.rough_noise_std != 1.0;
  const double rho = cfg.rough_noise_std;
  for (int k = 0; k < cfg.num_classes; ++k) {
    const ClassSampler& cs = samplers[static_cast<size_t>(k)];
    const Vec& mu = spec.means[static_cast<size_t>(k)];
    for (int s = 0; s < cfg.per_class; ++s) {
      Vec z(p);
      for (int i = 0; i < p; ++i) z(i) = gauss(rng);
      Vec noise;
      if (aniso) {
        // std sigma in the smooth subspace, rho*sigma in the complement:
        // (rho I + (1-rho) P) z has covariance rho^2 I + (1-rho^2) P
        noise = cs.sigma * (rho * z + (1.0 - rho) * (smooth_proj * z));
      } else {
        noise = cs.sigma * z;
      }
      Tensor x({p});
      for (int i = 0; i < p; ++i) x[i] = mu(i) + noise(i);
      for (int j = 0; j < cfg.bump_rank; ++j) {
        const double a = cs.bump_sq(j) * gauss(rng);
        for (int i = 0; i < p; ++i) x[i] += a * cs.bump_dirs(i, j);
      }
      ds.examples.push_back(std::move(x));
      ds.labels.push_back(k);
      ds.ids.push_back(next_id++);
    }
  }
  ds.validate();
  return {std::move(ds), std::move(spec)};
}

GaussianMixtureSpec estimate_mixture(const Dataset& ds, double shrinkage) {
  if (ds.size() == 0) throw std::invalid_argument("estimate_mixture: empty");
  if (shrinkage < 0.0 || shrinkage > 1.0)
    throw std::invalid_argument("estimate_mixture: shrinkage outside [0,1]");
  const int p = ds.dim();
  const int K = ds.num_classes;
  GaussianMixtureSpec spec;
  spec.num_classes = K;
  spec.dim = p;
  spec.means.assign(static_cast<size_t>(K), Vec::Zero(p));
  std::vector<int> counts(static_cast<size_t>(K), 0);
  for (size_t i = 0; i < ds.size(); ++i) {
    spec.means[static_cast<size_t>(ds.labels[i])] += to_eigen_vec(ds.examples[i]);
    counts[static_cast<size_t>(ds.labels[i])]++;
  }
  for (int k = 0; k < K; ++k) {
    if (counts[static_cast<size_t>(k)] < 2)
      throw std::invalid_argument("estimate_mixture: class " +
                                  std::to_string(k) + " has fewer than 2 examples");
    spec.means[static_cast<size_t>(k)] /= counts[static_cast<size_t>(k)];
  }
  std::vector<Mat> scatter(static_cast<size_t>(K), Mat::Zero(p, p));
  for (size_t i = 0; i < ds.size(); ++i) {
    const int k = ds.labels[i];
    const Vec d = to_eigen_vec(ds.examples[i]) - spec.means[static_cast<size_t>(k)];
    scatter[static_cast<size_t>(k)] += d * d.transpose();
  }
  const int n = static_cast<int>(ds.size());
  Mat pooled_scatter = Mat::Zero(p, p);
  for (int k = 0; k < K; ++k) {
    pooled_scatter += scatter[static_cast<size_t>(k)];
    Mat cov = scatter[static_cast<size_t>(k)] / (counts[static_cast<size_t>(k)] - 1);
    if (shrinkage > 0.0) {
      const double tr = cov.trace() / p;
      cov = (1.0 - shrinkage) * cov + shrinkage * tr * Mat::Identity(p, p);
    }
    spec.covariances.push_back(std::move(cov));
    spec.priors.push_back(double(counts[static_cast<size_t>(k)]) / n);
  }
  spec.pooled = pooled_scatter / (n - K);
  return spec;
}

Splits split(const Dataset& ds, const SplitSpec& spec) {
  if (std::fabs(spec.train + spec.validation + spec.test - 1.0) > 1e-9)
    throw std::invalid_argument("split: fractions must sum to 1");
  std::vector<size_t> order(ds.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  const size_t n = ds.size();
  const size_t n_train = static_cast<size_t>(std::llround(spec.train * n));
  const size_t n_val = static_cast<size_t>(std::llround(spec.validation * n));

  auto take = [&](size_t from, size_t count, const char* tag) {
    Dataset out;
    out.name = ds.name + "/" + tag;
    out.num_classes = ds.num_classes;
    out.range_lo = ds.range_lo;
    out.range_hi = ds.range_hi;
    out.clip_domain = ds.clip_domain;
    out.image_side = ds.image_side;
    out.channels = ds.channels;
    for (size_t i = from; i < std::min(from + count, n); ++i) {
      const size_t j = order[i];
      out.examples.push_back(ds.examples[j]);
      out.labels.push_back(ds.labels[j]);
      out.ids.push_back(ds.ids[j]);
    }
    return out;
  };
  Splits s;
  s.train = take(0, n_train, "train");
  s.validation = take(n_train, n_val, "val");
  s.test = take(n_train + n_val, n - n_train - n_val, "test");
  return s;
}

Dataset select_correct(const Dataset& ds,
                       const std::function<int(const Tensor&)>& label_fn) {
  Dataset out = ds;
  out.examples.clear();
  out.labels.clear();
  out.ids.clear();
  for (size_t i = 0; i < ds.size(); ++i) {
    if (label_fn(ds.examples[i]) == ds.labels[i]) {
      out.examples.push_back(ds.examples[i]);
      out.labels.push_back(ds.labels[i]);
      out.ids.push_back(ds.ids[i]);
    }
  }
  if (out.examples.empty())
    throw std::runtime_error("select_correct: no correctly classified examples");
  return out;
}

// ---------------------------------------------------------------------------
// Byte-format loaders
// ---------------------------------------------------------------------------

namespace {

std::uint32_t read_be32(std::istream& in, std::size_t& offset,
                        const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in)
    throw std::runtime_error("IDX: truncated read at byte offset " +
                             std::to_string(offset) + " in " + path);
  offset += 4;
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

// Area-average resample of a (rows, cols) byte image to (out, out).
std::vector<double> area_resample(const std::vector<double>& img, int rows,
                                  int cols, int out) {
  std::vector<double> res(static_cast<size_t>(out) * out, 0.0);
  const double sr = double(rows) / out, sc = double(cols) / out;
  for (int i = 0; i < out; ++i) {
    const double r0 = i * sr, r1 = (i + 1) * sr;
    for (int j = 0; j < out; ++j) {
      const double c0 = j * sc, c1 = (j + 1) * sc;
      double acc = 0.0;
      for (int r = static_cast<int>(r0); r < static_cast<int>(std::ceil(r1)); ++r) {
        const double wr = std::min<double>(r + 1, r1) - std::max<double>(r, r0);
        for (int c = static_cast<int>(c0); c < static_cast<int>(std::ceil(c1)); ++c) {
          const double wc = std::min<double>(c + 1, c1) - std::max<double>(c, c0);
          acc += wr * wc * img[static_cast<size_t>(r) * cols + c];
        }
      }
      res[static_cast<size_t>(i) * out + j] = acc / (sr * sc);
    }
  }
  return res;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 bool downsample_to_16) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("load_idx: cannot open " + images_path);
  std::size_t off = 0;
  const std::uint32_t magic = read_be32(imgs, off, images_path);
  if (magic != 0x00000803u)
    throw std::runtime_error("load_idx: bad image magic at byte offset 0 in " +
                             images_path + " (got " + std::to_string(magic) + ")");
  const std::uint32_t n = read_be32(imgs, off, images_path);
  const std::uint32_t rows = read_be32(imgs, off, images_path);
  const std::uint32_t cols = read_be32(imgs, off, images_path);

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("load_idx: cannot open " + labels_path);
  std::size_t loff = 0;
  const std::uint32_t lmagic = read_be32(labs, loff, labels_path);
  if (lmagic != 0x00000801u)
    throw std::runtime_error("load_idx: bad label magic at byte offset 0 in " +
                             labels_path);
  const std::uint32_t ln = read_be32(labs, loff, labels_path);
  if (ln != n)
    throw std::runtime_error("load_idx: image/label count mismatch (" +
                             std::to_string(n) + " vs " + std::to_string(ln) + ")");

  Dataset ds;
  ds.name = "idx";
  ds.clip_domain = true;
  ds.range_lo = 0.0;
  ds.range_hi = 1.0;
  const int side = downsample_to_16 ? 16 : static_cast<int>(rows);
  if (!downsample_to_16 && rows != cols)
    throw std::runtime_error("load_idx: non-square images require downsampling");
  ds.image_side = side;

  std::vector<unsigned char> buf(static_cast<size_t>(rows) * cols);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!imgs)
      throw std::runtime_error("load_idx: truncated image data at byte offset " +
                               std::to_string(off) + " in " + images_path);
    off += buf.size();
    std::vector<double> pix(buf.size());
    for (size_t b = 0; b < buf.size(); ++b) pix[b] = buf[b] / 255.0;
    if (downsample_to_16)
      pix = area_resample(pix, static_cast<int>(rows), static_cast<int>(cols), 16);
    ds.examples.emplace_back(std::vector<int>{side * side}, std::move(pix));

    char lab = 0;
    labs.read(&lab, 1);
    if (!labs)
      throw std::runtime_error("load_idx: truncated label data at byte offset " +
                               std::to_string(loff) + " in " + labels_path);
    loff += 1;
    ds.labels.push_back(static_cast<unsigned char>(lab));
    max_label = std::max(max_label, ds.labels.back());
    ds.ids.push_back(static_cast<std::int64_t>(i));
  }
  ds.num_classes = max_label + 1;
  ds.validate();
  return ds;
}

void write_idx(const std::string& images_path, const std::string& labels_path,
               const std::vector<std::vector<std::uint8_t>>& images, int rows,
               int cols, const std::vector<std::uint8_t>& labels) {
  if (images.size() != labels.size())
    throw std::invalid_argument("write_idx: image/label count mismatch");
  std::ofstream imgs(images_path, std::ios::binary);
  write_be32(imgs, 0x00000803u);
  write_be32(imgs, static_cast<std::uint32_t>(images.size()));
  write_be32(imgs, static_cast<std::uint32_t>(rows));
  write_be32(imgs, static_cast<std::uint32_t>(cols));
  for (const auto& im : images) {
    if (static_cast<int>(im.size()) != rows * cols)
      throw std::invalid_argument("write_idx: image byte count mismatch");
    imgs.write(reinterpret_cast<const char*>(im.data()),
               static_cast<std::streamsize>(im.size()));
  }
  std::ofstream labs(labels_path, std::ios::binary);
  write_be32(labs, 0x00000801u);
  write_be32(labs, static_cast<std::uint32_t>(labels.size()));
  labs.write(reinterpret_cast<const char*>(labels.data()),
             static_cast<std::streamsize>(labels.size()));
}

Dataset load_cifar_binary(const std::string& path, bool downsample_to_16) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_cifar_binary: cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::int64_t file_size = in.tellg();
  in.seekg(0);
  constexpr std::int64_t kRecord = 1 + 3 * 32 * 32;
  if (file_size % kRecord != 0)
    throw std::runtime_error(
        "load_cifar_binary: file size " + std::to_string(file_size) +
        " is not a multiple of the record width " + std::to_string(kRecord) +
        "; first partial record at byte offset " +
        std::to_string((file_size / kRecord) * kRecord));
  const std::int64_t n = file_size / kRecord;

  Dataset ds;
  ds.name = "cifar-binary";
  ds.clip_domain = true;
  ds.channels = 3;
  ds.image_side = downsample_to_16 ? 16 : 32;
  std::vector<unsigned char> rec(static_cast<size_t>(kRecord));
  int max_label = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(rec.data()), kRecord);
    if (!in)
      throw std::runtime_error("load_cifar_binary: truncated at byte offset " +
                               std::to_string(i * kRecord));
    ds.labels.push_back(rec[0]);
    max_label = std::max(max_label, ds.labels.back());
    const int side = ds.image_side;
    std::vector<double> pix;
    pix.reserve(static_cast<size_t>(3) * side * side);
    for (int ch = 0; ch < 3; ++ch) {
      std::vector<double> plane(1024);
      for (int b = 0; b < 1024; ++b)
        plane[static_cast<size_t>(b)] = rec[static_cast<size_t>(1 + ch * 1024 + b)] / 255.0;
      if (downsample_to_16) plane = area_resample(plane, 32, 32, 16);
      pix.insert(pix.end(), plane.begin(), plane.end());
    }
    ds.examples.emplace_back(std::vector<int>{3 * side * side}, std::move(pix));
    ds.ids.push_back(i);
  }
  ds.num_classes = max_label + 1;
  ds.validate();
  return ds;
}

Dataset rescale_to_unit(const Dataset& ds) {
  if (ds.size() == 0) throw std::invalid_argument("rescale_to_unit: empty");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const Tensor& x : ds.examples)
    for (double v : x.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(hi > lo)) throw std::runtime_error("rescale_to_unit: constant data");
  Dataset out = ds;
  out.name = ds.name + "/unit";
  for (Tensor& x : out.examples)
    for (double& v : x.data()) v = (v - lo) / (hi - lo);
  out.range_lo = 0.0;
  out.range_hi = 1.0;
  out.clip_domain = true;
  return out;
}

}  // namespace sidlab
