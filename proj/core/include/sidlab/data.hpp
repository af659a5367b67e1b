#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sidlab/linalg.hpp"
#include "sidlab/tensor.hpp"

namespace sidlab {

// Deterministic stream splitting: derive an independent seed from a base
// seed and an index (splitmix64 step).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

struct Dataset {
  std::vector<Tensor> examples;  // uniform flat shape {p}
  std::vector<int> labels;
  std::vector<std::int64_t> ids;
  std::string name;
  int num_classes = 0;
  // Input domain. Pixel data lives in [0,1] and gets clipped by attacks;
  // synthetic Gaussian data is unbounded.
  double range_lo = 0.0;
  double range_hi = 1.0;
  bool clip_domain = false;
  int image_side = 0;  // d for square-image data (p == channels*d*d)
  int channels = 1;

  size_t size() const { return examples.size(); }
  int dim() const {
    return examples.empty() ? 0 : static_cast<int>(examples[0].size());
  }
  void validate() const;  // labels in range, unique ids, uniform shapes
};

struct GaussianMixtureSpec {
  int num_classes = 0;
  int dim = 0;
  std::vector<Vec> means;
  std::vector<Mat> covariances;
  std::vector<double> priors;
  Mat pooled;  // sum_k prior_k * Sigma_k (within-class pooled)
};

struct MixtureConfig {
  int num_classes = 10;
  int per_class = 100;
  int dim = 256;  // must be a perfect square (gets reshaped to sqrt(p) x sqrt(p))
  // Means default to mean_scale * (uniform random unit direction). With
  // smooth_means the directions are low-frequency image patterns (a coarse
  // random grid bilinearly upsampled), mimicking natural-image statistics.
  // mean_rough_frac moves that fraction of the mean energy into the rough
  // complement of the smooth subspace, and rough_noise_std scales the noise
  // standard deviation there; quiet rough directions with a little class
  // signal are the prime target of minimal-perturbation attacks.
  double mean_scale = 2.2;
  bool smooth_means = false;
  double mean_rough_frac = 0.0;
  double rough_noise_std = 1.0;
  // Covariance family: Sigma_k = sigma_k^2 I + V diag(s) V^T with sigma_k
  // drawn uniformly from [sigma_lo, sigma_hi], V a random p x bump_rank
  // orthonormal block and s uniform in [0, bump_scale * sigma_k^2].
  double sigma_lo = 0.9;
  double sigma_hi = 1.1;
  double bump_scale = 0.5;
  int bump_rank = 4;
  std::uint64_t seed = 1;
  // Optional explicit means (overrides mean_scale sampling).
  std::vector<Vec> mean_override;
};

std::pair<Dataset, GaussianMixtureSpec> gen_gaussian_mixture(
    const MixtureConfig& cfg);

// Sample estimates from labeled data: class means, per-class covariances
// (unbiased, optionally shrunk toward (tr/p) I by `shrinkage` in [0,1]),
// pooled within-class covariance, empirical priors.
GaussianMixtureSpec estimate_mixture(const Dataset& ds, double shrinkage = 0.0);

struct SplitSpec {
  double train = 0.7;
  double validation = 0.0;
  double test = 0.3;
  std::uint64_t seed = 1;
};

struct Splits {
  Dataset train, validation, test;
};

Splits split(const Dataset& ds, const SplitSpec& spec);

// Subset correctly labeled by `label_fn`; ids preserved. Empty result throws.
Dataset select_correct(const Dataset& ds,
                       const std::function<int(const Tensor&)>& label_fn);

// IDX (big-endian, magic 0x803 images / 0x801 labels). Pixels scaled to
// [0,1]; optional area-average downsample to 16x16.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 bool downsample_to_16 = false);
void write_idx(const std::string& images_path, const std::string& labels_path,
               const std::vector<std::vector<std::uint8_t>>& images, int rows,
               int cols, const std::vector<std::uint8_t>& labels);

// CIFAR binary: records of 1 label byte + 3*1024 pixel bytes.
Dataset load_cifar_binary(const std::string& path, bool downsample_to_16 = false);

// Affine map of the whole dataset onto [0,1] (by global min/max), marking it
// as a clipped pixel domain. Keeps class geometry; used to give synthetic
// data a valid pixel range for box-constrained attacks.
Dataset rescale_to_unit(const Dataset& ds);

}  // namespace sidlab
