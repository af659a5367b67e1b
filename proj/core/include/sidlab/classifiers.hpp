#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "sidlab/data.hpp"
#include "sidlab/linalg.hpp"
#include "sidlab/tensor.hpp"
#include "sidlab/wavelet.hpp"

namespace sidlab {

// Common classifier surface. "Prediction confidence" means the raw
// discriminant/logit values; the predicted label is the argmax with ties
// broken by the lowest class index.
class IClassifier {
 public:
  virtual ~IClassifier() = default;
  virtual int num_classes() const = 0;
  virtual int input_dim() const = 0;
  virtual std::vector<double> logits(const Tensor& x) const = 0;
  // Graph path: x node of shape {1, p} -> logits node of shape {1, K}.
  virtual int build_logits(Tape& tape, int x_node) const = 0;
  int label(const Tensor& x) const;
};

int argmax_lowest(const std::vector<double>& v);

// Gaussian linear discriminant:
//   f_k(x) = mu_k^T S^-1 x - 1/2 mu_k^T S^-1 mu_k + log prior_k
// with S the pooled within-class covariance.
class AffineClassifier : public IClassifier {
 public:
  Mat weights;  // K x p rows w_k
  Vec biases;   // K

  int num_classes() const override { return static_cast<int>(weights.rows()); }
  int input_dim() const override { return static_cast<int>(weights.cols()); }
  std::vector<double> logits(const Tensor& x) const override;
  int build_logits(Tape& tape, int x_node) const override;
};

AffineClassifier fit_affine(const GaussianMixtureSpec& spec);
AffineClassifier fit_affine(const Dataset& ds);

// Gaussian quadratic discriminant:
//   f_k(x) = -1/2 (x-mu_k)^T S_k^-1 (x-mu_k) - 1/2 log det S_k + log prior_k
class QuadraticClassifier : public IClassifier {
 public:
  std::vector<Vec> means;
  std::vector<Mat> precisions;
  std::vector<double> constants;  // -1/2 log det S_k + log prior_k

  int num_classes() const override { return static_cast<int>(means.size()); }
  int input_dim() const override {
    return means.empty() ? 0 : static_cast<int>(means[0].size());
  }
  std::vector<double> logits(const Tensor& x) const override;
  int build_logits(Tape& tape, int x_node) const override;
};

QuadraticClassifier fit_quadratic(const GaussianMixtureSpec& spec);
QuadraticClassifier fit_quadratic(const Dataset& ds, double shrinkage = 0.0);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, applied as theta *= (1 - lr*wd)
};

struct MlpConfig {
  std::vector<int> hidden = {256, 128};
  int epochs = 100;
  int batch = 64;
  AdamConfig adam;
  std::uint64_t seed = 1;
};

class MlpClassifier : public IClassifier {
 public:
  std::vector<int> layer_sizes;  // input, hidden..., K
  std::vector<Tensor> weights;   // per layer, {in, out}
  std::vector<Tensor> biases;    // per layer, {out}
  std::vector<double> loss_trace;

  int num_classes() const override { return layer_sizes.back(); }
  int input_dim() const override { return layer_sizes.front(); }
  std::vector<double> logits(const Tensor& x) const override;
  int build_logits(Tape& tape, int x_node) const override;
  // Batched graph: x node {n, p} -> logits {n, K}.
  int build_logits_batch(Tape& tape, int x_node) const;
};

MlpClassifier init_mlp(int input_dim, const std::vector<int>& hidden,
                       int num_classes, std::uint64_t seed);
MlpClassifier fit_mlp(const Dataset& train, const MlpConfig& cfg);

// Simple Adam state over a flat list of parameter tensors.
class AdamState {
 public:
  AdamState(const std::vector<Tensor*>& params, AdamConfig cfg);
  void step(const std::vector<const Tensor*>& grads);

 private:
  std::vector<Tensor*> params_;
  std::vector<Tensor> m_, v_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

enum class ClassifierKind { kAffine, kQuadratic, kMlp };

struct DualConfig {
  ClassifierKind kind = ClassifierKind::kAffine;
  WaveletFilter filter;  // defaults to sym17 in build_dual when unnamed
  // Fixed sub-band weights for the analytic flavors; initial value for the
  // jointly trained MLP flavor.
  WawtWeights weights;
  double qda_shrinkage = 0.0;
  MlpConfig mlp;
  std::uint64_t seed = 1;
};

// Transform-domain classifier G(x) = inner(H x) with H the per-channel
// weighted sub-band analysis. The inner classifier mirrors the primal's
// flavor with a quarter of the input dimension.
class DualClassifier : public IClassifier {
 public:
  WawtWeights wawt_weights;
  WaveletFilter filter;
  int image_side = 0;
  int in_channels = 1;
  Tensor transform;  // materialized block-diagonal H, (c*d^2/4, c*d^2)
  std::variant<AffineClassifier, QuadraticClassifier, MlpClassifier> inner;

  int num_classes() const override;
  int input_dim() const override { return transform.cols(); }
  std::vector<double> logits(const Tensor& x) const override;
  int build_logits(Tape& tape, int x_node) const override;

  Tensor apply_transform(const Tensor& x) const;  // H x
  void rebuild_transform();                       // after weight updates
  const IClassifier& inner_ref() const;
};

DualClassifier build_dual(const Dataset& train, const DualConfig& cfg);

// Empirical objective/constraint pair of the dual-construction trade-off:
// max over normals of ||F(x)-G(x)||^2 and min over adversarials of the same.
struct ObjectiveTrack {
  double objective;   // max deviation on normal examples
  double constraint;  // min deviation on adversarial examples
};
ObjectiveTrack track_objective(const IClassifier& f, const IClassifier& g,
                               const std::vector<Tensor>& normals,
                               const std::vector<Tensor>& adversarials);

double accuracy(const IClassifier& f, const Dataset& ds);
double agreement(const IClassifier& f, const IClassifier& g, const Dataset& ds);

}  // namespace sidlab
