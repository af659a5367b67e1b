#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "sidlab/classifiers.hpp"
#include "sidlab/tensor.hpp"

namespace sidlab {

// Valid input box. Pixel data is clipped to [0,1]; synthetic Gaussian data
// is unbounded (clip = false).
struct Domain {
  double lo = 0.0;
  double hi = 1.0;
  bool clip = true;
};

Domain domain_of(const Dataset& ds);

struct AttackConfig {
  std::string method;  // fgsm | bim | deepfool | cw | pgd_l2 | whitebox | noise
  double epsilon = 0.05;   // L-inf budget (fgsm/bim)
  double step = 0.0125;    // per-iteration L-inf step (bim)
  double eta = 0.5;        // L2 budget (pgd_l2/whitebox; deepfool rescale)
  int iters = 10;
  double overshoot = 0.02;  // deepfool
  int deepfool_max_iters = 50;
  double cw_c = 1.0;
  double cw_kappa = 0.0;
  int cw_steps = 200;
  double cw_lr = 5e-2;
  double wb_alpha = 0.1;
  int wb_steps = 40;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdversarialResult {
  Tensor example;       // x_hat
  Tensor perturbation;  // r = x_hat - x, exactly
  bool success = false; // label(x_hat) != label(x), re-verified by a fresh pass
  double l2 = 0.0;
  double linf = 0.0;
  int iterations = 0;
  bool zero_gradient = false;  // degenerate flat-gradient case
};

// x_hat = clip(x + eps * sign(grad_x CE(F(x), label)))
AdversarialResult fgsm(const IClassifier& f, const Tensor& x, int label,
                       double eps, const Domain& dom);

// Iterative sign-gradient with per-step projection onto the eps L-inf ball.
// bim(T=1, step=eps) is bit-identical to fgsm(eps).
AdversarialResult bim(const IClassifier& f, const Tensor& x, int label,
                      double eps, double step, int iters, const Domain& dom);

// Iterative closest-hyperplane linearization over the competing classes;
// the returned perturbation carries the (1 + overshoot) factor. Stops at the
// first label flip or after max_iters. If `true_label` is given and x is
// already misclassified, returns r = 0 with zero iterations.
AdversarialResult deepfool(const IClassifier& f, const Tensor& x,
                           int max_iters, double overshoot, const Domain& dom,
                           std::optional<int> true_label = std::nullopt);

// Margin-loss attack: minimizes ||r||_2^2 + c * max(f_label - max_j f_j + kappa, 0)
// over a tanh change of variable keeping x_hat inside the domain box.
// Requires a bounded domain. Returns the best successful iterate, if any.
AdversarialResult carlini_wagner(const IClassifier& f, const Tensor& x,
                                 int label, double c, double kappa, int steps,
                                 double lr, const Domain& dom);

// Projected gradient ascent on CE(F(x), label) under ||r||_2 <= eta.
AdversarialResult pgd_l2(const IClassifier& f, const Tensor& x, int label,
                         double eta, int steps, const Domain& dom);

// Combined white-box objective: maximize CE(F(x_hat), y_c) plus alpha times
// an auxiliary differentiable loss (the detector's cross-entropy toward the
// adversarial class), under ||r||_2 <= eta. `aux_loss` builds the auxiliary
// scalar node from the example node; pass nullptr for alpha = 0 behavior
// (reduces exactly to pgd_l2).
AdversarialResult whitebox(
    const IClassifier& f, const Tensor& x, int y_c, double alpha, double eta,
    int steps, const Domain& dom,
    const std::function<int(Tape&, int x_node)>& aux_loss);

// x + u with isotropic Gaussian u rescaled so ||u||_2 equals ref_l2 before
// clipping.
Tensor matched_noise(const Tensor& x, double ref_l2, std::uint64_t seed,
                     const Domain& dom);

// Convenience dispatcher used by the CLI and training loops.
std::optional<AdversarialResult> run_attack(const AttackConfig& cfg,
                                            const IClassifier& f,
                                            const Tensor& x, int label,
                                            const Domain& dom);

}  // namespace sidlab
