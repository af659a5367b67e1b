#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sidlab/attacks.hpp"
#include "sidlab/classifiers.hpp"
#include "sidlab/data.hpp"
#include "sidlab/linalg.hpp"

namespace sidlab {

// Elementwise confidence difference f_i(x) - g_i(x), i = 1..K.
Vec sensitivity(const IClassifier& f, const IClassifier& g, const Tensor& x);
// Variant fed to the detector when it consumes both confidence vectors.
Vec concat_confidences(const IClassifier& f, const IClassifier& g,
                       const Tensor& x);

struct SidConfig {
  int hidden = 128;
  int epochs = 30;
  int batch = 64;
  AdamConfig adam;
  std::uint64_t seed = 1;
  // Feed [F(x); G(x)] (2K inputs) instead of the difference vector.
  bool concat_features = false;
};

// Three-class detector head: two fully connected layers, K (or 2K) -> hidden
// -> 3. Labels: 0 adversarial, 1 consistent clean/noisy, 2 inconsistent
// clean/noisy.
struct SidNet {
  Tensor w1, b1, w2, b2;
  bool concat_features = false;
  std::vector<double> loss_trace;
  std::vector<std::array<std::int64_t, 3>> class_counts;  // per epoch

  int input_dim() const { return w1.rows(); }
  std::vector<double> logits_of(const Vec& s) const;
  std::vector<double> confidences(const Vec& s) const;  // softmax over 3
  int predict(const Vec& s) const;
  // Graph path: feature node {1, input_dim} -> logits {1, 3}.
  int build_logits(Tape& tape, int s_node) const;
};

SidNet init_sid(int input_dim, int hidden, std::uint64_t seed);

using AttackFn =
    std::function<std::optional<AdversarialResult>(const Tensor& x, int label)>;

// Training procedure: per mini-batch of correctly classified normals, craft
// adversarial counterparts, add magnitude-matched noise, split clean/noisy
// examples by F/G label agreement (1) or disagreement (2), and minimize the
// detector's average cross-entropy on the three-way batch. An epoch whose
// disagreement class is empty proceeds with two effective classes and logs
// a warning into `warnings`.
SidNet train_sid(const IClassifier& f, const IClassifier& g,
                 const Dataset& correct_normals, const AttackFn& attack,
                 const Domain& dom, const SidConfig& cfg,
                 std::vector<std::string>* warnings = nullptr);

struct Detection {
  bool adversarial = false;
  int raw_label = 0;   // argmax over the three classes
  double score = 0.0;  // confidence of class 0
};

Detection detect(const SidNet& net, const IClassifier& f, const IClassifier& g,
                 const Tensor& x);

// Mann-Whitney AUC with ties counted one half.
double auc(const std::vector<double>& pos, const std::vector<double>& neg);
// Standard error of the Mann-Whitney statistic under the null (AUC = 1/2).
double auc_null_stderr(std::size_t n_pos, std::size_t n_neg);

struct CrossEvalCell {
  std::string target;
  bool available = false;
  double auc = 0.0;
  int n_pos = 0;
  int n_neg = 0;
};

struct NamedAttack {
  std::string name;
  AttackFn fn;
};

// One generalizability row: detector trained on a source attack, scored on
// adversarial examples from each target attack over fresh held-out normals.
std::vector<CrossEvalCell> cross_attack_eval(
    const SidNet& net, const IClassifier& f, const IClassifier& g,
    const Dataset& heldout_normals, const std::vector<NamedAttack>& targets);

struct Projection2d {
  Mat coords;            // n x 2
  double var_first = 0.0;
  double var_second = 0.0;
  bool rank_deficient = false;  // second axis zeroed
};

// Top-2 principal component projection of centered feature vectors.
Projection2d project_features_2d(const std::vector<Vec>& features);

}  // namespace sidlab
