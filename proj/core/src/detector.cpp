#include "sidlab/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace sidlab {

Vec sensitivity(const IClassifier& f, const IClassifier& g, const Tensor& x) {
  if (f.num_classes() != g.num_classes())
    throw std::invalid_argument("sensitivity: class count mismatch");
  const std::vector<double> a = f.logits(x), b = g.logits(x);
  Vec s(static_cast<Eigen::Index>(a.size()));
  for (size_t i = 0; i < a.size(); ++i)
    s(static_cast<Eigen::Index>(i)) = a[i] - b[i];
  return s;
}

Vec concat_confidences(const IClassifier& f, const IClassifier& g,
                       const Tensor& x) {
  if (f.num_classes() != g.num_classes())
    throw std::invalid_argument("concat_confidences: class count mismatch");
  const std::vector<double> a = f.logits(x), b = g.logits(x);
  Vec s(static_cast<Eigen::Index>(a.size() + b.size()));
  for (size_t i = 0; i < a.size(); ++i) s(static_cast<Eigen::Index>(i)) = a[i];
  for (size_t i = 0; i < b.size(); ++i)
    s(static_cast<Eigen::Index>(a.size() + i)) = b[i];
  return s;
}

std::vector<double> SidNet::logits_of(const Vec& s) const {
  if (s.size() != w1.rows())
    throw std::invalid_argument("SidNet: feature dimension mismatch");
  const int hid = w1.cols();
  std::vector<double> h(static_cast<size_t>(hid));
  for (int j = 0; j < hid; ++j) h[static_cast<size_t>(j)] = b1[j];
  for (int i = 0; i < s.size(); ++i) {
    const double v = s(i);
    if (v == 0.0) continue;
    for (int j = 0; j < hid; ++j)
      h[static_cast<size_t>(j)] += v * w1[static_cast<std::int64_t>(i) * hid + j];
  }
  for (double& v : h) v = v > 0.0 ? v : 0.0;
  std::vector<double> out(3);
  for (int j = 0; j < 3; ++j) out[static_cast<size_t>(j)] = b2[j];
  for (int i = 0; i < hid; ++i) {
    const double v = h[static_cast<size_t>(i)];
    if (v == 0.0) continue;
    for (int j = 0; j < 3; ++j)
      out[static_cast<size_t>(j)] += v * w2[static_cast<std::int64_t>(i) * 3 + j];
  }
  return out;
}

std::vector<double> SidNet::confidences(const Vec& s) const {
  std::vector<double> z = logits_of(s);
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

int SidNet::predict(const Vec& s) const { return argmax_lowest(logits_of(s)); }

int SidNet::build_logits(Tape& tape, int s_node) const {
  const int h = tape.relu(tape.add(tape.matmul(s_node, tape.leaf(w1)), tape.leaf(b1)));
  return tape.add(tape.matmul(h, tape.leaf(w2)), tape.leaf(b2));
}

SidNet init_sid(int input_dim, int hidden, std::uint64_t seed) {
  SidNet net;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  net.w1 = Tensor({input_dim, hidden});
  const double s1 = std::sqrt(2.0 / input_dim);
  for (std::int64_t i = 0; i < net.w1.size(); ++i) net.w1[i] = s1 * gauss(rng);
  net.b1 = Tensor({hidden});
  net.w2 = Tensor({hidden, 3});
  const double s2 = std::sqrt(2.0 / hidden);
  for (std::int64_t i = 0; i < net.w2.size(); ++i) net.w2[i] = s2 * gauss(rng);
  net.b2 = Tensor({3});
  net.w1.requires_grad = net.b1.requires_grad = true;
  net.w2.requires_grad = net.b2.requires_grad = true;
  return net;
}

SidNet train_sid(const IClassifier& f, const IClassifier& g,
                 const Dataset& correct_normals, const AttackFn& attack,
                 const Domain& dom, const SidConfig& cfg,
                 std::vector<std::string>* warnings) {
  if (correct_normals.size() == 0)
    throw std::invalid_argument("train_sid: empty training set");
  for (size_t i = 0; i < correct_normals.size(); ++i)
    if (f.label(correct_normals.examples[i]) != correct_normals.labels[i])
      throw std::invalid_argument(
          "train_sid: training set contains examples misclassified by the "
          "primal classifier (id " +
          std::to_string(correct_normals.ids[i]) + ")");

  const int feat_dim =
      cfg.concat_features ? 2 * f.num_classes() : f.num_classes();
  SidNet net = init_sid(feat_dim, cfg.hidden, cfg.seed);
  net.concat_features = cfg.concat_features;

  auto feature = [&](const Tensor& x) {
    return cfg.concat_features ? concat_confidences(f, g, x)
                               : sensitivity(f, g, x);
  };

  // Attacks are deterministic functions of the example, so the adversarial
  // counterpart crafted in epoch e equals the one from epoch 0; compute once
  // and reuse across epochs.
  std::vector<std::optional<AdversarialResult>> adv(correct_normals.size());
  for (size_t i = 0; i < correct_normals.size(); ++i)
    adv[i] = attack(correct_normals.examples[i], correct_normals.labels[i]);

  std::vector<Tensor*> params = {&net.w1, &net.b1, &net.w2, &net.b2};
  AdamState adam(params, cfg.adam);
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0x51d));

  std::vector<size_t> order(correct_normals.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    int batches = 0;
    std::array<std::int64_t, 3> counts{0, 0, 0};
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      std::vector<Vec> feats;
      std::vector<int> labels;
      for (size_t q = start; q < end; ++q) {
        const size_t j = order[q];
        const Tensor& x = correct_normals.examples[j];
        // adversarial example, label 0
        if (adv[j] && adv[j]->success) {
          feats.push_back(feature(adv[j]->example));
          labels.push_back(0);
        }
        // noisy counterpart with matched magnitude (fresh noise per epoch)
        const double mag = adv[j] && adv[j]->success ? adv[j]->l2 : 0.0;
        const Tensor noisy = matched_noise(
            x, mag,
            derive_seed(cfg.seed,
                        0xa0000000ULL +
                            static_cast<std::uint64_t>(epoch) * 1000003ULL +
                            static_cast<std::uint64_t>(correct_normals.ids[j])),
            dom);
        // clean and noisy split by F/G label agreement
        for (const Tensor* cand : {&x, &noisy}) {
          const int lab = f.label(*cand) == g.label(*cand) ? 1 : 2;
          feats.push_back(feature(*cand));
          labels.push_back(lab);
        }
      }
      if (feats.empty()) continue;
      for (int lab : labels) counts[static_cast<size_t>(lab)]++;

      Tensor xb({static_cast<int>(feats.size()), feat_dim});
      for (size_t r = 0; r < feats.size(); ++r)
        for (int c = 0; c < feat_dim; ++c)
          xb.at(static_cast<int>(r), c) = feats[r](c);
      Tape tape;
      const int xn = tape.leaf(std::move(xb));
      const int w1n = tape.leaf(net.w1);
      const int b1n = tape.leaf(net.b1);
      const int w2n = tape.leaf(net.w2);
      const int b2n = tape.leaf(net.b2);
      const int h = tape.relu(tape.add(tape.matmul(xn, w1n), b1n));
      const int logits = tape.add(tape.matmul(h, w2n), b2n);
      const int loss = tape.cross_entropy(logits, labels);
      const double lv = tape.value(loss).item();
      if (!std::isfinite(lv))
        throw std::runtime_error("train_sid: loss diverged (non-finite)");
      tape.backward(loss);
      adam.step({&tape.grad(w1n), &tape.grad(b1n), &tape.grad(w2n),
                 &tape.grad(b2n)});
      epoch_loss += lv;
      ++batches;
    }
    net.loss_trace.push_back(epoch_loss / std::max(1, batches));
    net.class_counts.push_back(counts);
    if (counts[2] == 0 && warnings)
      warnings->push_back("train_sid: epoch " + std::to_string(epoch) +
                          " saw no inconsistently classified examples; "
                          "training proceeded with two effective classes");
  }
  return net;
}

Detection detect(const SidNet& net, const IClassifier& f, const IClassifier& g,
                 const Tensor& x) {
  const Vec s = net.concat_features ? concat_confidences(f, g, x)
                                    : sensitivity(f, g, x);
  const std::vector<double> conf = net.confidences(s);
  Detection d;
  d.raw_label = argmax_lowest(net.logits_of(s));
  d.adversarial = d.raw_label == 0;
  d.score = conf[0];
  return d;
}

double auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty() || neg.empty())
    throw std::invalid_argument("auc: empty score set");
  // rank-sum with midranks for ties
  struct Entry {
    double score;
    bool positive;
  };
  std::vector<Entry> all;
  all.reserve(pos.size() + neg.size());
  for (double s : pos) all.push_back({s, true});
  for (double s : neg) all.push_back({s, false});
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < all.size()) {
    size_t j = i;
    while (j + 1 < all.size() && all[j + 1].score == all[i].score) ++j;
    const double midrank = 0.5 * (double(i + 1) + double(j + 1));
    for (size_t q = i; q <= j; ++q)
      if (all[q].positive) rank_sum_pos += midrank;
    i = j + 1;
  }
  const double n1 = static_cast<double>(pos.size());
  const double n2 = static_cast<double>(neg.size());
  const double u = rank_sum_pos - n1 * (n1 + 1.0) / 2.0;
  return u / (n1 * n2);
}

double auc_null_stderr(std::size_t n_pos, std::size_t n_neg) {
  const double n1 = static_cast<double>(n_pos), n2 = static_cast<double>(n_neg);
  return std::sqrt((n1 + n2 + 1.0) / (12.0 * n1 * n2));
}

std::vector<CrossEvalCell> cross_attack_eval(
    const SidNet& net, const IClassifier& f, const IClassifier& g,
    const Dataset& heldout_normals, const std::vector<NamedAttack>& targets) {
  std::vector<double> neg;
  for (const Tensor& x : heldout_normals.examples)
    neg.push_back(detect(net, f, g, x).score);

  std::vector<CrossEvalCell> row;
  for (const NamedAttack& atk : targets) {
    CrossEvalCell cell;
    cell.target = atk.name;
    std::vector<double> pos;
    for (size_t i = 0; i < heldout_normals.size(); ++i) {
      const auto r =
          atk.fn(heldout_normals.examples[i], heldout_normals.labels[i]);
      if (r && r->success)
        pos.push_back(detect(net, f, g, r->example).score);
    }
    cell.n_pos = static_cast<int>(pos.size());
    cell.n_neg = static_cast<int>(neg.size());
    if (!pos.empty()) {
      cell.available = true;
      cell.auc = auc(pos, neg);
    }
    row.push_back(std::move(cell));
  }
  return row;
}

Projection2d project_features_2d(const std::vector<Vec>& features) {
  if (features.size() < 3)
    throw std::invalid_argument("project_features_2d: need at least 3 vectors");
  const int dim = static_cast<int>(features[0].size());
  const int n = static_cast<int>(features.size());
  Mat x(n, dim);
  for (int i = 0; i < n; ++i) x.row(i) = features[static_cast<size_t>(i)].transpose();
  const Vec mean = x.colwise().mean();
  x.rowwise() -= mean.transpose();
  const Mat cov = x.transpose() * x / std::max(1, n - 1);
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("project_features_2d: eigendecomposition failed");

  Projection2d out;
  const Vec ev = es.eigenvalues();  // ascending
  const double scale = std::max(1e-300, ev.cwiseAbs().maxCoeff());
  out.var_first = ev(dim - 1);
  out.var_second = dim >= 2 ? ev(dim - 2) : 0.0;
  out.coords = Mat::Zero(n, 2);
  out.coords.col(0) = x * es.eigenvectors().col(dim - 1);
  if (dim >= 2 && ev(dim - 2) > 1e-12 * scale) {
    out.coords.col(1) = x * es.eigenvectors().col(dim - 2);
  } else {
    out.rank_deficient = true;
    out.var_second = 0.0;
  }
  if (out.var_first <= 1e-300) {
    // all-identical features: everything at the origin
    out.coords.setZero();
    out.var_first = 0.0;
    out.rank_deficient = true;
  }
  return out;
}

}  // namespace sidlab
