#include "sidlab/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace sidlab {

int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
  return best;
}

int IClassifier::label(const Tensor& x) const { return argmax_lowest(logits(x)); }

// ---------------------------------------------------------------------------
// Affine (LDA)
// ---------------------------------------------------------------------------

namespace {

// Pooled/per-class covariance inversion with the documented ridge policy:
// lambda = 1e-6 * trace(S)/p once the condition number exceeds 1e12.
Mat regularized_inverse(Mat s, const std::string& who) {
  const int p = static_cast<int>(s.rows());
  double cond = cond_sym(s);
  if (!(cond < 1e12)) {
    const double lambda = 1e-6 * s.trace() / p;
    s += lambda * Mat::Identity(p, p);
    cond = cond_sym(s);
    if (!(cond < 1e15))
      throw std::runtime_error(
          who + ": covariance is numerically singular even after ridge "
                "(condition number " + std::to_string(cond) + ")");
  }
  return s.llt().solve(Mat::Identity(p, p));
}

double logdet_spd(const Mat& s) {
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("logdet_spd: matrix not positive definite");
  double ld = 0.0;
  const auto& L = llt.matrixLLT();
  for (int i = 0; i < s.rows(); ++i) ld += std::log(L(i, i));
  return 2.0 * ld;
}

}  // namespace

std::vector<double> AffineClassifier::logits(const Tensor& x) const {
  if (x.size() != weights.cols())
    throw std::invalid_argument("AffineClassifier: input dimension mismatch");
  const Vec xv = to_eigen_vec(x);
  const Vec out = weights * xv + biases;
  return std::vector<double>(out.data(), out.data() + out.size());
}

int AffineClassifier::build_logits(Tape& tape, int x_node) const {
  Tensor wt({static_cast<int>(weights.cols()), static_cast<int>(weights.rows())});
  for (int r = 0; r < weights.rows(); ++r)
    for (int c = 0; c < weights.cols(); ++c) wt.at(c, r) = weights(r, c);
  Tensor b({static_cast<int>(biases.size())});
  for (int i = 0; i < biases.size(); ++i) b[i] = biases(i);
  return tape.add(tape.matmul(x_node, tape.leaf(std::move(wt))),
                  tape.leaf(std::move(b)));
}

AffineClassifier fit_affine(const GaussianMixtureSpec& spec) {
  if (spec.num_classes < 2)
    throw std::invalid_argument("fit_affine: need at least 2 classes");
  const int p = spec.dim, K = spec.num_classes;
  const Mat prec = regularized_inverse(spec.pooled, "fit_affine");
  AffineClassifier clf;
  clf.weights = Mat(K, p);
  clf.biases = Vec(K);
  for (int k = 0; k < K; ++k) {
    const Vec w = prec * spec.means[static_cast<size_t>(k)];
    clf.weights.row(k) = w.transpose();
    clf.biases(k) = -0.5 * spec.means[static_cast<size_t>(k)].dot(w) +
                    std::log(spec.priors[static_cast<size_t>(k)]);
  }
  return clf;
}

AffineClassifier fit_affine(const Dataset& ds) {
  return fit_affine(estimate_mixture(ds));
}

// ---------------------------------------------------------------------------
// Quadratic (QDA)
// ---------------------------------------------------------------------------

std::vector<double> QuadraticClassifier::logits(const Tensor& x) const {
  const Vec xv = to_eigen_vec(x);
  std::vector<double> out(means.size());
  for (size_t k = 0; k < means.size(); ++k) {
    const Vec d = xv - means[k];
    out[k] = -0.5 * d.dot(precisions[k] * d) + constants[k];
  }
  return out;
}

int QuadraticClassifier::build_logits(Tape& tape, int x_node) const {
  const int p = input_dim();
  std::vector<int> scores;
  for (size_t k = 0; k < means.size(); ++k) {
    Tensor mu({1, p});
    for (int i = 0; i < p; ++i) mu[i] = means[k](i);
    Tensor prec({p, p});
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) prec.at(r, c) = precisions[k](r, c);
    const int d = tape.sub(x_node, tape.leaf(std::move(mu)));
    const int pd = tape.matmul(d, tape.leaf(std::move(prec)));
    const int quad = tape.sum(tape.mul(d, pd));
    const int score =
        tape.add(tape.scale(quad, -0.5), tape.leaf(Tensor::scalar(constants[k])));
    scores.push_back(score);
  }
  return tape.concat_cols(scores);
}

QuadraticClassifier fit_quadratic(const GaussianMixtureSpec& spec) {
  if (spec.num_classes < 2)
    throw std::invalid_argument("fit_quadratic: need at least 2 classes");
  QuadraticClassifier clf;
  for (int k = 0; k < spec.num_classes; ++k) {
    const Mat& cov = spec.covariances[static_cast<size_t>(k)];
    clf.precisions.push_back(
        regularized_inverse(cov, "fit_quadratic(class " + std::to_string(k) + ")"));
    clf.means.push_back(spec.means[static_cast<size_t>(k)]);
    clf.constants.push_back(-0.5 * logdet_spd(cov) +
                            std::log(spec.priors[static_cast<size_t>(k)]));
  }
  return clf;
}

QuadraticClassifier fit_quadratic(const Dataset& ds, double shrinkage) {
  return fit_quadratic(estimate_mixture(ds, shrinkage));
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

std::vector<double> MlpClassifier::logits(const Tensor& x) const {
  if (static_cast<int>(x.size()) != layer_sizes.front())
    throw std::invalid_argument("MlpClassifier: input dimension mismatch");
  std::vector<double> h(x.data().begin(), x.data().end());
  for (size_t l = 0; l < weights.size(); ++l) {
    const int in = layer_sizes[l], out = layer_sizes[l + 1];
    std::vector<double> nxt(static_cast<size_t>(out));
    for (int j = 0; j < out; ++j) nxt[static_cast<size_t>(j)] = biases[l][j];
    for (int i = 0; i < in; ++i) {
      const double hv = h[static_cast<size_t>(i)];
      if (hv == 0.0) continue;
      for (int j = 0; j < out; ++j)
        nxt[static_cast<size_t>(j)] += hv * weights[l][static_cast<std::int64_t>(i) * out + j];
    }
    if (l + 1 < weights.size())
      for (double& v : nxt) v = v > 0.0 ? v : 0.0;
    h = std::move(nxt);
  }
  return h;
}

int MlpClassifier::build_logits(Tape& tape, int x_node) const {
  return build_logits_batch(tape, x_node);
}

int MlpClassifier::build_logits_batch(Tape& tape, int x_node) const {
  int h = x_node;
  for (size_t l = 0; l < weights.size(); ++l) {
    const int z = tape.add(tape.matmul(h, tape.leaf(weights[l])),
                           tape.leaf(biases[l]));
    h = (l + 1 < weights.size()) ? tape.relu(z) : z;
  }
  return h;
}

MlpClassifier init_mlp(int input_dim, const std::vector<int>& hidden,
                       int num_classes, std::uint64_t seed) {
  MlpClassifier mlp;
  mlp.layer_sizes.push_back(input_dim);
  for (int h : hidden) mlp.layer_sizes.push_back(h);
  mlp.layer_sizes.push_back(num_classes);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (size_t l = 0; l + 1 < mlp.layer_sizes.size(); ++l) {
    const int in = mlp.layer_sizes[l], out = mlp.layer_sizes[l + 1];
    Tensor w({in, out});
    const double s = std::sqrt(2.0 / in);
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = s * gauss(rng);
    w.requires_grad = true;
    Tensor b({out});
    b.requires_grad = true;
    mlp.weights.push_back(std::move(w));
    mlp.biases.push_back(std::move(b));
  }
  return mlp;
}

AdamState::AdamState(const std::vector<Tensor*>& params, AdamConfig cfg)
    : params_(params), cfg_(cfg) {
  for (Tensor* p : params_) {
    m_.push_back(Tensor::zeros(p->shape()));
    v_.push_back(Tensor::zeros(p->shape()));
  }
}

void AdamState::step(const std::vector<const Tensor*>& grads) {
  if (grads.size() != params_.size())
    throw std::invalid_argument("AdamState: gradient count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  const double decay = 1.0 - cfg_.lr * cfg_.weight_decay;
  for (size_t p = 0; p < params_.size(); ++p) {
    Tensor& theta = *params_[p];
    const Tensor& g = *grads[p];
    for (std::int64_t i = 0; i < theta.size(); ++i) {
      m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g[i];
      v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      theta[i] = decay * theta[i] - cfg_.lr * (m_[p][i] / bc1) /
                                        (std::sqrt(v_[p][i] / bc2) + cfg_.eps);
    }
  }
}

MlpClassifier fit_mlp(const Dataset& train, const MlpConfig& cfg) {
  if (train.size() == 0) throw std::invalid_argument("fit_mlp: empty dataset");
  MlpClassifier mlp =
      init_mlp(train.dim(), cfg.hidden, train.num_classes, cfg.seed);

  std::vector<Tensor*> params;
  for (size_t l = 0; l < mlp.weights.size(); ++l) {
    params.push_back(&mlp.weights[l]);
    params.push_back(&mlp.biases[l]);
  }
  AdamState adam(params, cfg.adam);

  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0xb5));
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t{0});

  std::int64_t iteration = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (size_t start = 0; start < train.size(); start += static_cast<size_t>(cfg.batch)) {
      const size_t end = std::min(train.size(), start + static_cast<size_t>(cfg.batch));
      const int bsz = static_cast<int>(end - start);
      Tensor xb({bsz, train.dim()});
      std::vector<int> yb(static_cast<size_t>(bsz));
      for (int r = 0; r < bsz; ++r) {
        const size_t j = order[start + static_cast<size_t>(r)];
        const Tensor& ex = train.examples[j];
        for (int c = 0; c < train.dim(); ++c) xb.at(r, c) = ex[c];
        yb[static_cast<size_t>(r)] = train.labels[j];
      }
      Tape tape;
      const int x_node = tape.leaf(std::move(xb));
      std::vector<int> param_ids;
      int h = x_node;
      for (size_t l = 0; l < mlp.weights.size(); ++l) {
        const int w_id = tape.leaf(mlp.weights[l]);
        const int b_id = tape.leaf(mlp.biases[l]);
        param_ids.push_back(w_id);
        param_ids.push_back(b_id);
        const int lin = tape.add(tape.matmul(h, w_id), b_id);
        h = (l + 1 < mlp.weights.size()) ? tape.relu(lin) : lin;
      }
      const int loss = tape.cross_entropy(h, yb);
      const double lv = tape.value(loss).item();
      ++iteration;
      if (!std::isfinite(lv))
        throw std::runtime_error("fit_mlp: loss diverged (non-finite) at iteration " +
                                 std::to_string(iteration));
      tape.backward(loss);
      std::vector<const Tensor*> grads;
      for (int id : param_ids) grads.push_back(&tape.grad(id));
      adam.step(grads);
      epoch_loss += lv;
      ++batches;
    }
    mlp.loss_trace.push_back(epoch_loss / std::max(1, batches));
  }
  return mlp;
}

// ---------------------------------------------------------------------------
// Dual classifier
// ---------------------------------------------------------------------------

namespace {

Tensor block_diag_transform(int d, int channels, const WawtWeights& w,
                            const WaveletFilter& filter) {
  const Tensor h = wawt_matrix(d, w, filter);
  if (channels == 1) return h;
  const int m = h.rows(), p = h.cols();
  Tensor full({channels * m, channels * p});
  for (int ch = 0; ch < channels; ++ch)
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < p; ++c)
        full.at(ch * m + r, ch * p + c) = h.at(r, c);
  return full;
}

Dataset transformed_dataset(const Dataset& ds, const Tensor& transform) {
  const Mat H = to_eigen(transform);
  Dataset out = ds;
  out.name = ds.name + "/wawt";
  out.image_side = ds.image_side / 2;
  out.clip_domain = false;
  out.range_lo = -std::numeric_limits<double>::infinity();
  out.range_hi = std::numeric_limits<double>::infinity();
  for (Tensor& x : out.examples) x = from_eigen_vec(H * to_eigen_vec(x));
  return out;
}

}  // namespace

int DualClassifier::num_classes() const {
  return inner_ref().num_classes();
}

const IClassifier& DualClassifier::inner_ref() const {
  return *std::visit(
      [](const auto& c) -> const IClassifier* { return &c; }, inner);
}

Tensor DualClassifier::apply_transform(const Tensor& x) const {
  const Mat H = to_eigen(transform);
  return from_eigen_vec(H * to_eigen_vec(x));
}

void DualClassifier::rebuild_transform() {
  transform = block_diag_transform(image_side, in_channels, wawt_weights, filter);
}

std::vector<double> DualClassifier::logits(const Tensor& x) const {
  return inner_ref().logits(apply_transform(x));
}

int DualClassifier::build_logits(Tape& tape, int x_node) const {
  Tensor ht({transform.cols(), transform.rows()});
  for (int r = 0; r < transform.rows(); ++r)
    for (int c = 0; c < transform.cols(); ++c) ht.at(c, r) = transform.at(r, c);
  const int z = tape.matmul(x_node, tape.leaf(std::move(ht)));
  return inner_ref().build_logits(tape, z);
}

DualClassifier build_dual(const Dataset& train, const DualConfig& cfg) {
  if (train.image_side <= 0 || train.image_side % 2 != 0)
    throw std::invalid_argument(
        "build_dual: dataset is not square-image shaped with even side");
  DualClassifier dual;
  dual.filter = cfg.filter.lowpass.empty() ? WaveletFilter::sym17() : cfg.filter;
  dual.wawt_weights = cfg.weights;
  dual.image_side = train.image_side;
  dual.in_channels = train.channels;
  dual.rebuild_transform();

  if (cfg.kind == ClassifierKind::kAffine) {
    dual.inner = fit_affine(transformed_dataset(train, dual.transform));
    return dual;
  }
  if (cfg.kind == ClassifierKind::kQuadratic) {
    dual.inner =
        fit_quadratic(transformed_dataset(train, dual.transform), cfg.qda_shrinkage);
    return dual;
  }

  // MLP flavor: the four sub-band weights train jointly with the inner
  // network. The transform is linear in the weights, so the batch graph is
  // sum_b w_b * (X * B_b^T) with B_b the fixed per-band matrices.
  const int d = train.image_side, c = train.channels;
  const auto bands = band_matrices(d, dual.filter);
  const int m = bands[0].rows();
  std::array<Tensor, 4> band_t;  // (c*p, c*m) block-diagonal transposes
  for (int b = 0; b < 4; ++b) {
    const Tensor& B = bands[static_cast<size_t>(b)];
    Tensor bt({c * B.cols(), c * m});
    for (int ch = 0; ch < c; ++ch)
      for (int r = 0; r < m; ++r)
        for (int q = 0; q < B.cols(); ++q)
          bt.at(ch * B.cols() + q, ch * m + r) = B.at(r, q);
    band_t[static_cast<size_t>(b)] = std::move(bt);
  }

  MlpClassifier mlp =
      init_mlp(c * m, cfg.mlp.hidden, train.num_classes, cfg.mlp.seed);
  std::array<Tensor, 4> wts = {
      Tensor::scalar(cfg.weights.w1), Tensor::scalar(cfg.weights.w2),
      Tensor::scalar(cfg.weights.w3), Tensor::scalar(cfg.weights.w4)};
  for (Tensor& t : wts) t.requires_grad = true;

  std::vector<Tensor*> params;
  for (Tensor& t : wts) params.push_back(&t);
  for (size_t l = 0; l < mlp.weights.size(); ++l) {
    params.push_back(&mlp.weights[l]);
    params.push_back(&mlp.biases[l]);
  }
  AdamState adam(params, cfg.mlp.adam);

  std::mt19937_64 shuffle_rng(derive_seed(cfg.mlp.seed, 0xd4));
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::int64_t iteration = 0;

  for (int epoch = 0; epoch < cfg.mlp.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (size_t start = 0; start < train.size();
         start += static_cast<size_t>(cfg.mlp.batch)) {
      const size_t end =
          std::min(train.size(), start + static_cast<size_t>(cfg.mlp.batch));
      const int bsz = static_cast<int>(end - start);
      Tensor xb({bsz, train.dim()});
      std::vector<int> yb(static_cast<size_t>(bsz));
      for (int r = 0; r < bsz; ++r) {
        const size_t j = order[start + static_cast<size_t>(r)];
        for (int q = 0; q < train.dim(); ++q) xb.at(r, q) = train.examples[j][q];
        yb[static_cast<size_t>(r)] = train.labels[j];
      }
      Tape tape;
      const int x_node = tape.leaf(std::move(xb));
      int z = -1;
      std::array<int, 4> w_ids{};
      for (int b = 0; b < 4; ++b) {
        w_ids[static_cast<size_t>(b)] = tape.leaf(wts[static_cast<size_t>(b)]);
        const int proj =
            tape.matmul(x_node, tape.leaf(band_t[static_cast<size_t>(b)]));
        const int term = tape.scalar_mul(w_ids[static_cast<size_t>(b)], proj);
        z = (b == 0) ? term : tape.add(z, term);
      }
      std::vector<int> param_ids;
      int h = z;
      for (size_t l = 0; l < mlp.weights.size(); ++l) {
        const int w_id = tape.leaf(mlp.weights[l]);
        const int b_id = tape.leaf(mlp.biases[l]);
        param_ids.push_back(w_id);
        param_ids.push_back(b_id);
        const int lin = tape.add(tape.matmul(h, w_id), b_id);
        h = (l + 1 < mlp.weights.size()) ? tape.relu(lin) : lin;
      }
      const int loss = tape.cross_entropy(h, yb);
      const double lv = tape.value(loss).item();
      ++iteration;
      if (!std::isfinite(lv))
        throw std::runtime_error(
            "build_dual: loss diverged (non-finite) at iteration " +
            std::to_string(iteration));
      tape.backward(loss);
      std::vector<const Tensor*> grads;
      for (int b = 0; b < 4; ++b)
        grads.push_back(&tape.grad(w_ids[static_cast<size_t>(b)]));
      for (int id : param_ids) grads.push_back(&tape.grad(id));
      adam.step(grads);
      epoch_loss += lv;
      ++batches;
    }
    mlp.loss_trace.push_back(epoch_loss / std::max(1, batches));
  }

  dual.wawt_weights = {wts[0].item(), wts[1].item(), wts[2].item(), wts[3].item()};
  dual.rebuild_transform();
  dual.inner = std::move(mlp);
  return dual;
}

ObjectiveTrack track_objective(const IClassifier& f, const IClassifier& g,
                               const std::vector<Tensor>& normals,
                               const std::vector<Tensor>& adversarials) {
  if (f.num_classes() != g.num_classes())
    throw std::invalid_argument("track_objective: class count mismatch");
  if (normals.empty() || adversarials.empty())
    throw std::invalid_argument("track_objective: empty example set");
  auto sqdev = [&](const Tensor& x) {
    const std::vector<double> a = f.logits(x), b = g.logits(x);
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
  };
  ObjectiveTrack t{0.0, std::numeric_limits<double>::infinity()};
  for (const Tensor& x : normals) t.objective = std::max(t.objective, sqdev(x));
  for (const Tensor& x : adversarials)
    t.constraint = std::min(t.constraint, sqdev(x));
  return t;
}

double accuracy(const IClassifier& f, const Dataset& ds) {
  if (ds.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
  int ok = 0;
  for (size_t i = 0; i < ds.size(); ++i)
    if (f.label(ds.examples[i]) == ds.labels[i]) ++ok;
  return double(ok) / ds.size();
}

double agreement(const IClassifier& f, const IClassifier& g, const Dataset& ds) {
  if (ds.size() == 0) throw std::invalid_argument("agreement: empty dataset");
  int same = 0;
  for (size_t i = 0; i < ds.size(); ++i)
    if (f.label(ds.examples[i]) == g.label(ds.examples[i])) ++same;
  return double(same) / ds.size();
}

}  // namespace sidlab
