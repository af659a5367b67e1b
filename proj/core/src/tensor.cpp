#include "sidlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace sidlab {

namespace {

std::int64_t shape_product(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)),
      data_(static_cast<size_t>(shape_product(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != static_cast<std::int64_t>(data_.size()))
    throw std::invalid_argument("Tensor: shape/data length mismatch");
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), v);
  return t;
}

int Tensor::rows() const {
  if (ndim() != 2) throw std::invalid_argument("Tensor::rows: not 2-D");
  return shape_[0];
}

int Tensor::cols() const {
  if (ndim() != 2) throw std::invalid_argument("Tensor::cols: not 2-D");
  return shape_[1];
}

double& Tensor::at(int r, int c) {
  return data_[static_cast<size_t>(r) * shape_[1] + c];
}

double Tensor::at(int r, int c) const {
  return data_[static_cast<size_t>(r) * shape_[1] + c];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::l2_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

double Tensor::linf_norm() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

double Tensor::item() const {
  if (data_.size() != 1)
    throw std::invalid_argument("Tensor::item: size != 1");
  return data_[0];
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
  if (shape_product(new_shape) != size())
    throw std::invalid_argument("Tensor::reshaped: element count mismatch");
  Tensor t;
  t.shape_ = std::move(new_shape);
  t.data_ = data_;
  t.requires_grad = requires_grad;
  return t;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

const Tape::Node& Tape::node(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape: invalid node id");
  return nodes_[static_cast<size_t>(id)];
}

const Tensor& Tape::value(int id) const { return node(id).value; }

int Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::kLeaf;
  n.requires_grad = value.requires_grad;
  n.value = std::move(value);
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  const bool same = na.value.same_shape(nb.value);
  const bool bias = na.value.ndim() == 2 && nb.value.ndim() == 1 &&
                    na.value.cols() == nb.value.shape()[0];
  if (!same && !bias)
    throw std::invalid_argument("add: incompatible shapes " +
                                shape_str(na.value.shape()) + " and " +
                                shape_str(nb.value.shape()));
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a, b};
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.value = na.value;
  if (same) {
    for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] += nb.value[i];
  } else {
    const int m = na.value.rows(), k = na.value.cols();
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < k; ++c) n.value.at(r, c) += nb.value[c];
  }
  return push(std::move(n));
}

int Tape::sub(int a, int b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (!na.value.same_shape(nb.value))
    throw std::invalid_argument("sub: shape mismatch " +
                                shape_str(na.value.shape()) + " vs " +
                                shape_str(nb.value.shape()));
  Node n;
  n.op = Op::kSub;
  n.inputs = {a, b};
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.value = na.value;
  for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] -= nb.value[i];
  return push(std::move(n));
}

int Tape::mul(int a, int b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (!na.value.same_shape(nb.value))
    throw std::invalid_argument("mul: shape mismatch " +
                                shape_str(na.value.shape()) + " vs " +
                                shape_str(nb.value.shape()));
  Node n;
  n.op = Op::kMul;
  n.inputs = {a, b};
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.value = na.value;
  for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] *= nb.value[i];
  return push(std::move(n));
}

int Tape::matmul(int a, int b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.value.ndim() != 2 || nb.value.ndim() != 2 ||
      na.value.cols() != nb.value.rows())
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(na.value.shape()) + " x " +
                                shape_str(nb.value.shape()));
  const int m = na.value.rows(), k = na.value.cols(), p = nb.value.cols();
  Node n;
  n.op = Op::kMatMul;
  n.inputs = {a, b};
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.value = Tensor({m, p});
  const double* A = na.value.data().data();
  const double* B = nb.value.data().data();
  double* C = n.value.data().data();
  for (int i = 0; i < m; ++i) {
    const double* Ai = A + static_cast<size_t>(i) * k;
    double* Ci = C + static_cast<size_t>(i) * p;
    for (int t = 0; t < k; ++t) {
      const double av = Ai[t];
      if (av == 0.0) continue;
      const double* Bt = B + static_cast<size_t>(t) * p;
      for (int j = 0; j < p; ++j) Ci[j] += av * Bt[j];
    }
  }
  return push(std::move(n));
}

int Tape::relu(int a) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kRelu;
  n.inputs = {a};
  n.requires_grad = na.requires_grad;
  n.value = na.value;
  for (std::int64_t i = 0; i < n.value.size(); ++i)
    n.value[i] = n.value[i] > 0.0 ? n.value[i] : 0.0;
  return push(std::move(n));
}

int Tape::tanh_op(int a) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kTanh;
  n.inputs = {a};
  n.requires_grad = na.requires_grad;
  n.value = na.value;
  for (std::int64_t i = 0; i < n.value.size(); ++i)
    n.value[i] = std::tanh(n.value[i]);
  return push(std::move(n));
}

int Tape::softmax(int a) {
  const Node& na = node(a);
  if (na.value.ndim() > 2)
    throw std::invalid_argument("softmax: expects vector or matrix");
  Node n;
  n.op = Op::kSoftmax;
  n.inputs = {a};
  n.requires_grad = na.requires_grad;
  n.value = na.value;
  const int m = na.value.ndim() == 2 ? na.value.rows() : 1;
  const int k = na.value.ndim() == 2 ? na.value.cols()
                                     : static_cast<int>(na.value.size());
  for (int r = 0; r < m; ++r) {
    double* row = n.value.data().data() + static_cast<size_t>(r) * k;
    double mx = row[0];
    for (int c = 1; c < k; ++c) mx = std::max(mx, row[c]);
    double s = 0.0;
    for (int c = 0; c < k; ++c) {
      row[c] = std::exp(row[c] - mx);
      s += row[c];
    }
    for (int c = 0; c < k; ++c) row[c] /= s;
  }
  return push(std::move(n));
}

int Tape::scale(int a, double c) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kScale;
  n.inputs = {a};
  n.requires_grad = na.requires_grad;
  n.cval = c;
  n.value = na.value;
  for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] *= c;
  return push(std::move(n));
}

int Tape::sum(int a) {
  const Node& na = node(a);
  double s = 0.0;
  for (double v : na.value.data()) s += v;
  Node n;
  n.op = Op::kSum;
  n.inputs = {a};
  n.requires_grad = na.requires_grad;
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

int Tape::scalar_mul(int s, int a) {
  const Node& ns = node(s);
  const Node& na = node(a);
  if (ns.value.size() != 1)
    throw std::invalid_argument("scalar_mul: first input must be a scalar");
  Node n;
  n.op = Op::kScalarMul;
  n.inputs = {s, a};
  n.requires_grad = ns.requires_grad || na.requires_grad;
  n.value = na.value;
  const double c = ns.value[0];
  for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] *= c;
  return push(std::move(n));
}

int Tape::select(int a, std::int64_t flat_index) {
  const Node& na = node(a);
  if (flat_index < 0 || flat_index >= na.value.size())
    throw std::invalid_argument("select: index out of range");
  Node n;
  n.op = Op::kSelect;
  n.inputs = {a};
  n.requires_grad = na.requires_grad;
  n.index = flat_index;
  n.value = Tensor::scalar(na.value[flat_index]);
  return push(std::move(n));
}

int Tape::reshape(int a, std::vector<int> new_shape) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kReshape;
  n.inputs = {a};
  n.requires_grad = na.requires_grad;
  n.value = na.value.reshaped(std::move(new_shape));
  n.value.requires_grad = false;
  return push(std::move(n));
}

int Tape::concat_cols(const std::vector<int>& parts) {
  if (parts.empty())
    throw std::invalid_argument("concat_cols: no inputs");
  std::int64_t total = 0;
  bool rg = false;
  for (int id : parts) {
    const Node& p = node(id);
    if (p.value.ndim() > 2 || (p.value.ndim() == 2 && p.value.rows() != 1))
      throw std::invalid_argument("concat_cols: inputs must be row vectors");
    total += p.value.size();
    rg = rg || p.requires_grad;
  }
  Node n;
  n.op = Op::kConcatCols;
  n.inputs = parts;
  n.requires_grad = rg;
  n.value = Tensor({1, static_cast<int>(total)});
  std::int64_t off = 0;
  for (int id : parts) {
    const Tensor& v = node(id).value;
    for (std::int64_t i = 0; i < v.size(); ++i) n.value[off + i] = v[i];
    off += v.size();
  }
  return push(std::move(n));
}

int Tape::cross_entropy(int logits, std::vector<int> labels) {
  const Node& nl = node(logits);
  if (nl.value.ndim() != 2)
    throw std::invalid_argument("cross_entropy: logits must be 2-D");
  const int m = nl.value.rows(), k = nl.value.cols();
  if (static_cast<int>(labels.size()) != m)
    throw std::invalid_argument("cross_entropy: one label per row required");
  for (int lab : labels)
    if (lab < 0 || lab >= k)
      throw std::invalid_argument("cross_entropy: label out of range");
  double loss = 0.0;
  for (int r = 0; r < m; ++r) {
    const double* row = nl.value.data().data() + static_cast<size_t>(r) * k;
    double mx = row[0];
    for (int c = 1; c < k; ++c) mx = std::max(mx, row[c]);
    double lse = 0.0;
    for (int c = 0; c < k; ++c) lse += std::exp(row[c] - mx);
    loss += (std::log(lse) + mx) - row[labels[static_cast<size_t>(r)]];
  }
  Node n;
  n.op = Op::kCrossEntropy;
  n.inputs = {logits};
  n.requires_grad = nl.requires_grad;
  n.labels = std::move(labels);
  n.value = Tensor::scalar(loss / m);
  return push(std::move(n));
}

int Tape::conv2d_fixed(int image, const Tensor& kernel) {
  const Node& ni = node(image);
  if (ni.value.ndim() != 2 || ni.value.rows() != ni.value.cols())
    throw std::invalid_argument("conv2d_fixed: image must be square 2-D");
  if (ni.value.rows() % 2 != 0)
    throw std::invalid_argument("conv2d_fixed: image side must be even");
  if (kernel.ndim() != 2)
    throw std::invalid_argument("conv2d_fixed: kernel must be 2-D");
  Node n;
  n.op = Op::kConv2d;
  n.inputs = {image};
  n.requires_grad = ni.requires_grad;
  n.kernel = kernel;
  n.value = conv2d_periodic_stride2(ni.value, kernel);
  return push(std::move(n));
}

void Tape::backward(int start, const Tensor& seed) {
  if (backward_done_)
    throw std::logic_error("Tape::backward: tape already consumed");
  backward_done_ = true;
  Node& out = nodes_.at(static_cast<size_t>(start));
  if (!seed.same_shape(out.value))
    throw std::invalid_argument("backward: seed shape " +
                                shape_str(seed.shape()) + " != output shape " +
                                shape_str(out.value.shape()));
  for (Node& n : nodes_)
    if (n.requires_grad) n.grad = Tensor::zeros(n.value.shape());
  if (!out.requires_grad) return;
  out.grad = seed;

  for (int id = start; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd: {
        Node& a = nodes_[static_cast<size_t>(n.inputs[0])];
        Node& b = nodes_[static_cast<size_t>(n.inputs[1])];
        if (a.requires_grad)
          for (std::int64_t i = 0; i < g.size(); ++i) a.grad[i] += g[i];
        if (b.requires_grad) {
          if (b.value.same_shape(n.value)) {
            for (std::int64_t i = 0; i < g.size(); ++i) b.grad[i] += g[i];
          } else {
            const int m = n.value.rows(), k = n.value.cols();
            for (int r = 0; r < m; ++r)
              for (int c = 0; c < k; ++c) b.grad[c] += g.at(r, c);
          }
        }
        break;
      }
      case Op::kSub: {
        Node& a = nodes_[static_cast<size_t>(n.inputs[0])];
        Node& b = nodes_[static_cast<size_t>(n.inputs[1])];
        if (a.requires_grad)
          for (std::int64_t i = 0; i < g.size(); ++i) a.grad[i] += g[i];
        if (b.requires_grad)
          for (std::int64_t i = 0; i < g.size(); ++i) b.grad[i] -= g[i];
        break;
      }
      case Op::kMul: {
        Node& a = nodes_[static_cast<size_t>(n.inputs[0])];
        Node& b = nodes_[static_cast<size_t>(n.inputs[1])];
        if (a.requires_grad)
          for (std::int64_t i = 0; i < g.size(); ++i)
            a.grad[i] += g[i] * b.value[i];
        if (b.requires_grad)
          for (std::int64_t i = 0; i < g.size(); ++i)
            b.grad[i] += g[i] * a.value[i];
        break;
      }
      case Op::kMatMul: {
        Node& a = nodes_[static_cast<size_t>(n.inputs[0])];
        Node& b = nodes_[static_cast<size_t>(n.inputs[1])];
        const int m = a.value.rows(), k = a.value.cols(), p = b.value.cols();
        if (a.requires_grad) {
          // dA = g * B^T
          for (int i = 0; i < m; ++i)
            for (int t = 0; t < k; ++t) {
              double s = 0.0;
              for (int j = 0; j < p; ++j) s += g.at(i, j) * b.value.at(t, j);
              a.grad.at(i, t) += s;
            }
        }
        if (b.requires_grad) {
          // dB = A^T * g
          for (int t = 0; t < k; ++t)
            for (int i = 0; i < m; ++i) {
              const double av = a.value.at(i, t);
              if (av == 0.0) continue;
              for (int j = 0; j < p; ++j) b.grad.at(t, j) += av * g.at(i, j);
            }
        }
        break;
      }
      case Op::kRelu: {
        Node& a = nodes_[static_cast<size_t>(n.inputs[0])];
        if (a.requires_grad)
          for (std::int64_t i = 0; i < g.size(); ++i)
            a.grad[i] += a.value[i] > 0.0 ? g[i] : 0.0;
        break;
      }
      case Op::kTanh: {
        Node& a = nodes_[static_cast<size_t>(n.inputs[0])];
        if (a.requires_grad)
          for (std::int64_t i = 0; i < g.size(); ++i)
            a.grad[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      }
      case Op::kSoftmax: {
        Node& a = nodes_[static_cast<size_t>(n.inputs[0])];
        if (a.requires_grad) {
          const int m = n.value.ndim() == 2 ? n.value.rows() : 1;
          const int k = n.value.ndim() == 2
                            ? n.value.cols()
                            : static_cast<int>(n.value.size());
          for (int r = 0; r < m; ++r) {
            const double* y = n.value.data().data() + static_cast<size_t>(r) * k;
            const double* gr = g.data().data() + static_cast<size_t>(r) * k;
            double dot = 0.0;
            for (int c = 0; c < k; ++c) dot += gr[c] * y[c];
            double* ga = a.grad.data().data() + static_cast<size_t>(r) * k;
            for (int c = 0; c < k; ++c) ga[c] += y[c] * (gr[c] - dot);
          }
        }
        break;
      }
      case Op::kScale: {
        Node& a = nodes_[static_cast<size_t>(n.inputs[0])];
        if (a.requires_grad)
          for (std::int64_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] * n.cval;
        break;
      }
      case Op::kSum: {
        Node& a = nodes_[static_cast<size_t>(n.inputs[0])];
        if (a.requires_grad)
          for (std::int64_t i = 0; i < a.grad.size(); ++i) a.grad[i] += g[0];
        break;
      }
      case Op::kScalarMul: {
        Node& s = nodes_[static_cast<size_t>(n.inputs[0])];
        Node& a = nodes_[static_cast<size_t>(n.inputs[1])];
        if (s.requires_grad) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < g.size(); ++i) acc += g[i] * a.value[i];
          s.grad[0] += acc;
        }
        if (a.requires_grad) {
          const double c = s.value[0];
          for (std::int64_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] * c;
        }
        break;
      }
      case Op::kSelect: {
        Node& a = nodes_[static_cast<size_t>(n.inputs[0])];
        if (a.requires_grad) a.grad[n.index] += g[0];
        break;
      }
      case Op::kReshape: {
        Node& a = nodes_[static_cast<size_t>(n.inputs[0])];
        if (a.requires_grad)
          for (std::int64_t i = 0; i < g.size(); ++i) a.grad[i] += g[i];
        break;
      }
      case Op::kCrossEntropy: {
        Node& a = nodes_[static_cast<size_t>(n.inputs[0])];
        if (a.requires_grad) {
          const int m = a.value.rows(), k = a.value.cols();
          const double gv = g[0] / m;
          for (int r = 0; r < m; ++r) {
            const double* row =
                a.value.data().data() + static_cast<size_t>(r) * k;
            double mx = row[0];
            for (int c = 1; c < k; ++c) mx = std::max(mx, row[c]);
            double lse = 0.0;
            for (int c = 0; c < k; ++c) lse += std::exp(row[c] - mx);
            double* ga = a.grad.data().data() + static_cast<size_t>(r) * k;
            for (int c = 0; c < k; ++c)
              ga[c] += gv * (std::exp(row[c] - mx) / lse);
            ga[n.labels[static_cast<size_t>(r)]] -= gv;
          }
        }
        break;
      }
      case Op::kConv2d: {
        Node& a = nodes_[static_cast<size_t>(n.inputs[0])];
        if (a.requires_grad)
          conv2d_periodic_stride2_adjoint(g, n.kernel, a.grad);
        break;
      }
      case Op::kConcatCols: {
        std::int64_t off = 0;
        for (int in_id : n.inputs) {
          Node& a = nodes_[static_cast<size_t>(in_id)];
          if (a.requires_grad)
            for (std::int64_t i = 0; i < a.value.size(); ++i)
              a.grad[i] += g[off + i];
          off += a.value.size();
        }
        break;
      }
    }
  }
}

void Tape::backward(int start) {
  backward(start, Tensor::full(node(start).value.shape(), 1.0));
}

const Tensor& Tape::grad(int id) const {
  const Node& n = node(id);
  if (!backward_done_)
    throw std::logic_error("Tape::grad: backward has not run");
  if (!n.requires_grad)
    throw std::logic_error("Tape::grad: node does not require gradients");
  return n.grad;
}

// ---------------------------------------------------------------------------

Tensor conv2d_periodic_stride2(const Tensor& image, const Tensor& kernel) {
  const int d = image.rows();
  const int kh = kernel.rows(), kw = kernel.cols();
  const int h = d / 2;
  Tensor out({h, h});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < h; ++j) {
      double s = 0.0;
      for (int u = 0; u < kh; ++u) {
        const int r = (2 * i + u) % d;
        for (int v = 0; v < kw; ++v)
          s += kernel.at(u, v) * image.at(r, (2 * j + v) % d);
      }
      out.at(i, j) = s;
    }
  return out;
}

void conv2d_periodic_stride2_adjoint(const Tensor& coeff, const Tensor& kernel,
                                     Tensor& image_accum) {
  const int d = image_accum.rows();
  const int kh = kernel.rows(), kw = kernel.cols();
  const int h = d / 2;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < h; ++j) {
      const double c = coeff.at(i, j);
      if (c == 0.0) continue;
      for (int u = 0; u < kh; ++u) {
        const int r = (2 * i + u) % d;
        for (int v = 0; v < kw; ++v)
          image_accum.at(r, (2 * j + v) % d) += kernel.at(u, v) * c;
      }
    }
}

double grad_check(const std::function<int(Tape&, int)>& build,
                  const Tensor& point, double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be > 0");

  Tensor p = point;
  p.requires_grad = true;
  Tape tape;
  const int x = tape.leaf(p);
  const int out = build(tape, x);
  if (tape.value(out).size() != 1)
    throw std::invalid_argument("grad_check: graph must be scalar-valued");
  tape.backward(out);
  const Tensor analytic = tape.grad(x);

  auto eval = [&](const Tensor& q) {
    Tensor qq = q;
    qq.requires_grad = false;
    Tape t;
    const int leaf = t.leaf(qq);
    return t.value(build(t, leaf)).item();
  };

  double worst = 0.0;
  for (std::int64_t i = 0; i < point.size(); ++i) {
    Tensor hi = point, lo = point;
    hi[i] += step;
    lo[i] -= step;
    const double cd = (eval(hi) - eval(lo)) / (2.0 * step);
    const double err =
        std::fabs(analytic[i] - cd) / std::max(1.0, std::fabs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace sidlab
