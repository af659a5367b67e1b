#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sidlab {

// Dense row-major tensor of doubles. Immutable by convention once handed to a
// Tape; mutation helpers exist for construction and optimizer updates.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double v);

  const std::vector<int>& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  // 2-D accessors; throw on rank mismatch
  int rows() const;
  int cols() const;
  double& at(int r, int c);
  double at(int r, int c) const;

  double& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double l2_norm() const;
  double linf_norm() const;
  double item() const;  // value of a single-element tensor

  Tensor reshaped(std::vector<int> new_shape) const;

  bool requires_grad = false;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::string shape_str(const std::vector<int>& shape);

// Reverse-mode differentiation tape. Builder methods append primitive
// operations; construction order is the topological order. A tape is
// single-owner and its backward pass may run only once.
class Tape {
 public:
  // Leaves. Gradients are accumulated for leaves whose tensor has
  // requires_grad set (and for interior nodes depending on them).
  int leaf(Tensor value);

  // Primitives. All validate shapes and throw std::invalid_argument naming
  // the offending primitive.
  int add(int a, int b);             // same shape, or (m,n)+(n) row-wise bias
  int sub(int a, int b);             // same shape
  int mul(int a, int b);             // elementwise, same shape
  int matmul(int a, int b);          // (m,k) x (k,n)
  int relu(int a);                   // derivative at 0 defined as 0
  int tanh_op(int a);
  int softmax(int a);                // row-wise; vector treated as one row
  int scale(int a, double c);        // elementwise scale by a constant
  int sum(int a);                    // full reduction -> shape {1}
  int scalar_mul(int s, int a);      // product of scalar node s with tensor a
  int select(int a, std::int64_t flat_index);  // one element -> shape {1}
  int reshape(int a, std::vector<int> new_shape);
  // Concatenate row vectors (shape {1,m} or {m}) into a single {1, sum m} row.
  int concat_cols(const std::vector<int>& parts);
  // mean over rows of -log softmax(row)[label]; fused for stability
  int cross_entropy(int logits, std::vector<int> labels);
  // 2-D correlation with a fixed kernel, stride 2, periodic boundary:
  // out[i,j] = sum_{u,v} k[u,v] * x[(2i+u) mod d, (2j+v) mod d]
  int conv2d_fixed(int image, const Tensor& kernel);

  const Tensor& value(int id) const;
  int num_nodes() const { return static_cast<int>(nodes_.size()); }

  // Backward pass from `node`, seeding with `seed` (shape of node's value).
  // Visits each node exactly once; a second call on the same tape throws.
  void backward(int node, const Tensor& seed);
  void backward(int node);  // seed of ones

  // Gradient accumulated at `id` by the last backward pass.
  const Tensor& grad(int id) const;

 private:
  enum class Op {
    kLeaf, kAdd, kSub, kMul, kMatMul, kRelu, kTanh, kSoftmax, kScale,
    kSum, kScalarMul, kSelect, kReshape, kCrossEntropy, kConv2d, kConcatCols,
  };
  struct Node {
    Op op;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    // op payloads
    double cval = 0.0;
    std::int64_t index = 0;
    std::vector<int> labels;
    Tensor kernel;
  };
  int push(Node n);
  const Node& node(int id) const;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Plain (tape-free) forward helper shared with the wavelet module.
Tensor conv2d_periodic_stride2(const Tensor& image, const Tensor& kernel);
// Adjoint of the above: scatters `coeff` (d/2,d/2) back to a (d,d) image.
void conv2d_periodic_stride2_adjoint(const Tensor& coeff, const Tensor& kernel,
                                     Tensor& image_accum);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued graph built by `build` from a single input leaf.
double grad_check(const std::function<int(Tape&, int)>& build,
                  const Tensor& point, double step);

}  // namespace sidlab
