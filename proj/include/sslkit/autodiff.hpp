#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "sslkit/common.hpp"
#include "sslkit/rng.hpp"

namespace sslkit::ad {

// All learnable state is double precision; storage is row-major so flat
// (shape-list) indexing and Eigen views agree.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

struct Node {
  std::vector<int> shape;  // rank 1 ([n]) or rank 2 ([m, n])
  Mat values;              // rank-1 tensors are stored as 1 x n
  Mat grad;                // empty until backward reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";
  std::uint64_t seq = 0;
};

}  // namespace detail

// Value-semantics handle to a graph node. Operations performed while a Tape
// is active record their backward rule; outside a tape they produce plain
// constants (inference mode).
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_matrix(const Mat& m, bool requires_grad = false);
  static Tensor from_vector(const Eigen::VectorXd& v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor zeros(const std::vector<int>& shape, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  int rank() const;
  int rows() const;
  int cols() const;
  int size() const;
  const Mat& values() const;
  Mat& mutable_values();
  double value() const;  // scalar tensors only
  double operator()(int r, int c) const { return values()(r, c); }

  bool requires_grad() const;
  void set_requires_grad(bool v);
  bool has_grad() const;
  const Mat& grad() const;
  void zero_grad();

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Ordered record of the operations of one forward pass. Construction makes
// the tape active for the current thread; destruction restores the previous
// one. backward() sweeps the record exactly once in reverse order.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void backward(const Tensor& root);
  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend Tensor make_op(const char* name, std::vector<int> shape, Mat values,
                        const std::vector<Tensor>& parents,
                        std::function<void(detail::Node&)> backward_fn);
  std::vector<std::shared_ptr<detail::Node>> nodes_;
  Tape* previous_ = nullptr;
};

// --- core operations -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);  // broadcasts row/col/scalar
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, broadcasting
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor transpose(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor reshape(const Tensor& a, const std::vector<int>& shape);

Tensor softmax(const Tensor& a, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor square(const Tensor& a);
Tensor abs_t(const Tensor& a);
Tensor reciprocal(const Tensor& a);

Tensor sum(const Tensor& a);       // -> scalar
Tensor mean(const Tensor& a);      // -> scalar
Tensor row_sum(const Tensor& a);   // (m, n) -> (m, 1)

// Losses. mse is the mean of squared differences; sum_squares and l1 are the
// plain sums used to assemble training objectives.
Tensor mse(const Tensor& a, const Tensor& b);
Tensor sum_squares(const Tensor& a);
Tensor l1(const Tensor& a, const Tensor& b);

// 0/1 constant mask keeping the k largest entries per row; ties broken
// toward the lower column index.
Tensor topk_row_mask(const Tensor& a, int k);

// Extension point: unary op with caller-supplied forward and backward
// (x, y, dy) -> dx. Used by tests to validate the gradient checker.
Tensor apply_custom(const char* name, const Tensor& x,
                    const std::function<Mat(const Mat&)>& fwd,
                    const std::function<Mat(const Mat&, const Mat&, const Mat&)>& bwd);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }

// --- parameter initialisation ----------------------------------------------

Tensor param_xavier(int rows, int cols, Rng& rng);
Tensor param_normal(int rows, int cols, double std, Rng& rng);
Tensor param_zeros(int rows, int cols);
Tensor param_ones(int rows, int cols);

}  // namespace sslkit::ad
