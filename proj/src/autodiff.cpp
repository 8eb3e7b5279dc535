#include "sslkit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace sslkit::ad {

namespace {

thread_local Tape* g_active_tape = nullptr;
thread_local std::uint64_t g_seq = 0;

int shape_rows(const std::vector<int>& shape) {
  return shape.size() == 1 ? 1 : shape[0];
}
int shape_cols(const std::vector<int>& shape) {
  return shape.size() == 1 ? shape[0] : shape[1];
}

std::shared_ptr<detail::Node> make_leaf(std::vector<int> shape, Mat values,
                                        bool requires_grad) {
  if (!values.allFinite()) throw NumericError("tensor holds non-finite values");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = ++g_seq;
  return node;
}

void accumulate(detail::Node& parent, const Mat& g) {
  if (!parent.requires_grad) return;
  if (parent.grad.size() == 0) {
    parent.grad = Mat::Zero(parent.values.rows(), parent.values.cols());
  }
  parent.grad += g;
}

// Broadcast classification of b against the result shape (a's shape).
enum class Bcast { same, row, col, one };

Bcast classify(const Tensor& a, const Tensor& b, const char* op) {
  const int ar = a.rows(), ac = a.cols();
  const int br = b.rows(), bc = b.cols();
  if (ar == br && ac == bc) return Bcast::same;
  if (br == 1 && bc == 1) return Bcast::one;
  if (br == 1 && bc == ac) return Bcast::row;
  if (bc == 1 && br == ar) return Bcast::col;
  throw ShapeError(std::string(op) + ": incompatible shapes");
}

Mat broadcast_to(const Mat& b, Bcast kind, int rows, int cols) {
  switch (kind) {
    case Bcast::same: return b;
    case Bcast::row: return b.replicate(rows, 1);
    case Bcast::col: return b.replicate(1, cols);
    case Bcast::one: return Mat::Constant(rows, cols, b(0, 0));
  }
  return b;
}

Mat reduce_like(const Mat& g, Bcast kind) {
  switch (kind) {
    case Bcast::same: return g;
    case Bcast::row: return g.colwise().sum();
    case Bcast::col: return g.rowwise().sum();
    case Bcast::one: {
      Mat r(1, 1);
      r(0, 0) = g.sum();
      return r;
    }
  }
  return g;
}

}  // namespace

Tensor make_op(const char* name, std::vector<int> shape, Mat values,
               const std::vector<Tensor>& parents,
               std::function<void(detail::Node&)> backward_fn) {
  if (!values.allFinite()) {
    throw NumericError(std::string(name) + ": produced non-finite values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->op = name;
  node->seq = ++g_seq;
  bool needs_grad = false;
  for (const Tensor& p : parents) needs_grad = needs_grad || p.requires_grad();
  if (g_active_tape != nullptr && needs_grad) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) {
      if (p.node()->seq >= node->seq) {
        throw Error("cyclic tape record");  // impossible by construction
      }
      node->parents.push_back(p.node());
    }
    node->backward_fn = std::move(backward_fn);
    g_active_tape->nodes_.push_back(node);
  }
  return Tensor(std::move(node));
}

// --- Tensor -----------------------------------------------------------------

Tensor Tensor::from_matrix(const Mat& m, bool requires_grad) {
  return Tensor(make_leaf({static_cast<int>(m.rows()), static_cast<int>(m.cols())},
                          m, requires_grad));
}

Tensor Tensor::from_vector(const Eigen::VectorXd& v, bool requires_grad) {
  Mat m(1, v.size());
  m.row(0) = v.transpose();
  return Tensor(
      make_leaf({static_cast<int>(v.size())}, std::move(m), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  Mat m(1, 1);
  m(0, 0) = v;
  return Tensor(make_leaf({1}, std::move(m), requires_grad));
}

Tensor Tensor::zeros(const std::vector<int>& shape, bool requires_grad) {
  return Tensor(make_leaf(shape,
                          Mat::Zero(shape_rows(shape), shape_cols(shape)),
                          requires_grad));
}

const std::vector<int>& Tensor::shape() const { return node_->shape; }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }
int Tensor::rows() const { return static_cast<int>(node_->values.rows()); }
int Tensor::cols() const { return static_cast<int>(node_->values.cols()); }
int Tensor::size() const { return static_cast<int>(node_->values.size()); }
const Mat& Tensor::values() const { return node_->values; }
Mat& Tensor::mutable_values() { return node_->values; }

double Tensor::value() const {
  if (size() != 1) throw ShapeError("value() requires a scalar tensor");
  return node_->values(0, 0);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool v) { node_->requires_grad = v; }
bool Tensor::has_grad() const { return node_->grad.size() > 0; }

const Mat& Tensor::grad() const {
  if (!has_grad()) throw Error("tensor has no gradient");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.resize(0, 0); }

// --- Tape -------------------------------------------------------------------

Tape::Tape() {
  previous_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = previous_; }

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1) {
    throw ShapeError("backward root must be a scalar");
  }
  root.node()->grad = Mat::Ones(1, 1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node& node = **it;
    if (node.grad.size() > 0 && node.backward_fn) node.backward_fn(node);
  }
}

// --- operations -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul needs rank-2 operands");
  }
  if (a.cols() != b.rows()) throw ShapeError("matmul inner dimension mismatch");
  Mat out = a.values() * b.values();
  return make_op("matmul", {a.rows(), b.cols()}, std::move(out), {a, b},
                 [](detail::Node& self) {
                   const Mat& g = self.grad;
                   accumulate(*self.parents[0],
                              g * self.parents[1]->values.transpose());
                   accumulate(*self.parents[1],
                              self.parents[0]->values.transpose() * g);
                 });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.size() < b.size()) return add(b, a);
  const Bcast kind = classify(a, b, "add");
  Mat out = a.values() + broadcast_to(b.values(), kind, a.rows(), a.cols());
  return make_op("add", a.shape(), std::move(out), {a, b},
                 [kind](detail::Node& self) {
                   accumulate(*self.parents[0], self.grad);
                   accumulate(*self.parents[1], reduce_like(self.grad, kind));
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.size() < b.size()) return mul(b, a);
  const Bcast kind = classify(a, b, "mul");
  Mat out =
      a.values().cwiseProduct(broadcast_to(b.values(), kind, a.rows(), a.cols()));
  return make_op(
      "mul", a.shape(), std::move(out), {a, b}, [kind](detail::Node& self) {
        const Mat& av = self.parents[0]->values;
        const Mat bfull =
            broadcast_to(self.parents[1]->values, kind,
                         static_cast<int>(av.rows()), static_cast<int>(av.cols()));
        accumulate(*self.parents[0], self.grad.cwiseProduct(bfull));
        accumulate(*self.parents[1],
                   reduce_like(self.grad.cwiseProduct(av), kind));
      });
}

Tensor neg(const Tensor& a) {
  return make_op("neg", a.shape(), -a.values(), {a}, [](detail::Node& self) {
    accumulate(*self.parents[0], -self.grad);
  });
}

Tensor scale(const Tensor& a, double c) {
  if (!std::isfinite(c)) throw NumericError("scale by non-finite constant");
  return make_op("scale", a.shape(), a.values() * c, {a},
                 [c](detail::Node& self) {
                   accumulate(*self.parents[0], self.grad * c);
                 });
}

Tensor add_const(const Tensor& a, double c) {
  if (!std::isfinite(c)) throw NumericError("add_const with non-finite constant");
  return make_op("add_const", a.shape(), (a.values().array() + c).matrix(), {a},
                 [](detail::Node& self) {
                   accumulate(*self.parents[0], self.grad);
                 });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose needs a rank-2 tensor");
  return make_op("transpose", {a.cols(), a.rows()}, a.values().transpose(), {a},
                 [](detail::Node& self) {
                   accumulate(*self.parents[0], self.grad.transpose());
                 });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  if (axis != 0 && axis != 1) throw ShapeError("concat axis must be 0 or 1");
  const int rows = parts[0].rows(), cols = parts[0].cols();
  int total = axis == 0 ? rows : cols;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (axis == 0) {
      if (parts[i].cols() != cols) throw ShapeError("concat column mismatch");
      total += parts[i].rows();
    } else {
      if (parts[i].rows() != rows) throw ShapeError("concat row mismatch");
      total += parts[i].cols();
    }
  }
  Mat out = axis == 0 ? Mat(total, cols) : Mat(rows, total);
  int off = 0;
  for (const Tensor& p : parts) {
    if (axis == 0) {
      out.middleRows(off, p.rows()) = p.values();
      off += p.rows();
    } else {
      out.middleCols(off, p.cols()) = p.values();
      off += p.cols();
    }
  }
  const std::vector<int> shape =
      axis == 0 ? std::vector<int>{total, cols} : std::vector<int>{rows, total};
  return make_op("concat", shape, std::move(out), parts,
                 [axis](detail::Node& self) {
                   int pos = 0;
                   for (auto& parent : self.parents) {
                     const int extent =
                         axis == 0 ? static_cast<int>(parent->values.rows())
                                   : static_cast<int>(parent->values.cols());
                     if (axis == 0) {
                       accumulate(*parent, self.grad.middleRows(pos, extent));
                     } else {
                       accumulate(*parent, self.grad.middleCols(pos, extent));
                     }
                     pos += extent;
                   }
                 });
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
  if (axis != 0 && axis != 1) throw ShapeError("slice axis must be 0 or 1");
  const int extent = axis == 0 ? a.rows() : a.cols();
  if (start < 0 || len < 1 || start + len > extent) {
    throw ShapeError("slice out of range");
  }
  Mat out = axis == 0 ? Mat(a.values().middleRows(start, len))
                      : Mat(a.values().middleCols(start, len));
  std::vector<int> shape =
      a.rank() == 1 ? std::vector<int>{len}
                    : (axis == 0 ? std::vector<int>{len, a.cols()}
                                 : std::vector<int>{a.rows(), len});
  return make_op("slice", shape, std::move(out), {a},
                 [axis, start, len](detail::Node& self) {
                   detail::Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   Mat g = Mat::Zero(p.values.rows(), p.values.cols());
                   if (axis == 0) {
                     g.middleRows(start, len) = self.grad;
                   } else {
                     g.middleCols(start, len) = self.grad;
                   }
                   accumulate(p, g);
                 });
}

Tensor reshape(const Tensor& a, const std::vector<int>& shape) {
  const int want = shape_rows(shape) * shape_cols(shape);
  if (want != a.size()) throw ShapeError("reshape size mismatch");
  // Row-major storage: reshape is a flat copy.
  Mat out(shape_rows(shape), shape_cols(shape));
  Eigen::Map<Eigen::VectorXd>(out.data(), out.size()) =
      Eigen::Map<const Eigen::VectorXd>(a.values().data(), a.size());
  return make_op("reshape", shape, std::move(out), {a},
                 [](detail::Node& self) {
                   detail::Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   Mat g(p.values.rows(), p.values.cols());
                   Eigen::Map<Eigen::VectorXd>(g.data(), g.size()) =
                       Eigen::Map<const Eigen::VectorXd>(self.grad.data(),
                                                         self.grad.size());
                   accumulate(p, g);
                 });
}

Tensor softmax(const Tensor& a, int axis) {
  if (axis != 0 && axis != 1) throw ShapeError("softmax axis must be 0 or 1");
  if (a.size() == 0) throw ShapeError("softmax of empty tensor");
  const Mat& x = a.values();
  Mat y(x.rows(), x.cols());
  if (axis == 1) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double m = x.row(r).maxCoeff();  // shift for stability
      Eigen::ArrayXd e = (x.row(r).transpose().array() - m).exp();
      y.row(r) = (e / e.sum()).matrix().transpose();
    }
  } else {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double m = x.col(c).maxCoeff();
      Eigen::ArrayXd e = (x.col(c).array() - m).exp();
      y.col(c) = (e / e.sum()).matrix();
    }
  }
  return make_op(
      "softmax", a.shape(), std::move(y), {a}, [axis](detail::Node& self) {
        const Mat& y2 = self.values;
        const Mat& g = self.grad;
        Mat dx(y2.rows(), y2.cols());
        if (axis == 1) {
          for (Eigen::Index r = 0; r < y2.rows(); ++r) {
            const double dot = g.row(r).cwiseProduct(y2.row(r)).sum();
            dx.row(r) = y2.row(r).cwiseProduct(
                (g.row(r).array() - dot).matrix());
          }
        } else {
          for (Eigen::Index c = 0; c < y2.cols(); ++c) {
            const double dot = g.col(c).cwiseProduct(y2.col(c)).sum();
            dx.col(c) = y2.col(c).cwiseProduct(
                (g.col(c).array() - dot).matrix());
          }
        }
        accumulate(*self.parents[0], dx);
      });
}

namespace {
constexpr double kLayerNormEps = 1e-8;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  if (x.cols() < 2) throw ShapeError("layer_norm needs a feature axis >= 2");
  if (gain.size() != x.cols() || bias.size() != x.cols()) {
    throw ShapeError("layer_norm affine parameters must match the feature axis");
  }
  const Mat& xv = x.values();
  const int n = x.cols();
  Mat xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().sum() / n;
    inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(r) = ((xv.row(r).array() - mu) * inv_std[r]).matrix();
  }
  const Eigen::Map<const Eigen::RowVectorXd> gamma(gain.values().data(), n);
  const Eigen::Map<const Eigen::RowVectorXd> beta(bias.values().data(), n);
  Mat out(xv.rows(), n);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    out.row(r) = xhat.row(r).cwiseProduct(gamma) + beta;
  }
  return make_op(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [xhat, inv_std, n](detail::Node& self) {
        const Mat& g = self.grad;
        detail::Node& xp = *self.parents[0];
        detail::Node& gp = *self.parents[1];
        detail::Node& bp = *self.parents[2];
        const Eigen::Map<const Eigen::RowVectorXd> gamma2(gp.values.data(), n);
        if (gp.requires_grad) accumulate(gp, g.cwiseProduct(xhat).colwise().sum());
        if (bp.requires_grad) accumulate(bp, g.colwise().sum());
        if (xp.requires_grad) {
          Mat dx(g.rows(), g.cols());
          for (Eigen::Index r = 0; r < g.rows(); ++r) {
            const Eigen::RowVectorXd dxhat = g.row(r).cwiseProduct(gamma2);
            const double m1 = dxhat.mean();
            const double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
            dx.row(r) = (inv_std[r] *
                         (dxhat.array() - m1 - xhat.row(r).array() * m2))
                            .matrix();
          }
          accumulate(xp, dx);
        }
      });
}

Tensor relu(const Tensor& a) {
  return make_op("relu", a.shape(), a.values().cwiseMax(0.0), {a},
                 [](detail::Node& self) {
                   const Mat& x = self.parents[0]->values;
                   const Mat gate = (x.array() > 0.0).cast<double>().matrix();
                   accumulate(*self.parents[0], self.grad.cwiseProduct(gate));
                 });
}

Tensor gelu(const Tensor& a) {
  const Mat& x = a.values();
  Mat y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    y.data()[i] = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
  }
  return make_op("gelu", a.shape(), std::move(y), {a}, [](detail::Node& self) {
    const Mat& x2 = self.parents[0]->values;
    Mat dx(x2.rows(), x2.cols());
    for (Eigen::Index i = 0; i < x2.size(); ++i) {
      const double v = x2.data()[i];
      const double pdf =
          std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      dx.data()[i] = cdf + v * pdf;
    }
    accumulate(*self.parents[0], dx.cwiseProduct(self.grad));
  });
}

Tensor tanh_t(const Tensor& a) {
  return make_op("tanh", a.shape(), a.values().array().tanh().matrix(), {a},
                 [](detail::Node& self) {
                   const Mat& y = self.values;
                   accumulate(*self.parents[0],
                              self.grad.cwiseProduct(
                                  (1.0 - y.array().square()).matrix()));
                 });
}

Tensor square(const Tensor& a) {
  return make_op("square", a.shape(), a.values().array().square().matrix(), {a},
                 [](detail::Node& self) {
                   accumulate(
                       *self.parents[0],
                       2.0 * self.grad.cwiseProduct(self.parents[0]->values));
                 });
}

Tensor abs_t(const Tensor& a) {
  return make_op("abs", a.shape(), a.values().cwiseAbs(), {a},
                 [](detail::Node& self) {
                   const Mat sign =
                       self.parents[0]->values.array().sign().matrix();
                   accumulate(*self.parents[0], self.grad.cwiseProduct(sign));
                 });
}

Tensor reciprocal(const Tensor& a) {
  return make_op("reciprocal", a.shape(), a.values().cwiseInverse(), {a},
                 [](detail::Node& self) {
                   const Mat& y = self.values;
                   accumulate(*self.parents[0],
                              -self.grad.cwiseProduct(y.cwiseProduct(y)));
                 });
}

Tensor sum(const Tensor& a) {
  Mat out(1, 1);
  out(0, 0) = a.values().sum();
  return make_op("sum", {1}, std::move(out), {a}, [](detail::Node& self) {
    const detail::Node& p = *self.parents[0];
    accumulate(*self.parents[0],
               Mat::Constant(p.values.rows(), p.values.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  Mat out(1, 1);
  out(0, 0) = a.values().mean();
  return make_op("mean", {1}, std::move(out), {a}, [](detail::Node& self) {
    const detail::Node& p = *self.parents[0];
    const double s = self.grad(0, 0) / static_cast<double>(p.values.size());
    accumulate(*self.parents[0],
               Mat::Constant(p.values.rows(), p.values.cols(), s));
  });
}

Tensor row_sum(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("row_sum needs a rank-2 tensor");
  Mat out = a.values().rowwise().sum();
  return make_op("row_sum", {a.rows(), 1}, std::move(out), {a},
                 [](detail::Node& self) {
                   const detail::Node& p = *self.parents[0];
                   accumulate(*self.parents[0],
                              self.grad.replicate(1, p.values.cols()));
                 });
}

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(a - b)); }

Tensor sum_squares(const Tensor& a) { return sum(square(a)); }

Tensor l1(const Tensor& a, const Tensor& b) { return sum(abs_t(a - b)); }

Tensor topk_row_mask(const Tensor& a, int k) {
  if (a.rank() != 2) throw ShapeError("topk_row_mask needs a rank-2 tensor");
  if (k < 1 || k > a.cols()) throw ShapeError("k out of range");
  const Mat& x = a.values();
  Mat mask = Mat::Zero(x.rows(), x.cols());
  std::vector<int> order(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
      if (x(r, i) != x(r, j)) return x(r, i) > x(r, j);
      return i < j;  // deterministic tie break toward the lower index
    });
    for (int i = 0; i < k; ++i) {
      mask(r, order[static_cast<std::size_t>(i)]) = 1.0;
    }
  }
  return Tensor::from_matrix(mask);
}

Tensor apply_custom(
    const char* name, const Tensor& x,
    const std::function<Mat(const Mat&)>& fwd,
    const std::function<Mat(const Mat&, const Mat&, const Mat&)>& bwd) {
  Mat y = fwd(x.values());
  std::vector<int> shape{static_cast<int>(y.rows()),
                         static_cast<int>(y.cols())};
  return make_op(name, shape, std::move(y), {x}, [bwd](detail::Node& self) {
    accumulate(*self.parents[0],
               bwd(self.parents[0]->values, self.values, self.grad));
  });
}

// --- initialisation -----------------------------------------------------------

Tensor param_xavier(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = rng.uniform(-bound, bound);
  }
  return Tensor::from_matrix(m, true);
}

Tensor param_normal(int rows, int cols, double std, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, std);
  return Tensor::from_matrix(m, true);
}

Tensor param_zeros(int rows, int cols) {
  return Tensor::from_matrix(Mat::Zero(rows, cols), true);
}

Tensor param_ones(int rows, int cols) {
  return Tensor::from_matrix(Mat::Ones(rows, cols), true);
}

}  // namespace sslkit::ad
