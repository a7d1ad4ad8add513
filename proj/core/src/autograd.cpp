#include "groovesynth/autograd.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

#include <Eigen/QR>

#include "groovesynth/errors.hpp"

namespace groovesynth::nn {

namespace {

thread_local bool g_grad_enabled = true;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tensor make_op(Matrix value, std::initializer_list<Tensor> inputs, std::function<void(Node&)> backward) {
  Tensor out(std::move(value), false);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  Node& n = *out.node();
  n.requires_grad = true;
  for (const auto& t : inputs) n.parents.push_back(t.node());
  n.backward = std::move(backward);
  return out;
}

Tensor make_op(Matrix value, const std::vector<Tensor>& inputs, std::function<void(Node&)> backward) {
  Tensor out(std::move(value), false);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  Node& n = *out.node();
  n.requires_grad = true;
  for (const auto& t : inputs) n.parents.push_back(t.node());
  n.backward = std::move(backward);
  return out;
}

void ensure_grad(Node& n) {
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::ShapeMismatch,
          std::string(op) + ": shapes " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " and " +
              std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

template <typename F>
Tensor unary(const Tensor& x, F&& forward, std::function<Matrix(const Matrix& x, const Matrix& y, const Matrix& g)> grad) {
  Matrix y = x.value().unaryExpr(forward);
  return make_op(std::move(y), {x}, [grad = std::move(grad)](Node& self) {
    Node& p = *self.parents[0];
    if (p.requires_grad) p.accumulate(grad(p.value, self.value, self.grad));
  });
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (!requires_grad) return;
  if (grad.size() == 0)
    grad = g;
  else
    grad += g;
}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Matrix Tensor::grad() const {
  if (has_grad()) return node_->grad;
  return Matrix::Zero(rows(), cols());
}

double Tensor::item() const {
  require(rows() == 1 && cols() == 1, ErrorKind::ShapeMismatch, "item() needs a 1x1 tensor");
  return node_->value(0, 0);
}

void Tensor::backward() const {
  require(rows() == 1 && cols() == 1, ErrorKind::ShapeMismatch, "backward() needs a scalar");
  if (!node_->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), ErrorKind::ShapeMismatch,
          "matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
              std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  Matrix y = a.value() * b.value();
  return make_op(std::move(y), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(self.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * self.grad);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(-self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(self.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate(self.grad.cwiseProduct(pa.value));
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_op(a.value() * s, {a}, [s](Node& self) { self.parents[0]->accumulate(self.grad * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
  return make_op(a.value().array() + s, {a}, [](Node& self) { self.parents[0]->accumulate(self.grad); });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require(bias.cols() == 1 && bias.rows() == x.rows(), ErrorKind::ShapeMismatch, "add_bias: bias must be rows x 1");
  Matrix y = x.value().colwise() + bias.value().col(0);
  return make_op(std::move(y), {x, bias}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(self.grad.rowwise().sum());
  });
}

Tensor scale_cols(const Tensor& x, const Eigen::RowVectorXd& weights) {
  require(weights.size() == x.cols(), ErrorKind::ShapeMismatch, "scale_cols: weight count differs from columns");
  Matrix y = x.value() * weights.asDiagonal();
  return make_op(std::move(y), {x}, [weights](Node& self) {
    self.parents[0]->accumulate(self.grad * weights.asDiagonal());
  });
}

Tensor masked_fill_cols(const Tensor& x, const Tensor& token, const Eigen::RowVectorXd& keep) {
  require(token.cols() == 1 && token.rows() == x.rows(), ErrorKind::ShapeMismatch, "masked_fill_cols: bad token");
  require(keep.size() == x.cols(), ErrorKind::ShapeMismatch, "masked_fill_cols: mask length differs from columns");
  Matrix y = x.value();
  for (Eigen::Index t = 0; t < y.cols(); ++t)
    if (keep[t] == 0.0) y.col(t) = token.value().col(0);
  return make_op(std::move(y), {x, token}, [keep](Node& self) {
    Node& px = *self.parents[0];
    Node& pt = *self.parents[1];
    if (px.requires_grad) {
      Matrix g = self.grad;
      for (Eigen::Index t = 0; t < g.cols(); ++t)
        if (keep[t] == 0.0) g.col(t).setZero();
      px.accumulate(g);
    }
    if (pt.requires_grad) {
      Matrix g = Matrix::Zero(pt.value.rows(), 1);
      for (Eigen::Index t = 0; t < self.grad.cols(); ++t)
        if (keep[t] == 0.0) g += self.grad.col(t);
      pt.accumulate(g);
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), ErrorKind::ShapeMismatch, "concat_rows: nothing to concatenate");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const auto& p : parts) {
    require(p.cols() == cols, ErrorKind::ShapeMismatch, "concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix y(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    y.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_op(std::move(y), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      if (p.requires_grad) p.accumulate(self.grad.middleRows(offsets[i], p.value.rows()));
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), ErrorKind::ShapeMismatch, "concat_cols: nothing to concatenate");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const auto& p : parts) {
    require(p.rows() == rows, ErrorKind::ShapeMismatch, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix y(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    y.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_op(std::move(y), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      if (p.requires_grad) p.accumulate(self.grad.middleCols(offsets[i], p.value.cols()));
    }
  });
}

Tensor slice_rows(const Tensor& x, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= x.rows(), ErrorKind::IndexOutOfRange, "slice_rows out of range");
  return make_op(x.value().middleRows(start, count), {x}, [start, count](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    p.grad.middleRows(start, count) += self.grad;
  });
}

Tensor slice_cols(const Tensor& x, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= x.cols(), ErrorKind::IndexOutOfRange, "slice_cols out of range");
  return make_op(x.value().middleCols(start, count), {x}, [start, count](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    p.grad.middleCols(start, count) += self.grad;
  });
}

Tensor gather_cols(const Tensor& x, const std::vector<int>& index) {
  Matrix y(x.rows(), static_cast<Eigen::Index>(index.size()));
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < x.cols(), ErrorKind::IndexOutOfRange,
            "gather_cols: column " + std::to_string(index[i]) + " of " + std::to_string(x.cols()));
    y.col(static_cast<Eigen::Index>(i)) = x.value().col(index[i]);
  }
  return make_op(std::move(y), {x}, [index](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    for (std::size_t i = 0; i < index.size(); ++i) p.grad.col(index[i]) += self.grad.col(static_cast<Eigen::Index>(i));
  });
}

Tensor scatter_cols(const Tensor& x, const std::vector<int>& index, Eigen::Index total) {
  require(static_cast<Eigen::Index>(index.size()) == x.cols(), ErrorKind::ShapeMismatch,
          "scatter_cols: one index per column required");
  Matrix y = Matrix::Zero(x.rows(), total);
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < total, ErrorKind::IndexOutOfRange, "scatter_cols: index out of range");
    y.col(index[i]) += x.value().col(static_cast<Eigen::Index>(i));
  }
  return make_op(std::move(y), {x}, [index](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    for (std::size_t i = 0; i < index.size(); ++i) p.grad.col(static_cast<Eigen::Index>(i)) += self.grad.col(index[i]);
  });
}

Tensor transpose(const Tensor& x) {
  return make_op(x.value().transpose(), {x},
                 [](Node& self) { self.parents[0]->accumulate(self.grad.transpose()); });
}

Tensor repeat_cols(const Tensor& column, Eigen::Index count) {
  require(column.cols() == 1, ErrorKind::ShapeMismatch, "repeat_cols expects a column vector");
  return make_op(column.value().replicate(1, count), {column},
                 [](Node& self) { self.parents[0]->accumulate(self.grad.rowwise().sum()); });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](const Matrix& in, const Matrix&, const Matrix& g) {
        return Matrix(g.array() * in.array().unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; }));
      });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); },
      [](const Matrix& in, const Matrix&, const Matrix& g) {
        return Matrix(g.array() * in.array().unaryExpr([](double v) {
          const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
          const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
          return cdf + v * pdf;
        }));
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](const Matrix&, const Matrix& y, const Matrix& g) {
        return Matrix(g.array() * y.array() * (1.0 - y.array()));
      });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](const Matrix&, const Matrix& y, const Matrix& g) { return Matrix(g.array() * (1.0 - y.array().square())); });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::abs(v); },
      [](const Matrix& in, const Matrix&, const Matrix& g) {
        return Matrix(g.array() * in.array().unaryExpr([](double v) { return double((v > 0) - (v < 0)); }));
      });
}

Tensor log_clamped(const Tensor& x, double floor) {
  return unary(
      x, [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](const Matrix& in, const Matrix&, const Matrix& g) {
        return Matrix(g.array() * in.array().unaryExpr([floor](double v) { return v > floor ? 1.0 / v : 0.0; }));
      });
}

Tensor acos_clamped(const Tensor& x, double limit) {
  return unary(
      x, [limit](double v) { return std::acos(std::clamp(v, -limit, limit)); },
      [limit](const Matrix& in, const Matrix&, const Matrix& g) {
        return Matrix(g.array() * in.array().unaryExpr([limit](double v) {
          return std::abs(v) < limit ? -1.0 / std::sqrt(1.0 - v * v) : 0.0;
        }));
      });
}

Tensor softmax_rows(const Tensor& x, bool causal) {
  const Matrix& v = x.value();
  Matrix y = Matrix::Zero(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const Eigen::Index width = causal ? std::min<Eigen::Index>(i + 1, v.cols()) : v.cols();
    const double peak = v.row(i).head(width).maxCoeff();
    double total = 0.0;
    for (Eigen::Index j = 0; j < width; ++j) {
      y(i, j) = std::exp(v(i, j) - peak);
      total += y(i, j);
    }
    y.row(i).head(width) /= total;
  }
  return make_op(std::move(y), {x}, [](Node& self) {
    const Matrix& y = self.value;
    const Eigen::VectorXd dots = (self.grad.cwiseProduct(y)).rowwise().sum();
    Matrix g = y.cwiseProduct(self.grad.colwise() - dots);
    self.parents[0]->accumulate(g);
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require(gain.rows() == x.rows() && bias.rows() == x.rows() && gain.cols() == 1 && bias.cols() == 1,
          ErrorKind::ShapeMismatch, "layer_norm: gain/bias must be rows x 1");
  const Matrix& v = x.value();
  const Eigen::Index n = v.rows();
  Eigen::RowVectorXd mu = v.colwise().mean();
  Matrix centered = v.rowwise() - mu;
  Eigen::RowVectorXd inv_std = ((centered.array().square().colwise().sum() / double(n)) + eps).rsqrt();
  Matrix xhat = centered * inv_std.asDiagonal();
  Matrix y = (xhat.array().colwise() * gain.value().col(0).array()).matrix();
  y.colwise() += bias.value().col(0);
  return make_op(std::move(y), {x, gain, bias}, [xhat, inv_std, n](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    if (px.requires_grad) {
      Matrix dxhat = (self.grad.array().colwise() * pg.value.col(0).array()).matrix();
      Eigen::RowVectorXd m1 = dxhat.colwise().mean();
      Eigen::RowVectorXd m2 = dxhat.cwiseProduct(xhat).colwise().sum() / double(n);
      Matrix dx = (dxhat.rowwise() - m1) - xhat * m2.asDiagonal();
      px.accumulate(dx * inv_std.asDiagonal());
    }
    if (pg.requires_grad) pg.accumulate(self.grad.cwiseProduct(xhat).rowwise().sum());
    if (pb.requires_grad) pb.accumulate(self.grad.rowwise().sum());
  });
}

Tensor normalize_groups(const Tensor& x, int group, double eps) {
  require(group > 0 && x.rows() % group == 0, ErrorKind::ShapeMismatch, "normalize_groups: rows not divisible");
  const Matrix& v = x.value();
  Matrix y(v.rows(), v.cols());
  Matrix norms(v.rows() / group, v.cols());
  for (Eigen::Index t = 0; t < v.cols(); ++t) {
    for (Eigen::Index g = 0; g < norms.rows(); ++g) {
      const double n = std::max(v.col(t).segment(g * group, group).norm(), eps);
      norms(g, t) = n;
      y.col(t).segment(g * group, group) = v.col(t).segment(g * group, group) / n;
    }
  }
  return make_op(y, {x}, [norms, group, eps](Node& self) {
    Matrix gx(self.value.rows(), self.value.cols());
    for (Eigen::Index t = 0; t < gx.cols(); ++t) {
      for (Eigen::Index g = 0; g < norms.rows(); ++g) {
        const auto yv = self.value.col(t).segment(g * group, group);
        const auto gv = self.grad.col(t).segment(g * group, group);
        if (norms(g, t) > eps)
          gx.col(t).segment(g * group, group) = (gv - yv * yv.dot(gv)) / norms(g, t);
        else
          gx.col(t).segment(g * group, group) = gv / eps;
      }
    }
    self.parents[0]->accumulate(gx);
  });
}

Tensor sum(const Tensor& x) {
  Matrix y(1, 1);
  y(0, 0) = x.value().sum();
  return make_op(std::move(y), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& x) {
  const double count = static_cast<double>(x.value().size());
  return scale(sum(x), count > 0 ? 1.0 / count : 0.0);
}

Tensor sum_rows(const Tensor& x) {
  return make_op(x.value().colwise().sum(), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    p.accumulate(self.grad.replicate(p.value.rows(), 1));
  });
}

Tensor mean_cols(const Tensor& x) {
  const double n = static_cast<double>(x.cols());
  return make_op(x.value().rowwise().mean(), {x}, [n](Node& self) {
    Node& p = *self.parents[0];
    p.accumulate(self.grad.replicate(1, p.value.cols()) / n);
  });
}

Tensor forward_diff_cols(const Tensor& x) {
  const Eigen::Index n = x.cols();
  Matrix y = Matrix::Zero(x.rows(), n);
  if (n >= 2) {
    y.leftCols(n - 1) = x.value().rightCols(n - 1) - x.value().leftCols(n - 1);
    y.col(n - 1) = y.col(n - 2);
  }
  return make_op(std::move(y), {x}, [n](Node& self) {
    Node& p = *self.parents[0];
    if (n < 2) return;
    Matrix g = Matrix::Zero(self.grad.rows(), n);
    for (Eigen::Index t = 0; t < n; ++t) {
      const Eigen::Index lo = t < n - 1 ? t : n - 2;
      g.col(lo + 1) += self.grad.col(t);
      g.col(lo) -= self.grad.col(t);
    }
    p.accumulate(g);
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mse");
  const double count = static_cast<double>(a.value().size());
  Matrix diff = a.value() - b.value();
  Matrix y(1, 1);
  y(0, 0) = count > 0 ? diff.squaredNorm() / count : 0.0;
  return make_op(std::move(y), {a, b}, [diff, count](Node& self) {
    const Matrix g = diff * (2.0 * self.grad(0, 0) / count);
    self.parents[0]->accumulate(g);
    self.parents[1]->accumulate(-g);
  });
}

Tensor smooth_l1(const Tensor& a, const Tensor& b, double beta) {
  check_same_shape(a, b, "smooth_l1");
  const double count = static_cast<double>(a.value().size());
  Matrix diff = a.value() - b.value();
  const double total = diff.unaryExpr([beta](double d) {
                             const double ad = std::abs(d);
                             return ad < beta ? 0.5 * d * d / beta : ad - 0.5 * beta;
                           }).sum();
  Matrix y(1, 1);
  y(0, 0) = count > 0 ? total / count : 0.0;
  return make_op(std::move(y), {a, b}, [diff, count, beta](Node& self) {
    const Matrix g = diff.unaryExpr([beta](double d) {
                       return std::abs(d) < beta ? d / beta : double((d > 0) - (d < 0));
                     }) *
                     (self.grad(0, 0) / count);
    self.parents[0]->accumulate(g);
    self.parents[1]->accumulate(-g);
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps) {
  check_same_shape(a, b, "cosine_similarity");
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  const double dot = va.cwiseProduct(vb).sum();
  const double na = va.norm(), nb = vb.norm();
  const double denom = std::max(na * nb, eps);
  Matrix y(1, 1);
  y(0, 0) = dot / denom;
  return make_op(std::move(y), {a, b}, [dot, na, nb, denom, eps](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double g = self.grad(0, 0);
    const double c = dot / denom;
    const bool clamped = !(na * nb > eps);
    if (pa.requires_grad)
      pa.accumulate(clamped ? Matrix(g * pb.value / eps) : Matrix(g * (pb.value / denom - c * pa.value / (na * na))));
    if (pb.requires_grad)
      pb.accumulate(clamped ? Matrix(g * pa.value / eps) : Matrix(g * (pa.value / denom - c * pb.value / (nb * nb))));
  });
}

Tensor im2col(const Tensor& x, int kernel) {
  require(kernel >= 1, ErrorKind::ShapeMismatch, "im2col: kernel must be positive");
  const Eigen::Index in = x.rows(), len = x.cols();
  require(len >= 1, ErrorKind::ShapeMismatch, "im2col: empty sequence");
  const int half = kernel / 2;
  auto source = [len, half](Eigen::Index t, int k) {
    return std::clamp<Eigen::Index>(t + k - half, 0, len - 1);
  };
  Matrix y(in * kernel, len);
  for (int k = 0; k < kernel; ++k)
    for (Eigen::Index t = 0; t < len; ++t) y.block(k * in, t, in, 1) = x.value().col(source(t, k));
  return make_op(std::move(y), {x}, [in, len, kernel, source](Node& self) {
    Node& p = *self.parents[0];
    ensure_grad(p);
    for (int k = 0; k < kernel; ++k)
      for (Eigen::Index t = 0; t < len; ++t) p.grad.col(source(t, k)) += self.grad.block(k * in, t, in, 1);
  });
}

Tensor graph_conv(const Tensor& x, const Tensor& weight, const Matrix& adjacency) {
  const Eigen::Index nodes = adjacency.rows();
  const Eigen::Index c_in = weight.rows(), c_out = weight.cols();
  require(adjacency.cols() == nodes && x.rows() == nodes * c_in, ErrorKind::ShapeMismatch,
          "graph_conv: input has " + std::to_string(x.rows()) + " rows, expected nodes*c_in = " +
              std::to_string(nodes * c_in));
  const Eigen::Index len = x.cols();
  Matrix y(nodes * c_out, len);
  for (Eigen::Index t = 0; t < len; ++t) {
    Eigen::Map<const RowMajor> f(x.value().col(t).data(), nodes, c_in);
    Eigen::Map<RowMajor> out(y.col(t).data(), nodes, c_out);
    out.noalias() = adjacency * f * weight.value();
  }
  return make_op(std::move(y), {x, weight}, [adjacency, nodes, c_in, c_out, len](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Matrix gx(nodes * c_in, len);
    Matrix gw = Matrix::Zero(c_in, c_out);
    for (Eigen::Index t = 0; t < len; ++t) {
      Eigen::Map<const RowMajor> dy(self.grad.col(t).data(), nodes, c_out);
      Eigen::Map<const RowMajor> f(px.value.col(t).data(), nodes, c_in);
      if (px.requires_grad) {
        Eigen::Map<RowMajor> df(gx.col(t).data(), nodes, c_in);
        df.noalias() = adjacency.transpose() * dy * pw.value.transpose();
      }
      if (pw.requires_grad) gw.noalias() += (adjacency * f).transpose() * dy;
    }
    if (px.requires_grad) px.accumulate(gx);
    if (pw.requires_grad) pw.accumulate(gw);
  });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0 || !g_grad_enabled) return x;
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  return mul(x, Tensor::constant(std::move(mask)));
}

// ---- parameters ------------------------------------------------------------

Matrix round_to_float(const Matrix& m) {
  return m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

Tensor ParameterSet::add(const std::string& path, Matrix init) {
  require(!index_.count(path), ErrorKind::ConfigError, "duplicate parameter path " + path);
  Tensor t = Tensor::parameter(round_to_float(init));
  index_[path] = entries_.size();
  entries_.emplace_back(path, t);
  return t;
}

const Tensor* ParameterSet::find(const std::string& path) const {
  const auto it = index_.find(path);
  return it == index_.end() ? nullptr : &entries_[it->second].second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += static_cast<std::size_t>(t.value().size());
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [_, t] : entries_) const_cast<Tensor&>(t).zero_grad();
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  for (auto& [path, t] : entries_) {
    const Tensor* src = other.find(path);
    require(src != nullptr, ErrorKind::ConfigError, "parameter " + path + " missing from source");
    require(src->rows() == t.rows() && src->cols() == t.cols(), ErrorKind::ShapeMismatch,
            "parameter " + path + " has a different shape");
    const_cast<Tensor&>(t).mutable_value() = src->value();
  }
}

Matrix Initializer::xavier_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
  return m;
}

Matrix Initializer::orthogonal(Eigen::Index rows, Eigen::Index cols) {
  const Eigen::Index n = std::max(rows, cols);
  Matrix g = normal(n, n, 1.0);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < n; ++i)
    if (r(i, i) < 0) q.col(i) *= -1.0;
  return q.topLeftCorner(rows, cols);
}

Matrix Initializer::normal(Eigen::Index rows, Eigen::Index cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
  return m;
}

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(&params), config_(config) {
  for (const auto& [path, t] : params.entries()) {
    m_[path] = Matrix::Zero(t.rows(), t.cols());
    v_[path] = Matrix::Zero(t.rows(), t.cols());
  }
}

void Adam::step(double grad_scale) {
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (const auto& [path, t] : params_->entries()) {
    Tensor& p = const_cast<Tensor&>(t);
    if (!p.has_grad()) continue;
    const Matrix g = p.grad() * grad_scale;
    Matrix& m = m_[path];
    Matrix& v = v_[path];
    m = round_to_float(config_.beta1 * m + (1.0 - config_.beta1) * g);
    v = round_to_float(config_.beta2 * v + (1.0 - config_.beta2) * g.cwiseProduct(g));
    const Matrix update = (m.array() / c1) / ((v.array() / c2).sqrt() + config_.eps);
    p.mutable_value() = round_to_float(p.value() - config_.lr * update);
  }
  params_->zero_grad();
}

}  // namespace groovesynth::nn
