#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace groovesynth::nn {

using Matrix = Eigen::MatrixXd;

// One value in the computation graph. Gradients flow from a node to its
// parents through `backward`, which reads `grad` and accumulates into the
// parents.
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};

// Shared handle to a graph node. Copies alias the same value and gradient.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  // Zero matrix of the value's shape when nothing was accumulated.
  Matrix grad() const;
  void zero_grad() { node_->grad.resize(0, 0); }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;

  // Reverse-mode sweep from this 1x1 tensor.
  void backward() const;
  Tensor detach() const { return constant(value()); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
// x + b 1^T for a column vector b.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// Multiplies each column by the matching entry of a constant row vector.
Tensor scale_cols(const Tensor& x, const Eigen::RowVectorXd& weights);
// Column t is x[:, t] where keep[t] != 0, otherwise the column vector `token`.
Tensor masked_fill_cols(const Tensor& x, const Tensor& token, const Eigen::RowVectorXd& keep);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, Eigen::Index start, Eigen::Index count);
Tensor slice_cols(const Tensor& x, Eigen::Index start, Eigen::Index count);
Tensor gather_cols(const Tensor& x, const std::vector<int>& index);
// Places column i of x at column index[i] of a zero matrix with `total` columns.
Tensor scatter_cols(const Tensor& x, const std::vector<int>& index, Eigen::Index total);
Tensor transpose(const Tensor& x);
Tensor repeat_cols(const Tensor& column, Eigen::Index count);

Tensor leaky_relu(const Tensor& x, double slope);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor abs(const Tensor& x);
// log(max(x, floor)); the gradient is zero where the clamp is active.
Tensor log_clamped(const Tensor& x, double floor);
// acos(clamp(x, -limit, limit)).
Tensor acos_clamped(const Tensor& x, double limit);

// Row-wise softmax. With `causal`, entry (i, j) is excluded for j > i.
Tensor softmax_rows(const Tensor& x, bool causal = false);
// Normalizes each column over its rows, then applies per-row gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// Scales every consecutive block of `group` rows in each column to unit norm.
Tensor normalize_groups(const Tensor& x, int group, double eps = 1e-12);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_rows(const Tensor& x);   // 1 x cols
Tensor mean_cols(const Tensor& x);  // rows x 1
Tensor forward_diff_cols(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);
Tensor smooth_l1(const Tensor& a, const Tensor& b, double beta = 1.0);
// Cosine similarity of the column-major flattenings of a and b (1x1).
Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps = 1e-12);

// (in*kernel) x L matrix of replicate-padded temporal neighbourhoods; row
// block k holds x shifted by k - kernel/2.
Tensor im2col(const Tensor& x, int kernel);
// Per-column graph convolution. Column t of x is read as a (nodes x c_in)
// row-major block F; the result column is the flattening of A F W.
Tensor graph_conv(const Tensor& x, const Tensor& weight, const Matrix& adjacency);
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng);

// ---- parameters and optimization -----------------------------------------

// Ordered, path-keyed set of trainable tensors.
class ParameterSet {
 public:
  Tensor add(const std::string& path, Matrix init);
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  const Tensor* find(const std::string& path) const;
  std::size_t scalar_count() const;
  void zero_grad();
  // Copies values from another set with identical paths and shapes.
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Deterministic initializers. Values are rounded to float32 so a checkpoint
// written right after construction round-trips exactly.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out);
  Matrix orthogonal(Eigen::Index rows, Eigen::Index cols);
  Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev);
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

Matrix round_to_float(const Matrix& m);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.99;
  double eps = 1e-8;
};

// Adam over a ParameterSet. After every update the parameters and both
// moment estimates are rounded to float32, the checkpoint precision, so a
// resumed run continues bit-identically.
class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config);

  // Applies one update using the accumulated gradients multiplied by
  // `grad_scale`, then clears them.
  void step(double grad_scale = 1.0);
  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

  std::map<std::string, Matrix>& first_moments() { return m_; }
  std::map<std::string, Matrix>& second_moments() { return v_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }

 private:
  ParameterSet* params_;
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, Matrix> m_;
  std::map<std::string, Matrix> v_;
};

}  // namespace groovesynth::nn
