#include "groovesynth/layers.hpp"

#include <cmath>

#include "groovesynth/errors.hpp"

namespace groovesynth::nn {

namespace {

constexpr double kLeakySlope = 0.2;

std::vector<double> default_positions(Eigen::Index n) {
  std::vector<double> p(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = static_cast<double>(i);
  return p;
}

Tensor with_positions(const Tensor& x, const std::vector<double>& positions) {
  require(static_cast<Eigen::Index>(positions.size()) == x.cols(), ErrorKind::ShapeMismatch,
          "got " + std::to_string(positions.size()) + " positions for " + std::to_string(x.cols()) + " columns");
  return add(x, Tensor::constant(positional_encoding(static_cast<int>(x.rows()), positions)));
}

Tensor maybe_dropout(const Tensor& x, double p, const Context& ctx) {
  if (ctx.rng == nullptr || p <= 0.0) return x;
  return dropout(x, p, *ctx.rng);
}

}  // namespace

void validate(const ConvEncoderConfig& cfg) {
  require(cfg.in_channels > 0 && cfg.out_channels > 0, ErrorKind::ConfigError, "conv encoder channels must be positive");
  require(!cfg.kernels.empty(), ErrorKind::ConfigError, "conv encoder needs at least one layer");
  require(cfg.hidden_channels.size() + 1 == cfg.kernels.size(), ErrorKind::ConfigError,
          "conv encoder needs one hidden width per layer except the last");
  require(cfg.stride == 1, ErrorKind::ConfigError, "conv encoder only supports stride 1");
  for (int k : cfg.kernels) require(k >= 1 && k % 2 == 1, ErrorKind::ConfigError, "conv kernels must be odd");
  for (int c : cfg.hidden_channels) require(c > 0, ErrorKind::ConfigError, "conv widths must be positive");
}

void validate(const TransformerConfig& cfg) {
  require(cfg.model_dim > 0 && cfg.heads > 0 && cfg.model_dim % cfg.heads == 0, ErrorKind::ConfigError,
          "model_dim " + std::to_string(cfg.model_dim) + " is not divisible by " + std::to_string(cfg.heads) +
              " heads");
  require(cfg.blocks >= 1, ErrorKind::ConfigError, "transformer needs at least one block");
  require(cfg.feedforward_dim > 0, ErrorKind::ConfigError, "feedforward_dim must be positive");
  require(cfg.dropout >= 0.0 && cfg.dropout < 1.0, ErrorKind::ConfigError, "dropout must be in [0, 1)");
}

void validate(const GraphPoseEncoderConfig& cfg) {
  require(cfg.bones > 0 && cfg.out_dim > 0 && cfg.extra_rows >= 0, ErrorKind::ConfigError, "bad pose encoder sizes");
  require(!cfg.graph_channels.empty(), ErrorKind::ConfigError, "pose encoder needs at least one graph layer");
  require(cfg.temporal_kernel >= 1 && cfg.temporal_kernel % 2 == 1, ErrorKind::ConfigError,
          "temporal kernel must be odd");
}

Matrix positional_encoding(int dim, const std::vector<double>& positions) {
  Matrix pe(dim, static_cast<Eigen::Index>(positions.size()));
  for (std::size_t t = 0; t < positions.size(); ++t) {
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / dim);
      const double angle = positions[t] * rate;
      pe(i, static_cast<Eigen::Index>(t)) = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

// ---- Linear / Conv1d ----------------------------------------------------------

Linear::Linear(ParameterSet& params, const std::string& path, int in, int out, Initializer& init, bool bias)
    : in_(in), out_(out) {
  weight_ = params.add(path + ".weight", init.xavier_uniform(out, in, in, out));
  if (bias) bias_ = params.add(path + ".bias", Matrix::Zero(out, 1));
}

Tensor Linear::operator()(const Tensor& x) const {
  require(x.rows() == in_, ErrorKind::ShapeMismatch,
          "linear layer expects " + std::to_string(in_) + " rows, got " + std::to_string(x.rows()));
  Tensor y = matmul(weight_, x);
  return bias_.defined() ? add_bias(y, bias_) : y;
}

Conv1d::Conv1d(ParameterSet& params, const std::string& path, int in, int out, int kernel, Initializer& init)
    : in_(in), kernel_(kernel) {
  weight_ = params.add(path + ".weight", init.xavier_uniform(out, in * kernel, in * kernel, out * kernel));
  bias_ = params.add(path + ".bias", Matrix::Zero(out, 1));
}

Tensor Conv1d::operator()(const Tensor& x) const {
  require(x.rows() == in_, ErrorKind::ShapeMismatch,
          "conv layer expects " + std::to_string(in_) + " channels, got " + std::to_string(x.rows()));
  return add_bias(matmul(weight_, im2col(x, kernel_)), bias_);
}

ConvEncoder::ConvEncoder(ParameterSet& params, const std::string& path, const ConvEncoderConfig& cfg,
                         Initializer& init)
    : in_(cfg.in_channels) {
  validate(cfg);
  int in = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.kernels.size(); ++i) {
    const int out = i < cfg.hidden_channels.size() ? cfg.hidden_channels[i] : cfg.out_channels;
    layers_.emplace_back(params, path + ".conv" + std::to_string(i), in, out, cfg.kernels[i], init);
    in = out;
  }
}

Tensor ConvEncoder::operator()(const Tensor& x) const {
  require(x.cols() >= 1, ErrorKind::ShapeMismatch, "conv encoder needs at least one frame");
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    if (i + 1 < layers_.size()) h = leaky_relu(h, kLeakySlope);
  }
  return h;
}

// ---- graph pose encoder ---------------------------------------------------------

GraphPoseEncoder::GraphPoseEncoder(ParameterSet& params, const std::string& path, const GraphPoseEncoderConfig& cfg,
                                   const Matrix& adjacency, Initializer& init)
    : cfg_(cfg), adjacency_(adjacency) {
  validate(cfg);
  require(adjacency.rows() == cfg.bones && adjacency.cols() == cfg.bones, ErrorKind::ShapeMismatch,
          "adjacency does not match bone count");
  mask_token_ = params.add(path + ".mask_token", init.normal(3 * cfg.bones, 1, 0.1));
  int in = 3;
  for (std::size_t i = 0; i < cfg.graph_channels.size(); ++i) {
    const int out = cfg.graph_channels[i];
    const std::string p = path + ".graph" + std::to_string(i);
    graph_weights_.push_back(params.add(p + ".weight", init.xavier_uniform(in, out, in, out)));
    graph_biases_.push_back(params.add(p + ".bias", Matrix::Zero(out, 1)));
    Matrix expand = Matrix::Zero(cfg.bones * out, out);
    for (int b = 0; b < cfg.bones; ++b)
      for (int c = 0; c < out; ++c) expand(b * out + c, c) = 1.0;
    bias_expand_.push_back(std::move(expand));
    in = out;
  }
  temporal1_ = Conv1d(params, path + ".temporal0", cfg.bones * in + cfg.extra_rows, cfg.out_dim, cfg.temporal_kernel,
                      init);
  temporal2_ = Conv1d(params, path + ".temporal1", cfg.out_dim, cfg.out_dim, cfg.temporal_kernel, init);
}

Tensor GraphPoseEncoder::operator()(const Tensor& pose, const Eigen::RowVectorXd& keep, const Tensor* extra) const {
  require(pose.rows() == 3 * cfg_.bones, ErrorKind::ShapeMismatch,
          "pose encoder expects " + std::to_string(3 * cfg_.bones) + " rows, got " + std::to_string(pose.rows()));
  Tensor h = masked_fill_cols(pose, mask_token_, keep);
  for (std::size_t i = 0; i < graph_weights_.size(); ++i) {
    h = graph_conv(h, graph_weights_[i], adjacency_);
    h = add_bias(h, matmul(Tensor::constant(bias_expand_[i]), graph_biases_[i]));
    h = leaky_relu(h, kLeakySlope);
  }
  if (cfg_.extra_rows > 0) {
    require(extra != nullptr && extra->rows() == cfg_.extra_rows && extra->cols() == pose.cols(),
            ErrorKind::ShapeMismatch, "pose encoder extra rows missing or mis-shaped");
    h = concat_rows({h, *extra});
  }
  return temporal2_(leaky_relu(temporal1_(h), kLeakySlope));
}

// ---- attention --------------------------------------------------------------------

LayerNorm::LayerNorm(ParameterSet& params, const std::string& path, int dim) {
  gain_ = params.add(path + ".gain", Matrix::Ones(dim, 1));
  bias_ = params.add(path + ".bias", Matrix::Zero(dim, 1));
}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gain_, bias_); }

MultiHeadAttention::MultiHeadAttention(ParameterSet& params, const std::string& path, int dim, int heads,
                                       Initializer& init)
    : q_(params, path + ".query", dim, dim, init),
      k_(params, path + ".key", dim, dim, init),
      v_(params, path + ".value", dim, dim, init),
      o_(params, path + ".out", dim, dim, init),
      dim_(dim),
      heads_(heads) {}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& memory, bool causal,
                                      const Context& ctx) const {
  const Tensor q = q_(query), k = k_(memory), v = v_(memory);
  const int head_dim = dim_ / heads_;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> outputs;
  for (int h = 0; h < heads_; ++h) {
    const Tensor qh = slice_rows(q, h * head_dim, head_dim);
    const Tensor kh = slice_rows(k, h * head_dim, head_dim);
    const Tensor vh = slice_rows(v, h * head_dim, head_dim);
    const Tensor weights = softmax_rows(scale(matmul(transpose(qh), kh), inv_scale), causal);
    if (ctx.trace != nullptr) ctx.trace->push_back(weights.value());
    outputs.push_back(matmul(vh, transpose(weights)));
  }
  return o_(heads_ == 1 ? outputs.front() : concat_rows(outputs));
}

TransformerBlock::TransformerBlock(ParameterSet& params, const std::string& path, const TransformerConfig& cfg,
                                   bool cross, Initializer& init)
    : cfg_(cfg), has_cross_(cross) {
  ln_self_ = LayerNorm(params, path + ".norm_self", cfg.model_dim);
  self_ = MultiHeadAttention(params, path + ".self_attention", cfg.model_dim, cfg.heads, init);
  if (cross) {
    ln_cross_ = LayerNorm(params, path + ".norm_cross", cfg.model_dim);
    cross_ = MultiHeadAttention(params, path + ".cross_attention", cfg.model_dim, cfg.heads, init);
  }
  ln_ff_ = LayerNorm(params, path + ".norm_ff", cfg.model_dim);
  ff1_ = Linear(params, path + ".ff0", cfg.model_dim, cfg.feedforward_dim, init);
  ff2_ = Linear(params, path + ".ff1", cfg.feedforward_dim, cfg.model_dim, init);
}

Tensor TransformerBlock::operator()(const Tensor& x, const Tensor* memory, bool causal, const Context& ctx) const {
  const Tensor normed = ln_self_(x);
  Tensor h = add(x, maybe_dropout(self_(normed, normed, causal, ctx), cfg_.dropout, ctx));
  if (has_cross_ && memory != nullptr) h = add(h, maybe_dropout(cross_(ln_cross_(h), *memory, false, ctx), cfg_.dropout, ctx));
  return add(h, maybe_dropout(ff2_(gelu(ff1_(ln_ff_(h)))), cfg_.dropout, ctx));
}

TransformerEncoder::TransformerEncoder(ParameterSet& params, const std::string& path, const TransformerConfig& cfg,
                                       int in_dim, int cross_dim, int out_dim, Initializer& init)
    : cfg_(cfg), has_cross_(cross_dim > 0), has_out_(out_dim > 0) {
  validate(cfg);
  in_proj_ = Linear(params, path + ".input", in_dim, cfg.model_dim, init);
  if (has_cross_) cross_proj_ = Linear(params, path + ".cross_input", cross_dim, cfg.model_dim, init);
  for (int b = 0; b < cfg.blocks; ++b)
    blocks_.emplace_back(params, path + ".block" + std::to_string(b), cfg, has_cross_, init);
  final_ = LayerNorm(params, path + ".norm_out", cfg.model_dim);
  if (has_out_) out_proj_ = Linear(params, path + ".output", cfg.model_dim, out_dim, init);
}

Tensor TransformerEncoder::operator()(const Tensor& x, const std::vector<double>& positions, const Tensor* cross,
                                      const std::vector<double>* cross_positions, const Context& ctx) const {
  require(x.cols() >= 1, ErrorKind::ShapeMismatch, "transformer encoder needs at least one column");
  Tensor h = with_positions(in_proj_(x), positions);
  Tensor memory;
  if (has_cross_) {
    require(cross != nullptr, ErrorKind::ShapeMismatch, "encoder was built with cross-attention but got no memory");
    memory = with_positions(cross_proj_(*cross), cross_positions ? *cross_positions : default_positions(cross->cols()));
  }
  for (const auto& block : blocks_) h = block(h, has_cross_ ? &memory : nullptr, false, ctx);
  h = final_(h);
  return has_out_ ? out_proj_(h) : h;
}

TransformerDecoder::TransformerDecoder(ParameterSet& params, const std::string& path, const TransformerConfig& cfg,
                                       int memory_dim, int out_dim, bool autoregressive, Initializer& init,
                                       int query_dim)
    : cfg_(cfg), autoregressive_(autoregressive), external_queries_(query_dim > 0), out_dim_(out_dim) {
  validate(cfg);
  require(!(autoregressive && query_dim > 0), ErrorKind::ConfigError, "autoregressive decoders take no queries");
  memory_proj_ = Linear(params, path + ".memory_input", memory_dim, cfg.model_dim, init);
  if (external_queries_)
    query_proj_ = Linear(params, path + ".query_input", query_dim, cfg.model_dim, init);
  else
    query_ = params.add(path + (autoregressive ? ".start_token" : ".query"), init.normal(cfg.model_dim, 1, 0.1));
  if (autoregressive) feedback_proj_ = Linear(params, path + ".feedback", out_dim, cfg.model_dim, init);
  for (int b = 0; b < cfg.blocks; ++b)
    blocks_.emplace_back(params, path + ".block" + std::to_string(b), cfg, true, init);
  final_ = LayerNorm(params, path + ".norm_out", cfg.model_dim);
  out_proj_ = Linear(params, path + ".output", cfg.model_dim, out_dim, init);
}

Tensor TransformerDecoder::run(const Tensor& memory, const std::vector<double>& memory_positions,
                               const Tensor& queries, const std::vector<double>& target_positions,
                               const Context& ctx) const {
  require(memory.cols() >= 1, ErrorKind::ShapeMismatch, "decoder memory is empty");
  const Tensor mem = with_positions(memory_proj_(memory), memory_positions);
  Tensor h = with_positions(queries, target_positions);
  for (const auto& block : blocks_) h = block(h, &mem, autoregressive_, ctx);
  return out_proj_(final_(h));
}

Tensor TransformerDecoder::decode(const Tensor& memory, const std::vector<double>& memory_positions,
                                  const std::vector<double>& target_positions, const Context& ctx) const {
  require(!autoregressive_ && !external_queries_, ErrorKind::ConfigError,
          "decode() is for one-shot decoders with learned queries");
  require(!target_positions.empty(), ErrorKind::ShapeMismatch, "decoder target length must be positive");
  const Tensor queries = repeat_cols(query_, static_cast<Eigen::Index>(target_positions.size()));
  return run(memory, memory_positions, queries, target_positions, ctx);
}

Tensor TransformerDecoder::decode_queries(const Tensor& memory, const std::vector<double>& memory_positions,
                                          const Tensor& queries, const std::vector<double>& target_positions,
                                          const Context& ctx) const {
  require(external_queries_, ErrorKind::ConfigError, "decoder was built with learned queries");
  return run(memory, memory_positions, query_proj_(queries), target_positions, ctx);
}

Tensor TransformerDecoder::decode_with_feedback(const Tensor& memory, const std::vector<double>& memory_positions,
                                                const Tensor& previous, const std::vector<double>& target_positions,
                                                const Context& ctx) const {
  require(autoregressive_, ErrorKind::ConfigError, "decoder was built without feedback");
  const auto len = static_cast<Eigen::Index>(target_positions.size());
  require(len >= 1 && previous.cols() == len && previous.rows() == out_dim_, ErrorKind::ShapeMismatch,
          "feedback must be out_dim x target length");
  Tensor queries = query_;
  if (len > 1) queries = concat_cols({query_, feedback_proj_(slice_cols(previous, 0, len - 1))});
  return run(memory, memory_positions, queries, target_positions, ctx);
}

Tensor TransformerDecoder::generate(const Tensor& memory, const std::vector<double>& memory_positions,
                                    const std::vector<double>& target_positions, const Context& ctx) const {
  if (!autoregressive_) return decode(memory, memory_positions, target_positions, ctx);
  const auto len = static_cast<Eigen::Index>(target_positions.size());
  require(len >= 1, ErrorKind::ShapeMismatch, "decoder target length must be positive");
  Matrix produced = Matrix::Zero(out_dim_, len);
  std::vector<Tensor> steps;
  for (Eigen::Index k = 0; k < len; ++k) {
    const std::vector<double> prefix(target_positions.begin(), target_positions.begin() + k + 1);
    const Tensor out = decode_with_feedback(memory, memory_positions,
                                            Tensor::constant(produced.leftCols(k + 1)), prefix, ctx);
    const Tensor last = slice_cols(out, k, 1);
    produced.col(k) = last.value().col(0);
    steps.push_back(last);
  }
  return concat_cols(steps);
}

// ---- recurrent ------------------------------------------------------------------

GRU::GRU(ParameterSet& params, const std::string& path, int in, int hidden, Initializer& init) : hidden_(hidden) {
  w_ = params.add(path + ".input_weight", init.xavier_uniform(3 * hidden, in, in, 3 * hidden));
  u_r_ = params.add(path + ".reset_weight", init.orthogonal(hidden, hidden));
  u_z_ = params.add(path + ".update_weight", init.orthogonal(hidden, hidden));
  u_n_ = params.add(path + ".candidate_weight", init.orthogonal(hidden, hidden));
  b_ = params.add(path + ".input_bias", Matrix::Zero(3 * hidden, 1));
  b_hn_ = params.add(path + ".candidate_bias", Matrix::Zero(hidden, 1));
}

Tensor GRU::operator()(const Tensor& x, bool reverse) const {
  require(x.cols() >= 1, ErrorKind::ShapeMismatch, "GRU needs at least one frame");
  require(x.rows() == w_.cols(), ErrorKind::ShapeMismatch,
          "GRU expects " + std::to_string(w_.cols()) + " input rows, got " + std::to_string(x.rows()));
  const Tensor gates = add_bias(matmul(w_, x), b_);
  const Eigen::Index len = x.cols();
  const int H = hidden_;
  std::vector<Tensor> states(static_cast<std::size_t>(len));
  Tensor h = Tensor::constant(Matrix::Zero(H, 1));
  for (Eigen::Index step = 0; step < len; ++step) {
    const Eigen::Index t = reverse ? len - 1 - step : step;
    const Tensor g = slice_cols(gates, t, 1);
    const Tensor r = sigmoid(add(slice_rows(g, 0, H), matmul(u_r_, h)));
    const Tensor z = sigmoid(add(slice_rows(g, H, H), matmul(u_z_, h)));
    const Tensor n = tanh(add(slice_rows(g, 2 * H, H), mul(r, add(matmul(u_n_, h), b_hn_))));
    h = add(n, mul(z, sub(h, n)));
    states[static_cast<std::size_t>(t)] = h;
  }
  return concat_cols(states);
}

BiGRU::BiGRU(ParameterSet& params, const std::string& path, int in, int hidden, Initializer& init)
    : forward_(params, path + ".forward", in, hidden, init), backward_(params, path + ".backward", in, hidden, init) {}

Tensor BiGRU::operator()(const Tensor& x) const { return concat_rows({forward_(x, false), backward_(x, true)}); }

}  // namespace groovesynth::nn
