#pragma once

#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "groovesynth/autograd.hpp"

namespace groovesynth::nn {

using AttentionTrace = std::vector<Matrix>;

// Optional per-call state. Dropout is only applied when rng is set.
struct Context {
  std::mt19937_64* rng = nullptr;
  AttentionTrace* trace = nullptr;
};

struct ConvEncoderConfig {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<int> hidden_channels;  // one entry per layer before the last
  std::vector<int> kernels;          // one per layer
  int stride = 1;
};

struct TransformerConfig {
  int model_dim = 32;
  int heads = 4;
  int blocks = 2;
  int feedforward_dim = 64;
  double dropout = 0.0;
};

struct GraphPoseEncoderConfig {
  int bones = 23;
  int extra_rows = 0;  // per-frame rows appended after the graph layers
  std::vector<int> graph_channels{8, 8};
  int temporal_kernel = 3;
  int out_dim = 16;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ConvEncoderConfig, in_channels, out_channels, hidden_channels, kernels, stride)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TransformerConfig, model_dim, heads, blocks, feedforward_dim, dropout)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GraphPoseEncoderConfig, bones, extra_rows, graph_channels, temporal_kernel,
                                   out_dim)

void validate(const ConvEncoderConfig& cfg);
void validate(const TransformerConfig& cfg);
void validate(const GraphPoseEncoderConfig& cfg);

// d x positions.size() sinusoidal table evaluated at arbitrary (frame) positions.
Matrix positional_encoding(int dim, const std::vector<double>& positions);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& path, int in, int out, Initializer& init, bool bias = true);
  Tensor operator()(const Tensor& x) const;
  int in() const { return in_; }
  int out() const { return out_; }

 private:
  Tensor weight_, bias_;
  int in_ = 0, out_ = 0;
};

// Stride-1, length-preserving temporal convolution with replicate padding.
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParameterSet& params, const std::string& path, int in, int out, int kernel, Initializer& init);
  Tensor operator()(const Tensor& x) const;

 private:
  Tensor weight_, bias_;
  int in_ = 0, kernel_ = 1;
};

class ConvEncoder {
 public:
  ConvEncoder() = default;
  ConvEncoder(ParameterSet& params, const std::string& path, const ConvEncoderConfig& cfg, Initializer& init);
  Tensor operator()(const Tensor& x) const;

 private:
  std::vector<Conv1d> layers_;
  int in_ = 0;
};

// Graph convolution over bones per frame, then temporal convolutions.
// Columns with keep == 0 are replaced by a learned mask token first.
class GraphPoseEncoder {
 public:
  GraphPoseEncoder() = default;
  GraphPoseEncoder(ParameterSet& params, const std::string& path, const GraphPoseEncoderConfig& cfg,
                   const Matrix& adjacency, Initializer& init);
  Tensor operator()(const Tensor& pose, const Eigen::RowVectorXd& keep, const Tensor* extra = nullptr) const;

 private:
  GraphPoseEncoderConfig cfg_;
  Matrix adjacency_;
  Tensor mask_token_;
  std::vector<Tensor> graph_weights_;
  std::vector<Tensor> graph_biases_;
  std::vector<Matrix> bias_expand_;
  Conv1d temporal1_, temporal2_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& path, int dim);
  Tensor operator()(const Tensor& x) const;

 private:
  Tensor gain_, bias_;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& params, const std::string& path, int dim, int heads, Initializer& init);
  // query: dim x Lq, memory: dim x Lk -> dim x Lq.
  Tensor operator()(const Tensor& query, const Tensor& memory, bool causal, const Context& ctx = {}) const;

 private:
  Linear q_, k_, v_, o_;
  int dim_ = 0, heads_ = 1;
};

class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParameterSet& params, const std::string& path, const TransformerConfig& cfg, bool cross,
                   Initializer& init);
  Tensor operator()(const Tensor& x, const Tensor* memory, bool causal, const Context& ctx) const;

 private:
  TransformerConfig cfg_;
  LayerNorm ln_self_, ln_cross_, ln_ff_;
  MultiHeadAttention self_, cross_;
  Linear ff1_, ff2_;
  bool has_cross_ = false;
};

// Non-causal encoder stack. Inputs are projected to model_dim, positions are
// added as sinusoidal codes, and an optional output projection follows the
// final norm.
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(ParameterSet& params, const std::string& path, const TransformerConfig& cfg, int in_dim,
                     int cross_dim, int out_dim, Initializer& init);
  Tensor operator()(const Tensor& x, const std::vector<double>& positions, const Tensor* cross = nullptr,
                    const std::vector<double>* cross_positions = nullptr, const Context& ctx = {}) const;
  const TransformerConfig& config() const { return cfg_; }

 private:
  TransformerConfig cfg_;
  Linear in_proj_, cross_proj_, out_proj_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_;
  bool has_cross_ = false, has_out_ = false;
};

// Decoder stack with cross-attention to an encoded memory. One-shot mode
// decodes all target positions from learned queries; autoregressive mode
// consumes a start token followed by its own (or given) previous outputs
// under a causal mask.
class TransformerDecoder {
 public:
  TransformerDecoder() = default;
  TransformerDecoder(ParameterSet& params, const std::string& path, const TransformerConfig& cfg, int memory_dim,
                     int out_dim, bool autoregressive, Initializer& init, int query_dim = 0);

  Tensor decode(const Tensor& memory, const std::vector<double>& memory_positions,
                const std::vector<double>& target_positions, const Context& ctx = {}) const;
  // One-shot decoding of supplied query columns (query_dim x L); needs a
  // decoder built with query_dim > 0.
  Tensor decode_queries(const Tensor& memory, const std::vector<double>& memory_positions, const Tensor& queries,
                        const std::vector<double>& target_positions, const Context& ctx = {}) const;
  // Output column k sees previous[:, 0..k-1]; `previous` is out_dim x L and
  // its last column is unused.
  Tensor decode_with_feedback(const Tensor& memory, const std::vector<double>& memory_positions,
                              const Tensor& previous, const std::vector<double>& target_positions,
                              const Context& ctx = {}) const;
  // Left-to-right generation feeding back its own outputs.
  Tensor generate(const Tensor& memory, const std::vector<double>& memory_positions,
                  const std::vector<double>& target_positions, const Context& ctx = {}) const;

  bool autoregressive() const { return autoregressive_; }
  int out_dim() const { return out_dim_; }

 private:
  Tensor run(const Tensor& memory, const std::vector<double>& memory_positions, const Tensor& queries,
             const std::vector<double>& target_positions, const Context& ctx) const;

  TransformerConfig cfg_;
  Linear memory_proj_, feedback_proj_, query_proj_, out_proj_;
  Tensor query_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_;
  bool autoregressive_ = false;
  bool external_queries_ = false;
  int out_dim_ = 0;
};

class GRU {
 public:
  GRU() = default;
  GRU(ParameterSet& params, const std::string& path, int in, int hidden, Initializer& init);
  // hidden x L, processed in the given direction; output columns stay in
  // input order.
  Tensor operator()(const Tensor& x, bool reverse) const;

 private:
  Tensor w_, u_r_, u_z_, u_n_, b_, b_hn_;
  int hidden_ = 0;
};

class BiGRU {
 public:
  BiGRU() = default;
  BiGRU(ParameterSet& params, const std::string& path, int in, int hidden, Initializer& init);
  // 2H x L: forward states stacked over backward states.
  Tensor operator()(const Tensor& x) const;

 private:
  GRU forward_, backward_;
};

}  // namespace groovesynth::nn
