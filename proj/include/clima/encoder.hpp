#pragma once

#include <span>
#include <string>
#include <vector>

#include "clima/tensor.hpp"
#include "clima/tokenizer.hpp"

namespace clima {

enum class Pooling { cls_token, mean_over_mask };
enum class Mode { train, inference };

std::string to_string(Pooling p);
Pooling pooling_from_string(std::string_view s);

struct ModelConfig {
  int num_layers = 2;
  int hidden_dim = 64;
  int num_heads = 4;
  int ff_dim = 256;
  int vocab_size = 0;
  int max_positions = 128;
  float dropout_rate = 0.1f;
  Pooling pooling = Pooling::cls_token;
  int num_classes = 2;

  int head_dim() const noexcept { return hidden_dim / num_heads; }
  // Throws ConfigError on violated invariants (divisibility, ranges).
  void validate() const;
};

struct TensorSpec {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

// The full named-tensor layout implied by a config, in map order.
std::vector<TensorSpec> parameter_specs(const ModelConfig& config);

// Truncated normal (sigma 0.02) weights, zero biases, unit layer-norm gains.
Params init_parameters(const ModelConfig& config, uint64_t seed);

// Throws DataError naming the first tensor whose shape disagrees with the
// config (or is missing / unexpected).
template <class S>
void validate_shapes(const ParamMap<S>& params, const ModelConfig& config);

// Row-wise softmax(q kT / sqrt(d_k)) v with masked positions forced to weight
// zero (additive -1e9 before the softmax, exact zero afterwards). mask may be
// empty, meaning every position is valid. Throws DataError when every
// position is masked or dimensions disagree.
template <class S>
Mat<S> scaled_dot_attention(const Mat<S>& queries, const Mat<S>& keys, const Mat<S>& values,
                            const std::vector<int>& mask);

// Layer norm over the last dimension; xhat/inv_std are the pre-affine
// normalized values and 1/sqrt(var+eps), kept for the backward pass.
template <class S>
void layer_norm_forward(const Mat<S>& x, const Mat<S>& gamma, const Mat<S>& beta, Mat<S>& out,
                        Mat<S>& xhat, Mat<S>& inv_std);

inline constexpr double kLayerNormEps = 1e-12;

// --- forward-pass caches (consumed by the trainer's backward pass) ---------

template <class S>
struct LayerCache {
  Mat<S> input;                     // sublayer input [L x H]
  Mat<S> q, k, v;                   // post-projection [L x H]
  std::vector<Mat<S>> attn_probs;   // per head [L x L]
  Mat<S> attn_concat;               // concatenated head outputs [L x H]
  Mat<S> attn_drop_mask;            // inverted-dropout scales, empty if off
  Mat<S> ln1_xhat, ln1_inv_std, ln1_out;
  Mat<S> ff_pre;                    // before activation [L x F]
  Mat<S> ff_act;                    // after activation [L x F]
  Mat<S> ff_drop_mask;
  Mat<S> ln2_xhat, ln2_inv_std;
};

template <class S>
struct ExampleCache {
  std::vector<int32_t> ids;  // trimmed to real_length
  Mat<S> embed_sum;          // token + position embeddings [L x H]
  Mat<S> emb_ln_xhat, emb_ln_inv_std;
  Mat<S> emb_drop_mask;
  std::vector<LayerCache<S>> layers;
  Mat<S> final_out;  // encoder output [L x H]
  Mat<S> pooled;     // [1 x H]
};

template <class S>
struct BatchCache {
  std::vector<ExampleCache<S>> examples;
  Mat<S> logits;  // [B x num_classes]
};

// Runs the encoder + classifier over a batch and returns class probabilities
// (each row sums to 1). Computation is trimmed to each example's
// real_length, so padding ids can never influence the output. In train mode
// with dropout_rate > 0 an RNG stream must be supplied. When cache is non-null
// every intermediate needed by the backward pass is recorded.
template <class S>
Mat<S> forward(const ParamMap<S>& params, const ModelConfig& config,
               std::span<const TokenSequence> batch, Mode mode, Rng* dropout_rng = nullptr,
               BatchCache<S>* cache = nullptr);

template <class S>
Mat<S> softmax_rows(const Mat<S>& logits);

}  // namespace clima
