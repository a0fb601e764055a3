#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "clima/corpus.hpp"
#include "clima/encoder.hpp"
#include "clima/tensor.hpp"
#include "clima/tokenizer.hpp"

namespace clima {

enum class TrainableScope { all, head_only };

std::string to_string(TrainableScope s);
TrainableScope scope_from_string(std::string_view s);

struct TrainConfig {
  int batch_size = 32;
  int epochs = 3;
  double learning_rate = 5e-5;
  double weight_decay = 0.01;
  double warmup_fraction = 0.0;
  uint64_t seed = 0;
  TrainableScope trainable_scope = TrainableScope::all;
  double max_grad_norm = 1.0;  // <= 0 disables clipping

  void validate() const;  // throws ConfigError
};

// AdamW moment constants, pinned.
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

struct EpochStats {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;
};

struct FineTuneResult {
  Params params;
  std::vector<EpochStats> history;
  int64_t total_steps = 0;
};

// Mean over the batch of -ln p(true class), taken from probability rows.
double cross_entropy(const MatF& probabilities, const std::vector<int>& labels);

// Numerically stable fused form (logsumexp - true logit); this is what the
// training path uses.
template <class S>
S cross_entropy_from_logits(const Mat<S>& logits, const std::vector<int>& labels);

// Gradient of mean cross-entropy w.r.t. every parameter tensor, computed from
// a train-mode forward cache. Throws DataError naming the tensor if any
// gradient turns non-finite.
template <class S>
ParamMap<S> backward_from_cache(const ParamMap<S>& params, const ModelConfig& config,
                                const BatchCache<S>& cache, const std::vector<int>& labels);

template <class S>
struct ForwardBackward {
  Mat<S> probabilities;
  S loss;
  ParamMap<S> grads;
};

// Convenience wrapper: forward (train mode) + loss + backward in one call.
// Dropout is active only when config.dropout_rate > 0 and an RNG is passed.
template <class S>
ForwardBackward<S> forward_backward(const ParamMap<S>& params, const ModelConfig& config,
                                    std::span<const TokenSequence> batch,
                                    const std::vector<int>& labels, Rng* dropout_rng = nullptr);

// Spec surface: gradients at 32-bit for one batch.
Params backward(const Params& params, const ModelConfig& config,
                std::span<const TokenSequence> batch, const std::vector<int>& labels,
                Rng* dropout_rng = nullptr);

struct AdamWState {
  Params m;
  Params v;

  static AdamWState init(const Params& params);
};

// One decoupled-weight-decay Adam step: bias-corrected moments, update
// lr * sqrt(1-b2^t)/(1-b1^t) * m / (sqrt(v) + eps), then param -= lr*wd*param.
// Respects hyper.trainable_scope. step_index is 1-based.
void adamw_step(Params& params, const Params& grads, AdamWState& state, const TrainConfig& hyper,
                int64_t step_index);

// Linear decay to zero over total_steps, with an optional linear warmup
// prefix of warmup_fraction * total_steps.
double scheduled_lr(const TrainConfig& hyper, int64_t step_index, int64_t total_steps);

// Scales gradients so the global L2 norm is at most max_norm. Returns the
// pre-clip norm.
double clip_global_norm(Params& grads, double max_norm);

// Argmax with exact ties resolved to the negative class.
inline int predicted_label(double p_negative, double p_positive) {
  return p_positive > p_negative ? 1 : 0;
}

// The full fine-tuning loop: per-epoch seeded shuffles, last partial batch
// kept, linear lr decay, gradient clipping, AdamW. Single-threaded and
// bit-reproducible for a fixed TrainConfig.
FineTuneResult fine_tune(Params init_params, const ModelConfig& config, const Tokenizer& tokenizer,
                         const Corpus& train, const Corpus& val, const TrainConfig& tc);

// Batched inference helpers.
std::vector<std::pair<int, float>> predict(const Params& params, const ModelConfig& config,
                                           const Tokenizer& tokenizer,
                                           const std::vector<std::string>& sentences,
                                           int batch_size = 64);
double accuracy_on(const Params& params, const ModelConfig& config, const Tokenizer& tokenizer,
                   const Corpus& corpus, int batch_size = 64);

}  // namespace clima
