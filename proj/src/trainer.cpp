#include "clima/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "clima/errors.hpp"

namespace clima {

std::string to_string(TrainableScope s) {
  return s == TrainableScope::all ? "all" : "head_only";
}

TrainableScope scope_from_string(std::string_view s) {
  if (s == "all") return TrainableScope::all;
  if (s == "head_only") return TrainableScope::head_only;
  throw ConfigError("unknown trainable scope: " + std::string(s));
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("warmup_fraction must lie in [0,1)");
  }
}

double cross_entropy(const MatF& probabilities, const std::vector<int>& labels) {
  if (probabilities.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw DataError("cross_entropy: probabilities/labels length mismatch");
  }
  if (labels.empty()) throw DataError("cross_entropy: empty batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y != 0 && y != 1) throw DataError("cross_entropy: label outside {0,1}");
    const double p = std::max(static_cast<double>(probabilities(i, y)), 1e-300);
    total -= std::log(p);
  }
  return total / static_cast<double>(labels.size());
}

template <class S>
S cross_entropy_from_logits(const Mat<S>& logits, const std::vector<int>& labels) {
  if (logits.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw DataError("cross_entropy: logits/labels length mismatch");
  }
  if (labels.empty()) throw DataError("cross_entropy: empty batch");
  S total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y != 0 && y != 1) throw DataError("cross_entropy: label outside {0,1}");
    const S m = logits.row(i).maxCoeff();
    const S lse = m + std::log((logits.row(i).array() - m).exp().sum());
    total += lse - logits(i, y);
  }
  return total / static_cast<S>(labels.size());
}

namespace {

template <class S>
S gelu_grad(S x) {
  // d/dx [x * Phi(x)] = Phi(x) + x * phi(x)
  const S phi = std::exp(static_cast<S>(-0.5) * x * x) *
                static_cast<S>(0.3989422804014327);  // 1/sqrt(2*pi)
  const S Phi = static_cast<S>(0.5) *
                (static_cast<S>(1) + std::erf(x * static_cast<S>(M_SQRT1_2)));
  return Phi + x * phi;
}

// d(loss)/d(res) for out = gamma .* xhat + beta, xhat = (res - mu) * inv_std.
template <class S>
Mat<S> layer_norm_backward(const Mat<S>& d_out, const Mat<S>& xhat, const Mat<S>& inv_std,
                           const Mat<S>& gamma, Mat<S>& d_gamma, Mat<S>& d_beta) {
  const Eigen::Index rows = d_out.rows(), cols = d_out.cols();
  Mat<S> d_in(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    d_gamma.row(0) += d_out.row(i).cwiseProduct(xhat.row(i));
    d_beta.row(0) += d_out.row(i);
    const auto d_xhat = d_out.row(i).cwiseProduct(gamma.row(0));
    const S sum_dxhat = d_xhat.sum();
    const S sum_dxhat_xhat = d_xhat.cwiseProduct(xhat.row(i)).sum();
    d_in.row(i) = (inv_std(i, 0) / static_cast<S>(cols)) *
                  (static_cast<S>(cols) * d_xhat.array() - sum_dxhat -
                   xhat.row(i).array() * sum_dxhat_xhat)
                      .matrix();
  }
  return d_in;
}

template <class S>
Mat<S>& grad_of(ParamMap<S>& grads, const std::string& name) {
  return grads.find(name)->second;
}

template <class S>
const Mat<S>& tensor(const ParamMap<S>& params, const std::string& name) {
  return params.find(name)->second;
}

}  // namespace

template <class S>
ParamMap<S> backward_from_cache(const ParamMap<S>& params, const ModelConfig& config,
                                const BatchCache<S>& cache, const std::vector<int>& labels) {
  if (cache.examples.size() != labels.size()) {
    throw DataError("backward: cache/labels length mismatch");
  }
  if (labels.empty()) throw DataError("backward: empty batch");

  ParamMap<S> grads;
  for (const auto& [name, t] : params) grads.emplace(name, Mat<S>::Zero(t.rows(), t.cols()));

  // d(mean CE)/d(logits) = (softmax - onehot) / batch
  const Mat<S> probs = softmax_rows(cache.logits);
  Mat<S> d_logits = probs;
  const S inv_b = static_cast<S>(1.0) / static_cast<S>(labels.size());
  for (Eigen::Index i = 0; i < d_logits.rows(); ++i) {
    d_logits(i, labels[static_cast<size_t>(i)]) -= static_cast<S>(1);
    d_logits.row(i) *= inv_b;
  }

  const Mat<S>& head_w = tensor(params, "head.w");
  const Eigen::Index hd = config.head_dim();
  const int heads = config.num_heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));

  for (size_t b = 0; b < cache.examples.size(); ++b) {
    const ExampleCache<S>& ex = cache.examples[b];
    const Eigen::Index len = ex.final_out.rows();
    const auto d_logit_row = d_logits.row(static_cast<Eigen::Index>(b));

    grad_of(grads, "head.w") += ex.pooled.transpose() * d_logit_row;
    grad_of(grads, "head.b").row(0) += d_logit_row;
    const Mat<S> d_pooled = d_logit_row * head_w.transpose();  // [1 x H]

    Mat<S> d_h = Mat<S>::Zero(len, config.hidden_dim);
    if (config.pooling == Pooling::cls_token) {
      d_h.row(0) = d_pooled.row(0);
    } else {
      for (Eigen::Index p = 0; p < len; ++p) {
        d_h.row(p) = d_pooled.row(0) / static_cast<S>(len);
      }
    }

    for (int l = config.num_layers - 1; l >= 0; --l) {
      const LayerCache<S>& lc = ex.layers[static_cast<size_t>(l)];
      const std::string p = "layer" + std::to_string(l) + ".";

      // h = LN2(res2), res2 = ln1_out + dropout(ff_out)
      Mat<S> d_res2 = layer_norm_backward(d_h, lc.ln2_xhat, lc.ln2_inv_std,
                                          tensor(params, p + "ln2.g"), grad_of(grads, p + "ln2.g"),
                                          grad_of(grads, p + "ln2.b"));
      Mat<S> d_ln1_out = d_res2;  // residual branch
      Mat<S> d_ff_out = lc.ff_drop_mask.size() > 0 ? d_res2.cwiseProduct(lc.ff_drop_mask) : d_res2;

      // ff_out = gelu(ln1_out * w1 + b1) * w2 + b2
      grad_of(grads, p + "ff.w2") += lc.ff_act.transpose() * d_ff_out;
      grad_of(grads, p + "ff.b2").row(0) += d_ff_out.colwise().sum();
      Mat<S> d_act = d_ff_out * tensor(params, p + "ff.w2").transpose();
      Mat<S> d_pre = d_act.cwiseProduct(lc.ff_pre.unaryExpr([](S x) { return gelu_grad(x); }));
      grad_of(grads, p + "ff.w1") += lc.ln1_out.transpose() * d_pre;
      grad_of(grads, p + "ff.b1").row(0) += d_pre.colwise().sum();
      d_ln1_out += d_pre * tensor(params, p + "ff.w1").transpose();

      // ln1_out = LN1(res1), res1 = input + dropout(attn_out)
      Mat<S> d_res1 = layer_norm_backward(d_ln1_out, lc.ln1_xhat, lc.ln1_inv_std,
                                          tensor(params, p + "ln1.g"), grad_of(grads, p + "ln1.g"),
                                          grad_of(grads, p + "ln1.b"));
      Mat<S> d_input = d_res1;  // residual branch
      Mat<S> d_attn_proj =
          lc.attn_drop_mask.size() > 0 ? d_res1.cwiseProduct(lc.attn_drop_mask) : d_res1;

      // attn_out = concat(heads) * wo + bo
      grad_of(grads, p + "attn.wo") += lc.attn_concat.transpose() * d_attn_proj;
      grad_of(grads, p + "attn.bo").row(0) += d_attn_proj.colwise().sum();
      Mat<S> d_concat = d_attn_proj * tensor(params, p + "attn.wo").transpose();

      Mat<S> d_q(len, config.hidden_dim), d_k(len, config.hidden_dim), d_v(len, config.hidden_dim);
      for (int hh = 0; hh < heads; ++hh) {
        const Eigen::Index off = static_cast<Eigen::Index>(hh) * hd;
        const auto qh = lc.q.middleCols(off, hd);
        const auto kh = lc.k.middleCols(off, hd);
        const auto vh = lc.v.middleCols(off, hd);
        const Mat<S>& pr = lc.attn_probs[static_cast<size_t>(hh)];
        const auto d_ah = d_concat.middleCols(off, hd);

        // A = P * V; P = softmax(Q K^T * scale)
        Mat<S> d_p = d_ah * vh.transpose();
        d_v.middleCols(off, hd) = pr.transpose() * d_ah;
        Mat<S> d_scores(len, len);
        for (Eigen::Index i = 0; i < len; ++i) {
          const S dot = d_p.row(i).cwiseProduct(pr.row(i)).sum();
          d_scores.row(i) = pr.row(i).cwiseProduct(d_p.row(i).array() - dot);
        }
        d_scores *= scale;
        d_q.middleCols(off, hd) = d_scores * kh;
        d_k.middleCols(off, hd) = d_scores.transpose() * qh;
      }

      grad_of(grads, p + "attn.wq") += lc.input.transpose() * d_q;
      grad_of(grads, p + "attn.bq").row(0) += d_q.colwise().sum();
      grad_of(grads, p + "attn.wk") += lc.input.transpose() * d_k;
      grad_of(grads, p + "attn.bk").row(0) += d_k.colwise().sum();
      grad_of(grads, p + "attn.wv") += lc.input.transpose() * d_v;
      grad_of(grads, p + "attn.bv").row(0) += d_v.colwise().sum();
      d_input += d_q * tensor(params, p + "attn.wq").transpose();
      d_input += d_k * tensor(params, p + "attn.wk").transpose();
      d_input += d_v * tensor(params, p + "attn.wv").transpose();

      d_h = std::move(d_input);
    }

    // embeddings: dropout(LN(tok + pos))
    Mat<S> d_emb_ln = ex.emb_drop_mask.size() > 0 ? d_h.cwiseProduct(ex.emb_drop_mask) : d_h;
    Mat<S> d_embed_sum = layer_norm_backward(
        d_emb_ln, ex.emb_ln_xhat, ex.emb_ln_inv_std, tensor(params, "embed.ln.g"),
        grad_of(grads, "embed.ln.g"), grad_of(grads, "embed.ln.b"));
    Mat<S>& d_tok = grad_of(grads, "embed.tok");
    Mat<S>& d_pos = grad_of(grads, "embed.pos");
    for (Eigen::Index p = 0; p < len; ++p) {
      d_tok.row(ex.ids[static_cast<size_t>(p)]) += d_embed_sum.row(p);
      d_pos.row(p) += d_embed_sum.row(p);
    }
  }

  for (const auto& [name, g] : grads) {
    if (!g.allFinite()) throw DataError("non-finite gradient in tensor " + name);
  }
  return grads;
}

template <class S>
ForwardBackward<S> forward_backward(const ParamMap<S>& params, const ModelConfig& config,
                                    std::span<const TokenSequence> batch,
                                    const std::vector<int>& labels, Rng* dropout_rng) {
  BatchCache<S> cache;
  ForwardBackward<S> out;
  out.probabilities = forward(params, config, batch, Mode::train, dropout_rng, &cache);
  out.loss = cross_entropy_from_logits(cache.logits, labels);
  out.grads = backward_from_cache(params, config, cache, labels);
  return out;
}

Params backward(const Params& params, const ModelConfig& config,
                std::span<const TokenSequence> batch, const std::vector<int>& labels,
                Rng* dropout_rng) {
  return forward_backward<float>(params, config, batch, labels, dropout_rng).grads;
}

AdamWState AdamWState::init(const Params& params) {
  AdamWState st;
  for (const auto& [name, t] : params) {
    st.m.emplace(name, MatF::Zero(t.rows(), t.cols()));
    st.v.emplace(name, MatF::Zero(t.rows(), t.cols()));
  }
  return st;
}

namespace {

bool in_scope(const std::string& name, TrainableScope scope) {
  return scope == TrainableScope::all || name.starts_with("head.");
}

}  // namespace

void adamw_step(Params& params, const Params& grads, AdamWState& state, const TrainConfig& hyper,
                int64_t step_index) {
  if (step_index < 1) throw ConfigError("adamw_step: step_index must be >= 1");
  const double b1 = kAdamBeta1, b2 = kAdamBeta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_index));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_index));
  const float step_size =
      static_cast<float>(hyper.learning_rate * std::sqrt(bias2) / bias1);
  const float decay = static_cast<float>(hyper.learning_rate * hyper.weight_decay);

  for (auto& [name, p] : params) {
    if (!in_scope(name, hyper.trainable_scope)) continue;
    const auto git = grads.find(name);
    const auto mit = state.m.find(name);
    const auto vit = state.v.find(name);
    if (git == grads.end() || mit == state.m.end() || vit == state.v.end()) {
      throw DataError("adamw_step: missing gradient or state for tensor " + name);
    }
    const MatF& g = git->second;
    MatF& m = mit->second;
    MatF& v = vit->second;
    if (g.rows() != p.rows() || g.cols() != p.cols() || m.rows() != p.rows() ||
        m.cols() != p.cols() || v.rows() != p.rows() || v.cols() != p.cols()) {
      throw DataError("adamw_step: shape mismatch for tensor " + name);
    }
    m = static_cast<float>(b1) * m + static_cast<float>(1.0 - b1) * g;
    v = (static_cast<float>(b2) * v.array() + static_cast<float>(1.0 - b2) * g.array().square())
            .matrix();
    p.array() -= step_size * m.array() / (v.array().sqrt() + static_cast<float>(kAdamEps));
    if (hyper.weight_decay > 0.0) p *= (1.0f - decay);
  }
}

double scheduled_lr(const TrainConfig& hyper, int64_t step_index, int64_t total_steps) {
  if (total_steps <= 0) return hyper.learning_rate;
  const double warmup_steps = hyper.warmup_fraction * static_cast<double>(total_steps);
  const double t = static_cast<double>(step_index);
  if (warmup_steps >= 1.0 && t <= warmup_steps) {
    return hyper.learning_rate * t / warmup_steps;
  }
  const double remaining =
      static_cast<double>(total_steps - step_index + 1) / (static_cast<double>(total_steps) - warmup_steps);
  return hyper.learning_rate * std::max(0.0, remaining);
}

double clip_global_norm(Params& grads, double max_norm) {
  double sumsq = 0.0;
  for (const auto& [name, g] : grads) sumsq += static_cast<double>(g.squaredNorm());
  const double norm = std::sqrt(sumsq);
  if (max_norm > 0.0 && norm > max_norm) {
    const float s = static_cast<float>(max_norm / norm);
    for (auto& [name, g] : grads) g *= s;
  }
  return norm;
}

namespace {

struct EncodedSet {
  std::vector<TokenSequence> seqs;
  std::vector<int> labels;
};

EncodedSet encode_corpus(const Tokenizer& tokenizer, const Corpus& corpus) {
  EncodedSet set;
  set.seqs.reserve(corpus.size());
  set.labels.reserve(corpus.size());
  for (const LabeledSentence& rec : corpus.records) {
    set.seqs.push_back(tokenizer.encode(rec.text));
    set.labels.push_back(rec.label);
  }
  return set;
}

}  // namespace

FineTuneResult fine_tune(Params init_params, const ModelConfig& config, const Tokenizer& tokenizer,
                         const Corpus& train, const Corpus& val, const TrainConfig& tc) {
  tc.validate();
  config.validate();
  if (tc.epochs > 0 && train.empty()) {
    throw DataError("fine_tune: empty training corpus with epochs > 0");
  }

  FineTuneResult result;
  result.params = std::move(init_params);
  validate_shapes(result.params, config);
  if (tc.epochs == 0) return result;

  const EncodedSet train_set = encode_corpus(tokenizer, train);
  const EncodedSet val_set = encode_corpus(tokenizer, val);

  const int64_t n = static_cast<int64_t>(train_set.seqs.size());
  const int64_t steps_per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
  const int64_t total_steps = static_cast<int64_t>(tc.epochs) * steps_per_epoch;
  result.total_steps = total_steps;

  AdamWState state = AdamWState::init(result.params);
  Rng dropout_rng(derive_seed(tc.seed, 0xd20b));

  std::vector<size_t> order(static_cast<size_t>(n));
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  int64_t step = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(tc.seed, 0x5uFF ^ static_cast<uint64_t>(epoch)));
    shuffle_inplace(order, shuffle_rng);

    double loss_sum = 0.0;
    int64_t correct = 0;
    for (int64_t start = 0; start < n; start += tc.batch_size) {
      const int64_t bsz = std::min<int64_t>(tc.batch_size, n - start);
      std::vector<TokenSequence> batch;
      std::vector<int> labels;
      batch.reserve(static_cast<size_t>(bsz));
      labels.reserve(static_cast<size_t>(bsz));
      for (int64_t i = 0; i < bsz; ++i) {
        const size_t idx = order[static_cast<size_t>(start + i)];
        batch.push_back(train_set.seqs[idx]);
        labels.push_back(train_set.labels[idx]);
      }

      ForwardBackward<float> fb = forward_backward<float>(
          result.params, config, std::span<const TokenSequence>(batch), labels, &dropout_rng);
      loss_sum += static_cast<double>(fb.loss) * static_cast<double>(bsz);
      for (Eigen::Index i = 0; i < fb.probabilities.rows(); ++i) {
        const int pred = predicted_label(fb.probabilities(i, 0), fb.probabilities(i, 1));
        if (pred == labels[static_cast<size_t>(i)]) ++correct;
      }

      clip_global_norm(fb.grads, tc.max_grad_norm);
      ++step;
      TrainConfig step_hyper = tc;
      step_hyper.learning_rate = scheduled_lr(tc, step, total_steps);
      adamw_step(result.params, fb.grads, state, step_hyper, step);
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(n);
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    if (!val_set.seqs.empty()) {
      int64_t val_correct = 0;
      constexpr int64_t kEvalBatch = 64;
      for (size_t start = 0; start < val_set.seqs.size(); start += kEvalBatch) {
        const size_t bsz = std::min<size_t>(kEvalBatch, val_set.seqs.size() - start);
        const std::span<const TokenSequence> batch(val_set.seqs.data() + start, bsz);
        const MatF probs = forward<float>(result.params, config, batch, Mode::inference);
        for (size_t i = 0; i < bsz; ++i) {
          const Eigen::Index r = static_cast<Eigen::Index>(i);
          if (predicted_label(probs(r, 0), probs(r, 1)) == val_set.labels[start + i]) ++val_correct;
        }
      }
      stats.val_accuracy = static_cast<double>(val_correct) / static_cast<double>(val_set.seqs.size());
    }
    result.history.push_back(stats);
  }
  return result;
}

std::vector<std::pair<int, float>> predict(const Params& params, const ModelConfig& config,
                                           const Tokenizer& tokenizer,
                                           const std::vector<std::string>& sentences,
                                           int batch_size) {
  std::vector<std::pair<int, float>> out;
  out.reserve(sentences.size());
  std::vector<TokenSequence> seqs;
  seqs.reserve(sentences.size());
  for (const std::string& s : sentences) seqs.push_back(tokenizer.encode(s));
  for (size_t start = 0; start < seqs.size(); start += static_cast<size_t>(batch_size)) {
    const size_t bsz = std::min<size_t>(static_cast<size_t>(batch_size), seqs.size() - start);
    const std::span<const TokenSequence> batch(seqs.data() + start, bsz);
    const MatF probs = forward<float>(params, config, batch, Mode::inference);
    for (size_t i = 0; i < bsz; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(i);
      out.emplace_back(predicted_label(probs(r, 0), probs(r, 1)), probs(r, 1));
    }
  }
  return out;
}

double accuracy_on(const Params& params, const ModelConfig& config, const Tokenizer& tokenizer,
                   const Corpus& corpus, int batch_size) {
  if (corpus.empty()) throw DataError("accuracy_on: empty corpus");
  std::vector<std::string> sentences;
  sentences.reserve(corpus.size());
  for (const LabeledSentence& rec : corpus.records) sentences.push_back(rec.text);
  const auto preds = predict(params, config, tokenizer, sentences, batch_size);
  int64_t correct = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].first == corpus.records[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(corpus.size());
}

// Explicit instantiations for the oracle paths.
template float cross_entropy_from_logits<float>(const Mat<float>&, const std::vector<int>&);
template double cross_entropy_from_logits<double>(const Mat<double>&, const std::vector<int>&);
template ParamMap<float> backward_from_cache<float>(const ParamMap<float>&, const ModelConfig&,
                                                    const BatchCache<float>&,
                                                    const std::vector<int>&);
template ParamMap<double> backward_from_cache<double>(const ParamMap<double>&, const ModelConfig&,
                                                      const BatchCache<double>&,
                                                      const std::vector<int>&);
template ForwardBackward<float> forward_backward<float>(const ParamMap<float>&, const ModelConfig&,
                                                        std::span<const TokenSequence>,
                                                        const std::vector<int>&, Rng*);
template ForwardBackward<double> forward_backward<double>(const ParamMap<double>&,
                                                          const ModelConfig&,
                                                          std::span<const TokenSequence>,
                                                          const std::vector<int>&, Rng*);

}  // namespace clima
