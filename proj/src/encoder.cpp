#include "clima/encoder.hpp"

#include <cmath>

#include "clima/errors.hpp"

namespace clima {

std::string to_string(Pooling p) {
  return p == Pooling::cls_token ? "cls_token" : "mean_over_mask";
}

Pooling pooling_from_string(std::string_view s) {
  if (s == "cls_token") return Pooling::cls_token;
  if (s == "mean_over_mask") return Pooling::mean_over_mask;
  throw ConfigError("unknown pooling: " + std::string(s));
}

void ModelConfig::validate() const {
  if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
  if (hidden_dim < 1 || num_heads < 1) throw ConfigError("hidden_dim and num_heads must be >= 1");
  if (hidden_dim % num_heads != 0) throw ConfigError("hidden_dim must be divisible by num_heads");
  if (ff_dim < 1) throw ConfigError("ff_dim must be >= 1");
  if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
  if (max_positions < 2) throw ConfigError("max_positions must be >= 2");
  if (!(dropout_rate >= 0.0f && dropout_rate < 1.0f)) {
    throw ConfigError("dropout_rate must lie in [0,1)");
  }
  if (num_classes != 2) throw ConfigError("num_classes is fixed to 2");
}

std::vector<TensorSpec> parameter_specs(const ModelConfig& c) {
  std::vector<TensorSpec> specs;
  const Eigen::Index h = c.hidden_dim, f = c.ff_dim;
  specs.push_back({"embed.tok", c.vocab_size, h});
  specs.push_back({"embed.pos", c.max_positions, h});
  specs.push_back({"embed.ln.g", 1, h});
  specs.push_back({"embed.ln.b", 1, h});
  for (int l = 0; l < c.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    specs.push_back({p + "attn.wq", h, h});
    specs.push_back({p + "attn.bq", 1, h});
    specs.push_back({p + "attn.wk", h, h});
    specs.push_back({p + "attn.bk", 1, h});
    specs.push_back({p + "attn.wv", h, h});
    specs.push_back({p + "attn.bv", 1, h});
    specs.push_back({p + "attn.wo", h, h});
    specs.push_back({p + "attn.bo", 1, h});
    specs.push_back({p + "ln1.g", 1, h});
    specs.push_back({p + "ln1.b", 1, h});
    specs.push_back({p + "ff.w1", h, f});
    specs.push_back({p + "ff.b1", 1, f});
    specs.push_back({p + "ff.w2", f, h});
    specs.push_back({p + "ff.b2", 1, h});
    specs.push_back({p + "ln2.g", 1, h});
    specs.push_back({p + "ln2.b", 1, h});
  }
  specs.push_back({"head.w", h, c.num_classes});
  specs.push_back({"head.b", 1, c.num_classes});
  return specs;
}

namespace {

bool is_layer_norm_gain(const std::string& name) {
  return name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
}

}  // namespace

Params init_parameters(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, 0x1417));
  Params params;
  for (const TensorSpec& spec : parameter_specs(config)) {
    MatF t(spec.rows, spec.cols);
    if (is_layer_norm_gain(spec.name)) {
      t.setOnes();
    } else if (spec.rows == 1) {
      t.setZero();  // biases and layer-norm shifts
    } else {
      for (Eigen::Index i = 0; i < t.rows(); ++i) {
        for (Eigen::Index j = 0; j < t.cols(); ++j) {
          t(i, j) = static_cast<float>(rng.truncated_normal(0.02));
        }
      }
    }
    params.emplace(spec.name, std::move(t));
  }
  return params;
}

template <class S>
void validate_shapes(const ParamMap<S>& params, const ModelConfig& config) {
  config.validate();
  const std::vector<TensorSpec> specs = parameter_specs(config);
  if (params.size() != specs.size()) {
    throw DataError("parameter map has " + std::to_string(params.size()) + " tensors, config implies " +
                    std::to_string(specs.size()));
  }
  for (const TensorSpec& spec : specs) {
    const auto it = params.find(spec.name);
    if (it == params.end()) throw DataError("missing tensor: " + spec.name);
    if (it->second.rows() != spec.rows || it->second.cols() != spec.cols) {
      throw DataError("tensor " + spec.name + " has shape [" + std::to_string(it->second.rows()) +
                      " x " + std::to_string(it->second.cols()) + "], config implies [" +
                      std::to_string(spec.rows) + " x " + std::to_string(spec.cols) + "]");
    }
  }
}

template <class S>
Mat<S> softmax_rows(const Mat<S>& logits) {
  Mat<S> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const S m = logits.row(i).maxCoeff();
    Eigen::Array<S, Eigen::Dynamic, 1> e = (logits.row(i).array() - m).exp().transpose();
    out.row(i) = (e / e.sum()).transpose();
  }
  return out;
}

template <class S>
Mat<S> scaled_dot_attention(const Mat<S>& queries, const Mat<S>& keys, const Mat<S>& values,
                            const std::vector<int>& mask) {
  const Eigen::Index n = queries.rows();
  if (keys.rows() != n || values.rows() != n || keys.cols() != queries.cols()) {
    throw DataError("scaled_dot_attention: dimension mismatch");
  }
  if (!mask.empty()) {
    if (static_cast<Eigen::Index>(mask.size()) != n) {
      throw DataError("scaled_dot_attention: mask length mismatch");
    }
    bool any = false;
    for (int m : mask) any = any || (m != 0);
    if (!any) throw DataError("scaled_dot_attention: all positions masked");
  }
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(queries.cols())));
  Mat<S> scores = queries * keys.transpose() * scale;
  if (!mask.empty()) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (mask[static_cast<size_t>(j)] == 0) {
        scores.col(j).array() += static_cast<S>(-1e9);
      }
    }
  }
  Mat<S> probs = softmax_rows(scores);
  if (!mask.empty()) {
    // The -1e9 shift leaves ~exp(-1e9) mass on masked keys; pin it to zero.
    for (Eigen::Index j = 0; j < n; ++j) {
      if (mask[static_cast<size_t>(j)] == 0) probs.col(j).setZero();
    }
  }
  return probs * values;
}

template <class S>
void layer_norm_forward(const Mat<S>& x, const Mat<S>& gamma, const Mat<S>& beta, Mat<S>& out,
                        Mat<S>& xhat, Mat<S>& inv_std) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  out.resize(rows, cols);
  xhat.resize(rows, cols);
  inv_std.resize(rows, 1);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const S mean = x.row(i).mean();
    const S var = (x.row(i).array() - mean).square().sum() / static_cast<S>(cols);
    const S is = static_cast<S>(1.0) / std::sqrt(var + static_cast<S>(kLayerNormEps));
    inv_std(i, 0) = is;
    xhat.row(i) = (x.row(i).array() - mean) * is;
    out.row(i) = xhat.row(i).cwiseProduct(gamma.row(0)) + beta.row(0);
  }
}

namespace {

template <class S>
S gelu(S x) {
  return static_cast<S>(0.5) * x * (static_cast<S>(1) + std::erf(x * static_cast<S>(M_SQRT1_2)));
}

// Inverted dropout: entries are 0 or 1/keep. Draw order is row-major, one
// uniform per element, so a fixed stream reproduces bit-identical masks.
template <class S>
Mat<S> draw_dropout_mask(Eigen::Index rows, Eigen::Index cols, float rate, Rng& rng) {
  const double keep = 1.0 - static_cast<double>(rate);
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = rng.uniform01() < keep ? static_cast<S>(1.0 / keep) : static_cast<S>(0);
    }
  }
  return m;
}

template <class S>
const Mat<S>& tensor(const ParamMap<S>& params, const std::string& name) {
  return params.find(name)->second;
}

}  // namespace

template <class S>
Mat<S> forward(const ParamMap<S>& params, const ModelConfig& config,
               std::span<const TokenSequence> batch, Mode mode, Rng* dropout_rng,
               BatchCache<S>* cache) {
  validate_shapes(params, config);
  const bool use_dropout = mode == Mode::train && config.dropout_rate > 0.0f;
  if (use_dropout && dropout_rng == nullptr) {
    throw ConfigError("train-mode forward with dropout needs an RNG stream");
  }
  const Eigen::Index bsz = static_cast<Eigen::Index>(batch.size());
  Mat<S> logits(bsz, config.num_classes);
  if (cache != nullptr) {
    cache->examples.clear();
    cache->examples.resize(batch.size());
  }

  const Mat<S>& tok_emb = tensor(params, "embed.tok");
  const Mat<S>& pos_emb = tensor(params, "embed.pos");
  const Mat<S>& head_w = tensor(params, "head.w");
  const Mat<S>& head_b = tensor(params, "head.b");

  for (size_t b = 0; b < batch.size(); ++b) {
    const TokenSequence& seq = batch[b];
    const Eigen::Index len = seq.real_length;
    if (len < 2 || len > static_cast<Eigen::Index>(seq.ids.size())) {
      throw DataError("token sequence with invalid real_length");
    }
    if (len > config.max_positions) {
      throw DataError("sequence longer than max_positions");
    }

    ExampleCache<S> local;
    ExampleCache<S>& ex = cache != nullptr ? cache->examples[b] : local;
    ex.ids.assign(seq.ids.begin(), seq.ids.begin() + len);
    for (int32_t id : ex.ids) {
      if (id < 0 || id >= config.vocab_size) {
        throw DataError("token id " + std::to_string(id) + " outside vocab of size " +
                        std::to_string(config.vocab_size));
      }
    }

    // Token + position embeddings over the real (unpadded) window only.
    Mat<S> x(len, config.hidden_dim);
    for (Eigen::Index p = 0; p < len; ++p) {
      x.row(p) = tok_emb.row(ex.ids[static_cast<size_t>(p)]) + pos_emb.row(p);
    }
    ex.embed_sum = x;
    Mat<S> normed;
    layer_norm_forward(x, tensor(params, "embed.ln.g"), tensor(params, "embed.ln.b"), normed,
                       ex.emb_ln_xhat, ex.emb_ln_inv_std);
    if (use_dropout) {
      ex.emb_drop_mask =
          draw_dropout_mask<S>(normed.rows(), normed.cols(), config.dropout_rate, *dropout_rng);
      normed = normed.cwiseProduct(ex.emb_drop_mask);
    }

    Mat<S> h = normed;
    ex.layers.resize(static_cast<size_t>(config.num_layers));
    const int heads = config.num_heads;
    const Eigen::Index hd = config.head_dim();
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));

    for (int l = 0; l < config.num_layers; ++l) {
      LayerCache<S>& lc = ex.layers[static_cast<size_t>(l)];
      const std::string p = "layer" + std::to_string(l) + ".";
      lc.input = h;

      lc.q = h * tensor(params, p + "attn.wq");
      lc.q.rowwise() += tensor(params, p + "attn.bq").row(0);
      lc.k = h * tensor(params, p + "attn.wk");
      lc.k.rowwise() += tensor(params, p + "attn.bk").row(0);
      lc.v = h * tensor(params, p + "attn.wv");
      lc.v.rowwise() += tensor(params, p + "attn.bv").row(0);

      lc.attn_probs.resize(static_cast<size_t>(heads));
      lc.attn_concat.resize(len, config.hidden_dim);
      for (int hh = 0; hh < heads; ++hh) {
        const Eigen::Index off = static_cast<Eigen::Index>(hh) * hd;
        const auto qh = lc.q.middleCols(off, hd);
        const auto kh = lc.k.middleCols(off, hd);
        const auto vh = lc.v.middleCols(off, hd);
        Mat<S> scores = qh * kh.transpose() * scale;
        Mat<S> probs = softmax_rows(scores);
        lc.attn_concat.middleCols(off, hd) = probs * vh;
        lc.attn_probs[static_cast<size_t>(hh)] = std::move(probs);
      }

      Mat<S> attn_out = lc.attn_concat * tensor(params, p + "attn.wo");
      attn_out.rowwise() += tensor(params, p + "attn.bo").row(0);
      if (use_dropout) {
        lc.attn_drop_mask =
            draw_dropout_mask<S>(attn_out.rows(), attn_out.cols(), config.dropout_rate, *dropout_rng);
        attn_out = attn_out.cwiseProduct(lc.attn_drop_mask);
      }

      Mat<S> res1 = lc.input + attn_out;
      layer_norm_forward(res1, tensor(params, p + "ln1.g"), tensor(params, p + "ln1.b"), lc.ln1_out,
                         lc.ln1_xhat, lc.ln1_inv_std);

      lc.ff_pre = lc.ln1_out * tensor(params, p + "ff.w1");
      lc.ff_pre.rowwise() += tensor(params, p + "ff.b1").row(0);
      lc.ff_act = lc.ff_pre.unaryExpr([](S x) { return gelu(x); });
      Mat<S> ff_out = lc.ff_act * tensor(params, p + "ff.w2");
      ff_out.rowwise() += tensor(params, p + "ff.b2").row(0);
      if (use_dropout) {
        lc.ff_drop_mask =
            draw_dropout_mask<S>(ff_out.rows(), ff_out.cols(), config.dropout_rate, *dropout_rng);
        ff_out = ff_out.cwiseProduct(lc.ff_drop_mask);
      }

      Mat<S> res2 = lc.ln1_out + ff_out;
      Mat<S> ln2_out;
      layer_norm_forward(res2, tensor(params, p + "ln2.g"), tensor(params, p + "ln2.b"), ln2_out,
                         lc.ln2_xhat, lc.ln2_inv_std);
      h = std::move(ln2_out);
    }

    ex.final_out = h;
    if (config.pooling == Pooling::cls_token) {
      ex.pooled = h.row(0);
    } else {
      ex.pooled = h.colwise().mean();
    }
    logits.row(static_cast<Eigen::Index>(b)) = ex.pooled * head_w + head_b.row(0);
  }

  if (cache != nullptr) cache->logits = logits;
  return softmax_rows(logits);
}

// Explicit instantiations: the trainer and the finite-difference checks run
// the same code at both precisions.
template void validate_shapes<float>(const ParamMap<float>&, const ModelConfig&);
template void validate_shapes<double>(const ParamMap<double>&, const ModelConfig&);
template Mat<float> softmax_rows<float>(const Mat<float>&);
template Mat<double> softmax_rows<double>(const Mat<double>&);
template Mat<float> scaled_dot_attention<float>(const Mat<float>&, const Mat<float>&,
                                                const Mat<float>&, const std::vector<int>&);
template Mat<double> scaled_dot_attention<double>(const Mat<double>&, const Mat<double>&,
                                                  const Mat<double>&, const std::vector<int>&);
template void layer_norm_forward<float>(const Mat<float>&, const Mat<float>&, const Mat<float>&,
                                        Mat<float>&, Mat<float>&, Mat<float>&);
template void layer_norm_forward<double>(const Mat<double>&, const Mat<double>&, const Mat<double>&,
                                         Mat<double>&, Mat<double>&, Mat<double>&);
template Mat<float> forward<float>(const ParamMap<float>&, const ModelConfig&,
                                   std::span<const TokenSequence>, Mode, Rng*, BatchCache<float>*);
template Mat<double> forward<double>(const ParamMap<double>&, const ModelConfig&,
                                     std::span<const TokenSequence>, Mode, Rng*,
                                     BatchCache<double>*);

}  // namespace clima
