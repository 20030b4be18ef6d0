// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "csifb/autodiff.hpp"
#include "csifb/quantizer.hpp"
#include "csifb/rng.hpp"
#include "csifb/tensor.hpp"

namespace csifb {

// Geometry of the feedback link: what one CSI sample looks like and how many
// symbols the encoder may emit. Samples are real-stacked matrices with
// 2 * n_tx rows (real parts then imaginary parts, one row per antenna) and
// keep_rows columns (retained delay rows, or subcarriers when narrowband).
struct feedback_config {
  int n_tx = 32;
  int keep_rows = 32;
  int codeword_len = 16;
  int quant_bits = 4;  // 0 runs the codec without a quantizer

  int sample_rows() const { return 2 * n_tx; }
  int sample_cols() const { return keep_rows; }
  int sample_dim() const { return 2 * n_tx * keep_rows; }
  int prompt_dim() const { return n_tx * keep_rows; }
  double compression_ratio() const {
    return static_cast<double>(codeword_len) / sample_dim();
  }

  void validate() const {
    if (n_tx < 1 || keep_rows < 1)
      throw std::invalid_argument("feedback_config: sample dimensions must be >= 1");
    if (codeword_len < 1 || codeword_len > sample_dim())
      throw std::invalid_argument("feedback_config: codeword_len must be in [1, sample_dim]");
    if (quant_bits < 0 || quant_bits > 16)
      throw std::invalid_argument("feedback_config: quant_bits must be in [0, 16]");
  }
};

enum class model_family : std::uint8_t { resfc = 0, attention = 1 };
enum class activation : std::uint8_t { tanh_act = 0, relu_act = 1 };

struct model_config {
  model_family family = model_family::attention;

  // attention codec
  int enc_blocks = 6;   // 0 selects the compact token-wise encoder
  int dec_blocks = 6;
  int embed_dim = 128;
  int heads = 16;
  activation ff_act = activation::tanh_act;
  bool with_prompt = false;

  // residual fully-connected codec
  int res_blocks = 2;

  static model_config attention_large(bool prompt = false) {
    model_config c;
    c.family = model_family::attention;
    c.enc_blocks = 6;
    c.dec_blocks = 6;
    c.with_prompt = prompt;
    return c;
  }
  static model_config attention_small(bool prompt = false) {
    model_config c = attention_large(prompt);
    c.enc_blocks = 1;
    c.dec_blocks = 1;
    return c;
  }
  static model_config attention_tiny(bool prompt = false) {
    model_config c = attention_large(prompt);
    c.enc_blocks = 0;
    c.dec_blocks = 1;
    return c;
  }
  static model_config resfc(int blocks) {
    model_config c;
    c.family = model_family::resfc;
    c.res_blocks = blocks;
    return c;
  }

  void validate() const {
    if (family == model_family::attention) {
      if (enc_blocks < 0 || dec_blocks < 1)
        throw std::invalid_argument("model_config: block counts out of range");
      if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0)
        throw std::invalid_argument("model_config: embed_dim must divide by heads");
    } else {
      if (res_blocks < 1)
        throw std::invalid_argument("model_config: res_blocks must be >= 1");
    }
  }
};

struct named_tensor {
  std::string name;
  tensor t;
};

struct model_params {
  model_config cfg;
  feedback_config fb;
  std::uint64_t init_seed = 0;
  std::vector<named_tensor> tensors;

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& nt : tensors) n += nt.t.numel();
    return n;
  }
  const tensor& find(const std::string& name) const {
    for (const auto& nt : tensors)
      if (nt.name == name) return nt.t;
    throw std::out_of_range("model_params: no tensor named " + name);
  }
};

// Sinusoidal positional table: pe(pos, 2k) = sin(pos / 10000^(2k/dim)),
// pe(pos, 2k+1) = cos of the same argument.
inline tensor positional_encoding(int length, int dim) {
  if (length < 1 || dim < 1)
    throw std::invalid_argument("positional_encoding: sizes must be >= 1");
  tensor pe({static_cast<std::size_t>(length), static_cast<std::size_t>(dim)});
  for (int pos = 0; pos < length; ++pos)
    for (int c = 0; c < dim; ++c) {
      const int k2 = c - (c % 2);
      const double arg =
          pos / std::pow(10000.0, static_cast<double>(k2) / dim);
      pe.v[static_cast<std::size_t>(pos) * dim + c] =
          (c % 2 == 0) ? std::sin(arg) : std::cos(arg);
    }
  return pe;
}

namespace detail {

inline constexpr std::uint64_t stream_param_init = 0x1717;

struct param_builder {
  model_params& p;
  std::uint64_t seed;
  std::size_t index = 0;

  void matrix(const std::string& name, std::size_t in, std::size_t out) {
    tensor w({in, out});
    rng r(derive_seed(seed, stream_param_init, index++));
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& x : w.v) x = r.uniform(-a, a);
    p.tensors.push_back({name, std::move(w)});
  }
  void vec(const std::string& name, std::size_t n, double fill = 0.0) {
    tensor b({n});
    for (auto& x : b.v) x = fill;
    p.tensors.push_back({name, std::move(b)});
    ++index;
  }
  void fc(const std::string& name, std::size_t in, std::size_t out) {
    matrix(name + ".w", in, out);
    vec(name + ".b", out);
  }
  void layer_norm(const std::string& name, std::size_t n) {
    vec(name + ".g", n, 1.0);
    vec(name + ".b", n, 0.0);
  }
  void block(const std::string& prefix, std::size_t e, std::size_t ff) {
    fc(prefix + ".attn.q", e, e);
    fc(prefix + ".attn.k", e, e);
    fc(prefix + ".attn.v", e, e);
    fc(prefix + ".attn.o", e, e);
    layer_norm(prefix + ".ln1", e);
    fc(prefix + ".ff.1", e, ff);
    fc(prefix + ".ff.2", ff, e);
    layer_norm(prefix + ".ln2", e);
  }
};

}  // namespace detail

inline model_params build_model(const model_config& cfg, const feedback_config& fb,
                                std::uint64_t seed) {
  cfg.validate();
  fb.validate();
  model_params p;
  p.cfg = cfg;
  p.fb = fb;
  p.init_seed = seed;
  detail::param_builder b{p, seed};

  if (cfg.family == model_family::resfc) {
    const auto d = static_cast<std::size_t>(fb.sample_dim());
    const auto nc = static_cast<std::size_t>(fb.codeword_len);
    for (int i = 0; i < cfg.res_blocks; ++i)
      b.fc("enc.blk" + std::to_string(i), d, d);
    b.fc("enc.compress", d, nc);
    b.fc("dec.expand", nc, d);
    for (int i = 0; i < cfg.res_blocks; ++i)
      b.fc("dec.blk" + std::to_string(i), d, d);
    return p;
  }

  const auto f = static_cast<std::size_t>(fb.sample_cols());
  const auto t = static_cast<std::size_t>(fb.sample_rows());
  const auto e = static_cast<std::size_t>(cfg.embed_dim);
  const auto ff = 4 * e;
  const auto nc = static_cast<std::size_t>(fb.codeword_len);
  const auto flat = t * f;

  if (cfg.enc_blocks == 0) {
    b.fc("enc.token_fc", f, f);
  } else {
    b.fc("enc.embed", f, e);
    for (int i = 0; i < cfg.enc_blocks; ++i)
      b.block("enc.blk" + std::to_string(i), e, ff);
    b.layer_norm("enc.final_ln", e);
    b.fc("enc.restore", e, f);
  }
  b.fc("enc.compress", flat, nc);

  std::size_t combined_in = nc;
  if (cfg.with_prompt) {
    const auto pd = static_cast<std::size_t>(fb.prompt_dim());
    b.fc("dec.prompt", pd, pd);
    combined_in += pd;
  }
  b.fc("dec.combined", combined_in, flat);
  b.fc("dec.embed", f, e);
  for (int i = 0; i < cfg.dec_blocks; ++i)
    b.block("dec.blk" + std::to_string(i), e, ff);
  b.layer_norm("dec.final_ln", e);
  b.fc("dec.out", e, f);
  return p;
}

// Closed-form parameter counts. Writing the arithmetic out keeps the model
// definition honest: the test suite checks these formulas against the actual
// tensor sizes, and size sweeps read budgets from here without building.
inline std::size_t attention_block_param_count(std::size_t e) {
  const std::size_t ff = 4 * e;
  return 4 * (e * e + e)            // q, k, v, o projections
         + 2 * e                    // first layer norm
         + (e * ff + ff)            // feed-forward expand
         + (ff * e + e)             // feed-forward contract
         + 2 * e;                   // second layer norm
}

inline std::size_t param_count_formula(const model_config& cfg,
                                       const feedback_config& fb) {
  cfg.validate();
  fb.validate();
  if (cfg.family == model_family::resfc) {
    const std::size_t d = static_cast<std::size_t>(fb.sample_dim());
    const std::size_t nc = static_cast<std::size_t>(fb.codeword_len);
    const std::size_t blocks = static_cast<std::size_t>(cfg.res_blocks);
    return 2 * blocks * (d * d + d) + (d * nc + nc) + (nc * d + d);
  }
  const std::size_t f = static_cast<std::size_t>(fb.sample_cols());
  const std::size_t t = static_cast<std::size_t>(fb.sample_rows());
  const std::size_t e = static_cast<std::size_t>(cfg.embed_dim);
  const std::size_t nc = static_cast<std::size_t>(fb.codeword_len);
  const std::size_t flat = t * f;
  std::size_t n = 0;
  if (cfg.enc_blocks == 0) {
    n += f * f + f;  // token-wise front end
  } else {
    n += f * e + e;  // token embedding
    n += static_cast<std::size_t>(cfg.enc_blocks) * attention_block_param_count(e);
    n += 2 * e;      // final layer norm
    n += e * f + f;  // token restore
  }
  n += flat * nc + nc;  // compress
  std::size_t combined_in = nc;
  if (cfg.with_prompt) {
    const std::size_t pd = static_cast<std::size_t>(fb.prompt_dim());
    n += pd * pd + pd;
    combined_in += pd;
  }
  n += combined_in * flat + flat;  // combined expand
  n += f * e + e;                  // decoder embedding
  n += static_cast<std::size_t>(cfg.dec_blocks) * attention_block_param_count(e);
  n += 2 * e;
  n += e * f + f;                  // output projection
  return n;
}

// ---- forward graph construction -------------------------------------------

// Looks up parameter node ids by tensor name; built once per graph.
class param_nodes {
 public:
  param_nodes(ad::graph& g, const model_params& p, bool trainable) {
    ids_.reserve(p.tensors.size());
    names_ = &p.tensors;
    for (const auto& nt : p.tensors) ids_.push_back(g.input(nt.t, trainable));
  }
  // Adopts already-created input nodes, one per tensor in order. Lets a
  // caller own the leaves (gradient checking, custom update loops).
  param_nodes(const model_params& p, std::vector<int> ids)
      : names_(&p.tensors), ids_(std::move(ids)) {
    if (ids_.size() != p.tensors.size())
      throw std::invalid_argument("param_nodes: id count does not match tensors");
  }
  int operator[](const std::string& name) const {
    for (std::size_t i = 0; i < names_->size(); ++i)
      if ((*names_)[i].name == name) return ids_[i];
    throw std::out_of_range("param_nodes: no tensor named " + name);
  }
  const std::vector<int>& ids() const { return ids_; }

 private:
  const std::vector<named_tensor>* names_;
  std::vector<int> ids_;
};

namespace detail {

inline int fc(ad::graph& g, const param_nodes& p, const std::string& name, int x) {
  return g.add_bias(g.matmul(x, p[name + ".w"]), p[name + ".b"]);
}

inline int act(ad::graph& g, activation a, int x) {
  return a == activation::tanh_act ? g.tanh_fn(x) : g.relu_fn(x);
}

inline int attention_block(ad::graph& g, const param_nodes& p,
                           const std::string& prefix, int x, int batch,
                           int tokens, int heads, int embed, activation ff_act) {
  const int q = g.split_heads(fc(g, p, prefix + ".attn.q", x), batch, tokens, heads);
  const int k = g.split_heads(fc(g, p, prefix + ".attn.k", x), batch, tokens, heads);
  const int v = g.split_heads(fc(g, p, prefix + ".attn.v", x), batch, tokens, heads);
  const double inv_root_d = 1.0 / std::sqrt(static_cast<double>(embed / heads));
  const int att = g.softmax(g.scale(g.bmatmul_tb(q, k), inv_root_d));
  const int ctx = g.merge_heads(g.bmatmul(att, v), batch, tokens, heads);
  const int attn_out = fc(g, p, prefix + ".attn.o", ctx);
  const int y = g.layer_norm(g.add(x, attn_out), p[prefix + ".ln1.g"], p[prefix + ".ln1.b"]);
  const int h = act(g, ff_act, fc(g, p, prefix + ".ff.1", y));
  const int f2 = fc(g, p, prefix + ".ff.2", h);
  return g.layer_norm(g.add(y, f2), p[prefix + ".ln2.g"], p[prefix + ".ln2.b"]);
}

inline int tiled_positional(ad::graph& g, int batch, int tokens, int dim) {
  const tensor pe = positional_encoding(tokens, dim);
  tensor tiled({static_cast<std::size_t>(batch) * tokens, static_cast<std::size_t>(dim)});
  for (int b = 0; b < batch; ++b)
    std::copy(pe.v.begin(), pe.v.end(),
              tiled.v.begin() + static_cast<std::size_t>(b) * pe.numel());
  return g.constant(std::move(tiled));
}

}  // namespace detail

// Encoder: sample tokens to a tanh-bounded codeword of length codeword_len.
// x node holds (batch * sample_rows, keep_rows) for the attention family or
// (batch, sample_dim) for the residual family. Returns the pre-quantizer
// codeword node (batch, codeword_len), values in [-1, 1].
inline int encoder_forward(ad::graph& g, const model_params& mp,
                           const param_nodes& p, int x, int batch) {
  const auto& cfg = mp.cfg;
  const auto& fb = mp.fb;
  if (cfg.family == model_family::resfc) {
    int h = x;
    for (int i = 0; i < cfg.res_blocks; ++i) {
      const std::string name = "enc.blk" + std::to_string(i);
      h = g.add(h, g.tanh_fn(detail::fc(g, p, name, h)));
    }
    return g.tanh_fn(detail::fc(g, p, "enc.compress", h));
  }
  const int tokens = fb.sample_rows();
  int h;
  if (cfg.enc_blocks == 0) {
    h = detail::act(g, cfg.ff_act, detail::fc(g, p, "enc.token_fc", x));
  } else {
    h = g.add(detail::fc(g, p, "enc.embed", x),
              detail::tiled_positional(g, batch, tokens, cfg.embed_dim));
    for (int i = 0; i < cfg.enc_blocks; ++i)
      h = detail::attention_block(g, p, "enc.blk" + std::to_string(i), h, batch,
                                  tokens, cfg.heads, cfg.embed_dim, cfg.ff_act);
    h = g.layer_norm(h, p["enc.final_ln.g"], p["enc.final_ln.b"]);
    h = detail::fc(g, p, "enc.restore", h);
  }
  const int flat = g.reshape(h, {static_cast<std::size_t>(batch),
                                 static_cast<std::size_t>(fb.sample_dim())});
  return g.tanh_fn(detail::fc(g, p, "enc.compress", flat));
}

// Decoder: codeword node (batch, codeword_len) back to sample layout. The
// prompt node, when the model carries a prompt branch, holds one flattened
// magnitude map per row (batch, prompt_dim).
inline int decoder_forward(ad::graph& g, const model_params& mp,
                           const param_nodes& p, int code, int prompt, int batch) {
  const auto& cfg = mp.cfg;
  const auto& fb = mp.fb;
  if (cfg.family == model_family::resfc) {
    int h = detail::fc(g, p, "dec.expand", code);
    for (int i = 0; i < cfg.res_blocks; ++i) {
      const std::string name = "dec.blk" + std::to_string(i);
      h = g.add(h, g.tanh_fn(detail::fc(g, p, name, h)));
    }
    return h;
  }
  int combined_in = code;
  if (cfg.with_prompt) {
    if (prompt < 0)
      throw std::invalid_argument("decoder_forward: model expects a prompt node");
    combined_in = g.concat_cols(code, detail::fc(g, p, "dec.prompt", prompt));
  }
  const int tokens = fb.sample_rows();
  const int flat = detail::fc(g, p, "dec.combined", combined_in);
  const int toks = g.reshape(flat, {static_cast<std::size_t>(batch) * tokens,
                                    static_cast<std::size_t>(fb.sample_cols())});
  int h = g.add(detail::fc(g, p, "dec.embed", toks),
                detail::tiled_positional(g, batch, tokens, cfg.embed_dim));
  for (int i = 0; i < cfg.dec_blocks; ++i)
    h = detail::attention_block(g, p, "dec.blk" + std::to_string(i), h, batch,
                                tokens, cfg.heads, cfg.embed_dim, cfg.ff_act);
  h = g.layer_norm(h, p["dec.final_ln.g"], p["dec.final_ln.b"]);
  return detail::fc(g, p, "dec.out", h);
}

struct codec_graph {
  ad::graph g;
  param_nodes params;
  int input = -1;
  int code_pre_quant = -1;
  int code = -1;     // after the straight-through quantizer when enabled
  int output = -1;
  int prompt = -1;

  codec_graph(const model_params& mp, tensor x, const tensor* prompt_rows,
              int batch, bool trainable)
      : params(validated(g, mp, x, prompt_rows, batch), mp, trainable) {
    input = g.constant(std::move(x));
    if (mp.cfg.family == model_family::attention && mp.cfg.with_prompt)
      prompt = g.constant(*prompt_rows);
    code_pre_quant = encoder_forward(g, mp, params, input, batch);
    code = mp.fb.quant_bits > 0 ? g.quantize_st(code_pre_quant, mp.fb.quant_bits)
                                : code_pre_quant;
    output = decoder_forward(g, mp, params, code, prompt, batch);
  }

 private:
  // Runs shape checks before any node is created; returns the graph so the
  // member initializer list can order validation ahead of parameter loading.
  static ad::graph& validated(ad::graph& g, const model_params& mp, const tensor& x,
                              const tensor* prompt_rows, int batch) {
    validate_input(mp, x, prompt_rows, batch);
    return g;
  }
  static void validate_input(const model_params& mp, const tensor& x,
                             const tensor* prompt_rows, int batch) {
    if (batch < 1) throw std::invalid_argument("codec_graph: batch must be >= 1");
    const auto& fb = mp.fb;
    const std::size_t want_rows =
        mp.cfg.family == model_family::attention
            ? static_cast<std::size_t>(batch) * fb.sample_rows()
            : static_cast<std::size_t>(batch);
    const std::size_t want_cols =
        mp.cfg.family == model_family::attention
            ? static_cast<std::size_t>(fb.sample_cols())
            : static_cast<std::size_t>(fb.sample_dim());
    if (x.rank() != 2 || x.shape[0] != want_rows || x.shape[1] != want_cols)
      throw std::invalid_argument("codec_graph: input tensor has wrong shape " +
                                  x.shape_str());
    if (mp.cfg.family == model_family::attention && mp.cfg.with_prompt) {
      if (prompt_rows == nullptr)
        throw std::invalid_argument("codec_graph: model expects prompt rows");
      if (prompt_rows->rank() != 2 ||
          prompt_rows->shape[0] != static_cast<std::size_t>(batch) ||
          prompt_rows->shape[1] != static_cast<std::size_t>(fb.prompt_dim()))
        throw std::invalid_argument("codec_graph: prompt tensor has wrong shape");
    }
  }
};

// Single-sample compression to bits. The sample is the stacked real layout
// (sample_rows x keep_rows). Requires a quantized configuration.
inline codeword encode_sample(const model_params& mp, const tensor& sample) {
  if (mp.fb.quant_bits < 1)
    throw std::invalid_argument("encode_sample: configuration has no quantizer");
  tensor x = sample;
  if (mp.cfg.family == model_family::resfc)
    x = tensor({std::size_t{1}, static_cast<std::size_t>(mp.fb.sample_dim())}, sample.v);
  else if (x.rank() != 2 || x.shape[0] != static_cast<std::size_t>(mp.fb.sample_rows()) ||
           x.shape[1] != static_cast<std::size_t>(mp.fb.sample_cols()))
    throw std::invalid_argument("encode_sample: sample has wrong shape");
  ad::graph g;
  param_nodes p(g, mp, /*trainable=*/false);
  const int code = encoder_forward(g, mp, p, g.constant(std::move(x)), 1);
  return quantize(g.value(code).v, mp.fb.quant_bits);
}

// Reconstructs one sample from a codeword (and a flattened prompt magnitude
// map for prompt-carrying models). Returns the stacked real layout.
inline tensor decode_sample(const model_params& mp, const codeword& cw,
                            const tensor* prompt_flat = nullptr) {
  if (mp.fb.quant_bits < 1)
    throw std::invalid_argument("decode_sample: configuration has no quantizer");
  if (cw.bits_per_value != mp.fb.quant_bits ||
      cw.levels.size() != static_cast<std::size_t>(mp.fb.codeword_len))
    throw std::invalid_argument("decode_sample: codeword does not match configuration");
  ad::graph g;
  param_nodes p(g, mp, /*trainable=*/false);
  const int code = g.constant(
      tensor({std::size_t{1}, static_cast<std::size_t>(mp.fb.codeword_len)}, dequantize(cw)));
  int prompt = -1;
  if (mp.cfg.family == model_family::attention && mp.cfg.with_prompt) {
    if (prompt_flat == nullptr)
      throw std::invalid_argument("decode_sample: model expects a prompt");
    if (prompt_flat->numel() != static_cast<std::size_t>(mp.fb.prompt_dim()))
      throw std::invalid_argument("decode_sample: prompt has wrong size");
    prompt = g.constant(
        tensor({std::size_t{1}, static_cast<std::size_t>(mp.fb.prompt_dim())}, prompt_flat->v));
  }
  const int out = decoder_forward(g, mp, p, code, prompt, 1);
  tensor y = g.value(out);
  if (mp.cfg.family == model_family::resfc)
    return tensor({static_cast<std::size_t>(mp.fb.sample_rows()),
                   static_cast<std::size_t>(mp.fb.sample_cols())}, y.v);
  return y;  // already (sample_rows, keep_rows)
}

}  // namespace csifb
