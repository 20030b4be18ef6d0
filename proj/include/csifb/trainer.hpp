// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "csifb/autodiff.hpp"
#include "csifb/dataset.hpp"
#include "csifb/models.hpp"
#include "csifb/prompt.hpp"
#include "csifb/rng.hpp"
#include "csifb/tensor.hpp"

namespace csifb {

// ---- metrics ---------------------------------------------------------------

// Mean over samples of the squared Frobenius reconstruction error. Inputs are
// sample-contiguous stacks (both batch layouts store one sample as a
// contiguous run), so only the sample count matters here.
inline double mse_loss(const tensor& pred, const tensor& target, std::size_t samples) {
  if (!pred.same_shape(target)) throw std::invalid_argument("mse_loss: shapes disagree");
  if (samples == 0 || pred.numel() % samples != 0)
    throw std::invalid_argument("mse_loss: sample count does not divide the tensor");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = pred.v[i] - target.v[i];
    s += d * d;
  }
  return s / static_cast<double>(samples);
}

struct nmse_result {
  double linear = 0.0;
  double db = 0.0;
};

// A perfect reconstruction has zero error with nonzero reference power, which
// is -infinity in decibels; the report pins it to this sentinel instead.
inline constexpr double nmse_floor_db = -300.0;

// Mean over samples of ||pred - ref||^2 / ||ref||^2, streamed one sample at a
// time so evaluation over chunked batches needs no concatenation.
class nmse_accumulator {
 public:
  void add(const double* pred, const double* ref, std::size_t len) {
    double err = 0.0, pow = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double d = pred[i] - ref[i];
      err += d * d;
      pow += ref[i] * ref[i];
    }
    if (pow <= 0.0)
      throw std::invalid_argument("nmse: reference sample has zero power");
    sum_ratio_ += err / pow;
    ++count_;
  }

  std::size_t count() const { return count_; }

  nmse_result result() const {
    if (count_ == 0) throw std::logic_error("nmse: no samples accumulated");
    nmse_result r;
    r.linear = sum_ratio_ / static_cast<double>(count_);
    r.db = r.linear > 0.0 ? 10.0 * std::log10(r.linear) : nmse_floor_db;
    return r;
  }

 private:
  double sum_ratio_ = 0.0;
  std::size_t count_ = 0;
};

inline nmse_result nmse(const tensor& pred, const tensor& ref, std::size_t samples) {
  if (!pred.same_shape(ref)) throw std::invalid_argument("nmse: shapes disagree");
  if (samples == 0 || pred.numel() % samples != 0)
    throw std::invalid_argument("nmse: sample count does not divide the tensor");
  const std::size_t len = pred.numel() / samples;
  nmse_accumulator acc;
  for (std::size_t b = 0; b < samples; ++b)
    acc.add(pred.v.data() + b * len, ref.v.data() + b * len, len);
  return acc.result();
}

// ---- feedback budget -------------------------------------------------------

inline int feedback_bits(const feedback_config& fb) {
  if (fb.quant_bits < 1)
    throw std::invalid_argument("feedback_bits: quantizer is disabled (quant_bits < 1)");
  return fb.quant_bits * fb.codeword_len;
}

// Codeword length that realizes a bit budget at a given per-value depth.
inline int codeword_len_for_bits(int n_bits, int quant_bits) {
  if (n_bits < 1 || quant_bits < 1)
    throw std::invalid_argument("codeword_len_for_bits: budgets must be >= 1");
  if (n_bits % quant_bits != 0)
    throw std::invalid_argument("codeword_len_for_bits: " + std::to_string(n_bits) +
                                " bits is not a whole number of " +
                                std::to_string(quant_bits) + "-bit values");
  return n_bits / quant_bits;
}

// ---- optimizer ---------------------------------------------------------------

struct train_config {
  int batch_size = 256;
  int micro_batch = 32;  // graph chunk size; gradients accumulate across chunks
  int epochs = 0;        // 0 resolves to the family default
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double val_fraction = 0.1;  // carved from train only when the dataset has no val split
  bool clip_gradients = false;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;

  int resolved_epochs(model_family fam) const {
    if (epochs > 0) return epochs;
    return fam == model_family::attention ? 100 : 1000;
  }

  void validate() const {
    if (batch_size < 1 || micro_batch < 1)
      throw std::invalid_argument("train_config: batch sizes must be >= 1");
    if (epochs < 0) throw std::invalid_argument("train_config: epochs must be >= 0");
    if (!(learning_rate > 0.0))
      throw std::invalid_argument("train_config: learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
      throw std::invalid_argument("train_config: betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("train_config: epsilon must be positive");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
      throw std::invalid_argument("train_config: val_fraction must lie in [0, 1)");
    if (clip_gradients && !(clip_norm > 0.0))
      throw std::invalid_argument("train_config: clip_norm must be positive");
  }
};

struct adam_state {
  long step = 0;
  std::vector<tensor> m;
  std::vector<tensor> v;
};

// One Adam update with bias correction. Gradients are laid out like
// params.tensors; a zero gradient leaves its parameter exactly unchanged.
inline void adam_step(model_params& params, const std::vector<tensor>& grads,
                      adam_state& st, const train_config& cfg) {
  const std::size_t n = params.tensors.size();
  if (grads.size() != n) throw std::invalid_argument("adam_step: gradient count mismatch");
  if (st.m.empty()) {
    st.m.reserve(n);
    st.v.reserve(n);
    for (const auto& nt : params.tensors) {
      st.m.push_back(tensor(nt.t.shape));
      st.v.push_back(tensor(nt.t.shape));
    }
  }
  double clip_scale = 1.0;
  if (cfg.clip_gradients) {
    double sq = 0.0;
    for (const auto& gt : grads)
      for (double g : gt.v) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > cfg.clip_norm) clip_scale = cfg.clip_norm / norm;
  }
  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < n; ++i) {
    tensor& p = params.tensors[i].t;
    const tensor& gt = grads[i];
    if (!p.same_shape(gt)) throw std::invalid_argument("adam_step: gradient shape mismatch");
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double g = gt.v[j] * clip_scale;
      double& m = st.m[i].v[j];
      double& v = st.v[i].v[j];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      p.v[j] -= cfg.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + cfg.epsilon);
    }
  }
}

// ---- batched forward and evaluation -----------------------------------------

namespace detail {
inline constexpr std::uint64_t stream_epoch_shuffle = 5;
inline constexpr std::uint64_t stream_val_carve = 6;

// Model input for a batch: token layout for the attention family, one row per
// sample for the residual family.
inline tensor model_batch(const model_params& mp, const dataset& ds,
                          const std::vector<std::size_t>& idx) {
  return mp.cfg.family == model_family::attention ? stacked_batch(ds, idx)
                                                  : flat_batch(ds, idx);
}

// One flattened prompt row per sample, keyed by the sample's scenario.
inline tensor prompt_rows_for(const dataset& ds, const std::vector<std::size_t>& idx,
                              const std::map<std::uint32_t, csi_prompt>& prompts,
                              std::size_t prompt_dim) {
  tensor rows({idx.size(), prompt_dim});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto it = prompts.find(ds.scenario_id[idx[b]]);
    if (it == prompts.end())
      throw std::invalid_argument("prompt_rows_for: no prompt for scenario " +
                                  std::to_string(ds.scenario_id[idx[b]]));
    if (it->second.values.size() != prompt_dim)
      throw std::invalid_argument("prompt_rows_for: prompt size mismatch");
    std::copy(it->second.values.begin(), it->second.values.end(),
              rows.v.begin() + b * prompt_dim);
  }
  return rows;
}
}  // namespace detail

// NMSE of the reconstruction over the given samples, evaluated in chunks.
// Prompt-carrying models need a prompt per scenario appearing in `idx`.
inline nmse_result evaluate_nmse(const model_params& params, const dataset& ds,
                                 const std::vector<std::size_t>& idx,
                                 const std::map<std::uint32_t, csi_prompt>* prompts = nullptr,
                                 int chunk = 32) {
  if (idx.empty()) throw std::invalid_argument("evaluate_nmse: no samples");
  if (chunk < 1) throw std::invalid_argument("evaluate_nmse: chunk must be >= 1");
  const bool wants_prompt =
      params.cfg.family == model_family::attention && params.cfg.with_prompt;
  if (wants_prompt && prompts == nullptr)
    throw std::invalid_argument("evaluate_nmse: model needs per-scenario prompts");
  const std::size_t len = ds.sample_len();
  nmse_accumulator acc;
  for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(chunk)) {
    const std::size_t b =
        std::min(static_cast<std::size_t>(chunk), idx.size() - at);
    const std::vector<std::size_t> part(idx.begin() + static_cast<std::ptrdiff_t>(at),
                                        idx.begin() + static_cast<std::ptrdiff_t>(at + b));
    tensor x = detail::model_batch(params, ds, part);
    tensor prompt_rows;
    if (wants_prompt)
      prompt_rows = detail::prompt_rows_for(ds, part, *prompts,
                                            static_cast<std::size_t>(params.fb.prompt_dim()));
    codec_graph cg(params, std::move(x), wants_prompt ? &prompt_rows : nullptr,
                   static_cast<int>(b), /*trainable=*/false);
    const tensor& out = cg.g.value(cg.output);
    const tensor& ref = cg.g.value(cg.input);
    for (std::size_t s = 0; s < b; ++s)
      acc.add(out.v.data() + s * len, ref.v.data() + s * len, len);
  }
  return acc.result();
}

inline nmse_result evaluate_split_nmse(const model_params& params, const dataset& ds,
                                       sample_split split,
                                       const std::map<std::uint32_t, csi_prompt>* prompts = nullptr,
                                       int chunk = 32) {
  return evaluate_nmse(params, ds, ds.indices_of(split), prompts, chunk);
}

// ---- training loop -----------------------------------------------------------

struct train_history {
  struct row {
    int epoch = 0;            // 1-based
    double loss = 0.0;        // epoch mean of per-sample squared error
    double val_nmse_db = 0.0;
  };
  std::vector<row> rows;
  int best_epoch = 0;  // 1-based epoch with the lowest validation NMSE
  double best_val_nmse_db = std::numeric_limits<double>::infinity();
};

inline void write_history_csv(const train_history& h, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_history_csv: cannot open " + path);
  f << "epoch,loss,val_nmse_db\n";
  f.precision(12);
  for (const auto& r : h.rows) f << r.epoch << ',' << r.loss << ',' << r.val_nmse_db << '\n';
}

// Adam training with a validation-selected checkpoint: shuffled logical
// batches split into micro chunks whose gradients accumulate before each
// update, validation NMSE after every epoch, and the best-epoch parameters
// restored on return. Deterministic for a fixed (config, dataset) pair.
inline train_history train(model_params& params, const dataset& ds,
                           const train_config& cfg) {
  cfg.validate();
  if (ds.rows != params.fb.sample_rows() || ds.cols != params.fb.sample_cols())
    throw std::invalid_argument("train: dataset shape does not match the model");

  std::vector<std::size_t> train_idx = ds.indices_of(sample_split::train);
  std::vector<std::size_t> val_idx = ds.indices_of(sample_split::val);
  if (val_idx.empty() && cfg.val_fraction > 0.0 && train_idx.size() > 1) {
    // No stored validation split: carve one off the training samples.
    rng r(derive_seed(cfg.seed, detail::stream_val_carve, 0));
    shuffle(train_idx, r);
    std::size_t n_val = static_cast<std::size_t>(
        std::lround(cfg.val_fraction * static_cast<double>(train_idx.size())));
    n_val = std::min(n_val, train_idx.size() - 1);
    if (n_val > 0) {
      val_idx.assign(train_idx.end() - static_cast<std::ptrdiff_t>(n_val), train_idx.end());
      train_idx.resize(train_idx.size() - n_val);
    }
  }
  if (train_idx.empty()) throw std::invalid_argument("train: no training samples");
  if (val_idx.empty())
    throw std::invalid_argument("train: no validation samples for checkpoint selection");

  const bool wants_prompt =
      params.cfg.family == model_family::attention && params.cfg.with_prompt;
  std::map<std::uint32_t, csi_prompt> prompts;
  if (wants_prompt) prompts = reference_prompts(ds);
  const std::map<std::uint32_t, csi_prompt>* prompt_ptr = wants_prompt ? &prompts : nullptr;

  const int epochs = cfg.resolved_epochs(params.cfg.family);
  const std::size_t pd = static_cast<std::size_t>(params.fb.prompt_dim());

  adam_state opt;
  std::vector<tensor> grad_acc;
  grad_acc.reserve(params.tensors.size());
  for (const auto& nt : params.tensors) grad_acc.push_back(tensor(nt.t.shape));

  train_history hist;
  hist.rows.reserve(static_cast<std::size_t>(epochs));
  std::vector<named_tensor> best = params.tensors;

  std::vector<std::size_t> order = train_idx;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    rng r(derive_seed(cfg.seed, detail::stream_epoch_shuffle,
                      static_cast<std::uint64_t>(epoch)));
    shuffle(order, r);

    double epoch_sse = 0.0;
    for (std::size_t at = 0; at < order.size();
         at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t logical =
          std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - at);
      for (auto& gt : grad_acc) std::fill(gt.v.begin(), gt.v.end(), 0.0);

      for (std::size_t off = 0; off < logical;
           off += static_cast<std::size_t>(cfg.micro_batch)) {
        const std::size_t b =
            std::min(static_cast<std::size_t>(cfg.micro_batch), logical - off);
        const std::vector<std::size_t> part(
            order.begin() + static_cast<std::ptrdiff_t>(at + off),
            order.begin() + static_cast<std::ptrdiff_t>(at + off + b));
        tensor x = detail::model_batch(params, ds, part);
        tensor prompt_rows;
        if (wants_prompt) prompt_rows = detail::prompt_rows_for(ds, part, prompts, pd);

        codec_graph cg(params, std::move(x), wants_prompt ? &prompt_rows : nullptr,
                       static_cast<int>(b), /*trainable=*/true);
        const int diff = cg.g.add(cg.output, cg.g.scale(cg.input, -1.0));
        const int loss =
            cg.g.scale(cg.g.sum_squares(diff), 1.0 / static_cast<double>(logical));
        const double chunk_loss = cg.g.scalar(loss);
        if (!std::isfinite(chunk_loss))
          throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch) +
                                   ", sample offset " + std::to_string(at + off));
        epoch_sse += chunk_loss * static_cast<double>(logical);
        cg.g.backward(loss, /*release_buffers=*/true);
        const auto& ids = cg.params.ids();
        for (std::size_t i = 0; i < ids.size(); ++i) {
          const tensor& g = cg.g.gradient(ids[i]);
          for (std::size_t j = 0; j < g.numel(); ++j) grad_acc[i].v[j] += g.v[j];
        }
      }
      adam_step(params, grad_acc, opt, cfg);
    }

    const nmse_result val = evaluate_nmse(params, ds, val_idx, prompt_ptr, cfg.micro_batch);
    if (!std::isfinite(val.db))
      throw std::runtime_error("train: validation diverged at epoch " + std::to_string(epoch));
    train_history::row row;
    row.epoch = epoch;
    row.loss = epoch_sse / static_cast<double>(order.size());
    row.val_nmse_db = val.db;
    hist.rows.push_back(row);
    if (val.db < hist.best_val_nmse_db) {
      hist.best_val_nmse_db = val.db;
      hist.best_epoch = epoch;
      best = params.tensors;
    }
  }

  params.tensors = std::move(best);
  return hist;
}

}  // namespace csifb
