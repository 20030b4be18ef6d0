// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "csifb/binio.hpp"
#include "csifb/channel.hpp"
#include "csifb/dataset.hpp"
#include "csifb/rng.hpp"
#include "csifb/tensor.hpp"

namespace csifb {

// Environmental side information for one scenario: the elementwise mean
// magnitude of its CSI samples. Rows are delay bins, columns antennas, in the
// same normalized units as dataset samples.
struct csi_prompt {
  std::uint32_t scenario = 0;
  int rows = 0;
  int cols = 0;
  std::uint64_t pooled_samples = 0;
  std::vector<double> values;  // row-major, nonnegative

  // Flattened row layout consumed by the decoder prompt branch.
  tensor flat() const {
    return tensor({std::size_t{1}, values.size()}, values);
  }
};

// What one user uploads: its local magnitude sum and sample count. Summing
// these across users reproduces the pooled mean exactly, at a fraction of
// the uplink cost of shipping raw complex samples.
struct user_contribution {
  int rows = 0;
  int cols = 0;
  long sample_count = 0;
  std::vector<double> magnitude_sum;
};

inline user_contribution user_partial(const std::vector<csi_matrix>& samples) {
  if (samples.empty())
    throw std::invalid_argument("user_partial: sample list is empty");
  const auto rows = samples.front().m.rows();
  const auto cols = samples.front().m.cols();
  const auto domain = samples.front().domain;
  user_contribution c;
  c.rows = static_cast<int>(rows);
  c.cols = static_cast<int>(cols);
  c.magnitude_sum.assign(static_cast<std::size_t>(rows * cols), 0.0);
  for (const auto& s : samples) {
    if (s.m.rows() != rows || s.m.cols() != cols || s.domain != domain)
      throw std::invalid_argument("user_partial: samples disagree in shape or domain");
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index q = 0; q < cols; ++q)
        c.magnitude_sum[static_cast<std::size_t>(r * cols + q)] += std::abs(s.m(r, q));
    ++c.sample_count;
  }
  return c;
}

inline csi_prompt aggregate_prompt(const std::vector<user_contribution>& contribs) {
  if (contribs.empty())
    throw std::invalid_argument("aggregate_prompt: no contributions");
  const int rows = contribs.front().rows;
  const int cols = contribs.front().cols;
  csi_prompt p;
  p.rows = rows;
  p.cols = cols;
  p.values.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  long total = 0;
  for (const auto& c : contribs) {
    if (c.rows != rows || c.cols != cols)
      throw std::invalid_argument("aggregate_prompt: contributions disagree in shape");
    if (c.sample_count < 0)
      throw std::invalid_argument("aggregate_prompt: negative sample count");
    if (c.magnitude_sum.size() != p.values.size())
      throw std::invalid_argument("aggregate_prompt: bad magnitude_sum length");
    for (std::size_t i = 0; i < p.values.size(); ++i) p.values[i] += c.magnitude_sum[i];
    total += c.sample_count;
  }
  if (total <= 0) throw std::invalid_argument("aggregate_prompt: zero total sample count");
  for (auto& v : p.values) v /= static_cast<double>(total);
  p.pooled_samples = static_cast<std::uint64_t>(total);
  return p;
}

// Uplink cost of the pooled protocol relative to shipping every sample: one
// magnitude matrix versus m complex matrices (two reals per entry).
inline double collection_cost_ratio(long m) {
  if (m < 1) throw std::invalid_argument("collection_cost_ratio: m must be >= 1");
  return 1.0 / (2.0 * static_cast<double>(m));
}

namespace detail {
inline constexpr std::uint64_t stream_prompt_pick = 4;

// Magnitude map of one stacked sample: |entry(f, t)| = hypot of the real and
// imaginary rows for antenna t at delay row f.
inline void add_stacked_magnitude(const dataset& ds, std::size_t sample_idx,
                                  std::vector<double>& acc) {
  const int n_tx = ds.cfg.n_tx;
  const int keep = ds.cols;
  const float* s = ds.sample(sample_idx);
  for (int f = 0; f < keep; ++f)
    for (int t = 0; t < n_tx; ++t) {
      const double re = s[static_cast<std::size_t>(t) * keep + f];
      const double im = s[(static_cast<std::size_t>(n_tx) + t) * keep + f];
      acc[static_cast<std::size_t>(f) * n_tx + t] += std::hypot(re, im);
    }
}
}  // namespace detail

// Prompt from m of the scenario's training samples (m = -1 pools all of
// them, reproducing the training-time reference prompt). Selection is a
// seeded uniform draw without replacement.
inline csi_prompt prompt_from_dataset(const dataset& ds, int scenario_id, long m,
                                      std::uint64_t seed) {
  if (scenario_id < 0 || scenario_id >= ds.cfg.scenarios)
    throw std::invalid_argument("prompt_from_dataset: scenario id out of range");
  std::vector<std::size_t> pool = ds.indices_of(sample_split::train, scenario_id);
  if (pool.empty())
    throw std::invalid_argument("prompt_from_dataset: scenario has no training samples");
  if (m == 0 || m < -1 || (m > 0 && static_cast<std::size_t>(m) > pool.size()))
    throw std::invalid_argument("prompt_from_dataset: sample budget must be -1 or in [1, " +
                                std::to_string(pool.size()) + "]");
  if (m > 0 && static_cast<std::size_t>(m) < pool.size()) {
    rng r(derive_seed(seed, detail::stream_prompt_pick,
                      static_cast<std::uint64_t>(scenario_id)));
    shuffle(pool, r);
    pool.resize(static_cast<std::size_t>(m));
  }
  csi_prompt p;
  p.scenario = static_cast<std::uint32_t>(scenario_id);
  p.rows = ds.cols;      // delay rows
  p.cols = ds.cfg.n_tx;  // antennas
  p.pooled_samples = pool.size();
  p.values.assign(static_cast<std::size_t>(p.rows) * p.cols, 0.0);
  for (std::size_t idx : pool) detail::add_stacked_magnitude(ds, idx, p.values);
  for (auto& v : p.values) v /= static_cast<double>(pool.size());
  return p;
}

// Reference prompt per scenario (all training samples pooled), keyed by
// scenario id. This is what training and seen-scenario evaluation consume.
inline std::map<std::uint32_t, csi_prompt> reference_prompts(const dataset& ds) {
  std::map<std::uint32_t, csi_prompt> out;
  for (int k = 0; k < ds.cfg.scenarios; ++k)
    out.emplace(static_cast<std::uint32_t>(k), prompt_from_dataset(ds, k, -1, 0));
  return out;
}

inline void save_prompt(const csi_prompt& p, const std::string& path) {
  byte_writer w;
  w.magic("CSPR");
  w.u32(1);
  w.u32(p.scenario);
  w.u32(static_cast<std::uint32_t>(p.rows));
  w.u32(static_cast<std::uint32_t>(p.cols));
  w.u64(p.pooled_samples);
  for (double v : p.values) w.f32(static_cast<float>(v));
  w.write_file(path);
}

inline csi_prompt load_prompt(const std::string& path) {
  byte_reader r = byte_reader::from_file(path);
  r.expect_magic("CSPR", "prompt");
  const auto version = r.u32();
  if (version != 1)
    throw std::runtime_error("prompt: unsupported version " + std::to_string(version));
  csi_prompt p;
  p.scenario = r.u32();
  p.rows = static_cast<int>(r.u32());
  p.cols = static_cast<int>(r.u32());
  p.pooled_samples = r.u64();
  if (p.rows < 1 || p.cols < 1) throw std::runtime_error("prompt: bad dimensions");
  p.values.resize(static_cast<std::size_t>(p.rows) * p.cols);
  for (auto& v : p.values) v = static_cast<double>(r.f32());
  if (r.remaining() != 0) throw std::runtime_error("prompt: trailing bytes");
  return p;
}

}  // namespace csifb
