// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "csifb/binio.hpp"
#include "csifb/channel.hpp"
#include "csifb/rng.hpp"
#include "csifb/tensor.hpp"

namespace csifb {

enum class sample_split : std::uint8_t { train = 0, val = 1, test = 2 };

// Recipe for a reproducible dataset. Every sample is a pure function of
// (config, seed): scenarios, path draws and split shuffles each use their own
// derived seed stream, so the same config always produces identical bytes.
struct dataset_config {
  regime_kind regime = regime_kind::general;
  int scenarios = 1;
  int per_scenario = 100;
  int clusters = 4;
  int subpaths = 5;
  int n_tx = 32;
  int n_sub = 1;
  int keep_rows = 0;           // 0 resolves to n_sub/2 wideband, n_sub narrowband
  double bandwidth_hz = 10e6;
  double angle_spread_deg = -1.0;  // negative resolves to the regime default
  double delay_spread_s = -1.0;
  double split_train = 0.8;
  double split_val = 0.1;
  double split_test = 0.1;
  std::uint64_t seed = 1;

  int resolved_keep_rows() const {
    if (keep_rows > 0) return keep_rows;
    return n_sub == 1 ? 1 : n_sub / 2;
  }

  void validate() const {
    if (scenarios < 1 || per_scenario < 1)
      throw std::invalid_argument("dataset_config: counts must be >= 1");
    if (clusters < 1 || subpaths < 1)
      throw std::invalid_argument("dataset_config: cluster geometry must be >= 1");
    if (n_tx < 1 || n_sub < 1)
      throw std::invalid_argument("dataset_config: array and grid sizes must be >= 1");
    if (resolved_keep_rows() < 1 || resolved_keep_rows() > n_sub)
      throw std::invalid_argument("dataset_config: keep_rows must be in [1, n_sub]");
    if (!(bandwidth_hz > 0.0))
      throw std::invalid_argument("dataset_config: bandwidth must be positive");
    if (split_train < 0.0 || split_val < 0.0 || split_test < 0.0 ||
        std::abs(split_train + split_val + split_test - 1.0) > 1e-9)
      throw std::invalid_argument("dataset_config: split fractions must be >= 0 and sum to 1");
  }
};

struct dataset {
  dataset_config cfg;
  std::vector<scenario> scenario_geometry;  // regenerable from cfg; kept for inspection
  int rows = 0;                             // 2 * n_tx
  int cols = 0;                             // keep_rows
  double scale_divisor = 1.0;               // global rms before normalization
  std::vector<std::uint32_t> scenario_id;   // per sample
  std::vector<std::uint8_t> split;          // per sample, sample_split values
  std::vector<float> data;                  // sample-major, row-major within sample

  std::size_t sample_count() const { return scenario_id.size(); }
  std::size_t sample_len() const {
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }
  const float* sample(std::size_t i) const { return data.data() + i * sample_len(); }

  std::vector<std::size_t> indices_of(sample_split s, int scenario = -1) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < sample_count(); ++i)
      if (split[i] == static_cast<std::uint8_t>(s) &&
          (scenario < 0 || scenario_id[i] == static_cast<std::uint32_t>(scenario)))
        out.push_back(i);
    return out;
  }
};

namespace detail {
inline constexpr std::uint64_t stream_scenario = 1;
inline constexpr std::uint64_t stream_sample = 2;
inline constexpr std::uint64_t stream_split = 3;

// Stacked real layout: row t < n_tx holds the real part of antenna t across
// the kept delay rows; row n_tx + t holds the imaginary part. This fixes the
// token order every model consumes.
inline void stack_sample(const Eigen::MatrixXcd& h, double* out, int n_tx, int keep) {
  for (int t = 0; t < n_tx; ++t)
    for (int f = 0; f < keep; ++f) {
      out[static_cast<std::size_t>(t) * keep + f] = h(f, t).real();
      out[(static_cast<std::size_t>(n_tx) + t) * keep + f] = h(f, t).imag();
    }
}

inline scenario_config resolve_scenario_config(const dataset_config& c) {
  system_config sys;
  sys.n_sub = c.n_sub;
  sys.bandwidth_hz = c.bandwidth_hz;
  scenario_config sc = scenario_config::defaults(c.regime, sys);
  if (c.angle_spread_deg >= 0.0) sc.angle_spread_rad = c.angle_spread_deg * pi / 180.0;
  if (c.delay_spread_s >= 0.0) sc.delay_spread_s = c.delay_spread_s;
  return sc;
}
}  // namespace detail

inline dataset build_dataset(const dataset_config& cfg) {
  cfg.validate();
  dataset ds;
  ds.cfg = cfg;
  ds.cfg.keep_rows = cfg.resolved_keep_rows();
  const int keep = ds.cfg.keep_rows;
  ds.rows = 2 * cfg.n_tx;
  ds.cols = keep;

  system_config sys;
  sys.n_sub = cfg.n_sub;
  sys.bandwidth_hz = cfg.bandwidth_hz;
  array_config arr;
  arr.n_tx = cfg.n_tx;
  const scenario_config sc = detail::resolve_scenario_config(cfg);

  ds.scenario_geometry.reserve(static_cast<std::size_t>(cfg.scenarios));
  for (int k = 0; k < cfg.scenarios; ++k) {
    rng r(derive_seed(cfg.seed, detail::stream_scenario, static_cast<std::uint64_t>(k)));
    ds.scenario_geometry.push_back(
        sample_scenario(static_cast<std::uint32_t>(k), cfg.clusters, sc, r));
  }

  const std::size_t total =
      static_cast<std::size_t>(cfg.scenarios) * static_cast<std::size_t>(cfg.per_scenario);
  const std::size_t len = static_cast<std::size_t>(ds.rows) * keep;
  std::vector<double> raw(total * len);
  ds.scenario_id.resize(total);

  for (int k = 0; k < cfg.scenarios; ++k) {
    for (int n = 0; n < cfg.per_scenario; ++n) {
      const std::size_t idx =
          static_cast<std::size_t>(k) * cfg.per_scenario + static_cast<std::size_t>(n);
      rng r(derive_seed(cfg.seed, detail::stream_sample, idx));
      const path_set ps = sample_path_params(ds.scenario_geometry[static_cast<std::size_t>(k)],
                                             cfg.subpaths, r);
      const csi_matrix h = generate_channel(ps, sys, arr);
      const csi_matrix ad = to_angular_delay(h);
      const csi_matrix tr = truncate_delay(ad, keep);
      detail::stack_sample(tr.m, raw.data() + idx * len, cfg.n_tx, keep);
      ds.scenario_id[idx] = static_cast<std::uint32_t>(k);
    }
  }

  // Normalize to unit per-entry mean square across the dataset. The
  // angular-delay domain concentrates energy into a few entries, so peak
  // scaling would leave typical values two orders of magnitude below one;
  // unit rms keeps token embeddings commensurate with the positional
  // encoding and spreads codewords across the quantizer range.
  double sumsq = 0.0;
  for (double x : raw) sumsq += x * x;
  const double rms = std::sqrt(sumsq / static_cast<double>(raw.size()));
  ds.scale_divisor = rms > 0.0 ? rms : 1.0;
  ds.data.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    ds.data[i] = static_cast<float>(raw[i] / ds.scale_divisor);

  // Per-scenario shuffled split; rounding goes to the training share.
  const int per = cfg.per_scenario;
  const int n_val = static_cast<int>(std::lround(cfg.split_val * per));
  const int n_test = static_cast<int>(std::lround(cfg.split_test * per));
  if (n_val + n_test > per)
    throw std::invalid_argument("dataset_config: split fractions leave no training samples");
  ds.split.assign(total, static_cast<std::uint8_t>(sample_split::train));
  for (int k = 0; k < cfg.scenarios; ++k) {
    std::vector<int> order(static_cast<std::size_t>(per));
    for (int i = 0; i < per; ++i) order[static_cast<std::size_t>(i)] = i;
    rng r(derive_seed(cfg.seed, detail::stream_split, static_cast<std::uint64_t>(k)));
    shuffle(order, r);
    const std::size_t base = static_cast<std::size_t>(k) * per;
    for (int i = 0; i < n_val; ++i)
      ds.split[base + static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] =
          static_cast<std::uint8_t>(sample_split::val);
    for (int i = n_val; i < n_val + n_test; ++i)
      ds.split[base + static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] =
          static_cast<std::uint8_t>(sample_split::test);
  }
  return ds;
}

// Batch assembly in the token layout: B samples stacked vertically, giving
// (B * rows, cols) in double precision.
inline tensor stacked_batch(const dataset& ds, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw std::invalid_argument("stacked_batch: empty index list");
  const std::size_t len = ds.sample_len();
  tensor x({idx.size() * static_cast<std::size_t>(ds.rows),
            static_cast<std::size_t>(ds.cols)});
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const float* s = ds.sample(idx[b]);
    double* dst = x.v.data() + b * len;
    for (std::size_t i = 0; i < len; ++i) dst[i] = static_cast<double>(s[i]);
  }
  return x;
}

// Batch assembly in the flat layout: one sample per row, (B, rows * cols).
inline tensor flat_batch(const dataset& ds, const std::vector<std::size_t>& idx) {
  tensor x = stacked_batch(ds, idx);
  return tensor({idx.size(), ds.sample_len()}, std::move(x.v));
}

inline void save_dataset(const dataset& ds, const std::string& path) {
  byte_writer w;
  w.magic("CSID");
  w.u32(1);  // version
  w.u8(static_cast<std::uint8_t>(ds.cfg.regime));
  w.u32(static_cast<std::uint32_t>(ds.cfg.scenarios));
  w.u32(static_cast<std::uint32_t>(ds.cfg.per_scenario));
  w.u32(static_cast<std::uint32_t>(ds.cfg.clusters));
  w.u32(static_cast<std::uint32_t>(ds.cfg.subpaths));
  w.u32(static_cast<std::uint32_t>(ds.cfg.n_tx));
  w.u32(static_cast<std::uint32_t>(ds.cfg.n_sub));
  w.u32(static_cast<std::uint32_t>(ds.cfg.keep_rows));
  w.f64(ds.cfg.bandwidth_hz);
  w.f64(ds.cfg.angle_spread_deg);
  w.f64(ds.cfg.delay_spread_s);
  w.f64(ds.cfg.split_train);
  w.f64(ds.cfg.split_val);
  w.f64(ds.cfg.split_test);
  w.u64(ds.cfg.seed);
  w.f64(ds.scale_divisor);
  w.u32(static_cast<std::uint32_t>(ds.rows));
  w.u32(static_cast<std::uint32_t>(ds.cols));
  w.u32(static_cast<std::uint32_t>(ds.sample_count()));
  w.u32_array(ds.scenario_id.data(), ds.scenario_id.size());
  w.u8_array(ds.split.data(), ds.split.size());
  w.f32_array(ds.data.data(), ds.data.size());
  w.write_file(path);
}

inline dataset load_dataset(const std::string& path) {
  byte_reader r = byte_reader::from_file(path);
  r.expect_magic("CSID", "dataset");
  const auto version = r.u32();
  if (version != 1)
    throw std::runtime_error("dataset: unsupported version " + std::to_string(version));
  dataset ds;
  const auto regime_raw = r.u8();
  if (regime_raw > 1) throw std::runtime_error("dataset: bad regime tag");
  ds.cfg.regime = static_cast<regime_kind>(regime_raw);
  ds.cfg.scenarios = static_cast<int>(r.u32());
  ds.cfg.per_scenario = static_cast<int>(r.u32());
  ds.cfg.clusters = static_cast<int>(r.u32());
  ds.cfg.subpaths = static_cast<int>(r.u32());
  ds.cfg.n_tx = static_cast<int>(r.u32());
  ds.cfg.n_sub = static_cast<int>(r.u32());
  ds.cfg.keep_rows = static_cast<int>(r.u32());
  ds.cfg.bandwidth_hz = r.f64();
  ds.cfg.angle_spread_deg = r.f64();
  ds.cfg.delay_spread_s = r.f64();
  ds.cfg.split_train = r.f64();
  ds.cfg.split_val = r.f64();
  ds.cfg.split_test = r.f64();
  ds.cfg.seed = r.u64();
  ds.scale_divisor = r.f64();
  ds.rows = static_cast<int>(r.u32());
  ds.cols = static_cast<int>(r.u32());
  const auto total = r.u32();
  ds.cfg.validate();
  if (ds.rows != 2 * ds.cfg.n_tx || ds.cols != ds.cfg.keep_rows)
    throw std::runtime_error("dataset: header dimensions are inconsistent");
  if (total != static_cast<std::uint32_t>(ds.cfg.scenarios) *
                   static_cast<std::uint32_t>(ds.cfg.per_scenario))
    throw std::runtime_error("dataset: sample count does not match config");
  ds.scenario_id.resize(total);
  ds.split.resize(total);
  r.u32_array(ds.scenario_id.data(), total);
  r.u8_array(ds.split.data(), total);
  for (std::size_t i = 0; i < total; ++i) {
    if (ds.split[i] > 2) throw std::runtime_error("dataset: bad split tag");
    if (ds.scenario_id[i] >= static_cast<std::uint32_t>(ds.cfg.scenarios))
      throw std::runtime_error("dataset: bad scenario id");
  }
  ds.data.resize(static_cast<std::size_t>(total) * ds.sample_len());
  r.f32_array(ds.data.data(), ds.data.size());
  if (r.remaining() != 0) throw std::runtime_error("dataset: trailing bytes");

  // Geometry is a pure function of the config; regenerate it so a loaded
  // dataset is indistinguishable from a freshly built one.
  const scenario_config sc = detail::resolve_scenario_config(ds.cfg);
  ds.scenario_geometry.reserve(static_cast<std::size_t>(ds.cfg.scenarios));
  for (int k = 0; k < ds.cfg.scenarios; ++k) {
    rng rg(derive_seed(ds.cfg.seed, detail::stream_scenario, static_cast<std::uint64_t>(k)));
    ds.scenario_geometry.push_back(
        sample_scenario(static_cast<std::uint32_t>(k), ds.cfg.clusters, sc, rg));
  }
  return ds;
}

}  // namespace csifb
