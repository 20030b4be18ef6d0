// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "csifb/rng.hpp"

namespace csifb {

inline constexpr double pi = 3.14159265358979323846;

// Uniform linear array at the transmitter.
struct array_config {
  int n_tx = 32;
  double spacing_ratio = 0.5;  // element spacing over carrier wavelength

  void validate() const {
    if (n_tx < 1) throw std::invalid_argument("array_config: n_tx must be >= 1");
    if (!(spacing_ratio > 0.0))
      throw std::invalid_argument("array_config: spacing_ratio must be positive");
  }
};

// OFDM dimensioning. n_sub == 1 selects the narrowband variant of the
// channel expression (no per-subcarrier delay phase).
struct system_config {
  int n_sub = 1;
  double bandwidth_hz = 10e6;

  bool narrowband() const { return n_sub == 1; }

  void validate() const {
    if (n_sub < 1) throw std::invalid_argument("system_config: n_sub must be >= 1");
    if (!(bandwidth_hz > 0.0))
      throw std::invalid_argument("system_config: bandwidth_hz must be positive");
  }
};

// Far-field steering vector of the array, entry k = exp(-j 2 pi k r sin(aod)).
inline Eigen::RowVectorXcd steering_vector(double aod_rad,
                                           const array_config& arr) {
  arr.validate();
  if (!(aod_rad >= -pi / 2 && aod_rad <= pi / 2))
    throw std::invalid_argument("steering_vector: aod outside [-pi/2, pi/2]");
  Eigen::RowVectorXcd a(arr.n_tx);
  const double step = -2.0 * pi * arr.spacing_ratio * std::sin(aod_rad);
  for (int k = 0; k < arr.n_tx; ++k)
    a(k) = std::polar(1.0, step * static_cast<double>(k));
  return a;
}

enum class regime_kind : std::uint8_t { general = 0, specific = 1 };

inline const char* regime_name(regime_kind r) {
  return r == regime_kind::general ? "general" : "specific";
}

// Knobs for drawing cluster geometry. Spread values are half-widths of the
// uniform jitter applied to each sub-path around its cluster mean.
struct scenario_config {
  regime_kind regime = regime_kind::general;
  double angle_spread_rad = 10.0 * pi / 180.0;
  double delay_spread_s = 0.0;
  double max_mean_delay_s = 0.0;

  static scenario_config defaults(regime_kind r, const system_config& sys) {
    scenario_config c;
    c.regime = r;
    c.angle_spread_rad =
        (r == regime_kind::general ? 10.0 : 2.0) * pi / 180.0;
    if (!sys.narrowband()) {
      // Mean delays stay inside the low half of the delay window so the
      // truncated representation keeps essentially all the energy.
      c.max_mean_delay_s = 0.4 * sys.n_sub / sys.bandwidth_hz;
      c.delay_spread_s = 1.0 / sys.bandwidth_hz;
    }
    return c;
  }

  void validate() const {
    if (!(angle_spread_rad >= 0.0) || angle_spread_rad > pi)
      throw std::invalid_argument("scenario_config: angle_spread_rad out of range");
    if (delay_spread_s < 0.0 || max_mean_delay_s < 0.0)
      throw std::invalid_argument("scenario_config: delay values must be >= 0");
  }
};

// One propagation environment: fixed cluster means and powers. Samples drawn
// from the same scenario share this geometry and differ only in sub-path
// jitter, phases and gains.
struct scenario {
  std::uint32_t id = 0;
  regime_kind regime = regime_kind::general;
  std::vector<double> mean_aod_rad;
  std::vector<double> mean_delay_s;
  std::vector<double> cluster_power;  // nonnegative, sums to 1
  double angle_spread_rad = 0.0;
  double delay_spread_s = 0.0;

  int clusters() const { return static_cast<int>(mean_aod_rad.size()); }

  void validate() const {
    const std::size_t l = mean_aod_rad.size();
    if (l == 0) throw std::invalid_argument("scenario: needs at least one cluster");
    if (mean_delay_s.size() != l || cluster_power.size() != l)
      throw std::invalid_argument("scenario: per-cluster arrays disagree in length");
    double sum = 0.0;
    for (std::size_t i = 0; i < l; ++i) {
      if (!(mean_aod_rad[i] >= -pi / 2 && mean_aod_rad[i] <= pi / 2))
        throw std::invalid_argument("scenario: mean aod outside [-pi/2, pi/2]");
      if (mean_delay_s[i] < 0.0)
        throw std::invalid_argument("scenario: mean delay must be >= 0");
      if (cluster_power[i] < 0.0)
        throw std::invalid_argument("scenario: cluster power must be >= 0");
      sum += cluster_power[i];
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("scenario: cluster powers must sum to 1");
  }
};

// Cluster means uniform over the full angular range, delays uniform over
// [0, max_mean_delay], powers drawn Exp(1) and normalized. Draw order is
// fixed (angles, then delays, then powers) and part of the format contract.
inline scenario sample_scenario(std::uint32_t id, int clusters,
                                const scenario_config& cfg, rng& r) {
  cfg.validate();
  if (clusters < 1)
    throw std::invalid_argument("sample_scenario: clusters must be >= 1");
  scenario s;
  s.id = id;
  s.regime = cfg.regime;
  s.angle_spread_rad = cfg.angle_spread_rad;
  s.delay_spread_s = cfg.delay_spread_s;
  s.mean_aod_rad.resize(clusters);
  s.mean_delay_s.resize(clusters);
  s.cluster_power.resize(clusters);
  for (int l = 0; l < clusters; ++l) s.mean_aod_rad[l] = r.uniform(-pi / 2, pi / 2);
  for (int l = 0; l < clusters; ++l)
    s.mean_delay_s[l] = cfg.max_mean_delay_s > 0.0 ? r.uniform(0.0, cfg.max_mean_delay_s) : 0.0;
  double sum = 0.0;
  for (int l = 0; l < clusters; ++l) {
    s.cluster_power[l] = -std::log(1.0 - r.uniform());
    sum += s.cluster_power[l];
  }
  for (int l = 0; l < clusters; ++l) s.cluster_power[l] /= sum;
  s.validate();
  return s;
}

struct sub_path {
  double gain = 0.0;       // nonnegative amplitude
  double phase_rad = 0.0;  // initial phase in [0, 2 pi)
  double delay_s = 0.0;
  double aod_rad = 0.0;
};

struct path_set {
  int clusters = 0;
  int subpaths_per_cluster = 0;
  std::vector<sub_path> paths;  // cluster-major, clusters * subpaths entries

  void validate() const {
    if (clusters < 1 || subpaths_per_cluster < 1)
      throw std::invalid_argument("path_set: cluster and sub-path counts must be >= 1");
    if (paths.size() !=
        static_cast<std::size_t>(clusters) * static_cast<std::size_t>(subpaths_per_cluster))
      throw std::invalid_argument("path_set: path count does not match clusters * subpaths");
    for (const auto& p : paths) {
      if (!(p.gain >= 0.0)) throw std::invalid_argument("path_set: gain must be >= 0");
      if (!(p.delay_s >= 0.0)) throw std::invalid_argument("path_set: delay must be >= 0");
      if (!(p.aod_rad >= -pi / 2 && p.aod_rad <= pi / 2))
        throw std::invalid_argument("path_set: aod outside [-pi/2, pi/2]");
    }
  }
};

// Sub-path gains use the cluster power split evenly across sub-paths with a
// Rayleigh fade of unit mean square, so the expected total path power is 1
// and generated channels have unit average power per entry.
inline path_set sample_path_params(const scenario& s, int subpaths_per_cluster,
                                   rng& r) {
  s.validate();
  if (subpaths_per_cluster < 1)
    throw std::invalid_argument("sample_path_params: subpaths_per_cluster must be >= 1");
  path_set ps;
  ps.clusters = s.clusters();
  ps.subpaths_per_cluster = subpaths_per_cluster;
  ps.paths.reserve(static_cast<std::size_t>(ps.clusters) * subpaths_per_cluster);
  auto clamp = [](double x, double lo, double hi) {
    return x < lo ? lo : (x > hi ? hi : x);
  };
  for (int l = 0; l < ps.clusters; ++l) {
    const double base_power = s.cluster_power[l] / subpaths_per_cluster;
    for (int p = 0; p < subpaths_per_cluster; ++p) {
      sub_path sp;
      sp.aod_rad = clamp(s.mean_aod_rad[l] + r.uniform(-s.angle_spread_rad, s.angle_spread_rad),
                         -pi / 2, pi / 2);
      sp.delay_s = std::max(0.0, s.mean_delay_s[l] + r.uniform(-s.delay_spread_s, s.delay_spread_s));
      sp.phase_rad = r.uniform(0.0, 2.0 * pi);
      const double fade = -std::log(1.0 - r.uniform());  // Exp(1), E[fade] = 1
      sp.gain = std::sqrt(base_power * fade);
      ps.paths.push_back(sp);
    }
  }
  ps.validate();
  return ps;
}

enum class csi_domain : std::uint8_t {
  spatial_frequency = 0,
  angular_delay = 1,
  angular_delay_truncated = 2,
};

struct csi_matrix {
  Eigen::MatrixXcd m;  // rows: subcarrier or delay bin; cols: antenna or angle bin
  csi_domain domain = csi_domain::spatial_frequency;
};

// Clustered multipath channel over the array and subcarrier grid. Subcarrier
// i (1-based) sees each sub-path rotated by 2 pi i tau B / n_sub on top of
// its initial phase; the narrowband variant keeps the initial phase only.
inline csi_matrix generate_channel(const path_set& ps, const system_config& sys,
                                   const array_config& arr) {
  ps.validate();
  sys.validate();
  arr.validate();
  csi_matrix out;
  out.domain = csi_domain::spatial_frequency;
  out.m = Eigen::MatrixXcd::Zero(sys.n_sub, arr.n_tx);
  Eigen::VectorXcd col(sys.n_sub);
  for (const auto& p : ps.paths) {
    const Eigen::RowVectorXcd a = steering_vector(p.aod_rad, arr);
    if (sys.narrowband()) {
      out.m.row(0) += (p.gain * std::polar(1.0, p.phase_rad)) * a;
    } else {
      const double delay_step = 2.0 * pi * p.delay_s * sys.bandwidth_hz / sys.n_sub;
      for (int i = 1; i <= sys.n_sub; ++i)
        col(i - 1) = p.gain * std::polar(1.0, p.phase_rad + delay_step * i);
      out.m.noalias() += col * a;
    }
  }
  return out;
}

// Unitary DFT matrix, entry (a, b) = exp(-j 2 pi a b / n) / sqrt(n).
inline Eigen::MatrixXcd dft_matrix(int n) {
  if (n < 1) throw std::invalid_argument("dft_matrix: n must be >= 1");
  Eigen::MatrixXcd f(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      // Reduce a*b mod n first so the angle stays small and exp stays exact.
      const long long ab = static_cast<long long>(a) * b % n;
      f(a, b) = std::polar(scale, -2.0 * pi * static_cast<double>(ab) / n);
    }
  return f;
}

// Two-sided DFT moves rows to the delay domain and columns to the angular
// domain. Unitary on both sides, so the Frobenius norm is unchanged.
inline csi_matrix to_angular_delay(const csi_matrix& h) {
  if (h.domain != csi_domain::spatial_frequency)
    throw std::invalid_argument("to_angular_delay: input must be in the spatial-frequency domain");
  csi_matrix out;
  out.domain = csi_domain::angular_delay;
  const Eigen::MatrixXcd fd = dft_matrix(static_cast<int>(h.m.rows()));
  const Eigen::MatrixXcd fa = dft_matrix(static_cast<int>(h.m.cols()));
  out.m.noalias() = fd * h.m * fa;
  return out;
}

// Keeps the first `keep` delay rows. With delays confined to the low part of
// the delay window, the dropped rows carry negligible energy.
inline csi_matrix truncate_delay(const csi_matrix& h, int keep) {
  if (h.domain != csi_domain::angular_delay)
    throw std::invalid_argument("truncate_delay: input must be in the angular-delay domain");
  if (keep < 1 || keep > h.m.rows())
    throw std::invalid_argument("truncate_delay: keep must be in [1, rows]");
  csi_matrix out;
  out.domain = csi_domain::angular_delay_truncated;
  out.m = h.m.topRows(keep);
  return out;
}

}  // namespace csifb
