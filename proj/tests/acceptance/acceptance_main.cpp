// SPDX-License-Identifier: Apache-2.0
// Acceptance gate: every release-blocking behaviour of the toolkit checked end
// to end, one PASS/FAIL line per criterion, nonzero exit if any line fails.
//
// Fast criteria (c01-c06, c12) rebuild their expected values from scratch so
// they do not share code with the library paths they audit. Trend criteria
// (c07-c11) drive the experiment runner with pinned configurations; trained
// models and generated datasets land in <work-dir>/experiments/cache, so a
// rerun scores cached artifacts instead of retraining.
//
//   acceptance [--work-dir DIR] [--only c07,c09] [--list]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "csifb/autodiff.hpp"
#include "csifb/channel.hpp"
#include "csifb/dataset.hpp"
#include "csifb/experiments.hpp"
#include "csifb/models.hpp"
#include "csifb/prompt.hpp"
#include "csifb/quantizer.hpp"
#include "csifb/rng.hpp"
#include "csifb/tensor.hpp"
#include "csifb/trainer.hpp"

namespace {

using csifb::exp::json;
namespace fs = std::filesystem;

// ---- pinned limits ------------------------------------------------------------
// Every tolerance and budget the gate enforces lives here. Loosening any of
// these is a release decision, not a test fix.

constexpr double transform_norm_tol = 1e-10;   // c01: unitarity / norm drift
constexpr double channel_oracle_tol = 1e-12;   // c02: relative Frobenius error
constexpr double grad_rel_tol = 1e-4;          // c04: vs central differences
constexpr double prompt_partition_tol = 1e-12; // c05: pooling associativity
constexpr double half_signal_db = -6.02;       // c06: nmse(H, H/2) target
constexpr double half_signal_db_tol = 0.01;
constexpr double depth_best_db = -8.0;         // c07: deepest model must reach
constexpr double depth_gain_db = 3.0;          // c07: deepest over shallowest
constexpr double focus_gain_db = 0.5;          // c08: matched over general training
constexpr double spread_noise_db = 0.3;        // c08: slack on monotone trend
constexpr double size_gap_db = 0.3;            // c09: larger preset over next size
constexpr double generalize_gap_db = 1.0;      // c09: seen-to-unseen slack, large
constexpr double prompt_gain_db = 0.5;         // c10: prompt on vs off at 64 bits
constexpr double prompt_budget_db = 0.3;       // c11: m=32 vs all-samples prompt
constexpr std::size_t large_param_count = 2529632;  // c12: large preset, 128 bits
constexpr double param_count_rel_tol = 0.02;

// Training lengths for the trend criteria. Depth/focus sweeps use the small
// residual codec on narrowband data; capacity/prompt sweeps use the attention
// presets on wideband data, where each extra epoch costs minutes.
constexpr int resfc_epochs = 400;
constexpr int attention_epochs = 20;
constexpr int attention_batch = 32;

// ---- harness ------------------------------------------------------------------

struct outcome {
  bool pass = false;
  std::string detail;
};

struct criterion {
  const char* id;
  const char* name;
  double budget_s;  // wall-clock limit, enforced
  outcome (*fn)(const fs::path& work);
};

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string fmt_sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

// ---- CSV access -----------------------------------------------------------------

// Rows of an experiment CSV, comment and header lines stripped.
std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw std::runtime_error("missing csv " + p.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

// ---- experiment plumbing --------------------------------------------------------

// One runner for every trend criterion: they share the artifact cache, so the
// capacity sweep's no-prompt models are reused by the ablation, and the
// ablation's prompt model by the sample sweep.
csifb::exp::runner& shared_runner(const fs::path& work) {
  static csifb::exp::runner r(work / "experiments", 1);
  return r;
}

void run_spec(const fs::path& work, const json& spec, const char* id) {
  json manifest = shared_runner(work).run_file(spec);
  std::ofstream f(work / "experiments" / (std::string("manifest_") + id + ".json"));
  f << manifest.dump(2) << "\n";
  const json& errors = manifest.at("experiments").at(0).at("errors");
  if (!errors.empty()) throw std::runtime_error("experiment errors: " + errors.dump());
}

// The wideband multi-scenario datasets shared by c09-c11. Every field the
// cache key hashes is pinned here so the criteria stay coupled.
json seen_dataset_json() {
  return json{{"regime", "general"}, {"scenarios", 40}, {"per_scenario", 200},
              {"clusters", 4},       {"subpaths", 5},   {"n_tx", 32},
              {"n_sub", 64},         {"seed", 1}};
}

json unseen_dataset_json() {
  json j = seen_dataset_json();
  j["scenarios"] = 8;
  j["seed"] = 2;
  return j;
}

json attention_train_json() {
  return json{{"epochs", attention_epochs}, {"batch_size", attention_batch}, {"seed", 1}};
}

json resfc_train_json() {
  return json{{"epochs", resfc_epochs}, {"batch_size", 256}, {"micro_batch", 256}, {"seed", 1}};
}

json radius_dataset_json() {
  return json{{"regime", "specific"}, {"scenarios", 40}, {"per_scenario", 200},
              {"clusters", 4},        {"subpaths", 5},   {"n_tx", 32},
              {"n_sub", 1},           {"seed", 1}};
}

// ---- c01 ------------------------------------------------------------------------

outcome check_transform(const fs::path&) {
  std::mt19937_64 eng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);

  double worst = 0.0;
  for (int n : {32, 64}) {
    const Eigen::MatrixXcd f = csifb::dft_matrix(n);
    const Eigen::MatrixXcd gram = f.adjoint() * f;
    const double drift =
        (gram - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff();
    worst = std::max(worst, drift);
  }

  for (int i = 0; i < 100; ++i) {
    csifb::csi_matrix h;
    h.m.resize(64, 32);
    for (Eigen::Index r = 0; r < h.m.rows(); ++r)
      for (Eigen::Index c = 0; c < h.m.cols(); ++c)
        h.m(r, c) = std::complex<double>(gauss(eng), gauss(eng));
    const csifb::csi_matrix ad = csifb::to_angular_delay(h);
    const double drift = std::abs(ad.m.norm() - h.m.norm()) / h.m.norm();
    worst = std::max(worst, drift);
  }

  outcome o;
  o.pass = worst < transform_norm_tol;
  o.detail = "max unitary/norm drift " + fmt_sci(worst) + " (limit " +
             fmt_sci(transform_norm_tol) + ", 100 matrices)";
  return o;
}

// ---- c02 ------------------------------------------------------------------------

// Scalar-loop reconstruction of the clustered channel sum. Shares nothing
// with the library path except the path parameters themselves.
Eigen::MatrixXcd brute_force_channel(const csifb::path_set& ps, int n_sub, int n_tx,
                                     double bandwidth_hz, double spacing_ratio) {
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(n_sub, n_tx);
  for (const auto& p : ps.paths) {
    for (int i = 0; i < n_sub; ++i) {
      double phase = p.phase_rad;
      if (n_sub > 1) phase += 2.0 * csifb::pi * p.delay_s * bandwidth_hz / n_sub * (i + 1);
      const std::complex<double> along =
          p.gain * std::complex<double>(std::cos(phase), std::sin(phase));
      for (int k = 0; k < n_tx; ++k) {
        const double steer = -2.0 * csifb::pi * spacing_ratio * std::sin(p.aod_rad) * k;
        h(i, k) += along * std::complex<double>(std::cos(steer), std::sin(steer));
      }
    }
  }
  return h;
}

outcome check_channel_oracle(const fs::path&) {
  csifb::rng r(23);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    csifb::system_config sys;
    sys.n_sub = (i % 3 == 0) ? 1 : ((i % 3 == 1) ? 8 : 64);
    csifb::array_config arr;
    arr.n_tx = (i % 2 == 0) ? 32 : 8;

    csifb::scenario_config scfg = csifb::scenario_config::defaults(
        i % 2 == 0 ? csifb::regime_kind::general : csifb::regime_kind::specific, sys);
    const int clusters = 1 + static_cast<int>(r.below(4));
    const int subpaths = 1 + static_cast<int>(r.below(5));
    const csifb::scenario sc =
        csifb::sample_scenario(static_cast<std::uint32_t>(i), clusters, scfg, r);
    const csifb::path_set ps = csifb::sample_path_params(sc, subpaths, r);

    const csifb::csi_matrix h = csifb::generate_channel(ps, sys, arr);
    const Eigen::MatrixXcd ref =
        brute_force_channel(ps, sys.n_sub, arr.n_tx, sys.bandwidth_hz, arr.spacing_ratio);
    const double rel = (h.m - ref).norm() / ref.norm();
    worst = std::max(worst, rel);
  }
  outcome o;
  o.pass = worst < channel_oracle_tol;
  o.detail = "max relative error " + fmt_sci(worst) + " (limit " +
             fmt_sci(channel_oracle_tol) + ", 100 path sets)";
  return o;
}

// ---- c03 ------------------------------------------------------------------------

outcome check_quantizer(const fs::path&) {
  std::mt19937_64 eng(37);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  double worst_ratio = 0.0;  // round-trip error over delta/2
  for (int bits = 1; bits <= 8; ++bits) {
    const double half_step = csifb::quantizer_step(bits) / 2.0;
    for (int i = 0; i < 10000; ++i) {
      const double x = unit(eng);
      const double y = csifb::quantize_value(x, bits);
      worst_ratio = std::max(worst_ratio, std::abs(y - x) / half_step);
    }
  }
  const bool round_trip_ok = worst_ratio <= 1.0 + 1e-12;

  bool pack_ok = true;
  for (int bits = 1; bits <= 8 && pack_ok; ++bits) {
    for (int len : {1, 3, 8, 17}) {
      csifb::codeword cw;
      cw.bits_per_value = bits;
      for (int i = 0; i < len; ++i)
        cw.levels.push_back(static_cast<std::uint16_t>(
            eng() % (std::uint64_t{1} << bits)));
      const auto bytes = csifb::pack_bits(cw);
      const csifb::codeword back = csifb::unpack_bits(bytes, len, bits);
      if (back.levels != cw.levels) {
        pack_ok = false;
        break;
      }
    }
  }

  // Straight-through node: the gradient entering the quantizer must leave it
  // bit for bit.
  bool ste_ok = true;
  for (int bits : {1, 4, 8}) {
    csifb::ad::graph g;
    csifb::tensor x({4, 5});
    for (auto& v : x.v) v = unit(eng);
    const int in = g.input(x, true);
    const int q = g.quantize_st(in, bits);
    const int loss = g.sum_squares(g.scale(q, 1.7));
    g.backward(loss);
    if (!(g.gradient(in).v == g.gradient(q).v)) ste_ok = false;
  }

  outcome o;
  o.pass = round_trip_ok && pack_ok && ste_ok;
  o.detail = "round-trip worst " + fmt(worst_ratio, 6) + " of delta/2 (bits 1..8, 1e4 points each)" +
             std::string(pack_ok ? ", packing exact" : ", PACKING BROKEN") +
             std::string(ste_ok ? ", pass-through gradient exact" : ", GRADIENT NOT IDENTITY");
  return o;
}

// ---- c04 ------------------------------------------------------------------------

csifb::tensor rand_tensor(std::vector<std::size_t> shape, std::mt19937_64& eng,
                          double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  csifb::tensor t(std::move(shape));
  for (auto& v : t.v) v = d(eng);
  return t;
}

outcome check_gradients(const fs::path&) {
  using csifb::ad::graph;
  using csifb::tensor;
  double worst = 0.0;
  std::string worst_op = "none";
  long checked = 0;

  auto track = [&](const char* name, csifb::ad::grad_check_report rep) {
    checked += rep.checked;
    if (rep.max_err > worst) {
      worst = rep.max_err;
      worst_op = name;
    }
  };

  // Ten independent random draws per op. The straight-through quantizer is
  // excluded: it is piecewise constant, so central differences see zero slope;
  // its exact pass-through contract is covered by the quantizer criterion.
  for (int trial = 0; trial < 10; ++trial) {
    std::mt19937_64 eng(1000 + trial);

    track("matmul", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) {
          return g.sum_squares(g.matmul(id[0], id[1]));
        },
        {rand_tensor({3, 4}, eng), rand_tensor({4, 2}, eng)}));

    track("bmatmul", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) {
          return g.sum_squares(g.bmatmul(id[0], id[1]));
        },
        {rand_tensor({2, 3, 4}, eng), rand_tensor({2, 4, 2}, eng)}));

    track("bmatmul_tb", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) {
          return g.sum_squares(g.bmatmul_tb(id[0], id[1]));
        },
        {rand_tensor({2, 3, 4}, eng), rand_tensor({2, 5, 4}, eng)}));

    track("add+scale", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) {
          return g.sum_squares(g.add(g.scale(id[0], 1.7), g.scale(id[1], -0.3)));
        },
        {rand_tensor({3, 4}, eng), rand_tensor({3, 4}, eng)}));

    track("add_bias", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) {
          return g.sum_squares(g.add_bias(id[0], id[1]));
        },
        {rand_tensor({3, 4}, eng), rand_tensor({4}, eng)}));

    track("mul", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) {
          return g.sum_squares(g.mul(id[0], id[1]));
        },
        {rand_tensor({3, 4}, eng), rand_tensor({3, 4}, eng)}));

    // Keep relu inputs away from the kink at zero, where the derivative is
    // genuinely undefined and differences straddle it.
    tensor relu_in = rand_tensor({3, 4}, eng);
    for (auto& v : relu_in.v) v += (v >= 0.0 ? 0.05 : -0.05);
    track("relu", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) {
          return g.sum_squares(g.relu_fn(id[0]));
        },
        {std::move(relu_in)}));

    track("tanh", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) {
          return g.sum_squares(g.tanh_fn(id[0]));
        },
        {rand_tensor({3, 4}, eng, -2.0, 2.0)}));

    track("softmax", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) {
          return g.sum_squares(g.softmax(id[0]));
        },
        {rand_tensor({4, 5}, eng, -2.0, 2.0)}));

    track("layer_norm", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) {
          return g.sum_squares(g.layer_norm(id[0], id[1], id[2]));
        },
        {rand_tensor({3, 6}, eng), rand_tensor({6}, eng, 0.6, 1.4),
         rand_tensor({6}, eng, -0.2, 0.2)}));

    track("concat_cols", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) {
          return g.sum_squares(g.concat_cols(id[0], id[1]));
        },
        {rand_tensor({3, 2}, eng), rand_tensor({3, 5}, eng)}));

    track("split+merge_heads", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) {
          const int s = g.split_heads(id[0], 2, 3, 2);
          return g.sum_squares(g.merge_heads(g.scale(s, 1.3), 2, 3, 2));
        },
        {rand_tensor({6, 4}, eng)}));

    track("transpose", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) {
          return g.sum_squares(g.matmul(g.transpose(id[0]), id[1]));
        },
        {rand_tensor({4, 3}, eng), rand_tensor({4, 2}, eng)}));

    track("reshape", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) {
          return g.sum_squares(g.reshape(g.tanh_fn(id[0]), {2, 6}));
        },
        {rand_tensor({3, 4}, eng)}));

    track("mean_square", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) { return g.mean_square(id[0]); },
        {rand_tensor({3, 4}, eng)}));

    track("sum_squares", csifb::ad::grad_check(
        [](graph& g, const std::vector<int>& id) { return g.sum_squares(id[0]); },
        {rand_tensor({3, 4}, eng)}));
  }

  // One full attention block, wired leaf by leaf: projections, heads,
  // softmax, residuals, both layer norms and the feed-forward pair.
  {
    std::mt19937_64 eng(4242);
    const int B = 2, T = 3, E = 8, H = 2, F = 16;
    auto dim = [](int n) { return static_cast<std::size_t>(n); };
    std::vector<tensor> leaves;
    leaves.push_back(rand_tensor({dim(B * T), dim(E)}, eng));
    for (int i = 0; i < 4; ++i) {
      leaves.push_back(rand_tensor({dim(E), dim(E)}, eng, -0.4, 0.4));
      leaves.push_back(rand_tensor({dim(E)}, eng, -0.1, 0.1));
    }
    leaves.push_back(rand_tensor({dim(E)}, eng, 0.6, 1.4));
    leaves.push_back(rand_tensor({dim(E)}, eng, -0.1, 0.1));
    leaves.push_back(rand_tensor({dim(E), dim(F)}, eng, -0.4, 0.4));
    leaves.push_back(rand_tensor({dim(F)}, eng, -0.1, 0.1));
    leaves.push_back(rand_tensor({dim(F), dim(E)}, eng, -0.4, 0.4));
    leaves.push_back(rand_tensor({dim(E)}, eng, -0.1, 0.1));
    leaves.push_back(rand_tensor({dim(E)}, eng, 0.6, 1.4));
    leaves.push_back(rand_tensor({dim(E)}, eng, -0.1, 0.1));

    track("attention_block", csifb::ad::grad_check(
        [&](graph& g, const std::vector<int>& id) {
          const int x = id[0];
          const int q = g.add_bias(g.matmul(x, id[1]), id[2]);
          const int k = g.add_bias(g.matmul(x, id[3]), id[4]);
          const int v = g.add_bias(g.matmul(x, id[5]), id[6]);
          const int qh = g.split_heads(q, B, T, H);
          const int kh = g.split_heads(k, B, T, H);
          const int vh = g.split_heads(v, B, T, H);
          const int att =
              g.softmax(g.scale(g.bmatmul_tb(qh, kh), 1.0 / std::sqrt(double(E / H))));
          const int ctx = g.merge_heads(g.bmatmul(att, vh), B, T, H);
          const int proj = g.add_bias(g.matmul(ctx, id[7]), id[8]);
          const int y = g.layer_norm(g.add(x, proj), id[9], id[10]);
          const int f1 = g.tanh_fn(g.add_bias(g.matmul(y, id[11]), id[12]));
          const int f2 = g.add_bias(g.matmul(f1, id[13]), id[14]);
          const int z = g.layer_norm(g.add(y, f2), id[15], id[16]);
          return g.sum_squares(z);
        },
        std::move(leaves)));
  }

  outcome o;
  o.pass = worst < grad_rel_tol && checked > 0;
  o.detail = "max rel err " + fmt_sci(worst) + " at op " + worst_op + " (limit " +
             fmt_sci(grad_rel_tol) + ", " + std::to_string(checked) + " coordinates)";
  return o;
}

// ---- c05 ------------------------------------------------------------------------

outcome check_prompt_partition(const fs::path&) {
  std::mt19937_64 eng(51);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<csifb::csi_matrix> samples(24);
  for (auto& s : samples) {
    s.m.resize(16, 8);
    s.domain = csifb::csi_domain::angular_delay_truncated;
    for (Eigen::Index r = 0; r < s.m.rows(); ++r)
      for (Eigen::Index c = 0; c < s.m.cols(); ++c)
        s.m(r, c) = std::complex<double>(gauss(eng), gauss(eng));
  }

  auto pooled = [&](const std::vector<int>& group_sizes) {
    std::vector<csifb::user_contribution> contribs;
    std::size_t at = 0;
    for (int n : group_sizes) {
      std::vector<csifb::csi_matrix> group(samples.begin() + at, samples.begin() + at + n);
      contribs.push_back(csifb::user_partial(group));
      at += n;
    }
    return csifb::aggregate_prompt(contribs);
  };

  const csifb::csi_prompt whole = pooled({24});
  double worst = 0.0;
  for (const auto& split : std::vector<std::vector<int>>{
           {8, 8, 8}, {1, 23}, {5, 7, 12}, std::vector<int>(24, 1)}) {
    const csifb::csi_prompt p = pooled(split);
    for (std::size_t i = 0; i < whole.values.size(); ++i)
      worst = std::max(worst, std::abs(p.values[i] - whole.values[i]));
    if (p.pooled_samples != whole.pooled_samples) worst = 1.0;
  }

  outcome o;
  o.pass = worst < prompt_partition_tol;
  o.detail = "max pooled difference " + fmt_sci(worst) + " across 4 partitions (limit " +
             fmt_sci(prompt_partition_tol) + ")";
  return o;
}

// ---- c06 ------------------------------------------------------------------------

outcome check_nmse_anchors(const fs::path&) {
  std::mt19937_64 eng(67);
  csifb::tensor ref = rand_tensor({6, 40}, eng, -2.0, 2.0);

  csifb::tensor half = ref;
  for (auto& v : half.v) v *= 0.5;
  const double half_db = csifb::nmse(half, ref, 6).db;

  csifb::tensor zero(ref.shape);
  const csifb::nmse_result z = csifb::nmse(zero, ref, 6);

  outcome o;
  const bool half_ok = std::abs(half_db - half_signal_db) <= half_signal_db_tol;
  const bool zero_ok = z.linear == 1.0 && z.db == 0.0;
  o.pass = half_ok && zero_ok;
  o.detail = "half-signal " + fmt(half_db) + " dB (target " + fmt(half_signal_db) +
             " +/- " + fmt(half_signal_db_tol) + "), zero-signal linear " +
             fmt(z.linear, 1) + " db " + fmt(z.db, 1) + " (must be exact)";
  return o;
}

// ---- c07 ------------------------------------------------------------------------

outcome check_depth_sweep(const fs::path& work) {
  json spec{{"experiment", "blocks-sweep"},
            {"dataset", json{{"regime", "general"}, {"scenarios", 100},
                             {"per_scenario", 200}, {"clusters", 1},
                             {"subpaths", 5}, {"n_tx", 32}, {"n_sub", 1},
                             {"seed", 1}}},
            {"train", resfc_train_json()},
            {"blocks", json::array({1, 2, 3, 5})},
            {"codeword_len", 6},
            {"quant_bits", 4},
            {"out_csv", "c07_blocks_sweep.csv"}};
  run_spec(work, spec, "c07");

  std::map<int, double> nmse_by_depth;
  for (const auto& row : read_csv_rows(work / "experiments" / "c07_blocks_sweep.csv"))
    nmse_by_depth[std::stoi(row.at(0))] = std::stod(row.at(3));

  const double deep = nmse_by_depth.at(5);
  const double shallow = nmse_by_depth.at(1);
  outcome o;
  o.pass = deep <= depth_best_db && (shallow - deep) >= depth_gain_db;
  o.detail = "5 blocks " + fmt(deep, 2) + " dB (need <= " + fmt(depth_best_db, 1) +
             "), gain over 1 block " + fmt(shallow - deep, 2) + " dB (need >= " +
             fmt(depth_gain_db, 1) + ")";
  return o;
}

// ---- c08 ------------------------------------------------------------------------

outcome check_focus_sweep(const fs::path& work) {
  json spec{{"experiment", "radius-analog"},
            {"dataset", radius_dataset_json()},
            {"train", resfc_train_json()},
            {"spreads_deg", json::array({0.5, 1.0, 2.0, 5.0})},
            {"general_spread_deg", 10.0},
            {"res_blocks", 3},
            {"codeword_len", 6},
            {"quant_bits", 4},
            {"out_csv", "c08_radius_analog.csv"}};
  run_spec(work, spec, "c08");

  std::vector<std::pair<double, double>> specific;  // spread -> nmse
  for (const auto& row : read_csv_rows(work / "experiments" / "c08_radius_analog.csv"))
    if (row.at(2) == "specific")
      specific.emplace_back(std::stod(row.at(0)), std::stod(row.at(1)));
  std::sort(specific.begin(), specific.end());

  bool monotone = specific.size() >= 4;
  for (std::size_t i = 0; i + 1 < specific.size(); ++i)
    if (specific[i + 1].second < specific[i].second - spread_noise_db) monotone = false;

  // Matched training beats general training on the tightest scenario set.
  // Both models fall out of the sweep's cache; only the cross scoring is new.
  const csifb::dataset_config base = csifb::exp::dataset_from_json(
      radius_dataset_json(), csifb::dataset_config{});
  csifb::dataset_config tight = base;
  tight.regime = csifb::regime_kind::specific;
  tight.angle_spread_deg = 0.5;
  csifb::dataset_config broad = base;
  broad.regime = csifb::regime_kind::general;
  broad.angle_spread_deg = 10.0;

  csifb::feedback_config fb;
  fb.n_tx = tight.n_tx;
  fb.keep_rows = tight.resolved_keep_rows();
  fb.codeword_len = 6;
  fb.quant_bits = 4;
  const csifb::train_config tcfg = csifb::exp::train_from_json(resfc_train_json());
  const csifb::model_config mcfg = csifb::model_config::resfc(3);

  csifb::exp::artifact_store store(work / "experiments" / "cache");
  const csifb::model_params matched = store.get_model(tight, mcfg, fb, tcfg);
  const csifb::model_params general = store.get_model(broad, mcfg, fb, tcfg);
  const auto test_set = store.get_dataset(tight);
  const double matched_db = csifb::evaluate_split_nmse(
      matched, *test_set, csifb::sample_split::test, nullptr, csifb::exp::eval_chunk).db;
  const double general_db = csifb::evaluate_split_nmse(
      general, *test_set, csifb::sample_split::test, nullptr, csifb::exp::eval_chunk).db;
  const double gain = general_db - matched_db;

  outcome o;
  o.pass = monotone && gain >= focus_gain_db;
  o.detail = "matched-training gain " + fmt(gain, 2) + " dB (need >= " +
             fmt(focus_gain_db, 1) + "), spread trend " +
             (monotone ? "monotone" : "NOT monotone") + " over " +
             std::to_string(specific.size()) + " levels (slack " +
             fmt(spread_noise_db, 1) + " dB)";
  return o;
}

// ---- c09 ------------------------------------------------------------------------

json size_comparison_spec() {
  return json{{"experiment", "size-comparison"},
              {"dataset", seen_dataset_json()},
              {"unseen_dataset", unseen_dataset_json()},
              {"train", attention_train_json()},
              {"models", json::array({"large", "small", "tiny"})},
              {"n_bits", json::array({64, 128})},
              {"quant_bits", 4},
              {"out_csv", "c09_size_comparison.csv"}};
}

outcome check_size_ordering(const fs::path& work) {
  run_spec(work, size_comparison_spec(), "c09");

  std::map<std::string, std::pair<double, double>> by_model;  // at 128 bits
  for (const auto& row : read_csv_rows(work / "experiments" / "c09_size_comparison.csv"))
    if (std::stoi(row.at(1)) == 128)
      by_model[row.at(0)] = {std::stod(row.at(2)), std::stod(row.at(3))};

  const double large_seen = by_model.at("large").first;
  const double small_seen = by_model.at("small").first;
  const double tiny_seen = by_model.at("tiny").first;
  const double large_unseen = by_model.at("large").second;

  const bool ordered = large_seen <= small_seen - size_gap_db &&
                       small_seen <= tiny_seen - size_gap_db;
  const double transfer_gap = large_unseen - large_seen;
  outcome o;
  o.pass = ordered && transfer_gap <= generalize_gap_db;
  o.detail = "seen at 128 bits: large " + fmt(large_seen, 2) + ", small " +
             fmt(small_seen, 2) + ", tiny " + fmt(tiny_seen, 2) +
             " dB (gaps >= " + fmt(size_gap_db, 1) + "); large unseen gap " +
             fmt(transfer_gap, 2) + " dB (limit " + fmt(generalize_gap_db, 1) + ")";
  return o;
}

// ---- c10 ------------------------------------------------------------------------

json prompt_ablation_spec() {
  return json{{"experiment", "prompt-ablation"},
              {"dataset", seen_dataset_json()},
              {"unseen_dataset", unseen_dataset_json()},
              {"train", attention_train_json()},
              {"model", "large"},
              {"n_bits", json::array({64, 128})},
              {"quant_bits", 4},
              {"out_csv", "c10_prompt_ablation.csv"}};
}

outcome check_prompt_gain(const fs::path& work) {
  run_spec(work, prompt_ablation_spec(), "c10");

  std::map<int, std::pair<double, double>> seen;  // n_bit -> (with, without)
  for (const auto& row : read_csv_rows(work / "experiments" / "c10_prompt_ablation.csv"))
    if (row.at(3) == "seen")
      seen[std::stoi(row.at(0))] = {std::stod(row.at(1)), std::stod(row.at(2))};

  const double gain64 = seen.at(64).second - seen.at(64).first;
  const double gain128 = seen.at(128).second - seen.at(128).first;
  outcome o;
  o.pass = gain64 >= prompt_gain_db && gain128 < gain64;
  o.detail = "prompt gain " + fmt(gain64, 2) + " dB at 64 bits (need >= " +
             fmt(prompt_gain_db, 1) + "), " + fmt(gain128, 2) +
             " dB at 128 bits (must shrink)";
  return o;
}

// ---- c11 ------------------------------------------------------------------------

json prompt_samples_spec() {
  return json{{"experiment", "prompt-samples"},
              {"dataset", seen_dataset_json()},
              {"train", attention_train_json()},
              {"model", "large"},
              {"n_bit", 64},
              {"quant_bits", 4},
              {"prompt_seed", 1},
              {"m", json::array({1, 2, 4, 8, 16, 32})},
              {"out_csv", "c11_prompt_samples.csv"}};
}

// Ensures the codec pair the sample sweep scores is already trained, so the
// timed portion of the criterion measures prompt pooling and evaluation only.
void warm_prompt_models(const fs::path& work) {
  const csifb::dataset_config dcfg = csifb::exp::dataset_from_json(
      seen_dataset_json(), csifb::dataset_config{});
  const csifb::train_config tcfg =
      csifb::exp::train_from_json(attention_train_json());
  csifb::feedback_config fb;
  fb.n_tx = dcfg.n_tx;
  fb.keep_rows = dcfg.resolved_keep_rows();
  fb.codeword_len = csifb::codeword_len_for_bits(64, 4);
  fb.quant_bits = 4;
  csifb::model_config with = csifb::model_config::attention_large(true);
  csifb::model_config without = csifb::model_config::attention_large(false);
  csifb::exp::artifact_store store(work / "experiments" / "cache");
  store.get_model(dcfg, with, fb, tcfg);
  store.get_model(dcfg, without, fb, tcfg);
}

outcome check_prompt_budget(const fs::path& work) {
  run_spec(work, prompt_samples_spec(), "c11");

  std::map<std::string, double> by_m;
  for (const auto& row : read_csv_rows(work / "experiments" / "c11_prompt_samples.csv"))
    by_m[row.at(0)] = std::stod(row.at(1));

  const double m32 = by_m.at("32");
  const double m1 = by_m.at("1");
  const double all = by_m.at("all");
  outcome o;
  o.pass = std::abs(m32 - all) <= prompt_budget_db && m1 > m32;
  o.detail = "m=32 " + fmt(m32, 2) + " dB vs all-samples " + fmt(all, 2) +
             " dB (within " + fmt(prompt_budget_db, 1) + "), m=1 " + fmt(m1, 2) +
             " dB (must be worse than m=32)";
  return o;
}

// ---- c12 ------------------------------------------------------------------------

outcome check_param_count(const fs::path&) {
  csifb::feedback_config fb;
  fb.n_tx = 32;
  fb.keep_rows = 32;
  fb.codeword_len = csifb::codeword_len_for_bits(128, 4);
  fb.quant_bits = 4;
  const csifb::model_params p =
      csifb::build_model(csifb::model_config::attention_large(), fb, 1);
  const std::size_t n = p.param_count();
  const double rel = std::abs(static_cast<double>(n) - static_cast<double>(large_param_count)) /
                     static_cast<double>(large_param_count);
  outcome o;
  o.pass = rel <= param_count_rel_tol && n == csifb::param_count_formula(p.cfg, fb);
  o.detail = "large preset at 128 bits: " + std::to_string(n) + " parameters (target " +
             std::to_string(large_param_count) + ", rel diff " + fmt_sci(rel) + ")";
  return o;
}

// ---- registry -------------------------------------------------------------------

const criterion criteria[] = {
    {"c01", "angular-delay transform preserves norms", 10.0, check_transform},
    {"c02", "channel matches scalar-loop reconstruction", 30.0, check_channel_oracle},
    {"c03", "quantizer round-trip, packing, pass-through gradient", 10.0, check_quantizer},
    {"c04", "gradients match central differences", 120.0, check_gradients},
    {"c05", "prompt pooling is partition invariant", 5.0, check_prompt_partition},
    {"c06", "nmse anchors at half and zero signal", 5.0, check_nmse_anchors},
    {"c07", "deeper residual codecs reconstruct better", 7200.0, check_depth_sweep},
    {"c08", "matched training beats general training", 10800.0, check_focus_sweep},
    {"c09", "capacity ordering and generalization gap", 28800.0, check_size_ordering},
    {"c10", "prompt helps most at tight bit budgets", 21600.0, check_prompt_gain},
    {"c11", "small prompt pools approach the reference", 600.0, check_prompt_budget},
    {"c12", "large preset parameter count", 1.0, check_param_count},
};

bool selected(const std::string& only, const char* id) {
  if (only.empty()) return true;
  std::stringstream ss(only);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    while (!tok.empty() && tok.front() == ' ') tok.erase(tok.begin());
    while (!tok.empty() && tok.back() == ' ') tok.pop_back();
    if (tok == id) return true;
    // accept c7 / 07 / 7 for c07
    std::string digits = tok;
    if (!digits.empty() && (digits[0] == 'c' || digits[0] == 'C')) digits.erase(0, 1);
    if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos &&
        std::stoi(digits) == std::stoi(id + 1))
      return true;
  }
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_work";
  std::string only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      only = argv[++i];
    } else if (a == "--list") {
      for (const auto& c : criteria)
        std::printf("%s  %s (budget %.0fs)\n", c.id, c.name, c.budget_s);
      return 0;
    } else {
      std::fprintf(stderr,
                   "usage: acceptance [--work-dir DIR] [--only c01,c07] [--list]\n");
      return 2;
    }
  }

  std::error_code ec;
  fs::create_directories(work, ec);

  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!selected(only, c.id)) continue;
    ++ran;

    // The sample-budget criterion is timed on a warm cache by contract: it
    // measures evaluation cost, not the training it piggybacks on.
    if (std::strcmp(c.id, "c11") == 0) {
      try {
        warm_prompt_models(work);
      } catch (const std::exception& e) {
        std::printf("FAIL %s %s: setup failed: %s\n", c.id, c.name, e.what());
        ++failed;
        continue;
      }
    }

    const auto t0 = std::chrono::steady_clock::now();
    outcome o;
    try {
      o = c.fn(work);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = elapsed <= c.budget_s;
    const bool pass = o.pass && in_budget;
    std::printf("%s %s %s: %s; %.1fs of %.0fs budget%s\n", pass ? "PASS" : "FAIL",
                c.id, c.name, o.detail.c_str(), elapsed, c.budget_s,
                in_budget ? "" : " EXCEEDED");
    std::fflush(stdout);
    if (!pass) ++failed;
  }

  if (ran == 0) {
    std::fprintf(stderr, "acceptance: nothing selected by --only '%s'\n", only.c_str());
    return 2;
  }
  std::printf("acceptance: %d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
