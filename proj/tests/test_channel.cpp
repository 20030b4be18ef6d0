// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "csifb/channel.hpp"
#include "support/oracles.hpp"

using namespace csifb;
using Catch::Approx;

TEST_CASE("steering vector frozen values") {
  array_config arr;
  arr.n_tx = 8;

  SECTION("broadside gives all ones") {
    const auto a = steering_vector(0.0, arr);
    for (int k = 0; k < 8; ++k) {
      CHECK(a(k).real() == Approx(1.0).margin(1e-15));
      CHECK(a(k).imag() == Approx(0.0).margin(1e-15));
    }
  }
  SECTION("endfire alternates sign") {
    const auto a = steering_vector(pi / 2, arr);
    for (int k = 0; k < 8; ++k) {
      CHECK(a(k).real() == Approx(k % 2 == 0 ? 1.0 : -1.0).margin(1e-12));
      CHECK(a(k).imag() == Approx(0.0).margin(1e-12));
    }
  }
  SECTION("30 degrees steps by -pi/2 per element") {
    const auto a = steering_vector(pi / 6, arr);
    CHECK(a(1).real() == Approx(0.0).margin(1e-12));
    CHECK(a(1).imag() == Approx(-1.0).margin(1e-12));
    CHECK(a(2).real() == Approx(-1.0).margin(1e-12));
    CHECK(a(4).real() == Approx(1.0).margin(1e-12));
  }
  SECTION("unit modulus entries") {
    const auto a = steering_vector(0.7, arr);
    CHECK(a.squaredNorm() == Approx(8.0).epsilon(1e-14));
  }
  SECTION("rejects out-of-range angle") {
    CHECK_THROWS_AS(steering_vector(2.0, arr), std::invalid_argument);
    CHECK_THROWS_AS(steering_vector(-2.0, arr), std::invalid_argument);
  }
}

TEST_CASE("dft matrix frozen values and unitarity") {
  const auto f = dft_matrix(4);
  CHECK(f(0, 0).real() == Approx(0.5));
  CHECK(f(1, 1).real() == Approx(0.0).margin(1e-15));
  CHECK(f(1, 1).imag() == Approx(-0.5));
  CHECK(f(1, 2).real() == Approx(-0.5));
  CHECK(f(1, 3).imag() == Approx(0.5));
  CHECK(f(2, 2).real() == Approx(0.5));

  for (int n : {1, 2, 3, 8, 32, 64}) {
    const auto m = dft_matrix(n);
    const Eigen::MatrixXcd eye = m.adjoint() * m;
    const double err = (eye - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff();
    CHECK(err < 1e-12);
  }
  CHECK_THROWS_AS(dft_matrix(0), std::invalid_argument);
}

TEST_CASE("generated channel matches the term-by-term reference") {
  rng r(101);
  array_config arr;
  arr.n_tx = 16;

  SECTION("wideband") {
    system_config sys;
    sys.n_sub = 24;
    sys.bandwidth_hz = 10e6;
    for (int trial = 0; trial < 30; ++trial) {
      const auto ps = testsupport::random_path_set(r, 3, 4, sys);
      const auto h = generate_channel(ps, sys, arr);
      REQUIRE(h.m.rows() == 24);
      REQUIRE(h.m.cols() == 16);
      CHECK(h.domain == csi_domain::spatial_frequency);
      CHECK(testsupport::channel_rel_error(h, ps, sys, arr) < 1e-12);
    }
  }
  SECTION("narrowband drops the delay phase") {
    system_config sys;
    sys.n_sub = 1;
    for (int trial = 0; trial < 30; ++trial) {
      const auto ps = testsupport::random_path_set(r, 2, 5, sys);
      const auto h = generate_channel(ps, sys, arr);
      REQUIRE(h.m.rows() == 1);
      CHECK(testsupport::channel_rel_error(h, ps, sys, arr) < 1e-12);
    }
  }
  SECTION("empty path set is rejected") {
    system_config sys;
    path_set ps;
    CHECK_THROWS_AS(generate_channel(ps, sys, arr), std::invalid_argument);
  }
}

TEST_CASE("single path concentrates in one angular bin") {
  // sin(aod) = -0.25 with 32 half-wavelength elements lines up with angular
  // bin 4 exactly; all the energy lands there with magnitude sqrt(32).
  array_config arr;
  arr.n_tx = 32;
  system_config sys;
  sys.n_sub = 1;
  path_set ps;
  ps.clusters = 1;
  ps.subpaths_per_cluster = 1;
  ps.paths.push_back({1.0, 0.0, 0.0, std::asin(-0.25)});

  const auto ad = to_angular_delay(generate_channel(ps, sys, arr));
  CHECK(ad.domain == csi_domain::angular_delay);
  CHECK(std::abs(ad.m(0, 4)) == Approx(std::sqrt(32.0)).epsilon(1e-12));
  double off_peak = 0.0;
  for (int b = 0; b < 32; ++b)
    if (b != 4) off_peak += std::norm(ad.m(0, b));
  CHECK(off_peak < 1e-20 * 32.0);
}

TEST_CASE("integer delay bins concentrate in one delay row") {
  // tau * B = 5 puts all the energy in delay row 5; broadside aod puts the
  // angular energy in column 0. Peak magnitude is n_sub/sqrt(n_sub) *
  // sqrt(n_tx) = 8 * sqrt(8).
  array_config arr;
  arr.n_tx = 8;
  system_config sys;
  sys.n_sub = 64;
  sys.bandwidth_hz = 10e6;
  path_set ps;
  ps.clusters = 1;
  ps.subpaths_per_cluster = 1;
  ps.paths.push_back({1.0, 0.0, 5.0 / sys.bandwidth_hz, 0.0});

  const auto ad = to_angular_delay(generate_channel(ps, sys, arr));
  CHECK(std::abs(ad.m(5, 0)) == Approx(8.0 * std::sqrt(8.0)).epsilon(1e-12));
  double off_peak = 0.0;
  for (int i = 0; i < 64; ++i)
    for (int b = 0; b < 8; ++b)
      if (!(i == 5 && b == 0)) off_peak += std::norm(ad.m(i, b));
  CHECK(off_peak < 1e-18 * 512.0);

  SECTION("truncation keeps the low delay rows") {
    const auto tr = truncate_delay(ad, 32);
    CHECK(tr.domain == csi_domain::angular_delay_truncated);
    REQUIRE(tr.m.rows() == 32);
    REQUIRE(tr.m.cols() == 8);
    CHECK(std::abs(tr.m(5, 0)) == Approx(8.0 * std::sqrt(8.0)).epsilon(1e-12));
    CHECK(tr.m.squaredNorm() == Approx(ad.m.squaredNorm()).epsilon(1e-12));
  }
}

TEST_CASE("angular-delay transform preserves the Frobenius norm") {
  rng r(77);
  array_config arr;
  arr.n_tx = 32;
  system_config sys;
  sys.n_sub = 64;
  sys.bandwidth_hz = 10e6;
  for (int trial = 0; trial < 10; ++trial) {
    const auto ps = testsupport::random_path_set(r, 4, 10, sys);
    const auto h = generate_channel(ps, sys, arr);
    const auto ad = to_angular_delay(h);
    CHECK(ad.m.squaredNorm() == Approx(h.m.squaredNorm()).epsilon(1e-12));
  }
}

TEST_CASE("domain tags are enforced") {
  array_config arr;
  arr.n_tx = 4;
  system_config sys;
  sys.n_sub = 4;
  path_set ps;
  ps.clusters = 1;
  ps.subpaths_per_cluster = 1;
  ps.paths.push_back({1.0, 0.0, 0.0, 0.1});
  const auto h = generate_channel(ps, sys, arr);
  const auto ad = to_angular_delay(h);
  CHECK_THROWS_AS(to_angular_delay(ad), std::invalid_argument);
  CHECK_THROWS_AS(truncate_delay(h, 2), std::invalid_argument);
  CHECK_THROWS_AS(truncate_delay(ad, 0), std::invalid_argument);
  CHECK_THROWS_AS(truncate_delay(ad, 5), std::invalid_argument);
}

TEST_CASE("scenario sampling is deterministic and well-formed") {
  system_config sys;
  sys.n_sub = 64;
  sys.bandwidth_hz = 10e6;
  const auto cfg = scenario_config::defaults(regime_kind::specific, sys);
  CHECK(cfg.angle_spread_rad == Approx(2.0 * pi / 180.0));

  rng r1(9), r2(9);
  const auto s1 = sample_scenario(3, 4, cfg, r1);
  const auto s2 = sample_scenario(3, 4, cfg, r2);
  CHECK(s1.mean_aod_rad == s2.mean_aod_rad);
  CHECK(s1.mean_delay_s == s2.mean_delay_s);
  CHECK(s1.cluster_power == s2.cluster_power);
  CHECK(s1.id == 3);
  CHECK(s1.clusters() == 4);

  double sum = 0.0;
  for (double p : s1.cluster_power) {
    CHECK(p >= 0.0);
    sum += p;
  }
  CHECK(sum == Approx(1.0).epsilon(1e-12));
  for (double a : s1.mean_aod_rad) {
    CHECK(a >= -pi / 2);
    CHECK(a <= pi / 2);
  }
  for (double d : s1.mean_delay_s) {
    CHECK(d >= 0.0);
    CHECK(d <= cfg.max_mean_delay_s);
  }
}

TEST_CASE("path sampling keeps sub-paths near cluster means") {
  system_config sys;
  sys.n_sub = 1;
  auto cfg = scenario_config::defaults(regime_kind::specific, sys);
  rng r(21);
  const auto s = sample_scenario(0, 2, cfg, r);
  const auto ps = sample_path_params(s, 5, r);
  REQUIRE(ps.paths.size() == 10);
  for (int l = 0; l < 2; ++l)
    for (int p = 0; p < 5; ++p) {
      const auto& sp = ps.paths[static_cast<std::size_t>(l * 5 + p)];
      CHECK(std::abs(sp.aod_rad - s.mean_aod_rad[static_cast<std::size_t>(l)]) <=
            cfg.angle_spread_rad + 1e-12);
      CHECK(sp.gain >= 0.0);
      CHECK(sp.phase_rad >= 0.0);
      CHECK(sp.phase_rad < 2.0 * pi);
    }
}

TEST_CASE("expected total path power is one") {
  system_config sys;
  sys.n_sub = 1;
  const auto cfg = scenario_config::defaults(regime_kind::general, sys);
  rng r(33);
  double acc = 0.0;
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    const auto s = sample_scenario(0, 4, cfg, r);
    const auto ps = sample_path_params(s, 10, r);
    double g2 = 0.0;
    for (const auto& p : ps.paths) g2 += p.gain * p.gain;
    acc += g2;
  }
  CHECK(acc / trials == Approx(1.0).margin(0.05));
}

TEST_CASE("expected channel power per entry is one") {
  array_config arr;
  arr.n_tx = 8;
  system_config sys;
  sys.n_sub = 8;
  sys.bandwidth_hz = 10e6;
  const auto cfg = scenario_config::defaults(regime_kind::general, sys);
  rng r(55);
  double acc = 0.0;
  const int trials = 800;
  for (int t = 0; t < trials; ++t) {
    const auto s = sample_scenario(0, 3, cfg, r);
    const auto ps = sample_path_params(s, 5, r);
    const auto h = generate_channel(ps, sys, arr);
    acc += h.m.squaredNorm() / (8.0 * 8.0);
  }
  CHECK(acc / trials == Approx(1.0).margin(0.1));
}
