// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace csifb {

// Uniform mid-rise quantizer on [-1, 1]: 2^b cells of width 2 / 2^b, values
// reconstructed at cell centers. Inputs outside the range clamp to the end
// cells, so the reconstruction error bound delta/2 holds on [-1, 1] only.

inline int quantizer_levels(int bits) {
  if (bits < 1 || bits > 16)
    throw std::invalid_argument("quantizer: bits must be in [1, 16]");
  return 1 << bits;
}

inline double quantizer_step(int bits) { return 2.0 / quantizer_levels(bits); }

inline std::uint16_t quantize_index(double v, int bits) {
  const int levels = quantizer_levels(bits);
  const double step = 2.0 / levels;
  const double idx = std::floor((v + 1.0) / step);
  if (idx < 0.0) return 0;
  if (idx > levels - 1) return static_cast<std::uint16_t>(levels - 1);
  return static_cast<std::uint16_t>(idx);
}

inline double dequantize_index(std::uint16_t idx, int bits) {
  const int levels = quantizer_levels(bits);
  if (idx >= levels) throw std::invalid_argument("quantizer: index out of range");
  return -1.0 + (idx + 0.5) * (2.0 / levels);
}

// Quantize-then-reconstruct in one step; the straight-through node in the
// autodiff graph applies exactly this map elementwise.
inline double quantize_value(double v, int bits) {
  return dequantize_index(quantize_index(v, bits), bits);
}

struct codeword {
  int bits_per_value = 0;
  std::vector<std::uint16_t> levels;
};

template <class Alloc>
inline codeword quantize(const std::vector<double, Alloc>& v, int bits) {
  quantizer_levels(bits);
  codeword c;
  c.bits_per_value = bits;
  c.levels.reserve(v.size());
  for (double x : v) c.levels.push_back(quantize_index(x, bits));
  return c;
}

inline std::vector<double> dequantize(const codeword& c) {
  std::vector<double> out;
  out.reserve(c.levels.size());
  for (auto idx : c.levels) out.push_back(dequantize_index(idx, c.bits_per_value));
  return out;
}

// Fixed-width big-endian packing: each level contributes bits_per_value bits
// MSB first; the final byte is zero-padded. This is the over-the-air layout,
// so it is part of the format contract.
inline std::vector<std::uint8_t> pack_bits(const codeword& c) {
  const int b = c.bits_per_value;
  quantizer_levels(b);
  std::vector<std::uint8_t> out((c.levels.size() * static_cast<std::size_t>(b) + 7) / 8, 0);
  std::size_t bitpos = 0;
  for (auto lv : c.levels) {
    if (lv >= (1u << b)) throw std::invalid_argument("pack_bits: level exceeds bit width");
    for (int k = b - 1; k >= 0; --k) {
      if ((lv >> k) & 1u) out[bitpos / 8] |= static_cast<std::uint8_t>(0x80u >> (bitpos % 8));
      ++bitpos;
    }
  }
  return out;
}

inline codeword unpack_bits(const std::vector<std::uint8_t>& bytes,
                            std::size_t count, int bits) {
  quantizer_levels(bits);
  const std::size_t need = (count * static_cast<std::size_t>(bits) + 7) / 8;
  if (bytes.size() != need)
    throw std::invalid_argument("unpack_bits: byte length does not match count and width");
  codeword c;
  c.bits_per_value = bits;
  c.levels.reserve(count);
  std::size_t bitpos = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint16_t lv = 0;
    for (int k = 0; k < bits; ++k) {
      lv = static_cast<std::uint16_t>(lv << 1);
      if (bytes[bitpos / 8] & (0x80u >> (bitpos % 8))) lv |= 1u;
      ++bitpos;
    }
    c.levels.push_back(lv);
  }
  // Pad bits after the last value must be zero; anything else signals a
  // framing mismatch between sender and receiver.
  while (bitpos < bytes.size() * 8) {
    if (bytes[bitpos / 8] & (0x80u >> (bitpos % 8)))
      throw std::invalid_argument("unpack_bits: nonzero padding bits");
    ++bitpos;
  }
  return c;
}

}  // namespace csifb
