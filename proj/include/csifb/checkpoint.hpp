// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "csifb/binio.hpp"
#include "csifb/models.hpp"

namespace csifb {

// Checkpoint: both configs plus every named tensor in build order, stored in
// double precision so a reloaded model evaluates bit-identically.
inline void save_model(const model_params& p, const std::string& path) {
  byte_writer w;
  w.magic("CSFM");
  w.u32(1);  // version
  w.u32(static_cast<std::uint32_t>(p.fb.n_tx));
  w.u32(static_cast<std::uint32_t>(p.fb.keep_rows));
  w.u32(static_cast<std::uint32_t>(p.fb.codeword_len));
  w.u32(static_cast<std::uint32_t>(p.fb.quant_bits));
  w.u8(static_cast<std::uint8_t>(p.cfg.family));
  w.u32(static_cast<std::uint32_t>(p.cfg.enc_blocks));
  w.u32(static_cast<std::uint32_t>(p.cfg.dec_blocks));
  w.u32(static_cast<std::uint32_t>(p.cfg.embed_dim));
  w.u32(static_cast<std::uint32_t>(p.cfg.heads));
  w.u8(static_cast<std::uint8_t>(p.cfg.ff_act));
  w.u8(p.cfg.with_prompt ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(p.cfg.res_blocks));
  w.u64(p.init_seed);
  w.u32(static_cast<std::uint32_t>(p.tensors.size()));
  for (const auto& nt : p.tensors) {
    w.str(nt.name);
    w.u32(static_cast<std::uint32_t>(nt.t.rank()));
    for (std::size_t d : nt.t.shape) w.u32(static_cast<std::uint32_t>(d));
    w.f64_array(nt.t.v.data(), nt.t.numel());
  }
  w.write_file(path);
}

inline model_params load_model(const std::string& path) {
  byte_reader r = byte_reader::from_file(path);
  r.expect_magic("CSFM", "model checkpoint");
  const auto version = r.u32();
  if (version != 1)
    throw std::runtime_error("model checkpoint: unsupported version " +
                             std::to_string(version));
  model_params p;
  p.fb.n_tx = static_cast<int>(r.u32());
  p.fb.keep_rows = static_cast<int>(r.u32());
  p.fb.codeword_len = static_cast<int>(r.u32());
  p.fb.quant_bits = static_cast<int>(r.u32());
  const auto family_raw = r.u8();
  if (family_raw > 1) throw std::runtime_error("model checkpoint: bad family tag");
  p.cfg.family = static_cast<model_family>(family_raw);
  p.cfg.enc_blocks = static_cast<int>(r.u32());
  p.cfg.dec_blocks = static_cast<int>(r.u32());
  p.cfg.embed_dim = static_cast<int>(r.u32());
  p.cfg.heads = static_cast<int>(r.u32());
  const auto act_raw = r.u8();
  if (act_raw > 1) throw std::runtime_error("model checkpoint: bad activation tag");
  p.cfg.ff_act = static_cast<activation>(act_raw);
  p.cfg.with_prompt = r.u8() != 0;
  p.cfg.res_blocks = static_cast<int>(r.u32());
  p.init_seed = r.u64();
  p.fb.validate();
  p.cfg.validate();

  const auto count = r.u32();
  p.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    named_tensor nt;
    nt.name = r.str();
    const auto rank = r.u32();
    if (rank < 1 || rank > 3) throw std::runtime_error("model checkpoint: bad tensor rank");
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = r.u32();
      if (d < 1) throw std::runtime_error("model checkpoint: bad tensor dimension");
      numel *= d;
    }
    nt.t = tensor(std::move(shape));
    r.f64_array(nt.t.v.data(), numel);
    p.tensors.push_back(std::move(nt));
  }
  if (r.remaining() != 0) throw std::runtime_error("model checkpoint: trailing bytes");

  // The tensor list must match what this build would create for the configs.
  const model_params fresh = build_model(p.cfg, p.fb, p.init_seed);
  if (fresh.tensors.size() != p.tensors.size())
    throw std::runtime_error("model checkpoint: tensor list does not match the configs");
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    if (fresh.tensors[i].name != p.tensors[i].name ||
        !(fresh.tensors[i].t.shape == p.tensors[i].t.shape))
      throw std::runtime_error("model checkpoint: tensor " + p.tensors[i].name +
                               " does not match the configs");
  }
  return p;
}

}  // namespace csifb
