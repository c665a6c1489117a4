// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gta/attention.hpp"

namespace gta {

// Configuration of a global temporal attention block. With cross-channel
// multi-head mixing on, the head count equals the group count and C must be
// divisible by G. Region count 0 means "use the default C/8 (at least 1)".
struct GtaConfig {
  std::size_t groups = 8;
  std::size_t regions = 0;
  bool enable_pixel = true;
  bool enable_region = true;
  bool enable_ccmh = true;

  std::size_t heads() const { return enable_ccmh ? groups : 1; }
  std::size_t resolved_regions(std::size_t c) const {
    return regions > 0 ? regions : (c / 8 > 0 ? c / 8 : 1);
  }
  // Throws ConfigError listing every violation.
  void validate(std::size_t c) const;
};

// Temporal mixing by learned, input-independent T x T matrices on a pixel
// path and a region path, each followed by a zero-initialized output
// projection around a residual. Disabled paths allocate no parameters.
class GtaBlock : public Block {
 public:
  GtaBlock(const std::string& prefix, std::size_t c, std::size_t t,
           GtaConfig cfg, std::uint64_t seed, bool norm = false);

  Tensor forward(const Tensor& x, Tape* tape, AttentionCache* cache) override;
  void collect(std::vector<Parameter*>& out) override;
  std::string kind() const override { return "gta"; }
  std::string config_string() const override;

  // A_P = mix(V_P) before the output projection; x: (B, T, HW, C).
  Tensor pixel_path(const Tensor& x, Tape* tape);
  // A_R = G_R(t)^T mix(V_R) before the output projection; also yields the
  // per-frame region maps G_R: (B, T, K, HW) when `g_out` is non-null.
  Tensor region_path(const Tensor& x, Tape* tape, Tensor* g_out);

  const GtaConfig& config() const { return cfg_; }
  std::size_t channels() const { return c_; }
  std::size_t frames() const { return t_; }

  std::unique_ptr<Parameter> w_v_pixel, w_o_pixel;  // C x C
  std::unique_ptr<Parameter> w_v_region, w_o_region;
  std::unique_ptr<Parameter> w_g;                   // K x C
  std::unique_ptr<Parameter> m_pixel, m_region;     // (G, N_h, T, T), or (T, T) without CCMH
  std::unique_ptr<NormParams> norm;

 private:
  Tensor mix(const Tensor& v, Parameter& bank, Tape* tape) const;

  std::size_t c_, t_, k_;
  GtaConfig cfg_;
};

// Per-frame region transform: g_r = w_g x_t^T (K x HW), x_g = g_r x_t (K x C).
// x_t: (HW, C), w_g: (K, C).
std::pair<Tensor, Tensor> region_transform(const Tensor& x_t, const Tensor& w_g);

}  // namespace gta
