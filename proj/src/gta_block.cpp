// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "gta/gta_block.hpp"

#include <utility>

#include "gta/error.hpp"

namespace gta {

void GtaConfig::validate(std::size_t c) const {
  std::string problems;
  auto flag = [&problems](const std::string& p) {
    if (!problems.empty()) problems += "; ";
    problems += p;
  };
  if (groups == 0) flag("group count must be positive");
  if (!enable_pixel && !enable_region) flag("at least one of the pixel/region paths must be enabled");
  if (enable_ccmh && groups > 0) {
    if (c % groups != 0) {
      flag("channels " + std::to_string(c) + " not divisible by " +
           std::to_string(groups) + " groups");
    } else if (c / groups < 1) {
      flag("group width would be zero");
    }
  }
  if (!problems.empty()) throw ConfigError("gta config: " + problems);
}

namespace {

Tensor promote(const Tensor& x, bool& was_rank3) {
  if (x.rank() == 4) {
    was_rank3 = false;
    return x;
  }
  if (x.rank() == 3) {
    was_rank3 = true;
    std::vector<std::size_t> s = x.shape();
    s.insert(s.begin(), 1);
    return reshape(x, std::move(s));
  }
  throw DimensionError("gta block: input must be (B, T, HW, C) or (T, HW, C), got " +
                       shape_string(x.shape()));
}

Tensor demote(const Tensor& y, bool was_rank3) {
  if (!was_rank3) return y;
  std::vector<std::size_t> s(y.shape().begin() + 1, y.shape().end());
  return reshape(y, std::move(s));
}

std::unique_ptr<Parameter> weight(const std::string& name,
                                  std::vector<std::size_t> shape,
                                  std::uint64_t seed) {
  return std::make_unique<Parameter>(name, normal_init(shape, seed, name));
}

std::unique_ptr<Parameter> zeros(const std::string& name,
                                 std::vector<std::size_t> shape) {
  return std::make_unique<Parameter>(name, Tensor(std::move(shape)));
}

}  // namespace

GtaBlock::GtaBlock(const std::string& prefix, std::size_t c, std::size_t t,
                   GtaConfig cfg, std::uint64_t seed, bool with_norm)
    : c_(c), t_(t), k_(cfg.resolved_regions(c)), cfg_(cfg) {
  cfg_.validate(c);
  if (t_ == 0) throw ConfigError("gta config: frame count must be positive");
  const std::size_t g = cfg_.groups, nh = cfg_.heads();
  const std::vector<std::size_t> bank_shape =
      cfg_.enable_ccmh ? std::vector<std::size_t>{g, nh, t, t}
                       : std::vector<std::size_t>{t, t};
  if (cfg_.enable_pixel) {
    w_v_pixel = weight(prefix + ".w_v_pixel", {c, c}, seed);
    w_o_pixel = zeros(prefix + ".w_o_pixel", {c, c});
    m_pixel = weight(prefix + ".m_pixel", bank_shape, seed);
  }
  if (cfg_.enable_region) {
    w_g = weight(prefix + ".w_g", {k_, c}, seed);
    w_v_region = weight(prefix + ".w_v_region", {c, c}, seed);
    w_o_region = zeros(prefix + ".w_o_region", {c, c});
    m_region = weight(prefix + ".m_region", bank_shape, seed);
  }
  if (with_norm) norm = std::make_unique<NormParams>(prefix + ".norm", c);
}

Tensor GtaBlock::mix(const Tensor& v, Parameter& bank, Tape* tape) const {
  Tensor b = use_param(bank, tape);
  if (!cfg_.enable_ccmh) b = reshape(b, {1, 1, t_, t_});
  return ccmh_mix(v, b);
}

Tensor GtaBlock::pixel_path(const Tensor& x, Tape* tape) {
  Tensor v = linear_last(x, use_param(*w_v_pixel, tape));
  Tensor vp = permute_axes(v, {0, 2, 1, 3});  // (B, HW, T, C)
  Tensor mixed = mix(vp, *m_pixel, tape);
  return permute_axes(mixed, {0, 2, 1, 3});
}

Tensor GtaBlock::region_path(const Tensor& x, Tape* tape, Tensor* g_out) {
  Tensor wg = use_param(*w_g, tape);
  Tensor g = bmm_left(wg, transpose_last2(x));  // (B, T, K, HW)
  if (g_out) {
    *g_out = g;
    g_out->detach();
  }
  Tensor xg = bmm(g, x);  // (B, T, K, C)
  Tensor v = linear_last(xg, use_param(*w_v_region, tape));
  Tensor vr = permute_axes(v, {0, 2, 1, 3});  // (B, K, T, C)
  Tensor mixed = permute_axes(mix(vr, *m_region, tape), {0, 2, 1, 3});
  return bmm(transpose_last2(g), mixed);  // (B, T, HW, C)
}

Tensor GtaBlock::forward(const Tensor& x, Tape* tape, AttentionCache* cache) {
  bool r3 = false;
  Tensor x4 = promote(x, r3);
  if (x4.extent(1) != t_) {
    throw DimensionError("gta block: bank built for " + std::to_string(t_) +
                         " frames cannot mix shape " + shape_string(x4.shape()));
  }
  Tensor h = norm ? norm->apply(x4, tape) : x4;
  Tensor y = x4;
  if (cfg_.enable_pixel) {
    y = add(y, linear_last(pixel_path(h, tape), use_param(*w_o_pixel, tape)));
    if (cache) cache->put("mhat_p", m_pixel->value());
  }
  if (cfg_.enable_region) {
    Tensor g;
    y = add(y, linear_last(region_path(h, tape, cache ? &g : nullptr),
                           use_param(*w_o_region, tape)));
    if (cache) {
      cache->put("mhat_r", m_region->value());
      cache->put("gr", g);
    }
  }
  return demote(y, r3);
}

void GtaBlock::collect(std::vector<Parameter*>& out) {
  if (cfg_.enable_pixel) {
    out.push_back(w_v_pixel.get());
    out.push_back(w_o_pixel.get());
    out.push_back(m_pixel.get());
  }
  if (cfg_.enable_region) {
    out.push_back(w_g.get());
    out.push_back(w_v_region.get());
    out.push_back(w_o_region.get());
    out.push_back(m_region.get());
  }
  if (norm) norm->collect(out);
}

std::string GtaBlock::config_string() const {
  auto onoff = [](bool b) { return b ? std::string("on") : std::string("off"); };
  return "gta[g=" + std::to_string(cfg_.groups) + ",k=" + std::to_string(k_) +
         ",ccmh=" + onoff(cfg_.enable_ccmh) + ",pixel=" + onoff(cfg_.enable_pixel) +
         ",region=" + onoff(cfg_.enable_region) + "]";
}

std::pair<Tensor, Tensor> region_transform(const Tensor& x_t, const Tensor& w_g) {
  if (x_t.rank() != 2 || w_g.rank() != 2 || x_t.shape()[1] != w_g.shape()[1]) {
    throw DimensionError("region_transform: incompatible shapes " +
                         shape_string(x_t.shape()) + " and " +
                         shape_string(w_g.shape()));
  }
  Tensor g_r = matmul(w_g, transpose_last2(x_t));
  Tensor x_g = matmul(g_r, x_t);
  return {std::move(g_r), std::move(x_g)};
}

}  // namespace gta
