// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "gta/attention.hpp"

#include <cmath>
#include <utility>

#include "gta/error.hpp"
#include "gta/rng.hpp"

namespace gta {

Tensor normal_init(const std::vector<std::size_t>& shape, std::uint64_t seed,
                   const std::string& name, double sigma) {
  Rng rng(mix_seed(seed, name));
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal(0.0, sigma);
  return t;
}

Tensor use_param(Parameter& p, Tape* tape) {
  if (tape) return tape->watch(p);
  Tensor v = p.value();
  v.detach();
  return v;
}

ProjectionSet::ProjectionSet(const std::string& prefix, std::size_t c,
                             std::uint64_t seed)
    : w_q(prefix + ".w_q", normal_init({c, c}, seed, prefix + ".w_q")),
      w_k(prefix + ".w_k", normal_init({c, c}, seed, prefix + ".w_k")),
      w_v(prefix + ".w_v", normal_init({c, c}, seed, prefix + ".w_v")),
      w_o(prefix + ".w_o", Tensor({c, c})) {}

void ProjectionSet::collect(std::vector<Parameter*>& out) {
  out.push_back(&w_q);
  out.push_back(&w_k);
  out.push_back(&w_v);
  out.push_back(&w_o);
}

namespace {

Tensor sinusoidal_table(std::size_t t_max, std::size_t c) {
  Tensor e({t_max, c});
  for (std::size_t t = 0; t < t_max; ++t) {
    for (std::size_t j = 0; j < c; ++j) {
      const double exponent = static_cast<double>(2 * (j / 2)) /
                              static_cast<double>(c);
      const double angle =
          static_cast<double>(t) / std::pow(10000.0, exponent);
      e.data()[t * c + j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return e;
}

}  // namespace

TemporalPositionalEmbedding::TemporalPositionalEmbedding(
    const std::string& prefix, std::size_t t_max, std::size_t c,
    std::uint64_t seed, bool sinusoidal)
    : e(prefix + ".e",
        sinusoidal ? sinusoidal_table(t_max, c)
                   : normal_init({t_max, c}, seed, prefix + ".e"),
        /*trainable=*/!sinusoidal) {}

void TemporalPositionalEmbedding::collect(std::vector<Parameter*>& out) {
  out.push_back(&e);
}

NormParams::NormParams(const std::string& prefix, std::size_t c)
    : gamma(prefix + ".gamma", Tensor::full({c}, 1.0)),
      beta(prefix + ".beta", Tensor({c})) {}

void NormParams::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

Tensor NormParams::apply(const Tensor& x, Tape* tape) {
  return layer_norm(x, use_param(gamma, tape), use_param(beta, tape));
}

void AttentionCache::put(std::string role, const Tensor& value) {
  Tensor v = value;
  v.detach();
  records.push_back({current_block, std::move(role), std::move(v)});
}

const AttentionRecord* AttentionCache::find(std::size_t block,
                                            const std::string& role) const {
  for (const AttentionRecord& r : records) {
    if (r.block == block && r.role == role) return &r;
  }
  return nullptr;
}

AttentionOutput scaled_dot_attention(const Tensor& q, const Tensor& k,
                                     const Tensor& v) {
  if (q.rank() < 2 || q.shape().back() == 0) {
    throw DimensionError("scaled_dot_attention: needs (..., n, C) with C >= 1, got " +
                         shape_string(q.shape()));
  }
  const double c = static_cast<double>(q.shape().back());
  Tensor scores = scale(bmm(q, transpose_last2(k)), 1.0 / std::sqrt(c));
  Tensor weights = softmax_last(scores);
  return {bmm(weights, v), std::move(weights)};
}

namespace {

// Blocks compute on (B, T, HW, C); rank-3 inputs ride along with B = 1.
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
  throw DimensionError("attention block: input must be (B, T, HW, C) or (T, HW, C), got " +
                       shape_string(x.shape()));
}

Tensor demote(const Tensor& y, bool was_rank3) {
  if (!was_rank3) return y;
  std::vector<std::size_t> s(y.shape().begin() + 1, y.shape().end());
  return reshape(y, std::move(s));
}

std::unique_ptr<NormParams> make_norm(bool enabled, const std::string& prefix,
                                      std::size_t c) {
  return enabled ? std::make_unique<NormParams>(prefix + ".norm", c) : nullptr;
}

}  // namespace

NlBlock::NlBlock(const std::string& prefix, std::size_t c, std::uint64_t seed,
                 bool with_norm)
    : proj(prefix, c, seed), norm(make_norm(with_norm, prefix, c)) {}

Tensor NlBlock::forward(const Tensor& x, Tape* tape, AttentionCache* cache) {
  bool r3 = false;
  Tensor x4 = promote(x, r3);
  const std::size_t b = x4.extent(0), t = x4.extent(1), hw = x4.extent(2),
                    c = x4.extent(3);
  Tensor h = norm ? norm->apply(x4, tape) : x4;
  Tensor flat = reshape(h, {b, t * hw, c});
  AttentionOutput att = scaled_dot_attention(linear_last(flat, use_param(proj.w_q, tape)),
                                             linear_last(flat, use_param(proj.w_k, tape)),
                                             linear_last(flat, use_param(proj.w_v, tape)));
  if (cache) cache->put("joint", att.weights);
  Tensor projected = linear_last(att.output, use_param(proj.w_o, tape));
  Tensor y = add(x4, reshape(projected, {b, t, hw, c}));
  return demote(y, r3);
}

void NlBlock::collect(std::vector<Parameter*>& out) {
  proj.collect(out);
  if (norm) norm->collect(out);
}

std::string NlBlock::config_string() const { return "nl"; }

SpatialBlock::SpatialBlock(const std::string& prefix, std::size_t c,
                           std::uint64_t seed, bool with_norm)
    : proj(prefix, c, seed), norm(make_norm(with_norm, prefix, c)) {}

Tensor SpatialBlock::forward(const Tensor& x, Tape* tape, AttentionCache* cache) {
  bool r3 = false;
  Tensor x4 = promote(x, r3);
  Tensor h = norm ? norm->apply(x4, tape) : x4;
  AttentionOutput att = scaled_dot_attention(linear_last(h, use_param(proj.w_q, tape)),
                                             linear_last(h, use_param(proj.w_k, tape)),
                                             linear_last(h, use_param(proj.w_v, tape)));
  if (cache) cache->put("spatial", att.weights);
  Tensor y = add(x4, linear_last(att.output, use_param(proj.w_o, tape)));
  return demote(y, r3);
}

void SpatialBlock::collect(std::vector<Parameter*>& out) {
  proj.collect(out);
  if (norm) norm->collect(out);
}

std::string SpatialBlock::config_string() const { return "sa"; }

TemporalBlock::TemporalBlock(const std::string& prefix, std::size_t c,
                             std::uint64_t seed, std::size_t t_max,
                             bool with_norm, bool sinusoidal)
    : proj(prefix, c, seed),
      pe(t_max > 0 ? std::make_unique<TemporalPositionalEmbedding>(
                         prefix + ".pe", t_max, c, seed, sinusoidal)
                   : nullptr),
      norm(make_norm(with_norm, prefix, c)) {}

Tensor TemporalBlock::forward(const Tensor& x, Tape* tape, AttentionCache* cache) {
  bool r3 = false;
  Tensor x4 = promote(x, r3);
  const std::size_t t = x4.extent(1);
  Tensor h = norm ? norm->apply(x4, tape) : x4;
  if (pe) {
    const std::size_t t_max = pe->e.value().extent(0);
    if (t > t_max) {
      throw DimensionError("temporal block: " + std::to_string(t) +
                           " frames exceed embedding capacity " +
                           std::to_string(t_max));
    }
    Tensor table = use_param(pe->e, tape);
    h = add_frame_embedding(h, t == t_max ? table : take_rows(table, 0, t));
  }
  // (B, T, HW, C) -> (B, HW, T, C): positions become the batch, frames the
  // sequence.
  Tensor hp = permute_axes(h, {0, 2, 1, 3});
  AttentionOutput att = scaled_dot_attention(linear_last(hp, use_param(proj.w_q, tape)),
                                             linear_last(hp, use_param(proj.w_k, tape)),
                                             linear_last(hp, use_param(proj.w_v, tape)));
  if (cache) cache->put("temporal", att.weights);
  Tensor projected = linear_last(att.output, use_param(proj.w_o, tape));
  Tensor y = add(x4, permute_axes(projected, {0, 2, 1, 3}));
  return demote(y, r3);
}

void TemporalBlock::collect(std::vector<Parameter*>& out) {
  proj.collect(out);
  if (pe) pe->collect(out);
  if (norm) norm->collect(out);
}

std::string TemporalBlock::config_string() const {
  if (!pe) return "ta";
  return pe->e.trainable() ? "tape" : "tape[sin=on]";
}

DnlBlock::DnlBlock(const std::string& prefix, std::size_t c, std::uint64_t seed,
                   bool with_norm)
    : spatial(prefix + ".spatial", c, seed, with_norm),
      temporal(prefix + ".temporal", c, seed, 0, with_norm) {}

Tensor DnlBlock::forward(const Tensor& x, Tape* tape, AttentionCache* cache) {
  return temporal.forward(spatial.forward(x, tape, cache), tape, cache);
}

void DnlBlock::collect(std::vector<Parameter*>& out) {
  spatial.collect(out);
  temporal.collect(out);
}

std::string DnlBlock::config_string() const { return "dnl"; }

}  // namespace gta
