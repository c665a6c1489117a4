// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gta/ops.hpp"
#include "gta/tape.hpp"
#include "gta/tensor.hpp"

namespace gta {

// Draws a fresh parameter value from a stream derived from (seed, name), so
// every parameter owns an independent, plan-order-insensitive init stream.
Tensor normal_init(const std::vector<std::size_t>& shape, std::uint64_t seed,
                   const std::string& name, double sigma = 0.02);

// The parameter's current value, tracked on `tape` when one is given.
Tensor use_param(Parameter& p, Tape* tape);

// Query/key/value/output projections, all C x C. The output projection starts
// at zero so a fresh block is an exact identity through its residual.
struct ProjectionSet {
  Parameter w_q, w_k, w_v, w_o;

  ProjectionSet(const std::string& prefix, std::size_t c, std::uint64_t seed);
  void collect(std::vector<Parameter*>& out);
};

// Learned additive per-timestep embedding, one row per frame. A sinusoidal
// (frozen) table is available behind a flag.
struct TemporalPositionalEmbedding {
  Parameter e;  // (t_max, C)

  TemporalPositionalEmbedding(const std::string& prefix, std::size_t t_max,
                              std::size_t c, std::uint64_t seed,
                              bool sinusoidal = false);
  void collect(std::vector<Parameter*>& out);
};

// Channel standardization with learned scale/shift, used as an optional
// pre-attention transform (residual path stays untouched).
struct NormParams {
  Parameter gamma, beta;

  NormParams(const std::string& prefix, std::size_t c);
  void collect(std::vector<Parameter*>& out);
  Tensor apply(const Tensor& x, Tape* tape);
};

// Attention matrices retained from one forward pass, keyed by the block that
// produced them. Retention is opt-in: blocks record only when a cache is
// passed down.
struct AttentionRecord {
  std::size_t block;
  std::string role;  // "joint" | "spatial" | "temporal" | "mhat_p" | "mhat_r" | "gr"
  Tensor value;      // detached copy, leading batch axes preserved
};

struct AttentionCache {
  std::size_t current_block = 0;
  std::vector<AttentionRecord> records;

  void put(std::string role, const Tensor& value);
  const AttentionRecord* find(std::size_t block, const std::string& role) const;
};

struct AttentionOutput {
  Tensor output;
  Tensor weights;  // row-stochastic attention matrix
};

// softmax(q kT / sqrt(C)) v over the last two axes; q, k, v: (..., n, C).
AttentionOutput scaled_dot_attention(const Tensor& q, const Tensor& k,
                                     const Tensor& v);

// Common interface for every block in a model plan. Inputs are feature maps
// shaped (B, T, HW, C); rank-3 (T, HW, C) inputs are accepted and returned
// rank-3. forward() is pure given parameter values and may run concurrently
// on distinct tapes.
class Block {
 public:
  virtual ~Block() = default;
  virtual Tensor forward(const Tensor& x, Tape* tape, AttentionCache* cache) = 0;
  virtual void collect(std::vector<Parameter*>& out) = 0;
  virtual std::string kind() const = 0;
  // Canonical plan-language form, e.g. "gta[g=8,k=4,ccmh=on]".
  virtual std::string config_string() const = 0;
};

// Joint attention over all T*HW positions flattened together.
class NlBlock : public Block {
 public:
  NlBlock(const std::string& prefix, std::size_t c, std::uint64_t seed,
          bool norm = false);
  Tensor forward(const Tensor& x, Tape* tape, AttentionCache* cache) override;
  void collect(std::vector<Parameter*>& out) override;
  std::string kind() const override { return "nl"; }
  std::string config_string() const override;

  ProjectionSet proj;
  std::unique_ptr<NormParams> norm;
};

// Per-frame attention over spatial positions; frames never interact.
class SpatialBlock : public Block {
 public:
  SpatialBlock(const std::string& prefix, std::size_t c, std::uint64_t seed,
               bool norm = false);
  Tensor forward(const Tensor& x, Tape* tape, AttentionCache* cache) override;
  void collect(std::vector<Parameter*>& out) override;
  std::string kind() const override { return "sa"; }
  std::string config_string() const override;

  ProjectionSet proj;
  std::unique_ptr<NormParams> norm;
};

// Per-position attention across frames. With an embedding the q/k/v inputs
// are offset by e[t]; the residual path never sees the embedding.
class TemporalBlock : public Block {
 public:
  TemporalBlock(const std::string& prefix, std::size_t c, std::uint64_t seed,
                std::size_t t_max = 0, bool norm = false,
                bool sinusoidal = false);
  Tensor forward(const Tensor& x, Tape* tape, AttentionCache* cache) override;
  void collect(std::vector<Parameter*>& out) override;
  std::string kind() const override { return pe ? "tape" : "ta"; }
  std::string config_string() const override;

  ProjectionSet proj;
  std::unique_ptr<TemporalPositionalEmbedding> pe;
  std::unique_ptr<NormParams> norm;
};

// Spatial stage followed by a temporal stage with its own projections.
class DnlBlock : public Block {
 public:
  DnlBlock(const std::string& prefix, std::size_t c, std::uint64_t seed,
           bool norm = false);
  Tensor forward(const Tensor& x, Tape* tape, AttentionCache* cache) override;
  void collect(std::vector<Parameter*>& out) override;
  std::string kind() const override { return "dnl"; }
  std::string config_string() const override;

  SpatialBlock spatial;
  TemporalBlock temporal;
};

}  // namespace gta
