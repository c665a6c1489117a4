// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gta/attention.hpp"
#include "gta/gta_block.hpp"

namespace gta {

enum class BlockKind { Nl, Sa, Ta, Tape, Dnl, Gta };

std::string block_kind_name(BlockKind k);

struct BlockSpec {
  BlockKind kind = BlockKind::Sa;
  GtaConfig gta;           // meaningful for BlockKind::Gta only
  bool sinusoidal = false; // tape[sin=on]
};

// Plan mini-language: comma-separated kinds with bracketed options, e.g.
//   "sa,gta[g=8,k=4,ccmh=on]"
// Kinds: nl, sa, ta, tape, dnl, gta. GTA options: g=<int>, k=<int>,
// ccmh=on|off, pixel=on|off, region=on|off. TAPE option: sin=on|off.
std::vector<BlockSpec> parse_block_plan(const std::string& plan);
std::string format_block_plan(const std::vector<BlockSpec>& blocks);

struct ModelSpec {
  std::size_t t = 8;
  std::size_t h = 16;
  std::size_t w = 16;
  std::size_t c_in = 1;
  std::size_t patch = 4;
  std::size_t channels = 24;
  std::size_t classes = 2;
  bool stem_bias = true;
  bool norm = false;  // pre-attention standardization inside every block
  std::uint64_t seed = 1;
  std::vector<BlockSpec> blocks;

  std::size_t tokens() const { return (h / patch) * (w / patch); }
  // Throws ConfigError listing every violation.
  void validate() const;

  std::vector<std::pair<std::string, std::string>> to_kv() const;
  static ModelSpec from_kv(
      const std::vector<std::pair<std::string, std::string>>& kv);
};

// A stem that patchifies and linearly embeds each frame, an ordered stack of
// attention blocks, mean pooling over time and space, and a linear head.
class Model {
 public:
  explicit Model(ModelSpec spec);

  // video: (B, T, H, W, c_in) -> logits (B, classes).
  Tensor forward(const Tensor& video, Tape* tape,
                 AttentionCache* cache = nullptr);

  // Registry in construction order; names are unique.
  const std::vector<Parameter*>& params() const { return registry_; }
  Parameter* find_param(const std::string& name) const;

  const ModelSpec& spec() const { return spec_; }
  std::vector<Block*> blocks() const;

  void save_checkpoint(const std::string& path) const;
  static Model load_checkpoint(const std::string& path);
  // Loads values into an already-built model; the file's spec and parameter
  // names must match exactly.
  void load_checkpoint_into(const std::string& path);

 private:
  // All parameters live on the heap so registry pointers survive moves.
  ModelSpec spec_;
  std::unique_ptr<Parameter> stem_w_, stem_b_;
  std::unique_ptr<Parameter> head_w_, head_b_;
  std::vector<std::unique_ptr<Block>> blocks_;
  std::vector<Parameter*> registry_;
};

}  // namespace gta
