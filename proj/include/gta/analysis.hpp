// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gta/data.hpp"
#include "gta/model.hpp"

namespace gta {

// Counting conventions. One multiply-add = 2 flops, biases excluded, softmax
// costed at 4 flops per score element (max-subtract, exp, sum, divide) under
// both conventions; they differ in the widths they assume.
//
//  - Runtime: counts the blocks exactly as this library builds them
//    (full-width C x C projections). Parameter counts match the built model
//    registries.
//  - Paper: bottleneck accounting for published-figure comparisons — joint
//    attention at width C/2 with 2x2 key/value spatial subsampling, decoupled
//    spatial/temporal stages at width C/4, and the GTA row comprising a
//    spatial stage plus quarter-width pixel/region paths with the region
//    output projection counted in region space.
enum class CostConvention { Runtime, Paper };

std::string convention_name(CostConvention c);

struct BlockCost {
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
};

BlockCost count_block(BlockKind kind, std::size_t t, std::size_t h,
                      std::size_t w, std::size_t c, const GtaConfig& cfg,
                      CostConvention conv);

struct FlopRow {
  std::string kind;
  std::size_t t, h, w, c;
  std::string config;
  std::uint64_t flops;
  std::uint64_t params;
};

struct FlopReport {
  std::vector<FlopRow> rows;
  std::uint64_t total_flops = 0;
  std::uint64_t total_params = 0;
  CostConvention convention = CostConvention::Runtime;

  void add(FlopRow row);
  std::string to_csv() const;    // kind,T,H,W,C,config,flops,params
  std::string to_table() const;  // human-readable, with totals
};

// Report for a block plan at one geometry.
FlopReport report_plan(const std::vector<BlockSpec>& blocks, std::size_t t,
                       std::size_t h, std::size_t w, std::size_t c,
                       CostConvention conv);

// The published-figure comparison stack: five insertion points, two at
// C=512, HW=28x28 and three at C=1024, HW=14x14, all at T=8. Returns one
// aggregate row per mechanism (nl, dnl, gta) and site under the paper
// convention, copies folded into the flop and parameter columns.
FlopReport report_reference_stack();

// Writes one CSV per retained attention matrix for `sample` pushed through
// `model`, into `out_dir`:
//   block{i}_joint.csv              joint softmax (N x N)
//   block{i}_spatial_t{t}.csv       per-frame spatial softmax (HW x HW)
//   block{i}_temporal_pos{p}.csv    per-position temporal softmax (T x T)
//   block{i}_mhat_p.csv             raw pixel bank, rows = flattened leading axes
//   block{i}_mhat_r.csv             raw region bank
//   block{i}_gr_t{t}.csv            region map G_R(t) (K x HW)
// Returns the filenames written. Throws ContractError when the model retains
// nothing (empty block plan).
std::vector<std::string> dump_attention(Model& model, const VideoSample& sample,
                                        const std::string& out_dir);

}  // namespace gta
