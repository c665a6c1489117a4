// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gta/tensor.hpp"

namespace gta {

// One synthetic clip: frames (T, H, W, 1) with values in [0, 1].
struct VideoSample {
  Tensor frames;
  std::size_t label = 0;
  std::string note;  // provenance: "<task>:<seed>:<index>" plus annotations
};

struct VideoDataset {
  std::string task;
  std::size_t t = 0, h = 0, w = 0;
  std::size_t classes = 2;
  std::uint64_t seed = 0;
  std::vector<VideoSample> samples;

  std::size_t size() const { return samples.size(); }
  std::vector<std::size_t> class_counts() const;
};

// A bright one-pixel marker crosses a random row left-to-right at a random
// integer speed and offset (class 0); class-1 clips are the frame reversals
// of fresh trajectories. Additive uniform noise of amplitude 0.05 everywhere.
// Per-frame marginals match across classes, so only temporal order separates
// them. Requires n even, T >= 2, W >= T.
VideoDataset gen_directional_dot(std::size_t n, std::size_t t, std::size_t h,
                                 std::size_t w, std::uint64_t seed);

// A fixed random texture progressively revealed by a shrinking occluder
// (class 0) or covered by a growing one (class 1 = reversal of a fresh
// reveal); occluder side is random per clip. Same noise model and
// preconditions (W >= T not required; needs T >= 2, n even).
VideoDataset gen_reveal_cover(std::size_t n, std::size_t t, std::size_t h,
                              std::size_t w, std::uint64_t seed);

VideoDataset generate_task(const std::string& task, std::size_t n,
                           std::size_t t, std::size_t h, std::size_t w,
                           std::uint64_t seed);

// Frames reordered by perm (new frame i = old frame perm[i]); label kept;
// provenance annotated. Throws ContractError unless perm is a permutation
// of 0..T-1.
VideoSample permute_time(const VideoSample& sample,
                         const std::vector<std::size_t>& perm);

// Stacks samples[first, first+count) into a (count, T, H, W, 1) batch plus
// labels.
struct Batch {
  Tensor videos;
  std::vector<std::size_t> labels;
};
Batch make_batch(const VideoDataset& ds, const std::vector<std::size_t>& order,
                 std::size_t first, std::size_t count);

// Container I/O (magic "GTADATA1"), bit-exact round trip.
void save_dataset(const VideoDataset& ds, const std::string& path);
VideoDataset load_dataset(const std::string& path);

}  // namespace gta
