// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "gta/data.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "gta/error.hpp"
#include "gta/rng.hpp"
#include "gta/serialize.hpp"

namespace gta {

namespace {

constexpr double kNoiseAmplitude = 0.05;

void check_geometry(const char* task, std::size_t n, std::size_t t,
                    std::size_t h, std::size_t w, bool need_w_ge_t) {
  std::string problems;
  auto flag = [&problems](const std::string& p) {
    if (!problems.empty()) problems += "; ";
    problems += p;
  };
  if (n == 0 || n % 2 != 0) flag("sample count must be even and positive (exact class balance)");
  if (t < 2) flag("need at least two frames");
  if (h == 0 || w == 0) flag("frame geometry must be positive");
  if (need_w_ge_t && w < t) flag("need width >= frame count for distinct marker positions");
  if (!problems.empty()) {
    throw ConfigError(std::string(task) + ": " + problems);
  }
}

std::string provenance(const std::string& task, std::uint64_t seed,
                       std::size_t index) {
  return task + ":" + std::to_string(seed) + ":" + std::to_string(index);
}

void reverse_frames(Tensor& frames) {
  const std::size_t t = frames.extent(0);
  const std::size_t stride = frames.size() / t;
  for (std::size_t a = 0, b = t - 1; a < b; ++a, --b) {
    std::swap_ranges(frames.data() + a * stride, frames.data() + (a + 1) * stride,
                     frames.data() + b * stride);
  }
}

}  // namespace

std::vector<std::size_t> VideoDataset::class_counts() const {
  std::vector<std::size_t> counts(classes, 0);
  for (const VideoSample& s : samples) {
    if (s.label >= classes) throw ContractError("dataset: label out of range");
    ++counts[s.label];
  }
  return counts;
}

VideoDataset gen_directional_dot(std::size_t n, std::size_t t, std::size_t h,
                                 std::size_t w, std::uint64_t seed) {
  check_geometry("directional-dot", n, t, h, w, /*need_w_ge_t=*/true);
  VideoDataset ds;
  ds.task = "directional-dot";
  ds.t = t;
  ds.h = h;
  ds.w = w;
  ds.classes = 2;
  ds.seed = seed;
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    const std::size_t label = i % 2;
    const std::size_t row = rng.uniform_int(h);
    const std::size_t v_max = (w - 1) / (t - 1);
    const std::size_t speed = 1 + rng.uniform_int(v_max);
    const std::size_t span = speed * (t - 1);
    const std::size_t x0 = rng.uniform_int(w - span);
    Tensor frames({t, h, w, 1});
    for (std::size_t i2 = 0; i2 < frames.size(); ++i2) {
      frames.data()[i2] = kNoiseAmplitude * rng.uniform();
    }
    for (std::size_t f = 0; f < t; ++f) {
      frames.data()[(f * h + row) * w + x0 + speed * f] = 1.0;
    }
    if (label == 1) reverse_frames(frames);
    ds.samples.push_back(
        {std::move(frames), label, provenance(ds.task, seed, i)});
  }
  return ds;
}

VideoDataset gen_reveal_cover(std::size_t n, std::size_t t, std::size_t h,
                              std::size_t w, std::uint64_t seed) {
  check_geometry("reveal-cover", n, t, h, w, /*need_w_ge_t=*/false);
  VideoDataset ds;
  ds.task = "reveal-cover";
  ds.t = t;
  ds.h = h;
  ds.w = w;
  ds.classes = 2;
  ds.seed = seed;
  ds.samples.reserve(n);
  const double f_start = 0.75, f_end = 0.10;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    const std::size_t label = i % 2;
    const std::size_t side = rng.uniform_int(4);  // left/right/top/bottom
    Tensor texture({h, w});
    for (std::size_t p = 0; p < texture.size(); ++p) {
      texture.data()[p] = 0.3 + 0.65 * rng.uniform();
    }
    Tensor frames({t, h, w, 1});
    for (std::size_t f = 0; f < t; ++f) {
      const double frac =
          f_start + (f_end - f_start) * static_cast<double>(f) /
                        static_cast<double>(t - 1);
      const std::size_t cov_w = static_cast<std::size_t>(
          std::lround(frac * static_cast<double>(w)));
      const std::size_t cov_h = static_cast<std::size_t>(
          std::lround(frac * static_cast<double>(h)));
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          bool covered = false;
          switch (side) {
            case 0: covered = x < cov_w; break;
            case 1: covered = x >= w - cov_w; break;
            case 2: covered = y < cov_h; break;
            default: covered = y >= h - cov_h; break;
          }
          frames.data()[(f * h + y) * w + x] =
              covered ? 0.0 : texture.data()[y * w + x];
        }
      }
    }
    for (std::size_t p = 0; p < frames.size(); ++p) {
      frames.data()[p] += kNoiseAmplitude * rng.uniform();
    }
    if (label == 1) reverse_frames(frames);
    ds.samples.push_back(
        {std::move(frames), label, provenance(ds.task, seed, i)});
  }
  return ds;
}

VideoDataset generate_task(const std::string& task, std::size_t n,
                           std::size_t t, std::size_t h, std::size_t w,
                           std::uint64_t seed) {
  if (task == "directional-dot") return gen_directional_dot(n, t, h, w, seed);
  if (task == "reveal-cover") return gen_reveal_cover(n, t, h, w, seed);
  throw ConfigError("unknown task '" + task +
                    "' (expected directional-dot or reveal-cover)");
}

VideoSample permute_time(const VideoSample& sample,
                         const std::vector<std::size_t>& perm) {
  const std::size_t t = sample.frames.extent(0);
  std::vector<char> seen(t, 0);
  bool valid = perm.size() == t;
  for (std::size_t i = 0; valid && i < t; ++i) {
    if (perm[i] >= t || seen[perm[i]]) valid = false;
    else seen[perm[i]] = 1;
  }
  if (!valid) {
    throw ContractError("permute_time: not a permutation of 0.." +
                        std::to_string(t ? t - 1 : 0));
  }
  const std::size_t stride = sample.frames.size() / t;
  Tensor frames(sample.frames.shape());
  for (std::size_t i = 0; i < t; ++i) {
    std::copy_n(sample.frames.data() + perm[i] * stride, stride,
                frames.data() + i * stride);
  }
  std::string note = sample.note + ";perm";
  return {std::move(frames), sample.label, std::move(note)};
}

Batch make_batch(const VideoDataset& ds, const std::vector<std::size_t>& order,
                 std::size_t first, std::size_t count) {
  if (first + count > order.size()) {
    throw ContractError("make_batch: range exceeds order list");
  }
  if (count == 0) throw ContractError("make_batch: empty batch");
  const Tensor& head = ds.samples.at(order[first]).frames;
  std::vector<std::size_t> shape = head.shape();
  shape.insert(shape.begin(), count);
  Batch batch{Tensor(std::move(shape)), {}};
  batch.labels.reserve(count);
  const std::size_t stride = head.size();
  for (std::size_t i = 0; i < count; ++i) {
    const VideoSample& s = ds.samples.at(order[first + i]);
    if (s.frames.size() != stride || s.frames.shape() != head.shape()) {
      throw DimensionError("make_batch: ragged sample shapes " +
                           shape_string(s.frames.shape()) + " vs " +
                           shape_string(head.shape()));
    }
    std::copy_n(s.frames.data(), stride, batch.videos.data() + i * stride);
    batch.labels.push_back(s.label);
  }
  return batch;
}

namespace {
constexpr char kDatasetMagic[9] = "GTADATA1";
}

void save_dataset(const VideoDataset& ds, const std::string& path) {
  ByteWriter w;
  w.magic(kDatasetMagic);
  w.str(encode_kv({{"task", ds.task},
                   {"t", std::to_string(ds.t)},
                   {"h", std::to_string(ds.h)},
                   {"w", std::to_string(ds.w)},
                   {"classes", std::to_string(ds.classes)},
                   {"seed", std::to_string(ds.seed)}}));
  w.u64(ds.samples.size());
  for (const VideoSample& s : ds.samples) {
    w.u32(static_cast<std::uint32_t>(s.label));
    w.tensor(s.frames);
  }
  w.seal();
  w.save(path);
}

VideoDataset load_dataset(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  r.magic(kDatasetMagic);
  const KvPairs kv = decode_kv(r.str());
  VideoDataset ds;
  ds.task = kv_get(kv, "task");
  ds.t = kv_get_u64(kv, "t");
  ds.h = kv_get_u64(kv, "h");
  ds.w = kv_get_u64(kv, "w");
  ds.classes = kv_get_u64(kv, "classes");
  ds.seed = kv_get_u64(kv, "seed");
  const std::uint64_t n = r.u64();
  ds.samples.reserve(n);
  const std::vector<std::size_t> want{ds.t, ds.h, ds.w, 1};
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint32_t label = r.u32();
    Tensor frames = r.tensor();
    if (frames.shape() != want) {
      r.fail("sample " + std::to_string(i) + " has shape " +
             shape_string(frames.shape()) + ", header promises " +
             shape_string(want));
    }
    if (label >= ds.classes) {
      r.fail("sample " + std::to_string(i) + " label " + std::to_string(label) +
             " out of range");
    }
    ds.samples.push_back({std::move(frames), label,
                          provenance(ds.task, ds.seed, i)});
  }
  if (!r.at_payload_end()) r.fail("unexpected extra payload");
  r.seal();
  return ds;
}

}  // namespace gta
