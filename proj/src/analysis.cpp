// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "gta/analysis.hpp"

#include <cstdio>
#include <filesystem>
#include <utility>

#include "gta/error.hpp"
#include "gta/serialize.hpp"

namespace gta {

namespace {

using U = std::uint64_t;

constexpr U kSoftmaxFlopsPerElement = 4;  // max-subtract, exp, sum, divide

struct Dims {
  U t, hw, c;
};

// Joint attention over N = T*HW tokens at width `w`, keys/values over `nk`
// tokens: q/k/v/o projections, two score/apply products, softmax.
BlockCost joint_cost(U n, U nk, U c, U w) {
  BlockCost r;
  r.flops = 2 * 4 * n * c * w + 2 * n * nk * w * 2 + kSoftmaxFlopsPerElement * n * nk;
  r.params = 4 * c * w;
  return r;
}

BlockCost nl_cost(const Dims& d, U width, bool subsample_kv) {
  const U n = d.t * d.hw;
  const U nk = subsample_kv ? d.t * std::max<U>(1, d.hw / 4) : n;
  return joint_cost(n, nk, d.c, width);
}

BlockCost sa_cost(const Dims& d, U width) {
  BlockCost per = joint_cost(d.hw, d.hw, d.c, width);
  return {d.t * per.flops, per.params};
}

BlockCost ta_cost(const Dims& d, U width) {
  BlockCost per = joint_cost(d.t, d.t, d.c, width);
  return {d.hw * per.flops, per.params};
}

BlockCost tape_cost(const Dims& d, U width) {
  BlockCost r = ta_cost(d, width);
  r.flops += d.t * d.hw * d.c;  // per-frame embedding adds
  r.params += d.t * d.c;
  return r;
}

// One GTA path mixing `rows` T-slabs of width `vw` with an (G, N_h, T, T)
// bank: value projection in, mixing, output projection back to C.
U path_mix_flops(U rows, U t, U nh, U vw) { return 2 * rows * nh * t * t * vw; }

BlockCost gta_cost(const Dims& d, const GtaConfig& cfg, U width) {
  const U g = cfg.groups, nh = cfg.heads();
  const U k = cfg.resolved_regions(d.c);
  const U bank = g * nh * d.t * d.t;
  BlockCost r;
  if (cfg.enable_pixel) {
    r.flops += 2 * d.t * d.hw * d.c * width        // value projection
               + path_mix_flops(d.hw, d.t, nh, width)
               + 2 * d.t * d.hw * width * d.c;     // output projection
    r.params += 2 * d.c * width + bank;
  }
  if (cfg.enable_region) {
    r.flops += 2 * d.t * k * d.hw * d.c            // G_R = w_g x^T
               + 2 * d.t * k * d.hw * d.c          // X_G = G_R x
               + 2 * d.t * k * d.c * width         // value projection
               + path_mix_flops(k, d.t, nh, width)
               + 2 * d.t * k * width * d.c         // output projection
               + 2 * d.t * d.hw * k * d.c;         // back-projection
    r.params += 2 * d.c * width + bank + k * d.c;
  }
  return r;
}

BlockCost add(BlockCost a, BlockCost b) {
  return {a.flops + b.flops, a.params + b.params};
}

}  // namespace

std::string convention_name(CostConvention c) {
  return c == CostConvention::Runtime ? "runtime" : "paper";
}

BlockCost count_block(BlockKind kind, std::size_t t, std::size_t h,
                      std::size_t w, std::size_t c, const GtaConfig& cfg,
                      CostConvention conv) {
  if (t == 0 || h == 0 || w == 0 || c == 0) {
    throw ConfigError("count_block: dimensions must be positive");
  }
  const Dims d{t, static_cast<U>(h) * w, c};
  if (conv == CostConvention::Runtime) {
    switch (kind) {
      case BlockKind::Nl: return nl_cost(d, d.c, false);
      case BlockKind::Sa: return sa_cost(d, d.c);
      case BlockKind::Ta: return ta_cost(d, d.c);
      case BlockKind::Tape: return tape_cost(d, d.c);
      case BlockKind::Dnl: return add(sa_cost(d, d.c), ta_cost(d, d.c));
      case BlockKind::Gta: {
        cfg.validate(c);
        return gta_cost(d, cfg, d.c);
      }
    }
  } else {
    // Bottleneck widths reproducing the published comparison: joint attention
    // at C/2 with 2x2 key/value spatial subsampling, decoupled stages at C/4,
    // and the GTA row bundling its spatial stage with quarter-width paths.
    const U half = std::max<U>(1, d.c / 2);
    const U quarter = std::max<U>(1, d.c / 4);
    switch (kind) {
      case BlockKind::Nl: return nl_cost(d, half, true);
      case BlockKind::Sa: return sa_cost(d, quarter);
      case BlockKind::Ta: return ta_cost(d, quarter);
      case BlockKind::Tape: return tape_cost(d, quarter);
      case BlockKind::Dnl: return add(sa_cost(d, quarter), ta_cost(d, quarter));
      case BlockKind::Gta: {
        cfg.validate(c);
        return add(sa_cost(d, quarter), gta_cost(d, cfg, quarter));
      }
    }
  }
  throw ContractError("count_block: unknown kind");
}

void FlopReport::add(FlopRow row) {
  total_flops += row.flops;
  total_params += row.params;
  rows.push_back(std::move(row));
}

std::string FlopReport::to_csv() const {
  std::string out = "kind,T,H,W,C,config,flops,params\n";
  for (const FlopRow& r : rows) {
    out += r.kind + "," + std::to_string(r.t) + "," + std::to_string(r.h) + "," +
           std::to_string(r.w) + "," + std::to_string(r.c) + "," + r.config +
           "," + std::to_string(r.flops) + "," + std::to_string(r.params) + "\n";
  }
  return out;
}

std::string FlopReport::to_table() const {
  std::string out = "convention: " + convention_name(convention) + "\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-6s %4s %4s %4s %5s  %-34s %16s %12s\n",
                "kind", "T", "H", "W", "C", "config", "flops", "params");
  out += line;
  for (const FlopRow& r : rows) {
    std::snprintf(line, sizeof(line), "%-6s %4zu %4zu %4zu %5zu  %-34s %16llu %12llu\n",
                  r.kind.c_str(), r.t, r.h, r.w, r.c, r.config.c_str(),
                  static_cast<unsigned long long>(r.flops),
                  static_cast<unsigned long long>(r.params));
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-58s %16llu %12llu\n", "total",
                static_cast<unsigned long long>(total_flops),
                static_cast<unsigned long long>(total_params));
  out += line;
  return out;
}

namespace {

std::string config_column(const BlockSpec& bs, std::size_t c) {
  if (bs.kind == BlockKind::Gta) {
    auto onoff = [](bool b) { return b ? "on" : "off"; };
    return "g=" + std::to_string(bs.gta.groups) +
           ";k=" + std::to_string(bs.gta.resolved_regions(c)) +
           ";ccmh=" + onoff(bs.gta.enable_ccmh) +
           ";pixel=" + onoff(bs.gta.enable_pixel) +
           ";region=" + onoff(bs.gta.enable_region);
  }
  if (bs.kind == BlockKind::Tape && bs.sinusoidal) return "sin=on";
  return "-";
}

}  // namespace

FlopReport report_plan(const std::vector<BlockSpec>& blocks, std::size_t t,
                       std::size_t h, std::size_t w, std::size_t c,
                       CostConvention conv) {
  FlopReport report;
  report.convention = conv;
  for (const BlockSpec& bs : blocks) {
    const BlockCost cost = count_block(bs.kind, t, h, w, c, bs.gta, conv);
    report.add({block_kind_name(bs.kind), t, h, w, c, config_column(bs, c),
                cost.flops, cost.params});
  }
  return report;
}

FlopReport report_reference_stack() {
  struct Site {
    std::size_t h, w, c, copies;
  };
  const Site sites[] = {{28, 28, 512, 2}, {14, 14, 1024, 3}};
  FlopReport report;
  report.convention = CostConvention::Paper;
  const GtaConfig gta_cfg;  // defaults: G=8, K=C/8, all paths on
  for (const BlockKind kind : {BlockKind::Nl, BlockKind::Dnl, BlockKind::Gta}) {
    for (const Site& s : sites) {
      const BlockCost one =
          count_block(kind, 8, s.h, s.w, s.c, gta_cfg, CostConvention::Paper);
      BlockSpec bs;
      bs.kind = kind;
      bs.gta = gta_cfg;
      report.add({block_kind_name(kind), 8, s.h, s.w, s.c,
                  std::to_string(s.copies) + "x " + config_column(bs, s.c),
                  one.flops * s.copies, one.params * s.copies});
    }
  }
  return report;
}

namespace {

std::string matrix_csv(const double* data, std::size_t rows, std::size_t cols) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", data[i * cols + j]);
      if (j) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path.string(),
                    std::vector<unsigned char>(text.begin(), text.end()));
}

}  // namespace

std::vector<std::string> dump_attention(Model& model, const VideoSample& sample,
                                        const std::string& out_dir) {
  if (model.spec().blocks.empty()) {
    throw ContractError("dump_attention: the model retains no attention matrices "
                        "(empty block plan)");
  }
  std::vector<std::size_t> shape = sample.frames.shape();
  shape.insert(shape.begin(), 1);
  Tensor batch(shape, sample.frames.values());

  AttentionCache cache;
  model.forward(batch, nullptr, &cache);

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(dir / name, text);
    written.push_back(name);
  };

  for (const AttentionRecord& rec : cache.records) {
    const std::string stem = "block" + std::to_string(rec.block) + "_" + rec.role;
    const Tensor& v = rec.value;
    if (rec.role == "joint") {
      const std::size_t n = v.extent(1);
      emit(stem + ".csv", matrix_csv(v.data(), n, v.extent(2)));
    } else if (rec.role == "spatial" || rec.role == "gr") {
      const std::size_t t = v.extent(1), rows = v.extent(2), cols = v.extent(3);
      for (std::size_t f = 0; f < t; ++f) {
        emit(stem + "_t" + std::to_string(f) + ".csv",
             matrix_csv(v.data() + f * rows * cols, rows, cols));
      }
    } else if (rec.role == "temporal") {
      const std::size_t hw = v.extent(1), rows = v.extent(2), cols = v.extent(3);
      for (std::size_t p = 0; p < hw; ++p) {
        emit(stem + "_pos" + std::to_string(p) + ".csv",
             matrix_csv(v.data() + p * rows * cols, rows, cols));
      }
    } else if (rec.role == "mhat_p" || rec.role == "mhat_r") {
      const std::size_t cols = v.shape().back();
      emit(stem + ".csv", matrix_csv(v.data(), v.size() / cols, cols));
    } else {
      throw ContractError("dump_attention: unknown record role '" + rec.role + "'");
    }
  }
  return written;
}

}  // namespace gta
