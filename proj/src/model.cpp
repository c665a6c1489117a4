// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "gta/model.hpp"

#include <algorithm>
#include <utility>

#include "gta/error.hpp"
#include "gta/serialize.hpp"

namespace gta {

std::string block_kind_name(BlockKind k) {
  switch (k) {
    case BlockKind::Nl: return "nl";
    case BlockKind::Sa: return "sa";
    case BlockKind::Ta: return "ta";
    case BlockKind::Tape: return "tape";
    case BlockKind::Dnl: return "dnl";
    case BlockKind::Gta: return "gta";
  }
  throw ContractError("block_kind_name: unknown kind");
}

namespace {

std::vector<std::string> split_top_level(const std::string& s) {
  std::vector<std::string> items;
  std::string cur;
  int depth = 0;
  for (const char ch : s) {
    if (ch == '[') ++depth;
    if (ch == ']') --depth;
    if (depth < 0) throw ConfigError("block plan: unbalanced ']' in '" + s + "'");
    if (ch == ',' && depth == 0) {
      items.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (depth != 0) throw ConfigError("block plan: unbalanced '[' in '" + s + "'");
  items.push_back(cur);
  return items;
}

std::string strip(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  std::size_t b = s.find_last_not_of(" \t");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

bool parse_on_off(const std::string& key, const std::string& v) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw ConfigError("block plan: option '" + key + "' wants on|off, got '" + v + "'");
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("block plan: option '" + key + "' wants a nonnegative integer, got '" + v + "'");
  }
  return static_cast<std::size_t>(std::stoull(v));
}

BlockSpec parse_block_item(const std::string& raw) {
  const std::string item = strip(raw);
  if (item.empty()) throw ConfigError("block plan: empty block entry");
  std::string name = item;
  std::string opts;
  const std::size_t br = item.find('[');
  if (br != std::string::npos) {
    if (item.back() != ']') {
      throw ConfigError("block plan: malformed options in '" + item + "'");
    }
    name = strip(item.substr(0, br));
    opts = item.substr(br + 1, item.size() - br - 2);
  }

  BlockSpec bs;
  if (name == "nl") bs.kind = BlockKind::Nl;
  else if (name == "sa") bs.kind = BlockKind::Sa;
  else if (name == "ta") bs.kind = BlockKind::Ta;
  else if (name == "tape") bs.kind = BlockKind::Tape;
  else if (name == "dnl") bs.kind = BlockKind::Dnl;
  else if (name == "gta") bs.kind = BlockKind::Gta;
  else throw ConfigError("block plan: unknown block kind '" + name + "'");

  if (opts.empty()) return bs;
  for (const std::string& part : split_top_level(opts)) {
    const std::string opt = strip(part);
    const std::size_t eq = opt.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("block plan: option '" + opt + "' is not key=value");
    }
    const std::string key = strip(opt.substr(0, eq));
    const std::string val = strip(opt.substr(eq + 1));
    if (bs.kind == BlockKind::Gta) {
      if (key == "g") bs.gta.groups = parse_count(key, val);
      else if (key == "k") bs.gta.regions = parse_count(key, val);
      else if (key == "ccmh") bs.gta.enable_ccmh = parse_on_off(key, val);
      else if (key == "pixel") bs.gta.enable_pixel = parse_on_off(key, val);
      else if (key == "region") bs.gta.enable_region = parse_on_off(key, val);
      else throw ConfigError("block plan: unknown gta option '" + key + "'");
    } else if (bs.kind == BlockKind::Tape) {
      if (key == "sin") bs.sinusoidal = parse_on_off(key, val);
      else throw ConfigError("block plan: unknown tape option '" + key + "'");
    } else {
      throw ConfigError("block plan: block '" + name + "' takes no options");
    }
  }
  return bs;
}

}  // namespace

std::vector<BlockSpec> parse_block_plan(const std::string& plan) {
  std::vector<BlockSpec> blocks;
  if (strip(plan).empty() || strip(plan) == "none") return blocks;
  for (const std::string& item : split_top_level(plan)) {
    blocks.push_back(parse_block_item(item));
  }
  return blocks;
}

std::string format_block_plan(const std::vector<BlockSpec>& blocks) {
  std::string out;
  for (const BlockSpec& bs : blocks) {
    if (!out.empty()) out += ',';
    out += block_kind_name(bs.kind);
    if (bs.kind == BlockKind::Gta) {
      std::string opts = "g=" + std::to_string(bs.gta.groups);
      if (bs.gta.regions > 0) opts += ",k=" + std::to_string(bs.gta.regions);
      if (!bs.gta.enable_ccmh) opts += ",ccmh=off";
      if (!bs.gta.enable_pixel) opts += ",pixel=off";
      if (!bs.gta.enable_region) opts += ",region=off";
      out += "[" + opts + "]";
    } else if (bs.kind == BlockKind::Tape && bs.sinusoidal) {
      out += "[sin=on]";
    }
  }
  return out;
}

void ModelSpec::validate() const {
  std::string problems;
  auto flag = [&problems](const std::string& p) {
    if (!problems.empty()) problems += "; ";
    problems += p;
  };
  if (t == 0) flag("frame count must be positive");
  if (h == 0 || w == 0) flag("frame geometry must be positive");
  if (c_in == 0) flag("input channel count must be positive");
  if (patch == 0) flag("patch size must be positive");
  else {
    if (h % patch != 0) flag("patch " + std::to_string(patch) + " does not divide height " + std::to_string(h));
    if (w % patch != 0) flag("patch " + std::to_string(patch) + " does not divide width " + std::to_string(w));
  }
  if (channels == 0) flag("channel count must be positive");
  if (classes < 2) flag("class count must be at least 2");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].kind == BlockKind::Gta) {
      try {
        blocks[i].gta.validate(channels);
      } catch (const ConfigError& e) {
        flag("block " + std::to_string(i) + ": " + e.what());
      }
    }
  }
  if (!problems.empty()) throw ConfigError("model spec: " + problems);
}

std::vector<std::pair<std::string, std::string>> ModelSpec::to_kv() const {
  return {
      {"t", std::to_string(t)},
      {"h", std::to_string(h)},
      {"w", std::to_string(w)},
      {"c_in", std::to_string(c_in)},
      {"patch", std::to_string(patch)},
      {"channels", std::to_string(channels)},
      {"classes", std::to_string(classes)},
      {"stem_bias", stem_bias ? "1" : "0"},
      {"norm", norm ? "1" : "0"},
      {"seed", std::to_string(seed)},
      {"blocks", format_block_plan(blocks)},
  };
}

ModelSpec ModelSpec::from_kv(
    const std::vector<std::pair<std::string, std::string>>& kv) {
  ModelSpec ms;
  ms.t = kv_get_u64(kv, "t");
  ms.h = kv_get_u64(kv, "h");
  ms.w = kv_get_u64(kv, "w");
  ms.c_in = kv_get_u64(kv, "c_in");
  ms.patch = kv_get_u64(kv, "patch");
  ms.channels = kv_get_u64(kv, "channels");
  ms.classes = kv_get_u64(kv, "classes");
  ms.stem_bias = kv_get_u64(kv, "stem_bias") != 0;
  ms.norm = kv_get_u64(kv, "norm") != 0;
  ms.seed = kv_get_u64(kv, "seed");
  try {
    ms.blocks = parse_block_plan(kv_get(kv, "blocks"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("stored block plan is invalid: ") + e.what());
  }
  return ms;
}

namespace {

ModelSpec validated(ModelSpec spec) {
  spec.validate();
  return spec;
}

std::unique_ptr<Block> build_block(const std::string& prefix, const BlockSpec& bs,
                                   const ModelSpec& ms) {
  switch (bs.kind) {
    case BlockKind::Nl:
      return std::make_unique<NlBlock>(prefix, ms.channels, ms.seed, ms.norm);
    case BlockKind::Sa:
      return std::make_unique<SpatialBlock>(prefix, ms.channels, ms.seed, ms.norm);
    case BlockKind::Ta:
      return std::make_unique<TemporalBlock>(prefix, ms.channels, ms.seed, 0,
                                             ms.norm);
    case BlockKind::Tape:
      return std::make_unique<TemporalBlock>(prefix, ms.channels, ms.seed, ms.t,
                                             ms.norm, bs.sinusoidal);
    case BlockKind::Dnl:
      return std::make_unique<DnlBlock>(prefix, ms.channels, ms.seed, ms.norm);
    case BlockKind::Gta:
      return std::make_unique<GtaBlock>(prefix, ms.channels, ms.t, bs.gta,
                                        ms.seed, ms.norm);
  }
  throw ContractError("build_block: unknown kind");
}

}  // namespace

Model::Model(ModelSpec spec) : spec_(validated(std::move(spec))) {
  stem_w_ = std::make_unique<Parameter>(
      "stem.w", normal_init({spec_.patch * spec_.patch * spec_.c_in, spec_.channels},
                            spec_.seed, "stem.w"));
  if (spec_.stem_bias) {
    stem_b_ = std::make_unique<Parameter>("stem.b", Tensor({spec_.channels}));
  }
  head_w_ = std::make_unique<Parameter>(
      "head.w", normal_init({spec_.channels, spec_.classes}, spec_.seed, "head.w"));
  head_b_ = std::make_unique<Parameter>("head.b", Tensor({spec_.classes}));
  for (std::size_t i = 0; i < spec_.blocks.size(); ++i) {
    blocks_.push_back(
        build_block("block" + std::to_string(i), spec_.blocks[i], spec_));
  }
  registry_.push_back(stem_w_.get());
  if (stem_b_) registry_.push_back(stem_b_.get());
  for (auto& b : blocks_) b->collect(registry_);
  registry_.push_back(head_w_.get());
  registry_.push_back(head_b_.get());
}

Tensor Model::forward(const Tensor& video, Tape* tape, AttentionCache* cache) {
  const std::vector<std::size_t>& s = video.shape();
  if (video.rank() != 5 || s[1] != spec_.t || s[2] != spec_.h ||
      s[3] != spec_.w || s[4] != spec_.c_in) {
    throw DimensionError(
        "model forward: input " + shape_string(s) + " does not match (B, " +
        std::to_string(spec_.t) + ", " + std::to_string(spec_.h) + ", " +
        std::to_string(spec_.w) + ", " + std::to_string(spec_.c_in) + ")");
  }
  Tensor x = patchify(video, spec_.patch);
  x = linear_last(x, use_param(*stem_w_, tape));
  if (stem_b_) x = add_bias(x, use_param(*stem_b_, tape));
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (cache) cache->current_block = i;
    x = blocks_[i]->forward(x, tape, cache);
  }
  Tensor pooled = mean_axis(mean_axis(x, 1), 1);  // over T, then tokens
  return add_bias(matmul(pooled, use_param(*head_w_, tape)),
                  use_param(*head_b_, tape));
}

Parameter* Model::find_param(const std::string& name) const {
  for (Parameter* p : registry_) {
    if (p->name() == name) return p;
  }
  return nullptr;
}

std::vector<Block*> Model::blocks() const {
  std::vector<Block*> out;
  out.reserve(blocks_.size());
  for (const auto& b : blocks_) out.push_back(b.get());
  return out;
}

namespace {

constexpr char kCheckpointMagic[9] = "GTACKPT1";

void load_values(Model& model, const std::string& path, const ModelSpec* expect) {
  ByteReader r = ByteReader::from_file(path);
  r.magic(kCheckpointMagic);
  const KvPairs kv = decode_kv(r.str());
  if (expect) {
    const KvPairs own = expect->to_kv();
    for (const auto& [key, value] : own) {
      const std::string& stored = kv_get(kv, key);
      if (stored != value) {
        throw IntegrityError("checkpoint '" + path + "' spec mismatch on '" +
                             key + "': file has '" + stored +
                             "', model has '" + value + "'");
      }
    }
  }
  std::vector<Tensor> staged;
  staged.reserve(model.params().size());
  for (const Parameter* p : model.params()) {
    const std::string name = r.str();
    if (name != p->name()) {
      throw IntegrityError("checkpoint '" + path +
                           "' parameter mismatch: expected '" + p->name() +
                           "', found '" + name + "'");
    }
    Tensor v = r.tensor();
    if (v.shape() != p->value().shape()) {
      throw IntegrityError("checkpoint '" + path + "' parameter '" + name +
                           "' has shape " + shape_string(v.shape()) +
                           ", model wants " + shape_string(p->value().shape()));
    }
    staged.push_back(std::move(v));
  }
  if (!r.at_payload_end()) r.fail("unexpected extra payload");
  r.seal();
  const std::vector<Parameter*>& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value() = std::move(staged[i]);
  }
}

}  // namespace

void Model::save_checkpoint(const std::string& path) const {
  ByteWriter w;
  w.magic(kCheckpointMagic);
  w.str(encode_kv(spec_.to_kv()));
  for (const Parameter* p : registry_) {
    w.str(p->name());
    w.tensor(p->value());
  }
  w.seal();
  w.save(path);
}

Model Model::load_checkpoint(const std::string& path) {
  ByteReader probe = ByteReader::from_file(path);
  probe.magic(kCheckpointMagic);
  ModelSpec ms;
  try {
    ms = ModelSpec::from_kv(decode_kv(probe.str()));
  } catch (const ConfigError& e) {
    throw FormatError("checkpoint '" + path + "': " + e.what());
  }
  Model model(ms);
  load_values(model, path, nullptr);
  return model;
}

void Model::load_checkpoint_into(const std::string& path) {
  load_values(*this, path, &spec_);
}

}  // namespace gta
