// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "gta/error.hpp"
#include "gta/model.hpp"
#include "gta/ops.hpp"
#include "gta/rng.hpp"
#include "gta/serialize.hpp"
#include "oracles.hpp"

using namespace gta;

namespace {

std::filesystem::path test_dir() {
  static const std::filesystem::path dir = [] {
    std::filesystem::path d =
        std::filesystem::temp_directory_path() / "gta_model_tests";
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

ModelSpec small_spec(const std::string& plan) {
  ModelSpec ms;
  ms.t = 4;
  ms.h = 8;
  ms.w = 8;
  ms.patch = 4;
  ms.channels = 8;
  ms.blocks = parse_block_plan(plan);
  return ms;
}

Tensor random_video(Rng& rng, const ModelSpec& ms, std::size_t b) {
  return oracle::random_tensor(rng, {b, ms.t, ms.h, ms.w, ms.c_in});
}

}  // namespace

TEST_CASE("block plan parsing covers kinds, options, and defaults") {
  CHECK(parse_block_plan("").empty());
  CHECK(parse_block_plan("none").empty());
  CHECK(parse_block_plan("  ").empty());

  std::vector<BlockSpec> plan =
      parse_block_plan("nl, sa,ta,tape[sin=on],dnl,gta[g=2,k=3,ccmh=off]");
  REQUIRE(plan.size() == 6);
  CHECK(plan[0].kind == BlockKind::Nl);
  CHECK(plan[1].kind == BlockKind::Sa);
  CHECK(plan[2].kind == BlockKind::Ta);
  CHECK(plan[3].kind == BlockKind::Tape);
  CHECK(plan[3].sinusoidal);
  CHECK(plan[4].kind == BlockKind::Dnl);
  CHECK(plan[5].kind == BlockKind::Gta);
  CHECK(plan[5].gta.groups == 2);
  CHECK(plan[5].gta.regions == 3);
  CHECK_FALSE(plan[5].gta.enable_ccmh);
  CHECK(plan[5].gta.enable_pixel);

  std::vector<BlockSpec> defaults = parse_block_plan("gta");
  REQUIRE(defaults.size() == 1);
  CHECK(defaults[0].gta.groups == 8);
  CHECK(defaults[0].gta.regions == 0);
  CHECK(defaults[0].gta.enable_ccmh);
}

TEST_CASE("block plan parse errors") {
  CHECK_THROWS_WITH_AS(parse_block_plan("sax"),
                       doctest::Contains("unknown block kind"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_block_plan("gta[q=1]"),
                       doctest::Contains("unknown gta option"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_block_plan("tape[g=1]"),
                       doctest::Contains("unknown tape option"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_block_plan("sa[sin=on]"),
                       doctest::Contains("takes no options"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_block_plan("gta[g=two]"),
                       doctest::Contains("nonnegative integer"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_block_plan("gta[ccmh=maybe]"),
                       doctest::Contains("on|off"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_block_plan("gta[g]"),
                       doctest::Contains("key=value"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_block_plan("gta[g=1"),
                       doctest::Contains("unbalanced"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_block_plan("gta]g=1["),
                       doctest::Contains("unbalanced"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_block_plan("sa,,ta"),
                       doctest::Contains("empty block entry"), ConfigError);
}

TEST_CASE("plan formatting is canonical and round-trips") {
  const std::vector<std::string> canon = {
      "",
      "sa",
      "nl,sa,ta,tape,dnl",
      "tape[sin=on]",
      "gta[g=8]",
      "gta[g=2,k=3]",
      "gta[g=1,ccmh=off,region=off]",
      "sa,gta[g=4,k=2,pixel=off]",
  };
  for (const std::string& plan : canon) {
    CHECK(format_block_plan(parse_block_plan(plan)) == plan);
  }
  // Whitespace and default options normalize away.
  CHECK(format_block_plan(parse_block_plan(" sa , ta ")) == "sa,ta");
  CHECK(format_block_plan(parse_block_plan("gta[ccmh=on,pixel=on]")) ==
        "gta[g=8]");
  CHECK(format_block_plan(parse_block_plan("tape[sin=off]")) == "tape");
}

TEST_CASE("model spec validation accumulates every violation") {
  ModelSpec ok = small_spec("sa");
  ok.validate();
  CHECK(ok.tokens() == 4);

  ModelSpec bad = small_spec("gta[g=3]");
  bad.patch = 5;   // divides neither 8 x 8 side
  bad.classes = 1;
  try {
    bad.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("patch 5") != std::string::npos);
    CHECK(msg.find("class count") != std::string::npos);
    CHECK(msg.find("block 0") != std::string::npos);
    CHECK(msg.find("not divisible") != std::string::npos);
  }

  ModelSpec zero = small_spec("sa");
  zero.t = 0;
  CHECK_THROWS_AS(zero.validate(), ConfigError);
}

TEST_CASE("spec key-value round trip") {
  ModelSpec ms = small_spec("sa,gta[g=2,k=3,ccmh=off]");
  ms.stem_bias = false;
  ms.norm = true;
  ms.seed = 99;
  const KvPairs kv = ms.to_kv();
  ModelSpec back = ModelSpec::from_kv(kv);
  CHECK(back.to_kv() == kv);
  CHECK(back.t == 4);
  CHECK_FALSE(back.stem_bias);
  CHECK(back.norm);
  CHECK(back.seed == 99);
  CHECK(back.blocks.size() == 2);

  KvPairs broken = kv;
  for (auto& [k, v] : broken) {
    if (k == "blocks") v = "zz";
  }
  CHECK_THROWS_AS(ModelSpec::from_kv(broken), FormatError);
  KvPairs missing(kv.begin(), kv.end() - 1);
  CHECK_THROWS_AS(ModelSpec::from_kv(missing), FormatError);
}

TEST_CASE("parameter registry has unique names in construction order") {
  Model model(small_spec("nl,sa,ta,tape,dnl,gta[g=2]"));
  const std::vector<Parameter*>& reg = model.params();
  std::set<std::string> names;
  for (const Parameter* p : reg) names.insert(p->name());
  CHECK(names.size() == reg.size());

  CHECK(reg.front()->name() == "stem.w");
  CHECK(reg[1]->name() == "stem.b");
  CHECK(reg[reg.size() - 2]->name() == "head.w");
  CHECK(reg.back()->name() == "head.b");
  CHECK(names.count("block0.w_q") == 1);
  CHECK(names.count("block3.pe.e") == 1);
  CHECK(names.count("block4.spatial.w_o") == 1);
  CHECK(names.count("block4.temporal.w_q") == 1);
  CHECK(names.count("block5.m_region") == 1);

  CHECK(model.find_param("block5.w_g") != nullptr);
  CHECK(model.find_param("nonexistent") == nullptr);
  CHECK(model.blocks().size() == 6);

  ModelSpec no_bias = small_spec("sa");
  no_bias.stem_bias = false;
  Model lean(no_bias);
  CHECK(lean.params()[1]->name() == "block0.w_q");
}

TEST_CASE("gta parameter sizes add up to the analytical count") {
  ModelSpec ms;
  ms.t = 8;
  ms.h = 16;
  ms.w = 16;
  ms.patch = 4;
  ms.channels = 32;
  ms.blocks = parse_block_plan("gta[g=8]");
  Model model(ms);
  std::size_t block_params = 0;
  for (const Parameter* p : model.params()) {
    if (p->name().rfind("block0.", 0) == 0) block_params += p->value().size();
  }
  CHECK(block_params == 12416);
}

TEST_CASE("forward produces logits and respects batching") {
  ModelSpec ms = small_spec("sa,gta[g=2]");
  Model model(ms);
  Rng rng(1);
  Tensor video = random_video(rng, ms, 3);
  Tensor logits = model.forward(video, nullptr);
  CHECK(logits.shape() == std::vector<std::size_t>{3, 2});

  // Each sample's logits are independent of its batch neighbours.
  for (std::size_t i = 0; i < 3; ++i) {
    Tensor one({1, ms.t, ms.h, ms.w, ms.c_in});
    std::copy_n(video.data() + i * one.size(), one.size(), one.data());
    Tensor li = model.forward(one, nullptr);
    CHECK(li.data()[0] == logits.data()[i * 2]);
    CHECK(li.data()[1] == logits.data()[i * 2 + 1]);
  }

  Tensor wrong({1, ms.t + 1, ms.h, ms.w, ms.c_in});
  CHECK_THROWS_WITH_AS(model.forward(wrong, nullptr),
                       doctest::Contains("does not match"), DimensionError);
  CHECK_THROWS_AS(model.forward(Tensor({2, 2}), nullptr), DimensionError);
}

TEST_CASE("initialization is deterministic and name-keyed") {
  ModelSpec ms = small_spec("sa,tape,gta[g=2]");
  Model a(ms);
  Model b(ms);
  REQUIRE(a.params().size() == b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(oracle::max_abs_diff(a.params()[i]->value(),
                               b.params()[i]->value()) == 0.0);
  }

  ModelSpec other = ms;
  other.seed = 2;
  Model c(other);
  CHECK(oracle::max_abs_diff(a.find_param("stem.w")->value(),
                             c.find_param("stem.w")->value()) > 0.0);

  // Stem and head draws do not depend on the block plan.
  Model bare(small_spec(""));
  CHECK(oracle::max_abs_diff(a.find_param("stem.w")->value(),
                             bare.find_param("stem.w")->value()) == 0.0);
  CHECK(oracle::max_abs_diff(a.find_param("head.w")->value(),
                             bare.find_param("head.w")->value()) == 0.0);
}

TEST_CASE("fresh blocks leave the stem-head pipeline untouched") {
  ModelSpec full = small_spec("nl,sa,ta,tape,dnl,gta[g=2]");
  Model with_blocks(full);
  Model without(small_spec(""));
  Rng rng(2);
  Tensor video = random_video(rng, full, 2);
  Tensor lhs = with_blocks.forward(video, nullptr);
  Tensor rhs = without.forward(video, nullptr);
  CHECK(oracle::max_abs_diff(lhs, rhs) == 0.0);
}

TEST_CASE("stem embeds patches exactly as the loop reference") {
  ModelSpec ms = small_spec("");
  ms.stem_bias = true;
  Model model(ms);
  Rng rng(3);
  Tensor video = random_video(rng, ms, 1);

  const Tensor& w = model.find_param("stem.w")->value();  // (16, 8)
  const Tensor& b = model.find_param("stem.b")->value();
  const Tensor& hw = model.find_param("head.w")->value();
  const Tensor& hb = model.find_param("head.b")->value();

  // Patch rows follow (dy, dx, channel) within each 4 x 4 patch.
  const std::size_t tokens = ms.tokens();  // 2 x 2 grid
  Tensor pooled({ms.channels});
  for (std::size_t f = 0; f < ms.t; ++f) {
    for (std::size_t py = 0; py < 2; ++py) {
      for (std::size_t px = 0; px < 2; ++px) {
        for (std::size_t ch = 0; ch < ms.channels; ++ch) {
          double acc = b.data()[ch];
          for (std::size_t dy = 0; dy < 4; ++dy) {
            for (std::size_t dx = 0; dx < 4; ++dx) {
              const std::size_t row = (py * 4 + dy) * ms.w + (px * 4 + dx);
              acc += video.data()[f * ms.h * ms.w + row] *
                     w.data()[(dy * 4 + dx) * ms.channels + ch];
            }
          }
          pooled.data()[ch] += acc;
        }
      }
    }
  }
  for (std::size_t ch = 0; ch < ms.channels; ++ch) {
    pooled.data()[ch] /= static_cast<double>(ms.t * tokens);
  }
  Tensor logits = model.forward(video, nullptr);
  for (std::size_t j = 0; j < ms.classes; ++j) {
    double acc = hb.data()[j];
    for (std::size_t ch = 0; ch < ms.channels; ++ch) {
      acc += pooled.data()[ch] * hw.data()[ch * ms.classes + j];
    }
    CHECK(logits.data()[j] == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  const std::filesystem::path path = test_dir() / "round_trip.ckpt";
  ModelSpec ms = small_spec("sa,tape[sin=on],gta[g=2,k=3]");
  ms.norm = true;
  Model model(ms);
  Rng rng(4);
  // Make the stored state distinctive.
  for (Parameter* p : model.params()) {
    if (!p->trainable()) continue;
    for (std::size_t i = 0; i < p->value().size(); ++i) {
      p->value().data()[i] = rng.normal(0.0, 0.5);
    }
  }
  model.save_checkpoint(path.string());

  Model back = Model::load_checkpoint(path.string());
  CHECK(back.spec().to_kv() == model.spec().to_kv());
  REQUIRE(back.params().size() == model.params().size());
  for (std::size_t i = 0; i < back.params().size(); ++i) {
    CHECK(back.params()[i]->name() == model.params()[i]->name());
    CHECK(oracle::max_abs_diff(back.params()[i]->value(),
                               model.params()[i]->value()) == 0.0);
    CHECK(back.params()[i]->trainable() == model.params()[i]->trainable());
  }
  Tensor video = random_video(rng, ms, 2);
  CHECK(oracle::max_abs_diff(back.forward(video, nullptr),
                             model.forward(video, nullptr)) == 0.0);
}

TEST_CASE("checkpoint spec mismatch is rejected without touching the model") {
  const std::filesystem::path path = test_dir() / "mismatch.ckpt";
  Model saved(small_spec("sa"));
  saved.save_checkpoint(path.string());

  ModelSpec other = small_spec("sa");
  other.channels = 16;
  Model target(other);
  CHECK_THROWS_WITH_AS(target.load_checkpoint_into(path.string()),
                       doctest::Contains("channels"), IntegrityError);

  Model pristine(other);
  for (std::size_t i = 0; i < target.params().size(); ++i) {
    CHECK(oracle::max_abs_diff(target.params()[i]->value(),
                               pristine.params()[i]->value()) == 0.0);
  }
}

TEST_CASE("corrupted checkpoints are detected") {
  const std::filesystem::path path = test_dir() / "corrupt.ckpt";
  Model model(small_spec("sa"));
  model.save_checkpoint(path.string());
  const std::vector<unsigned char> good = read_file_bytes(path.string());

  // A flipped value bit parses fine but fails the checksum.
  std::vector<unsigned char> flipped = good;
  flipped[flipped.size() - 5] ^= 0x10;
  const std::filesystem::path bad1 = test_dir() / "corrupt_flip.ckpt";
  write_file_atomic(bad1.string(), flipped);
  CHECK_THROWS_AS(Model::load_checkpoint(bad1.string()), IntegrityError);

  // Truncation is a structural failure, reported before any checksum.
  std::vector<unsigned char> cut(good.begin(), good.end() - 9);
  const std::filesystem::path bad2 = test_dir() / "corrupt_cut.ckpt";
  write_file_atomic(bad2.string(), cut);
  CHECK_THROWS_AS(Model::load_checkpoint(bad2.string()), FormatError);

  // IntegrityError derives FormatError, so one handler can cover both.
  try {
    Model::load_checkpoint(bad1.string());
    FAIL("expected a throw");
  } catch (const FormatError&) {
  }

  std::vector<unsigned char> wrong_magic = good;
  wrong_magic[0] ^= 0xFF;
  const std::filesystem::path bad3 = test_dir() / "corrupt_magic.ckpt";
  write_file_atomic(bad3.string(), wrong_magic);
  CHECK_THROWS_AS(Model::load_checkpoint(bad3.string()), FormatError);

  CHECK_THROWS_AS(Model::load_checkpoint((test_dir() / "absent.ckpt").string()),
                  IoError);

  // The failed loads left no half-written model behind; the original file
  // still loads.
  Model ok = Model::load_checkpoint(path.string());
  CHECK(ok.params().size() == model.params().size());
}

TEST_CASE("sinusoidal embedding survives the checkpoint round trip") {
  const std::filesystem::path path = test_dir() / "sin.ckpt";
  Model model(small_spec("tape[sin=on]"));
  CHECK_FALSE(model.find_param("block0.pe.e")->trainable());
  model.save_checkpoint(path.string());
  Model back = Model::load_checkpoint(path.string());
  CHECK_FALSE(back.find_param("block0.pe.e")->trainable());
  CHECK(format_block_plan(back.spec().blocks) == "tape[sin=on]");
}
