// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "gta/attention.hpp"
#include "gta/error.hpp"
#include "gta/gradcheck.hpp"
#include "gta/ops.hpp"
#include "gta/rng.hpp"
#include "oracles.hpp"

using namespace gta;

namespace {

void randomize(Parameter& p, Rng& rng, double sigma = 0.3) {
  for (std::size_t i = 0; i < p.value().size(); ++i) {
    p.value().data()[i] = rng.normal(0.0, sigma);
  }
}

void randomize_projections(ProjectionSet& proj, Rng& rng) {
  randomize(proj.w_q, rng);
  randomize(proj.w_k, rng);
  randomize(proj.w_v, rng);
  randomize(proj.w_o, rng);
}

Tensor reverse_time(const Tensor& x) {
  const std::size_t t = x.extent(0);
  const std::size_t stride = x.size() / t;
  Tensor y(x.shape());
  for (std::size_t f = 0; f < t; ++f) {
    std::copy_n(x.data() + f * stride, stride, y.data() + (t - 1 - f) * stride);
  }
  return y;
}

Tensor permute_time_axis(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t t = x.extent(0);
  const std::size_t stride = x.size() / t;
  Tensor y(x.shape());
  for (std::size_t f = 0; f < t; ++f) {
    std::copy_n(x.data() + perm[f] * stride, stride, y.data() + f * stride);
  }
  return y;
}

}  // namespace

TEST_CASE("normal_init is keyed by seed and name") {
  Tensor a = normal_init({3, 3}, 1, "block0.w_q");
  Tensor b = normal_init({3, 3}, 1, "block0.w_q");
  Tensor c = normal_init({3, 3}, 1, "block0.w_k");
  Tensor d = normal_init({3, 3}, 2, "block0.w_q");
  CHECK(oracle::max_abs_diff(a, b) == 0.0);
  CHECK(oracle::max_abs_diff(a, c) > 0.0);
  CHECK(oracle::max_abs_diff(a, d) > 0.0);
  // sigma scales the draw linearly.
  Tensor wide = normal_init({3, 3}, 1, "block0.w_q", 0.04);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(wide.data()[i] == doctest::Approx(2.0 * a.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("projection set holds four C x C parameters, output zeroed") {
  ProjectionSet proj("block0", 4, 1);
  CHECK(proj.w_q.name() == "block0.w_q");
  CHECK(proj.w_o.name() == "block0.w_o");
  CHECK(proj.w_q.value().shape() == std::vector<std::size_t>{4, 4});
  for (std::size_t i = 0; i < 16; ++i) CHECK(proj.w_o.value().data()[i] == 0.0);
  std::vector<Parameter*> out;
  proj.collect(out);
  CHECK(out.size() == 4);
}

TEST_CASE("scaled_dot_attention frozen example and degeneracies") {
  // scores = [1/sqrt(2), 0] -> weights [0.6698, 0.3302].
  Tensor q({1, 2}, {1, 0});
  Tensor k({2, 2}, {1, 0, 0, 1});
  Tensor v({2, 2}, {1, 0, 0, 1});
  AttentionOutput att = scaled_dot_attention(q, k, v);
  CHECK(att.weights.data()[0] ==
        doctest::Approx(0.6697615493266569).epsilon(1e-14));
  CHECK(att.weights.data()[1] ==
        doctest::Approx(0.3302384506733431).epsilon(1e-14));
  CHECK(att.output.data()[0] ==
        doctest::Approx(0.6697615493266569).epsilon(1e-14));

  // Single position: softmax of one score is 1, output equals v.
  Rng rng(2);
  Tensor q1 = oracle::random_tensor(rng, {1, 3});
  Tensor v1 = oracle::random_tensor(rng, {1, 3});
  AttentionOutput single = scaled_dot_attention(q1, oracle::random_tensor(rng, {1, 3}), v1);
  CHECK(single.weights.data()[0] == 1.0);
  CHECK(oracle::max_abs_diff(single.output, v1) == 0.0);

  // Identical keys: uniform weights, rows become the column mean of v.
  Tensor ks = Tensor::full({4, 2}, 0.7);
  Tensor qs = oracle::random_tensor(rng, {4, 2});
  Tensor vs = oracle::random_tensor(rng, {4, 2});
  AttentionOutput uni = scaled_dot_attention(qs, ks, vs);
  for (std::size_t i = 0; i < uni.weights.size(); ++i) {
    CHECK(uni.weights.data()[i] == doctest::Approx(0.25).epsilon(1e-12));
  }
  for (std::size_t j = 0; j < 2; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 4; ++i) mean += vs.data()[i * 2 + j];
    mean /= 4.0;
    CHECK(uni.output.data()[j] == doctest::Approx(mean).epsilon(1e-12));
  }

  CHECK_THROWS_AS(scaled_dot_attention(Tensor({2}), Tensor({2}), Tensor({2})),
                  DimensionError);
}

TEST_CASE("attention weights are row-stochastic") {
  Rng rng(3);
  AttentionOutput att = scaled_dot_attention(oracle::random_tensor(rng, {2, 5, 3}),
                                             oracle::random_tensor(rng, {2, 5, 3}),
                                             oracle::random_tensor(rng, {2, 5, 3}));
  CHECK(att.weights.shape() == std::vector<std::size_t>{2, 5, 5});
  for (std::size_t r = 0; r < 10; ++r) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 5; ++j) sum += att.weights.data()[r * 5 + j];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("fresh blocks are exact identities through the residual") {
  Rng rng(4);
  Tensor x = oracle::random_tensor(rng, {2, 4, 3});
  NlBlock nl("b0", 3, 1);
  SpatialBlock sa("b1", 3, 1);
  TemporalBlock ta("b2", 3, 1);
  TemporalBlock tape_block("b3", 3, 1, /*t_max=*/2);
  DnlBlock dnl("b4", 3, 1);
  CHECK(oracle::max_abs_diff(nl.forward(x, nullptr, nullptr), x) == 0.0);
  CHECK(oracle::max_abs_diff(sa.forward(x, nullptr, nullptr), x) == 0.0);
  CHECK(oracle::max_abs_diff(ta.forward(x, nullptr, nullptr), x) == 0.0);
  CHECK(oracle::max_abs_diff(tape_block.forward(x, nullptr, nullptr), x) == 0.0);
  CHECK(oracle::max_abs_diff(dnl.forward(x, nullptr, nullptr), x) == 0.0);
}

TEST_CASE("nl_block matches the joint-attention loop oracle") {
  Rng rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    NlBlock block("b", 3, 7);
    randomize_projections(block.proj, rng);
    Tensor x = oracle::random_tensor(rng, {2, 4, 3});
    Tensor got = block.forward(x, nullptr, nullptr);
    Tensor want = oracle::nl_block(reshape(x, {8, 3}), block.proj.w_q.value(),
                                   block.proj.w_k.value(), block.proj.w_v.value(),
                                   block.proj.w_o.value());
    CHECK(oracle::max_abs_diff(reshape(got, {8, 3}), want) < 1e-12);
  }
}

TEST_CASE("nl_block at T=1 equals spatial_block") {
  Rng rng(6);
  NlBlock nl("same", 4, 9);
  SpatialBlock sa("same", 4, 9);  // same prefix + seed -> identical parameters
  randomize_projections(nl.proj, rng);
  sa.proj.w_q.value() = nl.proj.w_q.value();
  sa.proj.w_k.value() = nl.proj.w_k.value();
  sa.proj.w_v.value() = nl.proj.w_v.value();
  sa.proj.w_o.value() = nl.proj.w_o.value();
  Tensor x = oracle::random_tensor(rng, {1, 5, 4});
  CHECK(oracle::max_abs_diff(nl.forward(x, nullptr, nullptr),
                             sa.forward(x, nullptr, nullptr)) < 1e-12);
}

TEST_CASE("spatial_block matches the per-frame oracle and is frame-local") {
  Rng rng(7);
  SpatialBlock block("b", 3, 11);
  randomize_projections(block.proj, rng);
  Tensor x = oracle::random_tensor(rng, {3, 4, 3});
  Tensor got = block.forward(x, nullptr, nullptr);
  Tensor want = oracle::spatial_block(x, block.proj.w_q.value(),
                                      block.proj.w_k.value(), block.proj.w_v.value(),
                                      block.proj.w_o.value());
  CHECK(oracle::max_abs_diff(got, want) < 1e-12);

  // Permuting frames permutes outputs identically.
  const std::vector<std::size_t> perm{2, 0, 1};
  Tensor got_perm = block.forward(permute_time_axis(x, perm), nullptr, nullptr);
  CHECK(oracle::max_abs_diff(got_perm, permute_time_axis(got, perm)) == 0.0);

  // Two frames with identical content produce identical outputs.
  Tensor twin({2, 4, 3});
  for (std::size_t f = 0; f < 2; ++f) {
    std::copy_n(x.data(), 12, twin.data() + f * 12);
  }
  Tensor ty = block.forward(twin, nullptr, nullptr);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(ty.data()[i] == ty.data()[12 + i]);
  }
}

TEST_CASE("temporal_block matches the per-position oracle") {
  Rng rng(8);
  TemporalBlock block("b", 3, 13);
  randomize_projections(block.proj, rng);
  Tensor x = oracle::random_tensor(rng, {3, 4, 3});
  Tensor got = block.forward(x, nullptr, nullptr);
  Tensor want = oracle::temporal_block(x, block.proj.w_q.value(),
                                       block.proj.w_k.value(), block.proj.w_v.value(),
                                       block.proj.w_o.value());
  CHECK(oracle::max_abs_diff(got, want) < 1e-12);

  // HW = 1 at T = 1: attention collapses to the value row.
  Tensor one = oracle::random_tensor(rng, {1, 1, 3});
  Tensor y1 = block.forward(one, nullptr, nullptr);
  Tensor v1 = oracle::matmul(
      oracle::matmul(reshape(one, {1, 3}), block.proj.w_v.value()),
      block.proj.w_o.value());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(y1.data()[i] == doctest::Approx(one.data()[i] + v1.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("temporal_block without embedding is permutation equivariant") {
  Rng rng(9);
  TemporalBlock block("b", 3, 17);
  randomize_projections(block.proj, rng);
  std::vector<std::size_t> perm{0, 1, 2, 3};
  for (int rep = 0; rep < 5; ++rep) {
    Tensor x = oracle::random_tensor(rng, {4, 3, 3});
    for (std::size_t i = perm.size(); i > 1; --i) {
      std::swap(perm[i - 1], perm[rng.uniform_int(i)]);
    }
    Tensor lhs = block.forward(permute_time_axis(x, perm), nullptr, nullptr);
    Tensor rhs = permute_time_axis(block.forward(x, nullptr, nullptr), perm);
    CHECK(oracle::max_abs_diff(lhs, rhs) < 1e-10);
  }
}

TEST_CASE("positional embedding breaks time-reversal equivariance") {
  Rng rng(10);
  TemporalBlock block("b", 3, 19, /*t_max=*/4);
  randomize_projections(block.proj, rng);
  randomize(block.pe->e, rng);
  Tensor x = oracle::random_tensor(rng, {4, 3, 3});

  // Forward matches the oracle with the embedding applied to q/k/v only.
  Tensor e = block.pe->e.value();
  Tensor want = oracle::temporal_block(x, block.proj.w_q.value(),
                                       block.proj.w_k.value(), block.proj.w_v.value(),
                                       block.proj.w_o.value(), &e);
  CHECK(oracle::max_abs_diff(block.forward(x, nullptr, nullptr), want) < 1e-12);

  Tensor lhs = block.forward(reverse_time(x), nullptr, nullptr);
  Tensor rhs = reverse_time(block.forward(x, nullptr, nullptr));
  CHECK(oracle::max_abs_diff(lhs, rhs) > 1e-6);
}

TEST_CASE("embedding capacity: T <= T_max enforced, prefix rows used") {
  TemporalBlock block("b", 3, 21, /*t_max=*/6);
  Rng rng(11);
  randomize_projections(block.proj, rng);
  randomize(block.pe->e, rng);

  Tensor x = oracle::random_tensor(rng, {4, 2, 3});
  Tensor e4 = take_rows(block.pe->e.value(), 0, 4);
  Tensor want = oracle::temporal_block(x, block.proj.w_q.value(),
                                       block.proj.w_k.value(), block.proj.w_v.value(),
                                       block.proj.w_o.value(), &e4);
  CHECK(oracle::max_abs_diff(block.forward(x, nullptr, nullptr), want) < 1e-12);

  Tensor too_long = oracle::random_tensor(rng, {7, 2, 3});
  CHECK_THROWS_AS(block.forward(too_long, nullptr, nullptr), DimensionError);
}

TEST_CASE("sinusoidal embedding is frozen and matches the closed form") {
  TemporalBlock block("b", 4, 23, /*t_max=*/3, /*with_norm=*/false,
                      /*sinusoidal=*/true);
  CHECK_FALSE(block.pe->e.trainable());
  CHECK(block.config_string() == "tape[sin=on]");
  const Tensor& e = block.pe->e.value();
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double angle = static_cast<double>(t) /
                           std::pow(10000.0, static_cast<double>(2 * (j / 2)) / 4.0);
      const double want = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
      CHECK(e.data()[t * 4 + j] == doctest::Approx(want).epsilon(1e-15));
    }
  }

  TemporalBlock learned("b", 4, 23, /*t_max=*/3);
  CHECK(learned.pe->e.trainable());
  CHECK(learned.config_string() == "tape");
}

TEST_CASE("dnl_block is the exact composition of its stages") {
  Rng rng(12);
  DnlBlock dnl("b7", 5, 29);
  randomize_projections(dnl.spatial.proj, rng);
  randomize_projections(dnl.temporal.proj, rng);
  Tensor x = oracle::random_tensor(rng, {3, 4, 5});
  Tensor composed = dnl.temporal.forward(dnl.spatial.forward(x, nullptr, nullptr),
                                         nullptr, nullptr);
  CHECK(oracle::max_abs_diff(dnl.forward(x, nullptr, nullptr), composed) == 0.0);

  // The two stages share no parameters.
  std::vector<Parameter*> params;
  dnl.collect(params);
  CHECK(params.size() == 8);
  std::set<std::string> names;
  std::size_t spatial_count = 0, temporal_count = 0;
  for (const Parameter* p : params) {
    names.insert(p->name());
    spatial_count += p->name().find(".spatial.") != std::string::npos;
    temporal_count += p->name().find(".temporal.") != std::string::npos;
  }
  CHECK(names.size() == 8);
  CHECK(spatial_count == 4);
  CHECK(temporal_count == 4);
}

TEST_CASE("blocks accept batched rank-4 input consistently") {
  Rng rng(13);
  TemporalBlock block("b", 3, 31);
  randomize_projections(block.proj, rng);
  Tensor x0 = oracle::random_tensor(rng, {4, 2, 3});
  Tensor x1 = oracle::random_tensor(rng, {4, 2, 3});
  Tensor batch({2, 4, 2, 3});
  std::copy_n(x0.data(), 24, batch.data());
  std::copy_n(x1.data(), 24, batch.data() + 24);
  Tensor y = block.forward(batch, nullptr, nullptr);
  Tensor y0 = block.forward(x0, nullptr, nullptr);
  Tensor y1 = block.forward(x1, nullptr, nullptr);
  for (std::size_t i = 0; i < 24; ++i) {
    CHECK(y.data()[i] == y0.data()[i]);
    CHECK(y.data()[24 + i] == y1.data()[i]);
  }
  CHECK_THROWS_AS(block.forward(Tensor({3, 4}), nullptr, nullptr), DimensionError);
}

TEST_CASE("attention cache records row-stochastic matrices per role") {
  Rng rng(14);
  NlBlock nl("b0", 3, 37);
  TemporalBlock ta("b1", 3, 37);
  randomize_projections(nl.proj, rng);
  randomize_projections(ta.proj, rng);
  Tensor x = oracle::random_tensor(rng, {2, 3, 3});

  AttentionCache cache;
  cache.current_block = 0;
  nl.forward(x, nullptr, &cache);
  cache.current_block = 1;
  ta.forward(x, nullptr, &cache);

  const AttentionRecord* joint = cache.find(0, "joint");
  REQUIRE(joint != nullptr);
  CHECK(joint->value.shape() == std::vector<std::size_t>{1, 6, 6});
  const AttentionRecord* temporal = cache.find(1, "temporal");
  REQUIRE(temporal != nullptr);
  CHECK(temporal->value.shape() == std::vector<std::size_t>{1, 3, 2, 2});
  CHECK(cache.find(0, "temporal") == nullptr);
  for (const AttentionRecord& rec : cache.records) {
    const std::size_t cols = rec.value.shape().back();
    for (std::size_t r = 0; r < rec.value.size() / cols; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        sum += rec.value.data()[r * cols + j];
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("optional normalization standardizes the attention input") {
  Rng rng(15);
  NlBlock plain("b", 3, 41);
  NlBlock normed("b", 3, 41, /*with_norm=*/true);
  randomize_projections(plain.proj, rng);
  normed.proj.w_q.value() = plain.proj.w_q.value();
  normed.proj.w_k.value() = plain.proj.w_k.value();
  normed.proj.w_v.value() = plain.proj.w_v.value();
  normed.proj.w_o.value() = plain.proj.w_o.value();

  std::vector<Parameter*> params;
  normed.collect(params);
  CHECK(params.size() == 6);
  CHECK(params[4]->name() == "b.norm.gamma");

  Tensor x = oracle::random_tensor(rng, {2, 3, 3}, 2.0);
  Tensor y_plain = plain.forward(x, nullptr, nullptr);
  Tensor y_norm = normed.forward(x, nullptr, nullptr);
  CHECK(oracle::max_abs_diff(y_plain, y_norm) > 1e-6);

  // The normalized input is what the oracle sees.
  Tensor xn = oracle::layer_norm(x, Tensor::full({3}, 1.0), Tensor({3}));
  Tensor attn_part = oracle::nl_block(reshape(xn, {6, 3}), plain.proj.w_q.value(),
                                      plain.proj.w_k.value(), plain.proj.w_v.value(),
                                      plain.proj.w_o.value());
  Tensor want(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    want.data()[i] = x.data()[i] + (attn_part.data()[i] - xn.data()[i]);
  }
  CHECK(oracle::max_abs_diff(y_norm, want) < 1e-12);
}

TEST_CASE("block gradients pass a finite-difference check") {
  Rng rng(16);
  NlBlock nl("b0", 3, 43);
  TemporalBlock tape_block("b1", 3, 43, /*t_max=*/3);
  randomize_projections(nl.proj, rng);
  randomize_projections(tape_block.proj, rng);
  randomize(tape_block.pe->e, rng);
  Tensor x = oracle::random_tensor(rng, {3, 2, 3}, 0.5);

  std::vector<Parameter*> params;
  nl.collect(params);
  tape_block.collect(params);
  const GradCheckReport rep = grad_check(
      [&](Tape* tape) {
        Tensor y = tape_block.forward(nl.forward(x, tape, nullptr), tape, nullptr);
        return sum_all(mul(y, y));
      },
      params, 1e-6);
  CAPTURE(rep.worst_param);
  CHECK(rep.max_rel_err < 1e-6);
}
