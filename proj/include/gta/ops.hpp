// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "gta/tape.hpp"
#include "gta/tensor.hpp"

// Differentiable operations. Every op computes its value eagerly; when any
// operand is tracked on a tape, a backward closure is recorded on that tape
// and the result is tracked too. Mixing operands from two different tapes is
// a contract error. Every op checks its output for non-finite values.
//
// Summation conventions are part of the contract: matmul and its batched
// variants accumulate over the contraction index in ascending order, and
// softmax subtracts the row maximum before exponentiation. Tests compare
// against naive index-loop references relying on exactly these orders.

namespace gta {

// (n, k) @ (k, m) -> (n, m)
Tensor matmul(const Tensor& a, const Tensor& b);

// (..., n, k) @ (..., k, m) -> (..., n, m); leading extents must match.
Tensor bmm(const Tensor& a, const Tensor& b);

// (p, q) @ (..., q, r) -> (..., p, r); the left matrix is shared across the
// batch, its gradient sums over the batch.
Tensor bmm_left(const Tensor& m, const Tensor& v);

// (..., m) + b(m), broadcast over all leading axes.
Tensor add_bias(const Tensor& x, const Tensor& b);

// Row-wise softmax over the last axis.
Tensor softmax_last(const Tensor& x);

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape);
Tensor permute_axes(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor transpose_last2(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double s);

Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean_axis(const Tensor& x, std::size_t axis);
Tensor sum_all(const Tensor& x);  // -> scalar

// Rows [start, start+count) of a rank >= 1 tensor along axis 0.
Tensor take_rows(const Tensor& x, std::size_t start, std::size_t count);

// x(..., T, HW, C) + e(T, C): adds e[t] to every spatial row of frame t.
Tensor add_frame_embedding(const Tensor& x, const Tensor& e);

// Grouped channel-wise multi-head time mixing.
// v: (..., T, C), bank: (G, N_h, T, T) with N_h == G and C % G == 0.
// Output channel slab [k*C/G, (k+1)*C/G) = sum_g bank[g][k] @ v_slab_g,
// i.e. head k blends every channel group with its own T x T matrix.
// With G = N_h = 1 this is exactly bank[0][0] @ v.
Tensor ccmh_mix(const Tensor& v, const Tensor& bank);

// Channel standardization over the last axis with learned scale and shift.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// (B, T, H, W, c) -> (B, T, (H/p)*(W/p), p*p*c): non-overlapping p x p
// patches, flattened row-major as (dy, dx, channel).
Tensor patchify(const Tensor& x, std::size_t p);

// Mean negative log-likelihood of the labeled class, computed from
// max-subtracted log-sum-exp. logits: (B, K), labels in [0, K).
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

// x(..., k) @ w(k, m) applied to the last axis (reshape + matmul + reshape).
Tensor linear_last(const Tensor& x, const Tensor& w);

}  // namespace gta
