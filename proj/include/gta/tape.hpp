// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gta/tensor.hpp"

namespace gta {

// Named, owned value with a trainable flag. Parameters persist across passes;
// per-pass gradients live on the tape that watched them.
class Parameter {
 public:
  Parameter(std::string name, Tensor value, bool trainable = true)
      : name_(std::move(name)), value_(std::move(value)), trainable_(trainable) {
    value_.detach();
  }

  const std::string& name() const { return name_; }
  Tensor& value() { return value_; }
  const Tensor& value() const { return value_; }
  bool trainable() const { return trainable_; }

 private:
  std::string name_;
  Tensor value_;
  bool trainable_;
};

// Reverse-mode tape. One tape records exactly one forward pass; backward may
// run once, after which the tape must be reset (or discarded) before reuse.
// A tape is confined to one logical thread of execution.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf for the parameter's current value. Watching the same
  // parameter again returns the node already assigned, so gradients
  // accumulate in one place. Non-trainable parameters come back untracked.
  Tensor watch(Parameter& p);

  // Registers an explicit leaf (an input that wants a gradient).
  Tensor leaf(Tensor value);

  // Seeds d(loss)/d(loss) = 1 and propagates to all reachable leaves.
  // `loss` must be a tracked single-element tensor on this tape.
  void backward(const Tensor& loss);

  // Gradient of a watched parameter; null when the parameter was never
  // watched, is non-trainable, or received no gradient flow.
  const Tensor* grad(const Parameter& p) const;
  const Tensor* grad_of_node(int node) const;

  bool backward_done() const { return backward_done_; }
  std::size_t node_count() const { return backs_.size(); }

  // Clears all nodes, gradients and watch registrations.
  void reset();

  // --- recording interface used by the op layer ---
  using BackFn = std::function<void(Tape&, const Tensor& gout)>;

  // Appends a node; `back` pulls the output gradient and accumulates into
  // parent nodes via accumulate(). Returns the new node id.
  int record(BackFn back);
  void accumulate(int node, const Tensor& g);
  void accumulate(int node, Tensor&& g);

 private:
  std::vector<BackFn> backs_;
  std::vector<Tensor> grads_;
  std::vector<char> has_grad_;
  std::unordered_map<const Parameter*, int> watched_;
  bool backward_done_ = false;
};

// Returns the common tape of any tracked arguments (nullptr when all are
// constants); throws ContractError when two arguments live on different tapes.
Tape* common_tape(std::initializer_list<const Tensor*> ts);

}  // namespace gta
