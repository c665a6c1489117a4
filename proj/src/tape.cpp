// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "gta/tape.hpp"

#include <utility>

#include "gta/error.hpp"

namespace gta {

Tensor Tape::watch(Parameter& p) {
  Tensor v = p.value();
  v.detach();
  if (!p.trainable()) return v;
  const auto it = watched_.find(&p);
  if (it != watched_.end()) {
    v.bind(this, it->second);
    return v;
  }
  const int node = record(nullptr);
  watched_.emplace(&p, node);
  v.bind(this, node);
  return v;
}

Tensor Tape::leaf(Tensor value) {
  value.detach();
  value.bind(this, record(nullptr));
  return value;
}

int Tape::record(BackFn back) {
  if (backward_done_) {
    throw ContractError("tape: recording after backward; reset the tape first");
  }
  backs_.push_back(std::move(back));
  return static_cast<int>(backs_.size()) - 1;
}

void Tape::accumulate(int node, const Tensor& g) { accumulate(node, Tensor(g)); }

void Tape::accumulate(int node, Tensor&& g) {
  if (node < 0) return;
  Tensor& slot = grads_[static_cast<std::size_t>(node)];
  if (!has_grad_[static_cast<std::size_t>(node)]) {
    slot = std::move(g);
    slot.detach();
    has_grad_[static_cast<std::size_t>(node)] = 1;
    return;
  }
  if (slot.shape() != g.shape()) {
    throw DimensionError("tape: gradient shape " + shape_string(g.shape()) +
                         " does not match accumulated " + shape_string(slot.shape()));
  }
  double* dst = slot.data();
  const double* src = g.data();
  for (std::size_t i = 0; i < slot.size(); ++i) dst[i] += src[i];
}

void Tape::backward(const Tensor& loss) {
  if (backward_done_) {
    throw ContractError("tape: backward ran already; reset the tape first");
  }
  if (loss.tape() != this || loss.node() < 0) {
    throw ContractError("tape: loss is not tracked on this tape");
  }
  if (loss.size() != 1) {
    throw ContractError("tape: loss must be a single element, shape is " +
                        shape_string(loss.shape()));
  }
  grads_.assign(backs_.size(), Tensor());
  has_grad_.assign(backs_.size(), 0);
  Tensor seed = Tensor::full(loss.shape(), 1.0);
  accumulate(loss.node(), std::move(seed));
  for (std::size_t i = backs_.size(); i-- > 0;) {
    if (!has_grad_[i] || !backs_[i]) continue;
    backs_[i](*this, grads_[i]);
  }
  backward_done_ = true;
}

const Tensor* Tape::grad(const Parameter& p) const {
  const auto it = watched_.find(&p);
  if (it == watched_.end()) return nullptr;
  return grad_of_node(it->second);
}

const Tensor* Tape::grad_of_node(int node) const {
  if (!backward_done_) {
    throw ContractError("tape: gradients requested before backward");
  }
  if (node < 0 || static_cast<std::size_t>(node) >= backs_.size()) return nullptr;
  if (!has_grad_[static_cast<std::size_t>(node)]) return nullptr;
  return &grads_[static_cast<std::size_t>(node)];
}

void Tape::reset() {
  backs_.clear();
  grads_.clear();
  has_grad_.clear();
  watched_.clear();
  backward_done_ = false;
}

Tape* common_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->tracked()) continue;
    if (tape == nullptr) {
      tape = t->tape();
    } else if (tape != t->tape()) {
      throw ContractError("ops: operands recorded on different tapes");
    }
  }
  return tape;
}

}  // namespace gta
