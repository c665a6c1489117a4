// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gta {

class Tape;

// Dense row-major tensor of doubles. Rank 0 is a scalar holding one value.
// A tensor may carry the identity of a node on a differentiation tape; value
// copies share that identity, mutation through data() does not update it.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor full(std::vector<std::size_t> shape, double v);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  // Value of a single-element tensor.
  double value() const;

  // Tape identity; -1 means constant (not recorded).
  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  void bind(Tape* tape, int node) {
    tape_ = tape;
    node_ = node;
  }
  void detach() {
    tape_ = nullptr;
    node_ = -1;
  }
  bool tracked() const { return tape_ != nullptr && node_ >= 0; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

// Throws NumericError naming `op` if any element is NaN or infinite.
void check_finite(const Tensor& t, const char* op);

}  // namespace gta
