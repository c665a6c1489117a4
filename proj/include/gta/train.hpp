// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gta/data.hpp"
#include "gta/model.hpp"

namespace gta {

struct Hyper {
  std::size_t epochs = 20;
  std::size_t batch = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip = 0.0;  // global-norm threshold; 0 disables
  std::uint64_t seed = 1;

  void validate() const;  // ConfigError listing violations
};

// Bias-corrected adaptive-moment optimizer over a fixed parameter registry.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, const Hyper& hy);
  // Applies one update from the tape's gradients (missing gradients are
  // treated as zero: the parameter still advances its moments).
  void step(const Tape& tape);
  std::size_t steps_taken() const { return step_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_, v_;
  Hyper hy_;
  std::size_t step_ = 0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Never mutates parameters; argmax ties break toward the lower class index.
EvalResult evaluate(Model& model, const VideoDataset& ds, std::size_t batch = 32);

struct EpochRow {
  std::size_t epoch;
  std::string split;  // "train" | "test"
  double loss;
  double accuracy;
};

struct TrainResult {
  std::vector<EpochRow> history;
  EvalResult final_test;
};

// Deterministic loop: per-epoch seeded shuffle, minibatch cross-entropy,
// Adam updates. Train rows report on-the-fly minibatch averages; test rows
// re-evaluate after the epoch.
TrainResult train(Model& model, const VideoDataset& train_set,
                  const VideoDataset& test_set, const Hyper& hy);

// CSV rendering with header "epoch,split,loss,accuracy"; doubles at full
// round-trip precision.
std::string metrics_csv(const std::vector<EpochRow>& history);
void write_metrics_csv(const std::vector<EpochRow>& history,
                       const std::string& path);

}  // namespace gta
