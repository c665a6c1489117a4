// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "gta/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <utility>

#include "gta/error.hpp"
#include "gta/ops.hpp"
#include "gta/rng.hpp"
#include "gta/serialize.hpp"

namespace gta {

void Hyper::validate() const {
  std::string problems;
  auto flag = [&problems](const std::string& p) {
    if (!problems.empty()) problems += "; ";
    problems += p;
  };
  if (batch == 0) flag("batch size must be positive");
  if (!(lr > 0.0)) flag("learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) flag("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) flag("beta2 must lie in (0, 1)");
  if (!(eps > 0.0)) flag("epsilon must be positive");
  if (clip < 0.0) flag("gradient clip must be nonnegative");
  if (!problems.empty()) throw ConfigError("hyperparameters: " + problems);
}

Adam::Adam(std::vector<Parameter*> params, const Hyper& hy)
    : params_(std::move(params)), hy_(hy) {
  hy_.validate();
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value().shape());
    v_.emplace_back(p->value().shape());
  }
}

void Adam::step(const Tape& tape) {
  ++step_;
  double clip_factor = 1.0;
  if (hy_.clip > 0.0) {
    double sq = 0.0;
    for (const Parameter* p : params_) {
      if (const Tensor* g = tape.grad(*p)) {
        for (std::size_t i = 0; i < g->size(); ++i) sq += g->data()[i] * g->data()[i];
      }
    }
    const double norm = std::sqrt(sq);
    if (norm > hy_.clip) clip_factor = hy_.clip / norm;
  }
  const double bc1 = 1.0 - std::pow(hy_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(hy_.beta2, static_cast<double>(step_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Parameter* p = params_[pi];
    if (!p->trainable()) continue;
    const Tensor* g = tape.grad(*p);
    double* m = m_[pi].data();
    double* v = v_[pi].data();
    double* w = p->value().data();
    const std::size_t n = p->value().size();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g ? g->data()[i] * clip_factor : 0.0;
      m[i] = hy_.beta1 * m[i] + (1.0 - hy_.beta1) * gi;
      v[i] = hy_.beta2 * v[i] + (1.0 - hy_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= hy_.lr * mhat / (std::sqrt(vhat) + hy_.eps);
      if (!std::isfinite(w[i])) {
        throw NumericError("adam step produced a non-finite value in " + p->name());
      }
    }
  }
}

namespace {

std::size_t argmax_row(const double* row, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j) {
    if (row[j] > row[best]) best = j;  // ties keep the lower index
  }
  return best;
}

void check_geometry(const Model& model, const VideoDataset& ds,
                    const char* which) {
  const ModelSpec& ms = model.spec();
  if (ds.t != ms.t || ds.h != ms.h || ds.w != ms.w) {
    throw DimensionError(std::string(which) + " set geometry (T=" +
                         std::to_string(ds.t) + ", H=" + std::to_string(ds.h) +
                         ", W=" + std::to_string(ds.w) +
                         ") does not match the model (T=" + std::to_string(ms.t) +
                         ", H=" + std::to_string(ms.h) + ", W=" +
                         std::to_string(ms.w) + ")");
  }
  if (ds.classes != ms.classes) {
    throw DimensionError(std::string(which) + " set has " +
                         std::to_string(ds.classes) + " classes, model has " +
                         std::to_string(ms.classes));
  }
}

}  // namespace

EvalResult evaluate(Model& model, const VideoDataset& ds, std::size_t batch) {
  check_geometry(model, ds, "evaluation");
  if (batch == 0) throw ContractError("evaluate: batch size must be positive");
  const std::size_t n = ds.size();
  if (n == 0) throw ContractError("evaluate: empty dataset");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t first = 0; first < n; first += batch) {
    const std::size_t count = std::min(batch, n - first);
    Batch b = make_batch(ds, order, first, count);
    Tensor logits = model.forward(b.videos, nullptr);
    loss_sum += cross_entropy(logits, b.labels).value() * static_cast<double>(count);
    const std::size_t k = logits.extent(1);
    for (std::size_t i = 0; i < count; ++i) {
      if (argmax_row(logits.data() + i * k, k) == b.labels[i]) ++correct;
    }
  }
  return {loss_sum / static_cast<double>(n),
          static_cast<double>(correct) / static_cast<double>(n)};
}

TrainResult train(Model& model, const VideoDataset& train_set,
                  const VideoDataset& test_set, const Hyper& hy) {
  hy.validate();
  check_geometry(model, train_set, "training");
  check_geometry(model, test_set, "test");
  if (train_set.size() == 0) throw ContractError("train: empty training set");

  TrainResult result;
  Adam opt(std::vector<Parameter*>(model.params()), hy);
  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);
  const std::uint64_t shuffle_seed = mix_seed(hy.seed, "shuffle");
  for (std::size_t epoch = 1; epoch <= hy.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n - 1; i > 0; --i) {
      std::swap(order[i], order[rng.uniform_int(i + 1)]);
    }
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t first = 0; first < n; first += hy.batch) {
      const std::size_t count = std::min(hy.batch, n - first);
      Batch b = make_batch(train_set, order, first, count);
      Tape tape;
      Tensor logits = model.forward(b.videos, &tape);
      Tensor loss = cross_entropy(logits, b.labels);
      loss_sum += loss.value() * static_cast<double>(count);
      const std::size_t k = logits.extent(1);
      for (std::size_t i = 0; i < count; ++i) {
        if (argmax_row(logits.data() + i * k, k) == b.labels[i]) ++correct;
      }
      tape.backward(loss);
      opt.step(tape);
    }
    result.history.push_back({epoch, "train", loss_sum / static_cast<double>(n),
                              static_cast<double>(correct) / static_cast<double>(n)});
    const EvalResult ev = evaluate(model, test_set, hy.batch);
    result.history.push_back({epoch, "test", ev.loss, ev.accuracy});
    result.final_test = ev;
  }
  if (hy.epochs == 0) result.final_test = evaluate(model, test_set, hy.batch);
  return result;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<EpochRow>& history) {
  std::string out = "epoch,split,loss,accuracy\n";
  for (const EpochRow& row : history) {
    out += std::to_string(row.epoch);
    out += ',';
    out += row.split;
    out += ',';
    out += format_double(row.loss);
    out += ',';
    out += format_double(row.accuracy);
    out += '\n';
  }
  return out;
}

void write_metrics_csv(const std::vector<EpochRow>& history,
                       const std::string& path) {
  const std::string text = metrics_csv(history);
  write_file_atomic(path,
                    std::vector<unsigned char>(text.begin(), text.end()));
}

}  // namespace gta
