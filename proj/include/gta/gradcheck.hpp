// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gta/tape.hpp"

namespace gta {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares reverse-mode gradients against central finite differences.
//
// `loss_fn` builds the scalar loss from the parameters' current values; with
// a tape it watches what it needs and returns a tracked loss, with nullptr it
// runs untracked (used for the +/- step evaluations). The error metric per
// entry is |analytic - numeric| / max(1, |numeric|); the report carries the
// maximum over all entries of all trainable parameters.
GradCheckReport grad_check(const std::function<Tensor(Tape*)>& loss_fn,
                           const std::vector<Parameter*>& params,
                           double step = 1e-5);

}  // namespace gta
