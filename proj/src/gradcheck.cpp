// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#include "gta/gradcheck.hpp"

#include <cmath>
#include <cstddef>

#include "gta/error.hpp"
#include "gta/tape.hpp"

namespace gta {

GradCheckReport grad_check(const std::function<Tensor(Tape*)>& loss_fn,
                           const std::vector<Parameter*>& params, double step) {
  if (params.empty()) throw ContractError("grad_check: no parameters");
  if (step <= 0.0) throw ContractError("grad_check: step must be positive");

  Tape tape;
  for (Parameter* p : params) tape.watch(*p);
  Tensor loss = loss_fn(&tape);
  tape.backward(loss);

  GradCheckReport report;
  report.max_rel_err = 0.0;
  for (Parameter* p : params) {
    const Tensor* analytic = tape.grad(*p);
    for (std::size_t i = 0; i < p->value().size(); ++i) {
      double& slot = p->value().data()[i];
      const double keep = slot;
      slot = keep + step;
      const double up = loss_fn(nullptr).value();
      slot = keep - step;
      const double down = loss_fn(nullptr).value();
      slot = keep;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic ? analytic->data()[i] : 0.0;
      const double rel =
          std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      if (rel >= report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p->name();
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace gta
