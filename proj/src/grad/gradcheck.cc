// Copyright 2026 The meetdiar Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "meetdiar/grad/gradcheck.h"

#include <algorithm>
#include <cmath>

namespace meetdiar::grad {

double GradRelativeError(double analytic, double numeric,
                         double absolute_floor) {
  const double diff = std::abs(analytic - numeric);
  if (diff < absolute_floor) return 0.0;
  return diff / std::max(std::abs(analytic), std::abs(numeric));
}

GradCheckResult CheckGradients(
    const std::vector<std::pair<std::string, Tensor>>& tensors,
    const std::function<Tensor(Tape&)>& loss,
    const GradCheckOptions& options) {
  for (const auto& [name, t] : tensors) {
    Tensor h = t;
    h.zero_grad();
  }
  {
    Tape tape;
    tape.Backward(loss(tape));
  }
  auto evaluate = [&loss] {
    Tape tape(/*enabled=*/false);
    return loss(tape).item();
  };
  GradCheckResult r;
  for (const auto& [name, t] : tensors) {
    Tensor h = t;
    const std::vector<double> analytic(h.grad().begin(), h.grad().end());
    auto values = h.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = evaluate();
      values[i] = saved - options.step;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double err =
          GradRelativeError(analytic[i], numeric, options.absolute_floor);
      ++r.checked;
      if (!(err < options.tolerance)) ++r.failed;
      if (!(err <= r.max_relative_error)) {
        r.max_relative_error = err;
        r.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

}  // namespace meetdiar::grad
