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

#ifndef MEETDIAR_GRAD_GRADCHECK_H_
#define MEETDIAR_GRAD_GRADCHECK_H_

#include <functional>
#include <string>
#include <vector>

#include "meetdiar/grad/params.h"
#include "meetdiar/grad/tensor.h"

namespace meetdiar::grad {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Differences below this are treated as finite-difference round-off.
  double absolute_floor = 1e-9;
};

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double max_relative_error = 0.0;
  std::string worst;  // "name[index]"
  bool ok() const { return failed == 0 && checked > 0; }
};

// Relative error |a - n| / max(|a|, |n|), or 0 when |a - n| is below the
// absolute floor.
double GradRelativeError(double analytic, double numeric,
                         double absolute_floor);

// Compares backward() against central differences for every scalar of
// `tensors`. `loss` must build the scalar loss on the given tape.
GradCheckResult CheckGradients(
    const std::vector<std::pair<std::string, Tensor>>& tensors,
    const std::function<Tensor(Tape&)>& loss,
    const GradCheckOptions& options = {});

}  // namespace meetdiar::grad

#endif  // MEETDIAR_GRAD_GRADCHECK_H_
