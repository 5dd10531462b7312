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

#ifndef MEETDIAR_GRAD_PARAMS_H_
#define MEETDIAR_GRAD_PARAMS_H_

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "meetdiar/grad/tensor.h"

namespace meetdiar::grad {

// Ordered collection of named trainable leaves.
class ParameterSet {
 public:
  // Registers a new parameter; names must be unique.
  Tensor Add(const std::string& name, Shape shape, std::vector<double> values);
  Tensor Add(const std::string& name, Shape shape, double fill);

  bool Contains(const std::string& name) const;
  const Tensor& Get(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t NumScalars() const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return entries_;
  }

  void ZeroGrad();
  // Marks every parameter (non-)trainable.
  void SetRequiresGrad(bool value);
  // True when every parameter value and gradient is finite.
  bool AllFinite() const;
  // Deep copy with fresh storage.
  ParameterSet Clone() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moments for every parameter of a ParameterSet, in order.
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState ForParameters(const ParameterSet& params,
                                 AdamOptions options = {});
};

// One bias-corrected Adam update of a single flat parameter. `t` is the
// 1-based step number used for bias correction.
void AdamUpdate(std::span<double> param, std::span<const double> grad,
                std::span<double> m, std::span<double> v,
                const AdamOptions& options, std::int64_t t);

// Applies one Adam step to every parameter using its accumulated gradient.
void AdamStep(ParameterSet& params, AdamState& state);

}  // namespace meetdiar::grad

#endif  // MEETDIAR_GRAD_PARAMS_H_
