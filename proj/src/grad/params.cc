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

#include "meetdiar/grad/params.h"

#include <cmath>

#include "meetdiar/errors.h"

namespace meetdiar::grad {

Tensor ParameterSet::Add(const std::string& name, Shape shape,
                         std::vector<double> values) {
  if (index_.count(name)) {
    throw UsageError("duplicate parameter name '" + name + "'");
  }
  Tensor t = Tensor::FromData(std::move(shape), std::move(values), true);
  index_[name] = entries_.size();
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParameterSet::Add(const std::string& name, Shape shape, double fill) {
  std::vector<double> values(NumElements(shape), fill);
  return Add(name, std::move(shape), std::move(values));
}

bool ParameterSet::Contains(const std::string& name) const {
  return index_.count(name) != 0;
}

const Tensor& ParameterSet::Get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw UsageError("unknown parameter '" + name + "'");
  }
  return entries_[it->second].second;
}

std::size_t ParameterSet::NumScalars() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

void ParameterSet::ZeroGrad() {
  for (auto& [name, t] : entries_) {
    Tensor handle = t;
    handle.zero_grad();
  }
}

void ParameterSet::SetRequiresGrad(bool value) {
  for (auto& [name, t] : entries_) t.node()->requires_grad = value;
}

bool ParameterSet::AllFinite() const {
  for (const auto& [name, t] : entries_) {
    for (double v : t.values()) {
      if (!std::isfinite(v)) return false;
    }
    if (t.has_grad()) {
      for (double g : t.grad()) {
        if (!std::isfinite(g)) return false;
      }
    }
  }
  return true;
}

ParameterSet ParameterSet::Clone() const {
  ParameterSet copy;
  for (const auto& [name, t] : entries_) {
    Tensor c = copy.Add(name, t.shape(),
                        std::vector<double>(t.values().begin(),
                                            t.values().end()));
    c.node()->requires_grad = t.requires_grad();
  }
  return copy;
}

AdamState AdamState::ForParameters(const ParameterSet& params,
                                   AdamOptions options) {
  AdamState state;
  state.options = options;
  for (const auto& [name, t] : params.entries()) {
    state.m.emplace_back(t.size(), 0.0);
    state.v.emplace_back(t.size(), 0.0);
  }
  return state;
}

void AdamUpdate(std::span<double> param, std::span<const double> grad,
                std::span<double> m, std::span<double> v,
                const AdamOptions& o, std::int64_t t) {
  if (grad.size() != param.size() || m.size() != param.size() ||
      v.size() != param.size()) {
    throw ShapeError("adam: parameter, gradient and moment sizes disagree");
  }
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
    v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    param[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
  }
}

void AdamStep(ParameterSet& params, AdamState& state) {
  if (state.m.size() != params.size()) {
    throw ShapeError("adam: state tracks " + std::to_string(state.m.size()) +
                     " parameters, set has " + std::to_string(params.size()));
  }
  ++state.step;
  std::size_t i = 0;
  for (const auto& [name, t] : params.entries()) {
    Tensor handle = t;
    if (handle.requires_grad()) {
      AdamUpdate(handle.mutable_values(), handle.grad(), state.m[i],
                 state.v[i], state.options, state.step);
    }
    ++i;
  }
}

}  // namespace meetdiar::grad
