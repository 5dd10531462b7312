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

#ifndef MEETDIAR_MODEL_ATTENTION_H_
#define MEETDIAR_MODEL_ATTENTION_H_

#include <cstddef>

#include "meetdiar/features/features.h"
#include "meetdiar/grad/tensor.h"
#include "meetdiar/model/config.h"

namespace meetdiar::model {

// Counts doubles held in attention intermediates (everything beyond the
// Q/K/V inputs and the output).
class ScratchMeter {
 public:
  void Allocate(std::size_t n) {
    current_ += n;
    if (current_ > peak_) peak_ = current_;
  }
  void Release(std::size_t n) { current_ -= n; }
  std::size_t peak() const { return peak_; }
  std::size_t current() const { return current_; }

 private:
  std::size_t current_ = 0;
  std::size_t peak_ = 0;
};

// Lower bound on the linear-attention normalizer.
inline constexpr double kLinearAttentionMinDenominator = 1e-12;

// phi(x) = elu(x) + 1 with alpha = 1; strictly positive.
double LinearAttentionFeature(double x);

// Single-head softmax attention, softmax(Q K^T / sqrt(Dh)) V, for [T x Dh]
// inputs. Materializes the T x T weight matrix.
Matrix AttentionFull(const Matrix& q, const Matrix& k, const Matrix& v,
                     ScratchMeter* meter = nullptr);

// Single-head normalized linear attention:
//   O_t = phi(q_t) A / (phi(q_t) . z),  A = sum_j phi(k_j) v_j^T,
//   z = sum_j phi(k_j).
// Cost O(T Dh^2); intermediates O(T Dh + Dh^2).
Matrix AttentionLinear(const Matrix& q, const Matrix& k, const Matrix& v,
                       ScratchMeter* meter = nullptr);

// Differentiable multi-head attention over projected [T x D] queries, keys
// and values; head h uses columns [h*D/H, (h+1)*D/H).
grad::Tensor MultiHeadAttention(grad::Tape& tape, const grad::Tensor& q,
                                const grad::Tensor& k, const grad::Tensor& v,
                                int heads, AttentionKind kind);

}  // namespace meetdiar::model

#endif  // MEETDIAR_MODEL_ATTENTION_H_
