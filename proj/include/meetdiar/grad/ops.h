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

// Differentiable operations over row-major matrices. Every op takes the tape
// it records into; a disabled tape (or inputs that need no gradient) turns
// the op into a plain forward computation.

#ifndef MEETDIAR_GRAD_OPS_H_
#define MEETDIAR_GRAD_OPS_H_

#include <cstddef>
#include <vector>

#include "meetdiar/grad/tensor.h"

namespace meetdiar::grad {

// [T x D1] * [D1 x D2] -> [T x D2].
Tensor MatMul(Tape& tape, const Tensor& a, const Tensor& b);

// x * w + b, with b broadcast over rows. `b` may be undefined.
Tensor Linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);

Tensor Add(Tape& tape, const Tensor& a, const Tensor& b);
// Adds a length-C vector to every row of a [T x C] matrix.
Tensor AddRowVector(Tape& tape, const Tensor& x, const Tensor& bias);
Tensor Scale(Tape& tape, const Tensor& x, double factor);
// Sum of all elements, as a scalar tensor.
Tensor Sum(Tape& tape, const Tensor& x);

Tensor Transpose(Tape& tape, const Tensor& x);
Tensor ConcatCols(Tape& tape, const std::vector<Tensor>& parts);
Tensor SliceCols(Tape& tape, const Tensor& x, std::size_t begin,
                 std::size_t count);

// Same-length dilated convolution along rows (time). `kernel` has shape
// [K x Cin x Cout] with odd K; input rows outside [0, T) read as zero.
Tensor Conv1dDilated(Tape& tape, const Tensor& x, const Tensor& kernel,
                     std::size_t dilation);
// Per-channel variant: `kernel` is [K x C], `bias` (optional) has C entries.
Tensor DepthwiseConv1dDilated(Tape& tape, const Tensor& x,
                              const Tensor& kernel, const Tensor& bias,
                              std::size_t dilation);

Tensor Sigmoid(Tape& tape, const Tensor& x);
Tensor Relu(Tape& tape, const Tensor& x);
// `slope` holds one learnable slope per column.
Tensor Prelu(Tape& tape, const Tensor& x, const Tensor& slope);
Tensor Elu(Tape& tape, const Tensor& x, double alpha = 1.0);
Tensor SoftmaxRows(Tape& tape, const Tensor& x);
// Normalizes each row to zero mean and unit variance, then applies the
// per-column gain and bias. Rows need at least two entries.
Tensor LayerNorm(Tape& tape, const Tensor& x, const Tensor& gain,
                 const Tensor& bias, double eps = 1e-5);
// Divides each row by its l2 norm. Rows with norm below `eps` come out as
// zero rows; their count is written to `zero_rows` when non-null.
Tensor L2NormalizeRows(Tape& tape, const Tensor& x, double eps = 1e-12,
                       std::size_t* zero_rows = nullptr);

// Plain (non-taped) helpers shared by ops and other modules.
double SigmoidScalar(double x);
double EluScalar(double x, double alpha);

}  // namespace meetdiar::grad

#endif  // MEETDIAR_GRAD_OPS_H_
