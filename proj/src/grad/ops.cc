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

#include "meetdiar/grad/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "meetdiar/errors.h"

namespace meetdiar::grad {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

MatMap Mat(double* data, std::size_t rows, std::size_t cols) {
  return MatMap(data, static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}
ConstMatMap Mat(const double* data, std::size_t rows, std::size_t cols) {
  return ConstMatMap(data, static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

void RequireMatrix(const Tensor& t, const char* what) {
  if (!t.defined() || t.shape().size() != 2) {
    throw ShapeError(std::string(what) + ": expected a matrix, got " +
                     (t.defined() ? ShapeString(t.shape()) : "undefined"));
  }
}

void RequireSameShape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + ShapeString(a.shape()) +
                     " vs " + ShapeString(b.shape()));
  }
}

// Elementwise unary op with derivative computed from (input, output).
template <typename Fwd, typename Deriv>
Tensor Unary(Tape& tape, const Tensor& x, Fwd fwd, Deriv deriv) {
  Tensor out = MakeOutput(tape, x.shape(), {&x});
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
  if (out.requires_grad()) {
    tape.Record([xn = x.shared(), on = out.shared(), deriv] {
      if (on->grad.empty()) return;
      double* gx = GradOrNull(xn);
      if (!gx) return;
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        gx[i] += on->grad[i] * deriv(xn->value[i], on->value[i]);
      }
    });
  }
  return out;
}

}  // namespace

double SigmoidScalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double EluScalar(double x, double alpha) {
  return x > 0 ? x : alpha * std::expm1(x);
}

Tensor MatMul(Tape& tape, const Tensor& a, const Tensor& b) {
  RequireMatrix(a, "matmul");
  RequireMatrix(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions disagree, " +
                     ShapeString(a.shape()) + " x " + ShapeString(b.shape()));
  }
  Tensor out = MakeOutput(tape, {n, m}, {&a, &b});
  Mat(out.mutable_values().data(), n, m).noalias() =
      Mat(a.values().data(), n, k) * Mat(b.values().data(), k, m);
  if (out.requires_grad()) {
    tape.Record([an = a.shared(), bn = b.shared(), on = out.shared(), n, k,
                 m] {
      if (on->grad.empty()) return;
      auto g = Mat(on->grad.data(), n, m);
      if (double* ga = GradOrNull(an)) {
        Mat(ga, n, k).noalias() += g * Mat(bn->value.data(), k, m).transpose();
      }
      if (double* gb = GradOrNull(bn)) {
        Mat(gb, k, m).noalias() += Mat(an->value.data(), n, k).transpose() * g;
      }
    });
  }
  return out;
}

Tensor Linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  RequireMatrix(x, "linear");
  RequireMatrix(w, "linear");
  const std::size_t n = x.rows(), k = x.cols(), m = w.cols();
  if (w.rows() != k) {
    throw ShapeError("linear: input " + ShapeString(x.shape()) +
                     " vs weight " + ShapeString(w.shape()));
  }
  if (b.defined() && b.size() != m) {
    throw ShapeError("linear: bias " + ShapeString(b.shape()) +
                     " vs output width " + std::to_string(m));
  }
  Tensor out = b.defined() ? MakeOutput(tape, {n, m}, {&x, &w, &b})
                           : MakeOutput(tape, {n, m}, {&x, &w});
  auto o = Mat(out.mutable_values().data(), n, m);
  o.noalias() = Mat(x.values().data(), n, k) * Mat(w.values().data(), k, m);
  if (b.defined()) {
    o.rowwise() += Mat(b.values().data(), 1, m).row(0);
  }
  if (out.requires_grad()) {
    tape.Record([xn = x.shared(), wn = w.shared(),
                 bn = b.defined() ? b.shared() : nullptr, on = out.shared(), n,
                 k, m] {
      if (on->grad.empty()) return;
      auto g = Mat(on->grad.data(), n, m);
      if (double* gx = GradOrNull(xn)) {
        Mat(gx, n, k).noalias() += g * Mat(wn->value.data(), k, m).transpose();
      }
      if (double* gw = GradOrNull(wn)) {
        Mat(gw, k, m).noalias() += Mat(xn->value.data(), n, k).transpose() * g;
      }
      if (bn) {
        if (double* gb = GradOrNull(bn)) {
          Mat(gb, 1, m).row(0) += g.colwise().sum();
        }
      }
    });
  }
  return out;
}

Tensor Add(Tape& tape, const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "add");
  Tensor out = MakeOutput(tape, a.shape(), {&a, &b});
  auto o = out.mutable_values();
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  if (out.requires_grad()) {
    tape.Record([an = a.shared(), bn = b.shared(), on = out.shared()] {
      if (on->grad.empty()) return;
      for (const auto& n : {an, bn}) {
        if (double* g = GradOrNull(n)) {
          for (std::size_t i = 0; i < on->grad.size(); ++i) g[i] += on->grad[i];
        }
      }
    });
  }
  return out;
}

Tensor AddRowVector(Tape& tape, const Tensor& x, const Tensor& bias) {
  RequireMatrix(x, "add_row_vector");
  const std::size_t n = x.rows(), m = x.cols();
  if (bias.size() != m) {
    throw ShapeError("add_row_vector: bias of " +
                     std::to_string(bias.size()) + " entries for " +
                     std::to_string(m) + " columns");
  }
  Tensor out = MakeOutput(tape, x.shape(), {&x, &bias});
  auto o = out.mutable_values();
  auto xv = x.values();
  auto bv = bias.values();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) o[r * m + c] = xv[r * m + c] + bv[c];
  }
  if (out.requires_grad()) {
    tape.Record([xn = x.shared(), bn = bias.shared(), on = out.shared(), n,
                 m] {
      if (on->grad.empty()) return;
      const double* g = on->grad.data();
      if (double* gx = GradOrNull(xn)) {
        for (std::size_t i = 0; i < n * m; ++i) gx[i] += g[i];
      }
      if (double* gb = GradOrNull(bn)) {
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < m; ++c) gb[c] += g[r * m + c];
        }
      }
    });
  }
  return out;
}

Tensor Scale(Tape& tape, const Tensor& x, double factor) {
  return Unary(
      tape, x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor Sum(Tape& tape, const Tensor& x) {
  Tensor out = MakeOutput(tape, {}, {&x});
  double s = 0.0;
  for (double v : x.values()) s += v;
  out.mutable_values()[0] = s;
  if (out.requires_grad()) {
    tape.Record([xn = x.shared(), on = out.shared()] {
      if (on->grad.empty()) return;
      if (double* g = GradOrNull(xn)) {
        for (std::size_t i = 0; i < xn->value.size(); ++i) g[i] += on->grad[0];
      }
    });
  }
  return out;
}

Tensor Transpose(Tape& tape, const Tensor& x) {
  RequireMatrix(x, "transpose");
  const std::size_t n = x.rows(), m = x.cols();
  Tensor out = MakeOutput(tape, {m, n}, {&x});
  Mat(out.mutable_values().data(), m, n) =
      Mat(x.values().data(), n, m).transpose();
  if (out.requires_grad()) {
    tape.Record([xn = x.shared(), on = out.shared(), n, m] {
      if (on->grad.empty()) return;
      if (double* g = GradOrNull(xn)) {
        Mat(g, n, m) += Mat(on->grad.data(), m, n).transpose();
      }
    });
  }
  return out;
}

Tensor ConcatCols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    RequireMatrix(p, "concat_cols");
    if (p.rows() != n) {
      throw ShapeError("concat_cols: row counts differ (" +
                       std::to_string(p.rows()) + " vs " + std::to_string(n) +
                       ")");
    }
    total += p.cols();
  }
  Tensor out = MakeOutput(tape, {n, total}, parts);
  auto o = Mat(out.mutable_values().data(), n, total);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    o.middleCols(static_cast<Eigen::Index>(offset),
                 static_cast<Eigen::Index>(p.cols())) =
        Mat(p.values().data(), n, p.cols());
    offset += p.cols();
  }
  if (out.requires_grad()) {
    std::vector<std::shared_ptr<Node>> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.shared());
    tape.Record([nodes, on = out.shared(), n, total] {
      if (on->grad.empty()) return;
      auto g = Mat(on->grad.data(), n, total);
      std::size_t off = 0;
      for (const auto& p : nodes) {
        const std::size_t c = p->value.size() / n;
        if (double* gp = GradOrNull(p)) {
          Mat(gp, n, c) += g.middleCols(static_cast<Eigen::Index>(off),
                                        static_cast<Eigen::Index>(c));
        }
        off += c;
      }
    });
  }
  return out;
}

Tensor SliceCols(Tape& tape, const Tensor& x, std::size_t begin,
                 std::size_t count) {
  RequireMatrix(x, "slice_cols");
  const std::size_t n = x.rows(), m = x.cols();
  if (begin + count > m) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " +
                     std::to_string(m) + " columns");
  }
  Tensor out = MakeOutput(tape, {n, count}, {&x});
  Mat(out.mutable_values().data(), n, count) =
      Mat(x.values().data(), n, m)
          .middleCols(static_cast<Eigen::Index>(begin),
                      static_cast<Eigen::Index>(count));
  if (out.requires_grad()) {
    tape.Record([xn = x.shared(), on = out.shared(), n, m, begin, count] {
      if (on->grad.empty()) return;
      if (double* g = GradOrNull(xn)) {
        Mat(g, n, m).middleCols(static_cast<Eigen::Index>(begin),
                                static_cast<Eigen::Index>(count)) +=
            Mat(on->grad.data(), n, count);
      }
    });
  }
  return out;
}

Tensor Conv1dDilated(Tape& tape, const Tensor& x, const Tensor& kernel,
                     std::size_t dilation) {
  RequireMatrix(x, "conv1d_dilated");
  if (kernel.shape().size() != 3) {
    throw ShapeError("conv1d_dilated: kernel must be [K x Cin x Cout], got " +
                     ShapeString(kernel.shape()));
  }
  const std::size_t K = kernel.shape()[0], cin = kernel.shape()[1],
                    cout = kernel.shape()[2];
  if (K % 2 == 0) {
    throw ConfigError("conv1d_dilated: kernel size must be odd, got " +
                      std::to_string(K));
  }
  if (dilation < 1) throw ConfigError("conv1d_dilated: dilation must be >= 1");
  if (x.cols() != cin) {
    throw ShapeError("conv1d_dilated: input has " + std::to_string(x.cols()) +
                     " channels, kernel expects " + std::to_string(cin));
  }
  const std::ptrdiff_t T = static_cast<std::ptrdiff_t>(x.rows());
  const std::ptrdiff_t center = static_cast<std::ptrdiff_t>(K / 2);
  const std::ptrdiff_t dil = static_cast<std::ptrdiff_t>(dilation);

  // Valid output rows [lo, hi) for tap k, reading input rows shifted by off.
  auto tap_range = [T](std::ptrdiff_t off) {
    std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
    std::ptrdiff_t hi = std::min<std::ptrdiff_t>(T, T - off);
    return std::pair{lo, std::max(lo, hi)};
  };

  Tensor out = MakeOutput(tape, {x.rows(), cout}, {&x, &kernel});
  auto o = Mat(out.mutable_values().data(), x.rows(), cout);
  auto xin = Mat(x.values().data(), x.rows(), cin);
  for (std::size_t k = 0; k < K; ++k) {
    const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(k) - center) * dil;
    auto [lo, hi] = tap_range(off);
    if (hi <= lo) continue;
    auto w = Mat(kernel.values().data() + k * cin * cout, cin, cout);
    o.middleRows(lo, hi - lo).noalias() += xin.middleRows(lo + off, hi - lo) * w;
  }
  if (out.requires_grad()) {
    tape.Record([xn = x.shared(), kn = kernel.shared(), on = out.shared(), K,
                 cin, cout, T, center, dil, tap_range] {
      if (on->grad.empty()) return;
      auto g = Mat(on->grad.data(), static_cast<std::size_t>(T), cout);
      double* gx = GradOrNull(xn);
      double* gk = GradOrNull(kn);
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t off =
            (static_cast<std::ptrdiff_t>(k) - center) * dil;
        auto [lo, hi] = tap_range(off);
        if (hi <= lo) continue;
        if (gx) {
          auto w = Mat(kn->value.data() + k * cin * cout, cin, cout);
          Mat(gx, static_cast<std::size_t>(T), cin)
              .middleRows(lo + off, hi - lo)
              .noalias() += g.middleRows(lo, hi - lo) * w.transpose();
        }
        if (gk) {
          auto xin = Mat(xn->value.data(), static_cast<std::size_t>(T), cin);
          Mat(gk + k * cin * cout, cin, cout).noalias() +=
              xin.middleRows(lo + off, hi - lo).transpose() *
              g.middleRows(lo, hi - lo);
        }
      }
    });
  }
  return out;
}

Tensor DepthwiseConv1dDilated(Tape& tape, const Tensor& x,
                              const Tensor& kernel, const Tensor& bias,
                              std::size_t dilation) {
  RequireMatrix(x, "depthwise_conv1d");
  RequireMatrix(kernel, "depthwise_conv1d");
  const std::size_t K = kernel.rows(), C = kernel.cols();
  if (K % 2 == 0) {
    throw ConfigError("depthwise_conv1d: kernel size must be odd, got " +
                      std::to_string(K));
  }
  if (dilation < 1) throw ConfigError("depthwise_conv1d: dilation must be >= 1");
  if (x.cols() != C) {
    throw ShapeError("depthwise_conv1d: input has " + std::to_string(x.cols()) +
                     " channels, kernel expects " + std::to_string(C));
  }
  if (bias.defined() && bias.size() != C) {
    throw ShapeError("depthwise_conv1d: bias size mismatch");
  }
  const std::ptrdiff_t T = static_cast<std::ptrdiff_t>(x.rows());
  const std::ptrdiff_t center = static_cast<std::ptrdiff_t>(K / 2);
  const std::ptrdiff_t dil = static_cast<std::ptrdiff_t>(dilation);

  Tensor out = bias.defined() ? MakeOutput(tape, x.shape(), {&x, &kernel, &bias})
                              : MakeOutput(tape, x.shape(), {&x, &kernel});
  double* o = out.mutable_values().data();
  const double* xv = x.values().data();
  const double* kv = kernel.values().data();
  if (bias.defined()) {
    for (std::ptrdiff_t t = 0; t < T; ++t) {
      for (std::size_t c = 0; c < C; ++c) o[t * C + c] = bias.values()[c];
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(k) - center) * dil;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(T, T - off);
    for (std::ptrdiff_t t = lo; t < hi; ++t) {
      const double* src = xv + (t + off) * C;
      double* dst = o + t * C;
      const double* w = kv + k * C;
      for (std::size_t c = 0; c < C; ++c) dst[c] += src[c] * w[c];
    }
  }
  if (out.requires_grad()) {
    tape.Record([xn = x.shared(), kn = kernel.shared(),
                 bn = bias.defined() ? bias.shared() : nullptr,
                 on = out.shared(), K, C, T, center, dil] {
      if (on->grad.empty()) return;
      const double* g = on->grad.data();
      double* gx = GradOrNull(xn);
      double* gk = GradOrNull(kn);
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t off =
            (static_cast<std::ptrdiff_t>(k) - center) * dil;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(T, T - off);
        const double* w = kn->value.data() + k * C;
        for (std::ptrdiff_t t = lo; t < hi; ++t) {
          const double* gt = g + t * C;
          if (gx) {
            double* dst = gx + (t + off) * C;
            for (std::size_t c = 0; c < C; ++c) dst[c] += gt[c] * w[c];
          }
          if (gk) {
            const double* src = xn->value.data() + (t + off) * C;
            double* dk = gk + k * C;
            for (std::size_t c = 0; c < C; ++c) dk[c] += gt[c] * src[c];
          }
        }
      }
      if (bn) {
        if (double* gb = GradOrNull(bn)) {
          for (std::ptrdiff_t t = 0; t < T; ++t) {
            for (std::size_t c = 0; c < C; ++c) gb[c] += g[t * C + c];
          }
        }
      }
    });
  }
  return out;
}

Tensor Sigmoid(Tape& tape, const Tensor& x) {
  return Unary(
      tape, x, [](double v) { return SigmoidScalar(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor Relu(Tape& tape, const Tensor& x) {
  return Unary(
      tape, x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor Elu(Tape& tape, const Tensor& x, double alpha) {
  return Unary(
      tape, x, [alpha](double v) { return EluScalar(v, alpha); },
      [alpha](double v, double) { return v > 0 ? 1.0 : alpha * std::exp(v); });
}

Tensor Prelu(Tape& tape, const Tensor& x, const Tensor& slope) {
  RequireMatrix(x, "prelu");
  const std::size_t n = x.rows(), m = x.cols();
  if (slope.size() != m) {
    throw ShapeError("prelu: " + std::to_string(slope.size()) +
                     " slopes for " + std::to_string(m) + " channels");
  }
  Tensor out = MakeOutput(tape, x.shape(), {&x, &slope});
  auto o = out.mutable_values();
  auto xv = x.values();
  auto a = slope.values();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      const double v = xv[r * m + c];
      o[r * m + c] = v > 0 ? v : a[c] * v;
    }
  }
  if (out.requires_grad()) {
    tape.Record([xn = x.shared(), an = slope.shared(), on = out.shared(), n,
                 m] {
      if (on->grad.empty()) return;
      double* gx = GradOrNull(xn);
      double* ga = GradOrNull(an);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < m; ++c) {
          const std::size_t i = r * m + c;
          const double v = xn->value[i];
          const double g = on->grad[i];
          if (v > 0) {
            if (gx) gx[i] += g;
          } else {
            if (gx) gx[i] += g * an->value[c];
            if (ga) ga[c] += g * v;
          }
        }
      }
    });
  }
  return out;
}

Tensor SoftmaxRows(Tape& tape, const Tensor& x) {
  RequireMatrix(x, "softmax_rows");
  const std::size_t n = x.rows(), m = x.cols();
  Tensor out = MakeOutput(tape, x.shape(), {&x});
  auto o = out.mutable_values();
  auto xv = x.values();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = xv.data() + r * m;
    double* dst = o.data() + r * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      dst[c] = std::exp(row[c] - mx);
      z += dst[c];
    }
    for (std::size_t c = 0; c < m; ++c) dst[c] /= z;
  }
  if (out.requires_grad()) {
    tape.Record([xn = x.shared(), on = out.shared(), n, m] {
      if (on->grad.empty()) return;
      double* gx = GradOrNull(xn);
      if (!gx) return;
      for (std::size_t r = 0; r < n; ++r) {
        const double* y = on->value.data() + r * m;
        const double* g = on->grad.data() + r * m;
        double dot = 0.0;
        for (std::size_t c = 0; c < m; ++c) dot += y[c] * g[c];
        for (std::size_t c = 0; c < m; ++c) gx[r * m + c] += y[c] * (g[c] - dot);
      }
    });
  }
  return out;
}

Tensor LayerNorm(Tape& tape, const Tensor& x, const Tensor& gain,
                 const Tensor& bias, double eps) {
  RequireMatrix(x, "layer_norm");
  const std::size_t n = x.rows(), m = x.cols();
  if (m < 2) throw ShapeError("layer_norm: rows need at least 2 entries");
  if (gain.size() != m || bias.size() != m) {
    throw ShapeError("layer_norm: gain/bias size mismatch");
  }
  Tensor out = MakeOutput(tape, x.shape(), {&x, &gain, &bias});
  // Saved per-row normalized values and inverse std for backward.
  auto xhat = std::make_shared<std::vector<double>>(n * m);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  auto o = out.mutable_values();
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = xv.data() + r * m;
    double mean = 0.0;
    for (std::size_t c = 0; c < m; ++c) mean += row[c];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t c = 0; c < m; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(m);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t c = 0; c < m; ++c) {
      const double h = (row[c] - mean) * inv;
      (*xhat)[r * m + c] = h;
      o[r * m + c] = h * gv[c] + bv[c];
    }
  }
  if (out.requires_grad()) {
    tape.Record([xn = x.shared(), gn = gain.shared(), bn = bias.shared(),
                 on = out.shared(), xhat, inv_std, n, m] {
      if (on->grad.empty()) return;
      double* gx = GradOrNull(xn);
      double* gg = GradOrNull(gn);
      double* gb = GradOrNull(bn);
      std::vector<double> dh(m);
      for (std::size_t r = 0; r < n; ++r) {
        const double* g = on->grad.data() + r * m;
        const double* h = xhat->data() + r * m;
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
          if (gg) gg[c] += g[c] * h[c];
          if (gb) gb[c] += g[c];
          dh[c] = g[c] * gn->value[c];
          mean_dh += dh[c];
          mean_dh_h += dh[c] * h[c];
        }
        if (!gx) continue;
        mean_dh /= static_cast<double>(m);
        mean_dh_h /= static_cast<double>(m);
        const double inv = (*inv_std)[r];
        for (std::size_t c = 0; c < m; ++c) {
          gx[r * m + c] += inv * (dh[c] - mean_dh - h[c] * mean_dh_h);
        }
      }
    });
  }
  return out;
}

Tensor L2NormalizeRows(Tape& tape, const Tensor& x, double eps,
                       std::size_t* zero_rows) {
  RequireMatrix(x, "l2_normalize_rows");
  const std::size_t n = x.rows(), m = x.cols();
  Tensor out = MakeOutput(tape, x.shape(), {&x});
  auto norms = std::make_shared<std::vector<double>>(n);
  auto o = out.mutable_values();
  auto xv = x.values();
  std::size_t zeros = 0;
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += xv[r * m + c] * xv[r * m + c];
    const double norm = std::sqrt(s);
    (*norms)[r] = norm;
    if (norm < eps) {
      ++zeros;
      continue;
    }
    for (std::size_t c = 0; c < m; ++c) o[r * m + c] = xv[r * m + c] / norm;
  }
  if (zero_rows) *zero_rows = zeros;
  if (out.requires_grad()) {
    tape.Record([xn = x.shared(), on = out.shared(), norms, eps, n, m] {
      if (on->grad.empty()) return;
      double* gx = GradOrNull(xn);
      if (!gx) return;
      for (std::size_t r = 0; r < n; ++r) {
        const double norm = (*norms)[r];
        if (norm < eps) continue;
        const double* y = on->value.data() + r * m;
        const double* g = on->grad.data() + r * m;
        double dot = 0.0;
        for (std::size_t c = 0; c < m; ++c) dot += y[c] * g[c];
        for (std::size_t c = 0; c < m; ++c) {
          gx[r * m + c] += (g[c] - y[c] * dot) / norm;
        }
      }
    });
  }
  return out;
}

}  // namespace meetdiar::grad
