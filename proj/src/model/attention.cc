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

#include "meetdiar/model/attention.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "meetdiar/errors.h"

namespace meetdiar::model {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

void CheckQkv(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.rows != k.rows || q.rows != v.rows || q.cols != k.cols ||
      v.cols != q.cols) {
    throw ShapeError("attention: Q, K and V must share T and head dimension");
  }
}

double FeatureDerivative(double x) { return x > 0 ? 1.0 : std::exp(x); }

// Saved per-head state for the backward pass.
struct HeadCache {
  RowMatrix weights;  // full: T x T softmax weights
  RowMatrix phi_q;    // linear: T x Dh
  RowMatrix phi_k;    // linear: T x Dh
  RowMatrix summary;  // linear: Dh x Dh, sum_j phi(k_j) v_j^T
  Eigen::RowVectorXd key_sum;  // linear: Dh
  Eigen::VectorXd denom;       // linear: T (after clamping)
  std::vector<bool> clamped;   // linear: T
};

}  // namespace

double LinearAttentionFeature(double x) {
  return x > 0 ? x + 1.0 : std::exp(x);
}

Matrix AttentionFull(const Matrix& q, const Matrix& k, const Matrix& v,
                     ScratchMeter* meter) {
  CheckQkv(q, k, v);
  const std::size_t T = q.rows, dh = q.cols;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> weights(T * T);
  if (meter) meter->Allocate(T * T);
  for (std::size_t i = 0; i < T; ++i) {
    double* row = &weights[i * T];
    double mx = -INFINITY;
    for (std::size_t j = 0; j < T; ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < dh; ++d) s += q(i, d) * k(j, d);
      row[j] = s * scale;
      mx = std::max(mx, row[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < T; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < T; ++j) row[j] /= z;
  }
  Matrix out(T, v.cols);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < T; ++j) {
      const double w = weights[i * T + j];
      for (std::size_t d = 0; d < v.cols; ++d) out(i, d) += w * v(j, d);
    }
  }
  if (meter) meter->Release(T * T);
  return out;
}

Matrix AttentionLinear(const Matrix& q, const Matrix& k, const Matrix& v,
                       ScratchMeter* meter) {
  CheckQkv(q, k, v);
  const std::size_t T = q.rows, dh = q.cols, dv = v.cols;
  // Keys and values are folded into a Dh x Dv summary and a Dh key sum in
  // one streaming pass; queries are then processed row by row.
  const std::size_t scratch = dh * dv + 2 * dh;
  if (meter) meter->Allocate(scratch);
  std::vector<double> summary(dh * dv, 0.0), key_sum(dh, 0.0), phi(dh);
  for (std::size_t j = 0; j < T; ++j) {
    for (std::size_t a = 0; a < dh; ++a) {
      const double f = LinearAttentionFeature(k(j, a));
      key_sum[a] += f;
      for (std::size_t b = 0; b < dv; ++b) summary[a * dv + b] += f * v(j, b);
    }
  }
  Matrix out(T, dv);
  for (std::size_t i = 0; i < T; ++i) {
    double den = 0.0;
    for (std::size_t a = 0; a < dh; ++a) {
      phi[a] = LinearAttentionFeature(q(i, a));
      den += phi[a] * key_sum[a];
    }
    den = std::max(den, kLinearAttentionMinDenominator);
    for (std::size_t b = 0; b < dv; ++b) {
      double num = 0.0;
      for (std::size_t a = 0; a < dh; ++a) num += phi[a] * summary[a * dv + b];
      out(i, b) = num / den;
    }
  }
  if (meter) meter->Release(scratch);
  return out;
}

grad::Tensor MultiHeadAttention(grad::Tape& tape, const grad::Tensor& q,
                                const grad::Tensor& k, const grad::Tensor& v,
                                int heads, AttentionKind kind) {
  if (q.shape() != k.shape() || q.shape() != v.shape() ||
      q.shape().size() != 2) {
    throw ShapeError("multi-head attention: Q, K, V must be equal [T x D]");
  }
  const std::size_t T = q.rows(), D = q.cols();
  if (heads < 1 || D % static_cast<std::size_t>(heads) != 0) {
    throw ShapeError("multi-head attention: D not divisible by heads");
  }
  const std::size_t H = static_cast<std::size_t>(heads), dh = D / H;
  const auto Ti = static_cast<Eigen::Index>(T);
  const auto Di = static_cast<Eigen::Index>(D);
  const auto dhi = static_cast<Eigen::Index>(dh);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  grad::Tensor out = grad::MakeOutput(tape, {T, D}, {&q, &k, &v});
  ConstMatMap Q(q.values().data(), Ti, Di);
  ConstMatMap K(k.values().data(), Ti, Di);
  ConstMatMap V(v.values().data(), Ti, Di);
  MatMap O(out.mutable_values().data(), Ti, Di);
  const bool record = out.requires_grad();
  auto caches = std::make_shared<std::vector<HeadCache>>(record ? H : 0);

  for (std::size_t h = 0; h < H; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h * dh);
    auto Qh = Q.middleCols(c0, dhi);
    auto Kh = K.middleCols(c0, dhi);
    auto Vh = V.middleCols(c0, dhi);
    if (kind == AttentionKind::kFull) {
      RowMatrix w = (Qh * Kh.transpose()) * scale;
      for (Eigen::Index i = 0; i < Ti; ++i) {
        const double mx = w.row(i).maxCoeff();
        w.row(i) = (w.row(i).array() - mx).exp().matrix();
        w.row(i) /= w.row(i).sum();
      }
      O.middleCols(c0, dhi).noalias() = w * Vh;
      if (record) (*caches)[h].weights = std::move(w);
    } else {
      RowMatrix pq = Qh.unaryExpr([](double x) { return LinearAttentionFeature(x); });
      RowMatrix pk = Kh.unaryExpr([](double x) { return LinearAttentionFeature(x); });
      RowMatrix summary = pk.transpose() * Vh;
      Eigen::RowVectorXd key_sum = pk.colwise().sum();
      Eigen::VectorXd denom = pq * key_sum.transpose();
      std::vector<bool> clamped(T, false);
      for (Eigen::Index i = 0; i < Ti; ++i) {
        if (denom(i) < kLinearAttentionMinDenominator) {
          denom(i) = kLinearAttentionMinDenominator;
          clamped[static_cast<std::size_t>(i)] = true;
        }
      }
      O.middleCols(c0, dhi).noalias() =
          (denom.cwiseInverse().asDiagonal() * (pq * summary));
      if (record) {
        HeadCache& c = (*caches)[h];
        c.phi_q = std::move(pq);
        c.phi_k = std::move(pk);
        c.summary = std::move(summary);
        c.key_sum = std::move(key_sum);
        c.denom = std::move(denom);
        c.clamped = std::move(clamped);
      }
    }
  }

  if (record) {
    tape.Record([qn = q.shared(), kn = k.shared(), vn = v.shared(),
                 on = out.shared(), caches, H, dhi, Ti, Di, scale, kind] {
      if (on->grad.empty()) return;
      ConstMatMap G(on->grad.data(), Ti, Di);
      ConstMatMap Qv(qn->value.data(), Ti, Di);
      ConstMatMap Kv(kn->value.data(), Ti, Di);
      ConstMatMap Vv(vn->value.data(), Ti, Di);
      ConstMatMap Ov(on->value.data(), Ti, Di);
      double* gq = grad::GradOrNull(qn);
      double* gk = grad::GradOrNull(kn);
      double* gv = grad::GradOrNull(vn);
      for (std::size_t h = 0; h < H; ++h) {
        const auto c0 = static_cast<Eigen::Index>(h) * dhi;
        const HeadCache& c = (*caches)[h];
        auto Gh = G.middleCols(c0, dhi);
        if (kind == AttentionKind::kFull) {
          if (gv) {
            MatMap(gv, Ti, Di).middleCols(c0, dhi).noalias() +=
                c.weights.transpose() * Gh;
          }
          RowMatrix dw = Gh * Vv.middleCols(c0, dhi).transpose();
          Eigen::VectorXd rowdot = (dw.array() * c.weights.array()).rowwise().sum();
          RowMatrix ds =
              (c.weights.array() * (dw.colwise() - rowdot).array()).matrix() *
              scale;
          if (gq) {
            MatMap(gq, Ti, Di).middleCols(c0, dhi).noalias() +=
                ds * Kv.middleCols(c0, dhi);
          }
          if (gk) {
            MatMap(gk, Ti, Di).middleCols(c0, dhi).noalias() +=
                ds.transpose() * Qv.middleCols(c0, dhi);
          }
        } else {
          // O = diag(1/den) (phi_q A); den = phi_q z.
          RowMatrix dnum = c.denom.cwiseInverse().asDiagonal() * Gh;
          Eigen::VectorXd dden =
              -(Gh.array() * Ov.middleCols(c0, dhi).array()).rowwise().sum() /
              c.denom.array();
          for (Eigen::Index i = 0; i < Ti; ++i) {
            if (c.clamped[static_cast<std::size_t>(i)]) dden(i) = 0.0;
          }
          RowMatrix dphi_q = dnum * c.summary.transpose() + dden * c.key_sum;
          RowMatrix dsummary = c.phi_q.transpose() * dnum;
          Eigen::RowVectorXd dkey_sum = dden.transpose() * c.phi_q;
          if (gv) {
            MatMap(gv, Ti, Di).middleCols(c0, dhi).noalias() +=
                c.phi_k * dsummary;
          }
          if (gq) {
            auto qh = Qv.middleCols(c0, dhi);
            MatMap(gq, Ti, Di).middleCols(c0, dhi) +=
                (dphi_q.array() *
                 qh.unaryExpr([](double x) { return FeatureDerivative(x); }).array())
                    .matrix();
          }
          if (gk) {
            RowMatrix dphi_k = Vv.middleCols(c0, dhi) * dsummary.transpose();
            dphi_k.rowwise() += dkey_sum;
            auto kh = Kv.middleCols(c0, dhi);
            MatMap(gk, Ti, Di).middleCols(c0, dhi) +=
                (dphi_k.array() *
                 kh.unaryExpr([](double x) { return FeatureDerivative(x); }).array())
                    .matrix();
          }
        }
      }
    });
  }
  return out;
}

}  // namespace meetdiar::model
