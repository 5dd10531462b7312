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

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "meetdiar/errors.h"
#include "meetdiar/grad/checkpoint.h"
#include "meetdiar/grad/gradcheck.h"
#include "meetdiar/grad/ops.h"
#include "meetdiar/grad/params.h"
#include "meetdiar/random.h"

using namespace meetdiar;
using namespace meetdiar::grad;

namespace {

Tensor RandomTensor(Rng& rng, Shape shape, bool requires_grad = true) {
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = rng.Normal();
  return Tensor::FromData(std::move(shape), std::move(v), requires_grad);
}

// Sum of sigmoid(y P) with a fixed random P: a generic nonlinear readout.
Tensor Readout(Tape& tape, const Tensor& y, const Tensor& p) {
  return Sum(tape, Sigmoid(tape, MatMul(tape, y, p)));
}

void ExpectGradOk(const std::vector<std::pair<std::string, Tensor>>& ts,
                  const std::function<Tensor(Tape&)>& fn,
                  double tolerance = 1e-6) {
  GradCheckOptions o;
  o.tolerance = tolerance;
  const GradCheckResult r = CheckGradients(ts, fn, o);
  INFO("worst " << r.worst << " rel err " << r.max_relative_error);
  CHECK(r.ok());
}

}  // namespace

TEST_CASE("matmul values") {
  Tape tape;
  Rng rng(1);
  const Tensor b = RandomTensor(rng, {3, 3}, false);
  const Tensor eye = Tensor::FromData({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor out = MatMul(tape, eye, b);
  for (std::size_t i = 0; i < 9; ++i) CHECK(out.values()[i] == b.values()[i]);

  const Tensor a2 = Tensor::FromData({2, 2}, {1, 2, 3, 4});
  const Tensor ones = Tensor::FromData({2, 1}, {1, 1});
  const Tensor r = MatMul(tape, a2, ones);
  CHECK(r.shape() == Shape{2, 1});
  CHECK(r.values()[0] == 3.0);
  CHECK(r.values()[1] == 7.0);
}

TEST_CASE("matmul gradient of sum is ones times b transpose") {
  Rng rng(2);
  Tensor a = RandomTensor(rng, {4, 5});
  const Tensor b = RandomTensor(rng, {5, 3}, false);
  Tape tape;
  tape.Backward(Sum(tape, MatMul(tape, a, b)));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t k = 0; k < 5; ++k) {
      double expect = 0.0;
      for (std::size_t j = 0; j < 3; ++j) expect += b.at(k, j);
      CHECK(a.grad()[i * 5 + k] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  ExpectGradOk({{"a", a}}, [&](Tape& t) { return Sum(t, MatMul(t, a, b)); });
}

TEST_CASE("matmul shape mismatch throws") {
  Tape tape;
  CHECK_THROWS_AS(MatMul(tape, Tensor::Zeros({2, 3}), Tensor::Zeros({2, 3})),
                  ShapeError);
}

TEST_CASE("conv1d identity kernel") {
  Rng rng(3);
  const Tensor x = RandomTensor(rng, {7, 3}, false);
  std::vector<double> k(9, 0.0);
  for (std::size_t c = 0; c < 3; ++c) k[c * 3 + c] = 1.0;
  Tape tape;
  const Tensor y = Conv1dDilated(tape, x, Tensor::FromData({1, 3, 3}, k), 1);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("conv1d impulse geometry") {
  std::vector<double> xv(12, 0.0);
  xv[5] = 1.0;
  const Tensor x = Tensor::FromData({12, 1}, xv);
  const Tensor k = Tensor::FromData({3, 1, 1}, {0.5, 2.0, -1.5});
  Tape tape;
  const Tensor y = Conv1dDilated(tape, x, k, 2);
  for (std::size_t t = 0; t < 12; ++t) {
    const bool expect_nonzero = t == 3 || t == 5 || t == 7;
    CHECK((y.values()[t] != 0.0) == expect_nonzero);
  }
}

TEST_CASE("conv1d matches a direct loop") {
  Rng rng(4);
  const std::size_t T = 16, cin = 2, cout = 2, K = 3, d = 4;
  const Tensor x = RandomTensor(rng, {T, cin}, false);
  const Tensor k = RandomTensor(rng, {K, cin, cout}, false);
  Tape tape;
  const Tensor y = Conv1dDilated(tape, x, k, d);
  double worst = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t o = 0; o < cout; ++o) {
      double acc = 0.0;
      for (std::size_t j = 0; j < K; ++j) {
        const long src = static_cast<long>(t) + (static_cast<long>(j) - 1) * static_cast<long>(d);
        if (src < 0 || src >= static_cast<long>(T)) continue;
        for (std::size_t i = 0; i < cin; ++i) {
          acc += x.at(static_cast<std::size_t>(src), i) *
                 k.values()[(j * cin + i) * cout + o];
        }
      }
      worst = std::max(worst, std::abs(acc - y.at(t, o)));
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("conv1d rejects even kernels") {
  Tape tape;
  CHECK_THROWS_AS(
      Conv1dDilated(tape, Tensor::Zeros({4, 1}), Tensor::Zeros({2, 1, 1}), 1),
      ConfigError);
}

TEST_CASE("elementwise definitions") {
  CHECK(EluScalar(0.0, 1.0) == 0.0);
  CHECK(EluScalar(0.0, 1.0) + 1.0 == 1.0);
  Tape tape;
  const Tensor s = SoftmaxRows(tape, Tensor::FromData({1, 3}, {0, 0, 0}));
  for (double v : s.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Tensor ln = LayerNorm(tape, Tensor::FromData({1, 3}, {1, 2, 3}),
                              Tensor::FromData({3}, {1, 1, 1}),
                              Tensor::FromData({3}, {0, 0, 0}), 0.0);
  double mean = 0.0, var = 0.0;
  for (double v : ln.values()) mean += v / 3.0;
  for (double v : ln.values()) var += (v - mean) * (v - mean) / 3.0;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(std::abs(var - 1.0) < 1e-9);
}

TEST_CASE("sum gradient is all ones") {
  Rng rng(5);
  Tensor p = RandomTensor(rng, {3, 4});
  Tape tape;
  tape.Backward(Sum(tape, p));
  for (double g : p.grad()) CHECK(g == 1.0);
}

TEST_CASE("sigmoid gradient closed form") {
  const double w0 = 0.7, x0 = -1.3;
  Tensor w = Tensor::FromData({1, 1}, {w0}, true);
  const Tensor x = Tensor::FromData({1, 1}, {x0});
  Tape tape;
  tape.Backward(Sum(tape, Sigmoid(tape, MatMul(tape, w, x))));
  const double s = 1.0 / (1.0 + std::exp(-w0 * x0));
  CHECK(w.grad()[0] == doctest::Approx(s * (1 - s) * x0).epsilon(1e-14));
}

TEST_CASE("op gradients match finite differences") {
  Rng rng(6);
  const std::size_t T = 7, D = 6;
  const Tensor p = RandomTensor(rng, {D, 3}, false);
  SUBCASE("linear") {
    Tensor x = RandomTensor(rng, {T, D}), w = RandomTensor(rng, {D, D}),
           b = RandomTensor(rng, {D});
    ExpectGradOk({{"x", x}, {"w", w}, {"b", b}},
                 [&](Tape& t) { return Readout(t, Linear(t, x, w, b), p); });
  }
  SUBCASE("layer norm") {
    Tensor x = RandomTensor(rng, {T, D}), g = RandomTensor(rng, {D}),
           b = RandomTensor(rng, {D});
    ExpectGradOk({{"x", x}, {"g", g}, {"b", b}},
                 [&](Tape& t) { return Readout(t, LayerNorm(t, x, g, b), p); });
  }
  SUBCASE("prelu") {
    Tensor x = RandomTensor(rng, {T, D}), s = RandomTensor(rng, {D});
    ExpectGradOk({{"x", x}, {"s", s}},
                 [&](Tape& t) { return Readout(t, Prelu(t, x, s), p); });
  }
  SUBCASE("elu and relu") {
    Tensor x = RandomTensor(rng, {T, D});
    ExpectGradOk({{"x", x}}, [&](Tape& t) {
      return Add(t, Readout(t, Elu(t, x), p), Readout(t, Relu(t, x), p));
    });
  }
  SUBCASE("depthwise conv") {
    Tensor x = RandomTensor(rng, {T, D}), k = RandomTensor(rng, {3, D}),
           b = RandomTensor(rng, {D});
    ExpectGradOk({{"x", x}, {"k", k}, {"b", b}}, [&](Tape& t) {
      return Readout(t, DepthwiseConv1dDilated(t, x, k, b, 2), p);
    });
  }
  SUBCASE("full conv") {
    Tensor x = RandomTensor(rng, {T, 3}), k = RandomTensor(rng, {3, 3, D});
    ExpectGradOk({{"x", x}, {"k", k}}, [&](Tape& t) {
      return Readout(t, Conv1dDilated(t, x, k, 2), p);
    });
  }
  SUBCASE("softmax and l2 normalize") {
    Tensor x = RandomTensor(rng, {T, D});
    ExpectGradOk({{"x", x}}, [&](Tape& t) {
      return Add(t, Readout(t, SoftmaxRows(t, x), p),
                 Readout(t, L2NormalizeRows(t, x), p));
    });
  }
  SUBCASE("concat, slice, transpose, scale, add row vector") {
    Tensor x = RandomTensor(rng, {T, D}), y = RandomTensor(rng, {T, 2}),
           b = RandomTensor(rng, {D});
    ExpectGradOk({{"x", x}, {"y", y}, {"b", b}}, [&](Tape& t) {
      Tensor c = ConcatCols(t, {x, y});
      Tensor s = SliceCols(t, c, 1, D);
      Tensor u = Transpose(t, Transpose(t, Scale(t, s, 1.5)));
      return Readout(t, AddRowVector(t, u, b), p);
    });
  }
}

TEST_CASE("backward rejects non-scalar losses and reuse") {
  Tape tape;
  Tensor x = Tensor::FromData({2, 1}, {1, 2}, true);
  const Tensor y = Scale(tape, x, 2.0);
  CHECK_THROWS_AS(tape.Backward(y), UsageError);
  Tape tape2;
  const Tensor l = Sum(tape2, Scale(tape2, x, 2.0));
  tape2.Backward(l);
  CHECK_THROWS_AS(tape2.Backward(l), UsageError);
}

TEST_CASE("gradients accumulate across backward passes") {
  Tensor x = Tensor::FromData({1, 1}, {3.0}, true);
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.Backward(Sum(tape, Scale(tape, x, 2.0)));
  }
  CHECK(x.grad()[0] == 4.0);
}

TEST_CASE("disabled tape records nothing") {
  Tape tape(false);
  Tensor x = Tensor::FromData({1, 1}, {3.0}, true);
  Scale(tape, x, 2.0);
  CHECK(tape.size() == 0);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    double w = 0.37, g = 0.0, m = 0.0, v = 0.0;
    AdamUpdate({&w, 1}, {&g, 1}, {&m, 1}, {&v, 1}, AdamOptions{}, 1);
    CHECK(w == 0.37);
  }
  SUBCASE("first step is minus the learning rate") {
    AdamOptions o;
    o.learning_rate = 0.1;
    double w = 0.0, g = 1.0, m = 0.0, v = 0.0;
    AdamUpdate({&w, 1}, {&g, 1}, {&m, 1}, {&v, 1}, o, 1);
    // m_hat = v_hat = 1, so the step is lr / (1 + eps).
    CHECK(w == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-14));
  }
  SUBCASE("two steps on w^2 decrease the objective") {
    ParameterSet params;
    Tensor w = params.Add("w", {1}, 1.0);
    AdamState state = AdamState::ForParameters(params, {.learning_rate = 0.1});
    double f = 1.0;
    for (int i = 0; i < 2; ++i) {
      params.ZeroGrad();
      w.mutable_grad()[0] = 2.0 * w.values()[0];
      AdamStep(params, state);
      const double next = w.values()[0] * w.values()[0];
      CHECK(next < f);
      f = next;
    }
  }
  SUBCASE("frozen parameters are skipped") {
    ParameterSet params;
    Tensor w = params.Add("w", {1}, 1.0);
    AdamState state = AdamState::ForParameters(params, {.learning_rate = 0.1});
    w.mutable_grad()[0] = 1.0;
    params.SetRequiresGrad(false);
    AdamStep(params, state);
    CHECK(w.values()[0] == 1.0);
  }
}

TEST_CASE("parameter set") {
  ParameterSet params;
  params.Add("a", {2, 2}, 0.5);
  CHECK_THROWS_AS(params.Add("a", {1}, 0.0), UsageError);
  CHECK(params.Contains("a"));
  CHECK_FALSE(params.Contains("b"));
  CHECK(params.NumScalars() == 4);
  const ParameterSet copy = params.Clone();
  params.Get("a").node()->value[0] = 9.0;
  CHECK(copy.Get("a").values()[0] == 0.5);
  CHECK(params.AllFinite());
  params.Get("a").node()->value[1] = NAN;
  CHECK_FALSE(params.AllFinite());
}

TEST_CASE("tensor archive round trip") {
  Rng rng(8);
  ParameterSet params;
  params.Add("x/w", {3, 2}, {1, 2, 3, 4, 5, 6});
  params.Add("x/b", {2}, {-1e-300, 1e300});
  AdamState adam = AdamState::ForParameters(params);
  adam.step = 17;
  adam.m[0][3] = 0.25;
  adam.v[1][1] = 0.125;
  TensorArchive archive;
  archive.metadata["note"] = "test";
  StoreParameters(archive, params, &adam);
  const std::string bytes = archive.Serialize();
  const TensorArchive back = TensorArchive::Deserialize(bytes);
  CHECK(back.metadata["note"] == "test");
  ParameterSet restored;
  restored.Add("x/w", {3, 2}, 0.0);
  restored.Add("x/b", {2}, 0.0);
  AdamState adam2 = AdamState::ForParameters(restored);
  RestoreParameters(back, restored, &adam2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto a = params.entries()[i].second.values();
    const auto b = restored.entries()[i].second.values();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
  CHECK(adam2.step == 17);
  CHECK(adam2.m[0][3] == 0.25);
  CHECK(adam2.v[1][1] == 0.125);

  SUBCASE("truncated bytes are rejected") {
    CHECK_THROWS_AS(TensorArchive::Deserialize(bytes.substr(0, bytes.size() / 2)),
                    ParseError);
  }
  SUBCASE("shape mismatch is rejected") {
    ParameterSet wrong;
    wrong.Add("x/w", {2, 3}, 0.0);
    wrong.Add("x/b", {2}, 0.0);
    CHECK_THROWS(RestoreParameters(back, wrong));
  }
  SUBCASE("save and load") {
    const auto path = std::filesystem::temp_directory_path() / "meetdiar_archive_test.mdt";
    archive.Save(path.string());
    const TensorArchive loaded = TensorArchive::Load(path.string());
    CHECK(loaded.Serialize() == bytes);
    std::filesystem::remove(path);
  }
}

TEST_CASE("gradient checker flags a wrong gradient") {
  Tensor x = Tensor::FromData({1, 1}, {0.3}, true);
  // Analytic path says 2x, the evaluated loss is 2.02x.
  auto fn = [&](Tape& t) {
    return t.enabled() ? Sum(t, Scale(t, x, 2.0)) : Sum(t, Scale(t, x, 2.02));
  };
  const GradCheckResult r = CheckGradients({{"x", x}}, fn);
  CHECK_FALSE(r.ok());
  CHECK(r.worst == "x[0]");
}
