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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "meetdiar/errors.h"
#include "meetdiar/grad/ops.h"
#include "meetdiar/model/attention.h"
#include "meetdiar/model/network.h"
#include "meetdiar/random.h"

using namespace meetdiar;
using namespace meetdiar::model;
using grad::Tape;
using grad::Tensor;

namespace {

Matrix RandomMatrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.Normal();
  return m;
}

Tensor RandomTensor(Rng& rng, std::size_t r, std::size_t c) {
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.Normal();
  return Tensor::FromData({r, c}, v);
}

ModelConfig Tiny() {
  ModelConfig c;
  c.num_slots = 2;
  c.input_dim = 6;
  c.model_dim = 8;
  c.heads = 2;
  c.dilation_layers = 2;
  c.repeats = 1;
  c.sa_layers = 2;
  c.num_train_speakers = 5;
  return c;
}

void Fill(ParameterSet& params, const std::string& name, double value) {
  for (double& v : params.Get(name).node()->value) v = value;
}

// Row-wise layer norm with unit gain and zero bias.
std::vector<double> NaiveLayerNorm(const std::vector<double>& x, std::size_t cols,
                                   double eps) {
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < x.size() / cols; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += x[r * cols + c] / cols;
    for (std::size_t c = 0; c < cols; ++c) {
      var += (x[r * cols + c] - mean) * (x[r * cols + c] - mean) / cols;
    }
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = (x[r * cols + c] - mean) / std::sqrt(var + eps);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("full attention") {
  Rng rng(1);
  SUBCASE("one frame returns V") {
    const Matrix q = RandomMatrix(rng, 1, 4), k = RandomMatrix(rng, 1, 4),
                 v = RandomMatrix(rng, 1, 4);
    CHECK(AttentionFull(q, k, v).data == v.data);
  }
  SUBCASE("identical keys average the values") {
    const Matrix q = RandomMatrix(rng, 5, 4), v = RandomMatrix(rng, 5, 4);
    Matrix k(5, 4);
    const Matrix row = RandomMatrix(rng, 1, 4);
    for (std::size_t t = 0; t < 5; ++t) {
      for (std::size_t d = 0; d < 4; ++d) k(t, d) = row(0, d);
    }
    const Matrix out = AttentionFull(q, k, v);
    for (std::size_t t = 0; t < 5; ++t) {
      for (std::size_t d = 0; d < 4; ++d) {
        double mean = 0.0;
        for (std::size_t j = 0; j < 5; ++j) mean += v(j, d) / 5.0;
        CHECK(out(t, d) == doctest::Approx(mean).epsilon(1e-12));
      }
    }
  }
  SUBCASE("matches a double loop and weights sum to one") {
    const std::size_t T = 6, dh = 4;
    const Matrix q = RandomMatrix(rng, T, dh), k = RandomMatrix(rng, T, dh),
                 v = RandomMatrix(rng, T, dh);
    const Matrix out = AttentionFull(q, k, v);
    double worst = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
      std::vector<double> w(T);
      for (std::size_t j = 0; j < T; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) s += q(i, d) * k(j, d);
        w[j] = std::exp(s / std::sqrt(double(dh)));
      }
      const double z = std::accumulate(w.begin(), w.end(), 0.0);
      for (std::size_t d = 0; d < dh; ++d) {
        double o = 0.0;
        for (std::size_t j = 0; j < T; ++j) o += w[j] / z * v(j, d);
        worst = std::max(worst, std::abs(o - out(i, d)));
      }
    }
    CHECK(worst < 1e-10);
    // With V = 1 the output is the row sum of the weights.
    const Matrix ones(T, dh, 1.0);
    for (double x : AttentionFull(q, k, ones).data) CHECK(std::abs(x - 1.0) < 1e-9);
  }
}

TEST_CASE("linear attention") {
  Rng rng(2);
  CHECK(LinearAttentionFeature(0.0) == 1.0);
  CHECK(LinearAttentionFeature(-50.0) > 0.0);
  CHECK(LinearAttentionFeature(2.0) == 3.0);
  SUBCASE("one frame returns V") {
    const Matrix q = RandomMatrix(rng, 1, 4), k = RandomMatrix(rng, 1, 4),
                 v = RandomMatrix(rng, 1, 4);
    const Matrix out = AttentionLinear(q, k, v);
    for (std::size_t d = 0; d < 4; ++d) CHECK(std::abs(out(0, d) - v(0, d)) < 1e-12);
  }
  SUBCASE("identical keys average the values") {
    const Matrix q = RandomMatrix(rng, 7, 4), v = RandomMatrix(rng, 7, 4);
    Matrix k(7, 4);
    const Matrix row = RandomMatrix(rng, 1, 4);
    for (std::size_t t = 0; t < 7; ++t) {
      for (std::size_t d = 0; d < 4; ++d) k(t, d) = row(0, d);
    }
    const Matrix out = AttentionLinear(q, k, v);
    for (std::size_t t = 0; t < 7; ++t) {
      for (std::size_t d = 0; d < 4; ++d) {
        double mean = 0.0;
        for (std::size_t j = 0; j < 7; ++j) mean += v(j, d) / 7.0;
        CHECK(std::abs(out(t, d) - mean) < 1e-12);
      }
    }
  }
  SUBCASE("matches the quadratic form") {
    const std::size_t T = 9, dh = 3;
    const Matrix q = RandomMatrix(rng, T, dh), k = RandomMatrix(rng, T, dh),
                 v = RandomMatrix(rng, T, dh);
    const Matrix out = AttentionLinear(q, k, v);
    for (std::size_t i = 0; i < T; ++i) {
      std::vector<double> w(T);
      for (std::size_t j = 0; j < T; ++j) {
        w[j] = 0.0;
        for (std::size_t d = 0; d < dh; ++d) {
          w[j] += LinearAttentionFeature(q(i, d)) * LinearAttentionFeature(k(j, d));
        }
      }
      const double z = std::accumulate(w.begin(), w.end(), 0.0);
      for (std::size_t d = 0; d < dh; ++d) {
        double o = 0.0;
        for (std::size_t j = 0; j < T; ++j) o += w[j] / z * v(j, d);
        CHECK(std::abs(o - out(i, d)) < 1e-12);
      }
    }
  }
}

TEST_CASE("attention scratch memory scaling") {
  Rng rng(3);
  const std::size_t dh = 8;
  std::vector<double> logt, full, lin;
  for (std::size_t T : {64, 256, 1024}) {
    const Matrix q = RandomMatrix(rng, T, dh), k = RandomMatrix(rng, T, dh),
                 v = RandomMatrix(rng, T, dh);
    ScratchMeter mf, ml;
    AttentionFull(q, k, v, &mf);
    AttentionLinear(q, k, v, &ml);
    logt.push_back(std::log(double(T)));
    full.push_back(std::log(double(mf.peak())));
    lin.push_back(std::log(double(ml.peak())));
  }
  auto slope = [&](const std::vector<double>& y) {
    return (y.back() - y.front()) / (logt.back() - logt.front());
  };
  CHECK(slope(full) >= 1.8);
  CHECK(slope(lin) <= 1.2);
}

TEST_CASE("multi-head attention") {
  Rng rng(4);
  Tape tape(false);
  const Tensor v = RandomTensor(rng, 1, 8);
  for (auto kind : {AttentionKind::kFull, AttentionKind::kLinear}) {
    const Tensor out = MultiHeadAttention(tape, RandomTensor(rng, 1, 8),
                                          RandomTensor(rng, 1, 8), v, 2, kind);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(std::abs(out.values()[i] - v.values()[i]) < 1e-12);
    }
  }
  CHECK_THROWS(MultiHeadAttention(tape, RandomTensor(rng, 3, 8),
                                  RandomTensor(rng, 3, 8),
                                  RandomTensor(rng, 3, 8), 3,
                                  AttentionKind::kFull));
}

TEST_CASE("tdcn") {
  ModelConfig c = Tiny();
  c.dilation_layers = 4;
  c.repeats = 2;
  c.tdcn_kernel = 3;
  Rng rng(5);
  ParameterSet params;
  AddTdcnParams(params, "t", c, rng);
  SUBCASE("one frame") {
    Tape tape(false);
    const Tensor out = TdcnForward(tape, params, "t", c, RandomTensor(rng, 1, 8));
    CHECK(out.shape() == grad::Shape{1, 8});
  }
  SUBCASE("receptive field is 61 frames") {
    const std::size_t T = 121, centre = 60;
    const Tensor x = RandomTensor(rng, T, 8);
    std::vector<double> xp(x.values().begin(), x.values().end());
    for (std::size_t d = 0; d < 8; ++d) xp[centre * 8 + d] += 1.0;
    Tape tape(false);
    const Tensor a = TdcnForward(tape, params, "t", c, x);
    const Tensor b = TdcnForward(tape, params, "t", c, Tensor::FromData({T, 8}, xp));
    std::size_t first = T, last = 0, changed = 0;
    for (std::size_t t = 0; t < T; ++t) {
      bool diff = false;
      for (std::size_t d = 0; d < 8; ++d) diff |= a.at(t, d) != b.at(t, d);
      if (diff) {
        first = std::min(first, t);
        last = std::max(last, t);
        ++changed;
      }
    }
    // 1 + 2 * 2 * (1 + 2 + 4 + 8).
    CHECK(changed == 61);
    CHECK(first == centre - 30);
    CHECK(last == centre + 30);
  }
  SUBCASE("zero input maps to zero") {
    Tape tape(false);
    const Tensor out = TdcnForward(tape, params, "t", c, Tensor::Zeros({10, 8}));
    for (double v : out.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("self-attention block") {
  const ModelConfig c = Tiny();
  Rng rng(6);
  ParameterSet params;
  AddSaBlockParams(params, "sa", c, rng);
  SUBCASE("zero output projections reduce to two layer norms") {
    ParameterSet p = params.Clone();
    Fill(p, "sa/o/w", 0.0);
    Fill(p, "sa/ffn2/w", 0.0);
    const Tensor x = RandomTensor(rng, 5, 8);
    Tape tape(false);
    const Tensor out = SaBlockForward(tape, p, "sa", c, x);
    const std::vector<double> expect = NaiveLayerNorm(
        NaiveLayerNorm({x.values().begin(), x.values().end()}, 8, c.layer_norm_eps),
        8, c.layer_norm_eps);
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(std::abs(out.values()[i] - expect[i]) < 1e-12);
    }
  }
  for (auto kind : {AttentionKind::kFull, AttentionKind::kLinear}) {
    ModelConfig ck = c;
    ck.attention = kind;
    CAPTURE(ToString(kind));
    const std::size_t T = 9;
    const Tensor x = RandomTensor(rng, T, 8);
    std::vector<std::size_t> perm(T);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(7));
    std::vector<double> xp(T * 8);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t d = 0; d < 8; ++d) xp[t * 8 + d] = x.at(perm[t], d);
    }
    Tape tape(false);
    const Tensor a = SaBlockForward(tape, params, "sa", ck, x);
    const Tensor b = SaBlockForward(tape, params, "sa", ck, Tensor::FromData({T, 8}, xp));
    double worst = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t d = 0; d < 8; ++d) {
        worst = std::max(worst, std::abs(b.at(t, d) - a.at(perm[t], d)));
      }
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("diarization head") {
  Rng rng(8);
  ParameterSet params;
  AddLinearParams(params, "h", 8, 4, rng);
  const Tensor e = RandomTensor(rng, 120, 8);
  Tape tape(false);
  SUBCASE("shape is slots by frames") {
    CHECK(DiarizationHead(tape, params, "h", e).shape() == grad::Shape{4, 120});
  }
  SUBCASE("zero parameters give one half") {
    Fill(params, "h/w", 0.0);
    const Tensor p = DiarizationHead(tape, params, "h", e);
    for (double v : p.values()) CHECK(v == 0.5);
  }
  SUBCASE("large bias saturates its slot") {
    Fill(params, "h/w", 0.0);
    params.Get("h/b").node()->value[0] = 40.0;
    const Tensor p = DiarizationHead(tape, params, "h", e);
    for (std::size_t t = 0; t < 120; ++t) {
      CHECK(p.at(0, t) > 1.0 - 1e-12);
      CHECK(p.at(1, t) == 0.5);
    }
  }
}

TEST_CASE("model outputs") {
  Rng rng(9);
  const std::size_t T = 12;
  SUBCASE("plain model gives a single image") {
    const DiarizationModel m(Tiny(), 1);
    Tape tape(false);
    const auto out = m.Forward(tape, RandomTensor(rng, T, 6));
    REQUIRE(out.size() == 1);
    CHECK(out[0].probs.shape() == grad::Shape{2, T});
    CHECK_FALSE(out[0].local_probs.defined());
    CHECK_FALSE(out[0].joint_speaker_probs.defined());
    CHECK(out[0].slot_speaker_probs.empty());
    CHECK(out[0].local_embeddings.rows() == T);
    CHECK(out[0].global_embeddings.rows() == T);
  }
  SUBCASE("local head") {
    ModelConfig c = Tiny();
    c.local_head = true;
    const DiarizationModel m(c, 1);
    Tape tape(false);
    const auto out = m.Forward(tape, RandomTensor(rng, T, 6));
    CHECK(out[0].local_probs.shape() == grad::Shape{2, T});
  }
  SUBCASE("joint speaker module with zero classifier") {
    ModelConfig c = Tiny();
    c.speaker_module = SpeakerModuleKind::kJoint;
    DiarizationModel m(c, 1);
    Fill(m.params(), "stage1/spk_cls/w", 0.0);
    Tape tape(false);
    const auto out = m.Forward(tape, RandomTensor(rng, T, 6));
    CHECK(out[0].joint_speaker_probs.shape() == grad::Shape{5, T});
    for (double v : out[0].joint_speaker_probs.values()) CHECK(v == 0.5);
  }
  SUBCASE("local speaker module classifies the local embeddings") {
    ModelConfig c = Tiny();
    c.speaker_module = SpeakerModuleKind::kLocal;
    const DiarizationModel m(c, 1);
    CHECK_FALSE(m.params().Contains("stage1/spk_tdcn/block00/conv_in/w"));
    Tape tape(false);
    const auto out = m.Forward(tape, RandomTensor(rng, T, 6));
    CHECK(out[0].joint_speaker_probs.shape() == grad::Shape{5, T});
  }
  SUBCASE("individual speaker module") {
    ModelConfig c = Tiny();
    c.speaker_module = SpeakerModuleKind::kIndividual;
    const DiarizationModel m(c, 1);
    Tape tape(false);
    const auto out = m.Forward(tape, RandomTensor(rng, T, 6));
    REQUIRE(out[0].slot_speaker_probs.size() == 2);
    for (int s = 0; s < 2; ++s) {
      const Tensor& z = out[0].slot_speaker_probs[s];
      CHECK(z.shape() == grad::Shape{T, 6});
      for (std::size_t t = 0; t < T; ++t) {
        double sum = 0.0;
        for (std::size_t k = 0; k < 6; ++k) sum += z.at(t, k);
        CHECK(std::abs(sum - 1.0) < 1e-9);
      }
      const Tensor& e = out[0].slot_embeddings[s];
      CHECK(e.cols() == 4);
      for (std::size_t t = 0; t < T; ++t) {
        double n = 0.0;
        for (std::size_t k = 0; k < 4; ++k) n += e.at(t, k) * e.at(t, k);
        CHECK(std::abs(n - 1.0) < 1e-12);
      }
    }
  }
  SUBCASE("SA-only model") {
    ModelConfig c = Tiny();
    c.repeats = 0;
    const DiarizationModel m(c, 1);
    CHECK(m.Infer(RandomMatrix(rng, T, 6)).num_frames == T);
  }
  SUBCASE("wrong feature width") {
    const DiarizationModel m(Tiny(), 1);
    Tape tape(false);
    CHECK_THROWS_AS(m.Forward(tape, RandomTensor(rng, T, 7)), ShapeError);
  }
}

constexpr double kSnapshotSum = 11.718097682837765;
constexpr double kSnapshotP00 = 0.521665716329345;
constexpr double kSnapshotP1B = 0.58229605321560773;

TEST_CASE("tiny model regression snapshot") {
  ModelConfig c = Tiny();
  c.local_head = true;
  const DiarizationModel m(c, 20261019);
  Rng rng(42);
  const DiarizationProbs p = m.Infer(RandomMatrix(rng, 12, 6));
  const double sum = std::accumulate(p.prob.begin(), p.prob.end(), 0.0);
  // Recorded from the first build.
  CHECK(sum == doctest::Approx(kSnapshotSum).epsilon(1e-12));
  CHECK(p.at(0, 0) == doctest::Approx(kSnapshotP00).epsilon(1e-12));
  CHECK(p.at(1, 11) == doctest::Approx(kSnapshotP1B).epsilon(1e-12));
}

TEST_CASE("two-stage model") {
  Rng rng(10);
  ModelConfig c = Tiny();
  c.stages = 2;
  const DiarizationModel m(c, 3);
  const std::size_t T = 12;
  const Tensor features = RandomTensor(rng, T, 6);
  SUBCASE("stage two input is features plus stage one probabilities") {
    CHECK(c.stage_input_dim(2) == 8);
    CHECK(m.params().Get("stage2/in_proj/w").shape() == grad::Shape{8, 8});
    ModelConfig big = ModelConfig::Paper();
    big.stages = 2;
    CHECK(big.stage_input_dim(2) == 1352);
  }
  SUBCASE("uninformative stage one output") {
    Tape tape(false);
    std::vector<double> in(T * 8);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t d = 0; d < 6; ++d) in[t * 8 + d] = features.at(t, d);
      in[t * 8 + 6] = in[t * 8 + 7] = 0.5;
    }
    const StageOutput out = m.ForwardStage(tape, 2, Tensor::FromData({T, 8}, in));
    CHECK(out.probs.shape() == grad::Shape{2, T});
    for (double v : out.probs.values()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
  SUBCASE("forward returns both stages and can stop early") {
    Tape tape(false);
    CHECK(m.Forward(tape, features).size() == 2);
    CHECK(m.Forward(tape, features, 1).size() == 1);
  }
  SUBCASE("stage freezing") {
    DiarizationModel mm(c, 3);
    mm.SetStageTrainable(1, false);
    for (const auto& [name, t] : mm.params().entries()) {
      CHECK(t.requires_grad() == (name.rfind("stage2/", 0) == 0));
    }
  }
}

TEST_CASE("parameter adoption validates names and shapes") {
  const ModelConfig c = Tiny();
  ParameterSet good = BuildParameters(c, 5);
  CHECK_NOTHROW(DiarizationModel(c, good.Clone()));
  ModelConfig other = c;
  other.model_dim = 12;
  other.heads = 3;
  CHECK_THROWS_AS(DiarizationModel(other, good.Clone()), ConfigError);
  ModelConfig more = c;
  more.local_head = true;
  CHECK_THROWS_AS(DiarizationModel(more, good.Clone()), ConfigError);
}

TEST_CASE("initialization") {
  const ModelConfig c = Tiny();
  const ParameterSet p = BuildParameters(c, 11);
  const double bound = 1.0 / std::sqrt(6.0);
  for (double v : p.Get("stage1/in_proj/w").values()) CHECK(std::abs(v) <= bound);
  for (double v : p.Get("stage1/in_proj/b").values()) CHECK(v == 0.0);
  for (double v : p.Get("stage1/in_norm/gain").values()) CHECK(v == 1.0);
  for (double v : p.Get("stage1/tdcn/block00/prelu1").values()) CHECK(v == 0.25);
  const ParameterSet q = BuildParameters(c, 11);
  CHECK(std::ranges::equal(p.Get("stage1/diar/w").values(), q.Get("stage1/diar/w").values()));
}

TEST_CASE("config validation and serialization") {
  ModelConfig c = Tiny();
  CHECK(ModelConfig::FromJson(c.ToJson()) == c);
  c.attention = AttentionKind::kLinear;
  c.speaker_module = SpeakerModuleKind::kIndividual;
  CHECK(ModelConfig::FromJson(c.ToJson()) == c);
  CHECK(ModelConfig::FromJson(ModelConfig::Paper().ToJson()) == ModelConfig::Paper());
  ModelConfig bad = Tiny();
  bad.heads = 3;
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
  bad = Tiny();
  bad.stages = 3;
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
  bad = Tiny();
  bad.speaker_module = SpeakerModuleKind::kIndividual;
  bad.num_slots = 3;
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
  CHECK_THROWS_AS(ParseAttentionKind("quadratic"), ConfigError);
  CHECK(ParseSpeakerModuleKind("individual") == SpeakerModuleKind::kIndividual);
  nlohmann::json j = Tiny().ToJson();
  j["heads"] = "two";
  CHECK_THROWS_AS(ModelConfig::FromJson(j), ConfigError);
}
