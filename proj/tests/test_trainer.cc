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
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>

#include "meetdiar/errors.h"
#include "meetdiar/train/trainer.h"

using namespace meetdiar;
using namespace meetdiar::train;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<const sim::SpeakerCorpus> SmallCorpus() {
  static const auto corpus = [] {
    sim::CorpusOptions o;
    o.num_speakers = 4;
    o.utterances_per_speaker = 4;
    o.min_utterance_s = 1.5;
    o.max_utterance_s = 2.5;
    return std::make_shared<const sim::SpeakerCorpus>(sim::SynthSpeakerCorpus(o, 7));
  }();
  return corpus;
}

model::ModelConfig TinyModel(int stages = 1) {
  model::ModelConfig c;
  c.num_slots = 2;
  c.model_dim = 8;
  c.heads = 2;
  c.dilation_layers = 2;
  c.repeats = 1;
  c.sa_layers = 1;
  c.num_train_speakers = 4;
  c.stages = stages;
  return c;
}

TrainConfig TinyTrain(std::int64_t steps) {
  TrainConfig t;
  t.batch_size = 2;
  t.learning_rate = 1e-3;
  t.max_steps = steps;
  t.seed = 5;
  t.mode = DatasetMode::kMaterialized;
  t.materialized_size = 8;
  t.eval_every = 0;
  t.meeting.duration_s = 4.0;
  t.meeting.num_speakers = {1, 2};
  t.meeting.max_slots = 2;
  t.meeting.overlap = {0.0, 0.3};
  return t;
}

const ExampleSource& Pool() {
  static const auto source = MakeSource(TinyTrain(0), SmallCorpus(), 2);
  return *source;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("meetdiar_trainer_" + name)) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

bool SameParameters(const grad::ParameterSet& a, const grad::ParameterSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& [na, ta] = a.entries()[i];
    const auto& [nb, tb] = b.entries()[i];
    if (na != nb || !std::ranges::equal(ta.values(), tb.values())) return false;
  }
  return true;
}

std::vector<double> Totals(const TrainResult& r) {
  std::vector<double> v;
  for (const auto& rec : r.log) v.push_back(rec.total);
  return v;
}

}  // namespace

TEST_CASE("zero steps writes the initial checkpoint only") {
  TempDir dir("zero");
  TrainOptions opts;
  opts.output_dir = dir.str();
  const TrainResult r = Train(TinyModel(), TinyTrain(0), Pool(), opts);
  CHECK(r.log.empty());
  CHECK(r.state.step == 0);
  CHECK(fs::path(r.final_checkpoint).filename() == "checkpoint-00000000.mdt");
  CHECK(fs::exists(r.final_checkpoint));
  const CheckpointState st = LoadCheckpoint(r.final_checkpoint);
  CHECK(SameParameters(st.params, r.state.params));
  std::ifstream log(dir.path / "train_log.csv");
  std::string header, extra;
  std::getline(log, header);
  CHECK(header == "step,total,stage1_diarization,stage1_local,stage1_speaker,"
                  "wall_seconds,eval_der");
  CHECK_FALSE(std::getline(log, extra));
}

TEST_CASE("loss decreases on a tiny model") {
  const TrainResult r = Train(TinyModel(), TinyTrain(200), Pool());
  REQUIRE(r.log.size() == 200);
  const std::vector<double> smooth = MovingAverage(Totals(r), kSmoothingWindow);
  CHECK(smooth.back() < 0.8 * smooth[kSmoothingWindow - 1]);
  for (const auto& rec : r.log) CHECK(std::isfinite(rec.total));
}

TEST_CASE("training is deterministic") {
  const TrainResult a = Train(TinyModel(), TinyTrain(15), Pool());
  const TrainResult b = Train(TinyModel(), TinyTrain(15), Pool());
  CHECK(Totals(a) == Totals(b));
  CHECK(SameParameters(a.state.params, b.state.params));
}

TEST_CASE("resuming reproduces an uninterrupted run bit for bit") {
  TempDir dir_a("resume_a"), dir_b("resume_b");
  TrainConfig cfg = TinyTrain(20);
  cfg.eval_every = 10;
  TrainOptions full;
  full.output_dir = dir_a.str();
  const TrainResult a = Train(TinyModel(), cfg, Pool(), full);
  const std::string mid = (dir_a.path / CheckpointName(10)).string();
  REQUIRE(fs::exists(mid));
  TrainOptions resumed;
  resumed.output_dir = dir_b.str();
  resumed.resume_from = mid;
  const TrainResult b = Train(TinyModel(), cfg, Pool(), resumed);
  REQUIRE(b.log.size() == 10);
  CHECK(b.log.front().step == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(b.log[i].total == a.log[10 + i].total);
  CHECK(SameParameters(a.state.params, b.state.params));
  CHECK(a.state.adam.step == b.state.adam.step);
  CHECK(a.state.adam.m == b.state.adam.m);
  CHECK(a.state.adam.v == b.state.adam.v);

  model::ModelConfig other = TinyModel();
  other.sa_layers = 2;
  CHECK_THROWS_AS(Train(other, cfg, Pool(), resumed), ConfigError);
}

TEST_CASE("dynamic source is keyed by step and index") {
  TrainConfig cfg = TinyTrain(0);
  cfg.mode = DatasetMode::kDynamic;
  const auto src = MakeSource(cfg, SmallCorpus(), 2);
  const Example a = src->Get(3, 1), b = src->Get(3, 1), c = src->Get(4, 1);
  CHECK(a.features.data == b.features.data);
  CHECK(a.labels == b.labels);
  CHECK(a.id != c.id);
  CHECK(a.features.rows == a.labels.num_frames);
  CHECK(a.features.cols == 1344);
}

TEST_CASE("two-stage training") {
  SUBCASE("joint mode logs both stages every step") {
    const TrainResult r = Train(TinyModel(2), TinyTrain(5), Pool());
    for (const auto& rec : r.log) CHECK(rec.stages.size() == 2);
  }
  SUBCASE("stage-wise mode freezes stage one") {
    TempDir dir("stagewise");
    TrainConfig cfg = TinyTrain(600);
    cfg.sequential = SequentialMode::kStageWise;
    cfg.stage1_steps = 200;
    cfg.eval_every = 200;
    TrainOptions opts;
    opts.output_dir = dir.str();
    const TrainResult r = TrainSequential(TinyModel(2), cfg, Pool(), opts);
    for (std::size_t i = 0; i < r.log.size(); ++i) {
      CHECK(r.log[i].stages.size() == (i < 200 ? 1u : 2u));
    }
    const CheckpointState mid = LoadCheckpoint((dir.path / CheckpointName(200)).string());
    bool stage1_frozen = true, stage2_moved = false;
    for (std::size_t i = 0; i < mid.params.size(); ++i) {
      const auto& [name, t] = mid.params.entries()[i];
      const bool same =
          std::ranges::equal(t.values(), r.state.params.entries()[i].second.values());
      if (name.rfind("stage1/", 0) == 0) stage1_frozen &= same;
      if (name.rfind("stage2/", 0) == 0) stage2_moved |= !same;
    }
    CHECK(stage1_frozen);
    CHECK(stage2_moved);
    std::vector<double> s1, s2;
    for (const auto& rec : r.log) {
      s1.push_back(rec.stages[0].diarization);
      if (rec.stages.size() == 2) s2.push_back(rec.stages[1].diarization);
    }
    const double stage1_final = MovingAverage(
        std::vector<double>(s1.begin(), s1.begin() + 200), kSmoothingWindow).back();
    const double stage2_final = MovingAverage(s2, kSmoothingWindow).back();
    CAPTURE(stage1_final);
    CAPTURE(stage2_final);
    CHECK(stage2_final <= stage1_final);
  }
  SUBCASE("stage-two initial parameters can be supplied") {
    const grad::ParameterSet init = model::BuildParameters(TinyModel(2), 99);
    TrainOptions opts;
    opts.initial_params = &init;
    const TrainResult r = Train(TinyModel(2), TinyTrain(0), Pool(), opts);
    CHECK(SameParameters(r.state.params, init));
  }
}

namespace {

// Appends the reference labels to every feature frame, standing in for a
// perfect first stage.
class OracleStageOne : public ExampleSource {
 public:
  explicit OracleStageOne(const ExampleSource& inner) : inner_(inner) {}
  Example Get(std::int64_t step, int index) const override {
    Example ex = inner_.Get(step, index);
    const std::size_t T = ex.features.rows, F = ex.features.cols;
    const std::size_t S = ex.labels.num_slots;
    Matrix m(T, F + S);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t f = 0; f < F; ++f) m(t, f) = ex.features(t, f);
      for (std::size_t s = 0; s < S; ++s) m(t, F + s) = ex.labels.at(s, t);
    }
    ex.features = std::move(m);
    return ex;
  }

 private:
  const ExampleSource& inner_;
};

}  // namespace

TEST_CASE("stage two can learn to pass a perfect first stage through") {
  const std::int64_t steps = 300;
  const TrainResult scratch = Train(TinyModel(), TinyTrain(steps), Pool());
  model::ModelConfig fed = TinyModel();
  fed.input_dim = TinyModel().stage_input_dim(2);
  const OracleStageOne oracle(Pool());
  const TrainResult shortcut = Train(fed, TinyTrain(steps), oracle);
  const double a = MovingAverage(Totals(scratch), kSmoothingWindow).back();
  const double b = MovingAverage(Totals(shortcut), kSmoothingWindow).back();
  CAPTURE(a);
  CAPTURE(b);
  CHECK(b < a);
}

TEST_CASE("sequential wrapper matches plain training for one stage") {
  const TrainResult a = Train(TinyModel(), TinyTrain(5), Pool());
  const TrainResult b = TrainSequential(TinyModel(), TinyTrain(5), Pool());
  CHECK(SameParameters(a.state.params, b.state.params));
}

TEST_CASE("speaker losses are trained when the model has the module") {
  model::ModelConfig c = TinyModel();
  c.speaker_module = model::SpeakerModuleKind::kIndividual;
  const TrainResult r = Train(c, TinyTrain(3), Pool());
  for (const auto& rec : r.log) CHECK(rec.stages[0].speaker > 0.0);
  c.speaker_module = model::SpeakerModuleKind::kJoint;
  const TrainResult j = Train(c, TinyTrain(3), Pool());
  for (const auto& rec : j.log) CHECK(rec.stages[0].speaker > 0.0);
}

TEST_CASE("checkpoints round trip") {
  TempDir dir("ckpt");
  fs::create_directories(dir.path);
  const TrainResult r = Train(TinyModel(), TinyTrain(3), Pool());
  const std::string path = (dir.path / "c.mdt").string();
  SaveCheckpoint(path, r.state);
  const CheckpointState back = LoadCheckpoint(path);
  CHECK(back.step == 3);
  CHECK(back.model_config == TinyModel());
  CHECK(back.train_config.ToJson() == r.state.train_config.ToJson());
  CHECK(SameParameters(back.params, r.state.params));
  CHECK(back.adam.m == r.state.adam.m);
  std::ofstream(path, std::ios::trunc) << "not an archive";
  CHECK_THROWS_AS(LoadCheckpoint(path), ParseError);
}

TEST_CASE("train config") {
  TrainConfig c = TrainConfig::Paper();
  c.mode = DatasetMode::kMaterialized;
  c.sequential = SequentialMode::kStageWise;
  CHECK(TrainConfig::FromJson(c.ToJson()).ToJson() == c.ToJson());
  CHECK(TrainConfig::Desk().learning_rate == 1e-4);
  CHECK(TrainConfig::Desk().batch_size == 3);
  CHECK(TrainConfig::Desk().resolved_stage1_steps() == 1000);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
  CHECK_THROWS_AS(ParseDatasetMode("cached"), ConfigError);
  nlohmann::json j = TrainConfig().ToJson();
  j["batch_size"] = "three";
  CHECK_THROWS_AS(TrainConfig::FromJson(j), ConfigError);
}

TEST_CASE("moving average") {
  CHECK(MovingAverage({1, 2, 3, 4}, 2) == std::vector<double>{1, 1.5, 2.5, 3.5});
  CHECK(MovingAverage({}, 3).empty());
}

TEST_CASE("evaluation helpers") {
  const auto& pool = dynamic_cast<const MaterializedSource&>(Pool()).pool();
  CHECK(SilenceBaseline(pool).der == 1.0);
  const model::DiarizationModel m(TinyModel(), 1);
  const EvalSummary s = Evaluate(m, pool, {});
  CHECK(s.hypotheses.size() == pool.size());
  const eval::DerResult again = Rescore(s.probs, pool, {});
  CHECK(again.der == s.der.der);
}
