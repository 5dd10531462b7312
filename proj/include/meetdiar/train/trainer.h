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

#ifndef MEETDIAR_TRAIN_TRAINER_H_
#define MEETDIAR_TRAIN_TRAINER_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "meetdiar/eval/evaluate.h"
#include "meetdiar/features/features.h"
#include "meetdiar/grad/params.h"
#include "meetdiar/labels.h"
#include "meetdiar/loss/losses.h"
#include "meetdiar/model/network.h"
#include "meetdiar/sim/corpus.h"
#include "meetdiar/sim/meeting.h"

namespace meetdiar::train {

enum class DatasetMode { kMaterialized, kDynamic };
enum class SequentialMode { kJoint, kStageWise };

std::string ToString(DatasetMode mode);
std::string ToString(SequentialMode mode);
DatasetMode ParseDatasetMode(const std::string& s);
SequentialMode ParseSequentialMode(const std::string& s);

struct TrainConfig {
  int batch_size = 3;
  double learning_rate = 1e-4;
  std::int64_t max_steps = 2000;
  std::uint64_t seed = 1;
  DatasetMode mode = DatasetMode::kDynamic;
  // Number of pre-generated meetings in materialized mode.
  int materialized_size = 256;
  std::int64_t eval_every = 200;
  SequentialMode sequential = SequentialMode::kJoint;
  // Stage-wise mode: steps spent on stage 1 before it is frozen. Negative
  // means half of max_steps.
  std::int64_t stage1_steps = -1;
  loss::LossConfig losses;
  bool losses_from_model = true;
  sim::MeetingOptions meeting;
  FeatureConfig features;

  void Validate() const;
  std::int64_t resolved_stage1_steps() const {
    return stage1_steps < 0 ? max_steps / 2 : stage1_steps;
  }
  nlohmann::json ToJson() const;
  static TrainConfig FromJson(const nlohmann::json& j);

  // 10 s meetings, S=4, 2000 steps, eval every 200 steps.
  static TrainConfig Desk();
  // Full-scale optimizer settings with 120 s meetings and up to 8 speakers.
  static TrainConfig Paper();
};

struct Example {
  std::string id;
  Matrix features;  // T x F
  DiarizationLabels labels;
};

// Renders a meeting and featurizes it; feature and label frame counts must
// agree.
Example MakeExample(const sim::MeetingSpec& spec,
                    const sim::SpeakerCorpus& corpus, int num_slots,
                    const FeatureConfig& features);

// Supplies the example for a (step, batch index) pair.
class ExampleSource {
 public:
  virtual ~ExampleSource() = default;
  virtual Example Get(std::int64_t step, int index) const = 0;
};

// Fixed pool of examples; each batch draw is seeded by (seed, step, index).
class MaterializedSource : public ExampleSource {
 public:
  MaterializedSource(std::vector<Example> pool, std::uint64_t seed);
  Example Get(std::int64_t step, int index) const override;
  const std::vector<Example>& pool() const { return pool_; }

 private:
  std::vector<Example> pool_;
  std::uint64_t seed_;
};

// Fresh meeting per (step, index), generated from the seed.
class DynamicSource : public ExampleSource {
 public:
  DynamicSource(std::shared_ptr<const sim::SpeakerCorpus> corpus,
                sim::MeetingOptions options, FeatureConfig features,
                int num_slots, std::uint64_t seed);
  Example Get(std::int64_t step, int index) const override;
  sim::MeetingSpec Spec(std::int64_t step, int index) const;

 private:
  std::shared_ptr<const sim::SpeakerCorpus> corpus_;
  sim::MeetingOptions options_;
  FeatureConfig features_;
  int num_slots_;
  std::uint64_t seed_;
};

// Meeting specs for a materialized pool or a held-out set.
std::vector<sim::MeetingSpec> SampleMeetings(const sim::SpeakerCorpus& corpus,
                                             const sim::MeetingOptions& options,
                                             int count, std::uint64_t seed,
                                             const std::string& prefix);
std::vector<Example> MakeExamples(const std::vector<sim::MeetingSpec>& specs,
                                  const sim::SpeakerCorpus& corpus,
                                  int num_slots, const FeatureConfig& features);

std::unique_ptr<ExampleSource> MakeSource(
    const TrainConfig& config, std::shared_ptr<const sim::SpeakerCorpus> corpus,
    int num_slots);

struct StageLogValues {
  // Per-slot-per-frame values averaged over the batch.
  double diarization = 0.0;
  double local = 0.0;
  double speaker = 0.0;
};

struct TrainLogRecord {
  std::int64_t step = 0;
  double total = 0.0;  // raw summed objective, averaged over the batch
  std::vector<StageLogValues> stages;
  double wall_seconds = 0.0;
  std::optional<double> eval_der;
};

struct CheckpointState {
  model::ModelConfig model_config;
  TrainConfig train_config;
  grad::ParameterSet params;
  grad::AdamState adam;
  std::int64_t step = 0;  // number of completed updates
};

void SaveCheckpoint(const std::string& path, const CheckpointState& state);
CheckpointState LoadCheckpoint(const std::string& path);
std::string CheckpointName(std::int64_t step);

struct TrainOptions {
  // Checkpoints and train_log.csv go here; empty disables file output.
  std::string output_dir;
  // Continue from this checkpoint instead of a fresh initialization.
  std::string resume_from;
  // Held-out examples scored every eval_every steps when non-empty.
  std::vector<Example> eval_set;
  eval::PostProcessConfig postprocess;
  std::uint64_t init_seed = 0;  // 0 derives it from TrainConfig::seed
  // Starts from these parameters (e.g. a trained stage 1) when set.
  const grad::ParameterSet* initial_params = nullptr;
  std::function<void(const TrainLogRecord&)> on_step;
};

struct TrainResult {
  std::vector<TrainLogRecord> log;
  std::string final_checkpoint;
  CheckpointState state;
};

// Trains one model; stages are optimized jointly or stage-wise per config.
TrainResult Train(const model::ModelConfig& model_config,
                  const TrainConfig& train_config, const ExampleSource& source,
                  const TrainOptions& options = {});
// Two-stage entry point; requires stage-2 input width = F + S.
TrainResult TrainSequential(const model::ModelConfig& model_config,
                            const TrainConfig& train_config,
                            const ExampleSource& source,
                            const TrainOptions& options = {});

// Trailing moving average with the given window.
std::vector<double> MovingAverage(const std::vector<double>& values,
                                  std::size_t window);
inline constexpr std::size_t kSmoothingWindow = 20;

struct EvalSummary {
  eval::DerResult der;
  std::vector<DiarizationLabels> hypotheses;
  std::vector<DiarizationProbs> probs;
};

EvalSummary Evaluate(const model::DiarizationModel& model,
                     const std::vector<Example>& examples,
                     const eval::PostProcessConfig& postprocess);
// Rescores cached probabilities with another post-processing setting.
eval::DerResult Rescore(const std::vector<DiarizationProbs>& probs,
                        const std::vector<Example>& examples,
                        const eval::PostProcessConfig& postprocess);

// DER of an all-silence hypothesis.
eval::DerResult SilenceBaseline(const std::vector<Example>& examples);

}  // namespace meetdiar::train

#endif  // MEETDIAR_TRAIN_TRAINER_H_
