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

#include "meetdiar/train/trainer.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "meetdiar/errors.h"
#include "meetdiar/grad/checkpoint.h"
#include "meetdiar/random.h"

namespace meetdiar::train {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kPoolStream = 0x9001;

json MeetingOptionsToJson(const sim::MeetingOptions& o) {
  return {{"duration_s", o.duration_s},
          {"num_speakers", {o.num_speakers.first, o.num_speakers.second}},
          {"overlap", {o.overlap.first, o.overlap.second}},
          {"max_slots", o.max_slots},
          {"gap_s", {o.gap_s.first, o.gap_s.second}},
          {"min_overlap_s", o.min_overlap_s},
          {"gain_db_range", o.gain_db_range},
          {"overlap_tolerance", o.overlap_tolerance},
          {"max_attempts", o.max_attempts}};
}

sim::MeetingOptions MeetingOptionsFromJson(const json& j) {
  sim::MeetingOptions o;
  o.duration_s = j.value("duration_s", o.duration_s);
  if (j.contains("num_speakers")) {
    o.num_speakers = {j["num_speakers"].at(0).get<int>(),
                      j["num_speakers"].at(1).get<int>()};
  }
  if (j.contains("overlap")) {
    o.overlap = {j["overlap"].at(0).get<double>(),
                 j["overlap"].at(1).get<double>()};
  }
  o.max_slots = j.value("max_slots", o.max_slots);
  if (j.contains("gap_s")) {
    o.gap_s = {j["gap_s"].at(0).get<double>(), j["gap_s"].at(1).get<double>()};
  }
  o.min_overlap_s = j.value("min_overlap_s", o.min_overlap_s);
  o.gain_db_range = j.value("gain_db_range", o.gain_db_range);
  o.overlap_tolerance = j.value("overlap_tolerance", o.overlap_tolerance);
  o.max_attempts = j.value("max_attempts", o.max_attempts);
  return o;
}

json FeatureConfigToJson(const FeatureConfig& f) {
  return {{"n_mels", f.n_mels},         {"window_ms", f.window_ms},
          {"hop_ms", f.hop_ms},         {"fmin_hz", f.fmin_hz},
          {"fmax_hz", f.fmax_hz},       {"log_floor", f.log_floor},
          {"context", f.context},       {"factor", f.factor}};
}

FeatureConfig FeatureConfigFromJson(const json& j) {
  FeatureConfig f;
  f.n_mels = j.value("n_mels", f.n_mels);
  f.window_ms = j.value("window_ms", f.window_ms);
  f.hop_ms = j.value("hop_ms", f.hop_ms);
  f.fmin_hz = j.value("fmin_hz", f.fmin_hz);
  f.fmax_hz = j.value("fmax_hz", f.fmax_hz);
  f.log_floor = j.value("log_floor", f.log_floor);
  f.context = j.value("context", f.context);
  f.factor = j.value("factor", f.factor);
  return f;
}

json LossConfigToJson(const loss::LossConfig& c) {
  return {{"diarization", c.diarization},
          {"local", c.local},
          {"joint_speaker", c.joint_speaker},
          {"individual_speaker", c.individual_speaker},
          {"diarization_weight", c.diarization_weight},
          {"local_weight", c.local_weight},
          {"speaker_weight", c.speaker_weight}};
}

loss::LossConfig LossConfigFromJson(const json& j) {
  loss::LossConfig c;
  c.diarization = j.value("diarization", c.diarization);
  c.local = j.value("local", c.local);
  c.joint_speaker = j.value("joint_speaker", c.joint_speaker);
  c.individual_speaker = j.value("individual_speaker", c.individual_speaker);
  c.diarization_weight = j.value("diarization_weight", c.diarization_weight);
  c.local_weight = j.value("local_weight", c.local_weight);
  c.speaker_weight = j.value("speaker_weight", c.speaker_weight);
  return c;
}

loss::LossConfig ResolveLosses(const model::ModelConfig& mc,
                               const TrainConfig& tc) {
  loss::LossConfig c = tc.losses;
  if (tc.losses_from_model) {
    const loss::LossConfig m = loss::LossConfig::ForModel(mc);
    c.local = m.local;
    c.joint_speaker = m.joint_speaker;
    c.individual_speaker = m.individual_speaker;
  }
  c.Validate();
  return c;
}

bool Finite(double v) { return std::isfinite(v); }

std::string LogHeader(int stages) {
  std::string h = "step,total";
  for (int s = 1; s <= stages; ++s) {
    const std::string p = ",stage" + std::to_string(s) + "_";
    h += p + "diarization" + p + "local" + p + "speaker";
  }
  return h + ",wall_seconds,eval_der\n";
}

std::string LogLine(const TrainLogRecord& r) {
  std::ostringstream out;
  out.precision(10);
  out << r.step << ',' << r.total;
  for (const StageLogValues& v : r.stages) {
    out << ',' << v.diarization << ',' << v.local << ',' << v.speaker;
  }
  out << ',' << r.wall_seconds << ',';
  if (r.eval_der) out << *r.eval_der;
  out << '\n';
  return out.str();
}

}  // namespace

std::string ToString(DatasetMode mode) {
  return mode == DatasetMode::kMaterialized ? "materialized" : "dynamic";
}

std::string ToString(SequentialMode mode) {
  return mode == SequentialMode::kJoint ? "joint" : "stagewise";
}

DatasetMode ParseDatasetMode(const std::string& s) {
  if (s == "materialized") return DatasetMode::kMaterialized;
  if (s == "dynamic") return DatasetMode::kDynamic;
  throw ConfigError("unknown dataset mode '" + s + "' (materialized|dynamic)");
}

SequentialMode ParseSequentialMode(const std::string& s) {
  if (s == "joint") return SequentialMode::kJoint;
  if (s == "stagewise") return SequentialMode::kStageWise;
  throw ConfigError("unknown sequential mode '" + s + "' (joint|stagewise)");
}

void TrainConfig::Validate() const {
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (max_steps < 0) throw ConfigError("train config: max_steps must be >= 0");
  if (!(learning_rate > 0)) {
    throw ConfigError("train config: learning_rate must be > 0");
  }
  if (eval_every < 0) throw ConfigError("train config: eval_every must be >= 0");
  if (mode == DatasetMode::kMaterialized && materialized_size < 1) {
    throw ConfigError("train config: materialized_size must be >= 1");
  }
  losses.Validate();
}

json TrainConfig::ToJson() const {
  return {{"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"max_steps", max_steps},
          {"seed", seed},
          {"mode", ToString(mode)},
          {"materialized_size", materialized_size},
          {"eval_every", eval_every},
          {"sequential", ToString(sequential)},
          {"stage1_steps", stage1_steps},
          {"losses", LossConfigToJson(losses)},
          {"losses_from_model", losses_from_model},
          {"meeting", MeetingOptionsToJson(meeting)},
          {"features", FeatureConfigToJson(features)}};
}

TrainConfig TrainConfig::FromJson(const json& j) {
  try {
    TrainConfig c;
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.seed = j.value("seed", c.seed);
    c.mode = ParseDatasetMode(j.value("mode", ToString(c.mode)));
    c.materialized_size = j.value("materialized_size", c.materialized_size);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.sequential =
        ParseSequentialMode(j.value("sequential", ToString(c.sequential)));
    c.stage1_steps = j.value("stage1_steps", c.stage1_steps);
    if (j.contains("losses")) c.losses = LossConfigFromJson(j["losses"]);
    c.losses_from_model = j.value("losses_from_model", c.losses_from_model);
    if (j.contains("meeting")) c.meeting = MeetingOptionsFromJson(j["meeting"]);
    if (j.contains("features")) {
      c.features = FeatureConfigFromJson(j["features"]);
    }
    c.Validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

TrainConfig TrainConfig::Desk() { return TrainConfig{}; }

TrainConfig TrainConfig::Paper() {
  TrainConfig c;
  c.max_steps = 800000;
  c.eval_every = 10000;
  c.meeting.duration_s = 120.0;
  c.meeting.num_speakers = {1, 8};
  c.meeting.max_slots = 8;
  c.meeting.overlap = {0.2, 0.5};
  return c;
}

Example MakeExample(const sim::MeetingSpec& spec,
                    const sim::SpeakerCorpus& corpus, int num_slots,
                    const FeatureConfig& features) {
  sim::RenderedMeeting m = sim::RenderMeeting(spec, corpus, num_slots);
  FeatureSequence f = ComputeFeatures(m.audio, features);
  if (f.num_frames() != m.labels.num_frames) {
    throw ShapeError("meeting " + spec.meeting_id + ": " +
                     std::to_string(f.num_frames()) + " feature frames vs " +
                     std::to_string(m.labels.num_frames) + " label frames");
  }
  return {spec.meeting_id, std::move(f.frames), std::move(m.labels)};
}

MaterializedSource::MaterializedSource(std::vector<Example> pool,
                                       std::uint64_t seed)
    : pool_(std::move(pool)), seed_(seed) {
  if (pool_.empty()) throw ConfigError("materialized dataset is empty");
}

Example MaterializedSource::Get(std::int64_t step, int index) const {
  Rng rng(DeriveSeed(DeriveSeed(seed_, static_cast<std::uint64_t>(step)),
                     static_cast<std::uint64_t>(index)));
  const auto i = rng.UniformInt(0, static_cast<std::int64_t>(pool_.size()) - 1);
  return pool_[static_cast<std::size_t>(i)];
}

DynamicSource::DynamicSource(std::shared_ptr<const sim::SpeakerCorpus> corpus,
                             sim::MeetingOptions options,
                             FeatureConfig features, int num_slots,
                             std::uint64_t seed)
    : corpus_(std::move(corpus)),
      options_(std::move(options)),
      features_(features),
      num_slots_(num_slots),
      seed_(seed) {}

sim::MeetingSpec DynamicSource::Spec(std::int64_t step, int index) const {
  const std::string id =
      "dyn-" + std::to_string(step) + "-" + std::to_string(index);
  return sim::SampleMeeting(
      *corpus_, options_,
      DeriveSeed(DeriveSeed(seed_, static_cast<std::uint64_t>(step)),
                 static_cast<std::uint64_t>(index)),
      id);
}

Example DynamicSource::Get(std::int64_t step, int index) const {
  return MakeExample(Spec(step, index), *corpus_, num_slots_, features_);
}

std::vector<sim::MeetingSpec> SampleMeetings(const sim::SpeakerCorpus& corpus,
                                             const sim::MeetingOptions& options,
                                             int count, std::uint64_t seed,
                                             const std::string& prefix) {
  std::vector<sim::MeetingSpec> specs;
  for (int i = 0; i < count; ++i) {
    char id[64];
    std::snprintf(id, sizeof(id), "%s%05d", prefix.c_str(), i);
    specs.push_back(sim::SampleMeeting(
        corpus, options, DeriveSeed(seed, static_cast<std::uint64_t>(i)), id));
  }
  return specs;
}

std::vector<Example> MakeExamples(const std::vector<sim::MeetingSpec>& specs,
                                  const sim::SpeakerCorpus& corpus,
                                  int num_slots, const FeatureConfig& features) {
  std::vector<Example> out;
  out.reserve(specs.size());
  for (const auto& spec : specs) {
    out.push_back(MakeExample(spec, corpus, num_slots, features));
  }
  return out;
}

std::unique_ptr<ExampleSource> MakeSource(
    const TrainConfig& config, std::shared_ptr<const sim::SpeakerCorpus> corpus,
    int num_slots) {
  if (config.mode == DatasetMode::kDynamic) {
    return std::make_unique<DynamicSource>(corpus, config.meeting,
                                           config.features, num_slots,
                                           config.seed);
  }
  auto specs = SampleMeetings(*corpus, config.meeting, config.materialized_size,
                              DeriveSeed(config.seed, kPoolStream), "train-");
  return std::make_unique<MaterializedSource>(
      MakeExamples(specs, *corpus, num_slots, config.features), config.seed);
}

std::string CheckpointName(std::int64_t step) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "checkpoint-%08lld.mdt",
                static_cast<long long>(step));
  return buf;
}

void SaveCheckpoint(const std::string& path, const CheckpointState& state) {
  grad::TensorArchive archive;
  archive.metadata["kind"] = "meetdiar.checkpoint";
  archive.metadata["step"] = state.step;
  archive.metadata["model_config"] = state.model_config.ToJson();
  archive.metadata["train_config"] = state.train_config.ToJson();
  grad::StoreParameters(archive, state.params, &state.adam);
  archive.Save(path);
}

CheckpointState LoadCheckpoint(const std::string& path) {
  grad::TensorArchive archive = grad::TensorArchive::Load(path);
  const json& meta = archive.metadata;
  if (meta.value("kind", "") != "meetdiar.checkpoint") {
    throw ParseError(path + ": not a meetdiar checkpoint");
  }
  CheckpointState st;
  st.model_config = model::ModelConfig::FromJson(meta.at("model_config"));
  st.train_config = TrainConfig::FromJson(meta.at("train_config"));
  st.step = meta.value("step", std::int64_t{0});
  st.params = model::BuildParameters(st.model_config, 0);
  grad::AdamOptions opts;
  opts.learning_rate = st.train_config.learning_rate;
  st.adam = grad::AdamState::ForParameters(st.params, opts);
  grad::RestoreParameters(archive, st.params, &st.adam);
  return st;
}

std::vector<double> MovingAverage(const std::vector<double>& values,
                                  std::size_t window) {
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

EvalSummary Evaluate(const model::DiarizationModel& model,
                     const std::vector<Example>& examples,
                     const eval::PostProcessConfig& postprocess) {
  EvalSummary summary;
  std::vector<eval::DerResult> results;
  for (const Example& ex : examples) {
    DiarizationProbs probs = model.Infer(ex.features);
    DiarizationLabels hyp = eval::Postprocess(probs, postprocess);
    results.push_back(eval::Der(ex.labels, hyp));
    summary.hypotheses.push_back(std::move(hyp));
    summary.probs.push_back(std::move(probs));
  }
  summary.der = eval::Aggregate(results);
  return summary;
}

eval::DerResult Rescore(const std::vector<DiarizationProbs>& probs,
                        const std::vector<Example>& examples,
                        const eval::PostProcessConfig& postprocess) {
  if (probs.size() != examples.size()) {
    throw UsageError("rescore: probability and example counts differ");
  }
  std::vector<eval::DerResult> results;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    results.push_back(eval::Der(examples[i].labels,
                                eval::Postprocess(probs[i], postprocess)));
  }
  return eval::Aggregate(results);
}

eval::DerResult SilenceBaseline(const std::vector<Example>& examples) {
  std::vector<eval::DerResult> results;
  for (const Example& ex : examples) {
    DiarizationLabels silent(ex.labels.num_slots, ex.labels.num_frames);
    results.push_back(eval::Der(ex.labels, silent));
  }
  return eval::Aggregate(results);
}

TrainResult Train(const model::ModelConfig& model_config,
                  const TrainConfig& train_config, const ExampleSource& source,
                  const TrainOptions& options) {
  model_config.Validate();
  train_config.Validate();
  const loss::LossConfig losses = ResolveLosses(model_config, train_config);
  const auto start = std::chrono::steady_clock::now();

  grad::AdamOptions adam_opts;
  adam_opts.learning_rate = train_config.learning_rate;
  std::int64_t first_step = 0;
  grad::ParameterSet params;
  grad::AdamState adam;
  if (!options.resume_from.empty()) {
    CheckpointState st = LoadCheckpoint(options.resume_from);
    if (!(st.model_config == model_config)) {
      throw ConfigError("resume: checkpoint model config differs from the "
                        "requested one");
    }
    params = std::move(st.params);
    adam = std::move(st.adam);
    adam.options = adam_opts;
    first_step = st.step;
  } else {
    if (options.initial_params) {
      params = options.initial_params->Clone();
    } else {
      const std::uint64_t init_seed =
          options.init_seed != 0 ? options.init_seed
                                 : DeriveSeed(train_config.seed, kInitStream);
      params = model::BuildParameters(model_config, init_seed);
    }
    adam = grad::AdamState::ForParameters(params, adam_opts);
  }
  model::DiarizationModel model(model_config, std::move(params));
  model.params().SetRequiresGrad(true);

  TrainResult result;
  std::ofstream log_file;
  auto save = [&](std::int64_t step) {
    if (options.output_dir.empty()) return std::string();
    const std::string path =
        (fs::path(options.output_dir) / CheckpointName(step)).string();
    SaveCheckpoint(path, {model_config, train_config, model.params(), adam,
                          step});
    return path;
  };
  if (!options.output_dir.empty()) {
    fs::create_directories(options.output_dir);
    const fs::path log_path = fs::path(options.output_dir) / "train_log.csv";
    const bool append = !options.resume_from.empty() && fs::exists(log_path);
    log_file.open(log_path, append ? std::ios::app : std::ios::trunc);
    if (!log_file) throw IoError("cannot open " + log_path.string());
    if (!append) log_file << LogHeader(model_config.stages);
  }

  const bool stage_wise = train_config.sequential == SequentialMode::kStageWise &&
                          model_config.stages == 2;
  const std::int64_t stage1_steps = train_config.resolved_stage1_steps();
  const double batch = static_cast<double>(train_config.batch_size);
  std::int64_t last_saved = -1;

  for (std::int64_t step = first_step; step < train_config.max_steps; ++step) {
    int active_stages = model_config.stages;
    if (stage_wise) {
      const bool phase1 = step < stage1_steps;
      active_stages = phase1 ? 1 : 2;
      model.SetStageTrainable(1, phase1);
      model.SetStageTrainable(2, !phase1);
      if (step == stage1_steps && step > 0) {
        adam = grad::AdamState::ForParameters(model.params(), adam_opts);
      }
    }
    model.params().ZeroGrad();
    TrainLogRecord rec;
    rec.step = step;
    rec.stages.assign(static_cast<std::size_t>(active_stages), {});
    for (int b = 0; b < train_config.batch_size; ++b) {
      Example ex = source.Get(step, b);
      grad::Tape tape;
      auto outputs = model.Forward(tape, model::FeaturesToTensor(ex.features),
                                   active_stages);
      loss::LossBreakdown br;
      grad::Tensor total = loss::TotalLoss(
          tape, outputs, loss::MakeTargets(ex.labels, model_config), losses,
          &br);
      for (std::size_t s = 0; s < br.stages.size(); ++s) {
        const auto& v = br.stages[s];
        const std::string where = " loss at step " + std::to_string(step) +
                                  " (stage " + std::to_string(s + 1) + ")";
        if (!Finite(v.diarization)) throw NumericError("non-finite diarization" + where);
        if (!Finite(v.local)) throw NumericError("non-finite local" + where);
        if (!Finite(v.speaker)) throw NumericError("non-finite speaker" + where);
        rec.stages[s].diarization += br.Normalized(v.diarization) / batch;
        rec.stages[s].local += br.Normalized(v.local) / batch;
        rec.stages[s].speaker += br.Normalized(v.speaker) / batch;
      }
      if (!Finite(br.total)) {
        throw NumericError("non-finite total loss at step " +
                           std::to_string(step));
      }
      rec.total += br.total / batch;
      tape.Backward(total);
    }
    grad::AdamStep(model.params(), adam);
    for (const auto& [name, t] : model.params().entries()) {
      for (double v : t.values()) {
        if (!Finite(v)) {
          throw NumericError("parameter '" + name +
                             "' became non-finite at step " +
                             std::to_string(step));
        }
      }
    }
    const std::int64_t done = step + 1;
    if (train_config.eval_every > 0 && done % train_config.eval_every == 0) {
      if (!options.eval_set.empty()) {
        rec.eval_der =
            Evaluate(model, options.eval_set, options.postprocess).der.der;
      }
      save(done);
      last_saved = done;
    }
    rec.wall_seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - start)
                           .count();
    if (log_file) {
      log_file << LogLine(rec);
      log_file.flush();
    }
    if (options.on_step) options.on_step(rec);
    result.log.push_back(std::move(rec));
  }

  const std::int64_t final_step = std::max(first_step, train_config.max_steps);
  if (last_saved != final_step) {
    result.final_checkpoint = save(final_step);
  } else if (!options.output_dir.empty()) {
    result.final_checkpoint =
        (fs::path(options.output_dir) / CheckpointName(final_step)).string();
  }
  model.params().SetRequiresGrad(true);
  result.state = {model_config, train_config, model.params().Clone(), adam,
                  final_step};
  return result;
}

TrainResult TrainSequential(const model::ModelConfig& model_config,
                            const TrainConfig& train_config,
                            const ExampleSource& source,
                            const TrainOptions& options) {
  if (model_config.stages == 2 &&
      model_config.stage_input_dim(2) !=
          model_config.input_dim + model_config.num_slots) {
    throw ConfigError("sequential model: stage-2 input width must be F + S");
  }
  return Train(model_config, train_config, source, options);
}

}  // namespace meetdiar::train
