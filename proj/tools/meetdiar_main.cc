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

// meetdiar: synth-corpus, simulate, train, infer, score, selfcheck.
// Exit codes: 0 ok, 1 check or validation failure, 2 usage error.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "meetdiar/cli/manifest.h"
#include "meetdiar/cli/selfcheck.h"
#include "meetdiar/errors.h"
#include "meetdiar/eval/evaluate.h"
#include "meetdiar/features/audio.h"
#include "meetdiar/features/features.h"
#include "meetdiar/grad/checkpoint.h"
#include "meetdiar/model/network.h"
#include "meetdiar/sim/corpus.h"
#include "meetdiar/sim/meeting.h"
#include "meetdiar/train/trainer.h"
#include "meetdiar/version.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace meetdiar::cli {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

using Clock = std::chrono::steady_clock;

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Output directory: explicit path, else $MEETDIAR_OUTPUT_ROOT/<command>,
// else ./meetdiar-out/<command>.
std::string ResolveOutput(const std::string& given, const std::string& command) {
  if (!given.empty()) return given;
  const char* root = std::getenv("MEETDIAR_OUTPUT_ROOT");
  const fs::path base = root && *root ? fs::path(root) : fs::path("meetdiar-out");
  return (base / command).string();
}

void PrepareOutputDir(const std::string& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw UsageError(dir + " exists and is not a directory");
  }
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw UsageError("output directory " + dir +
                     " is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
}

template <typename T>
std::pair<T, T> ParseRange(const std::string& text, const char* what) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) {
      const T v = static_cast<T>(std::stod(text));
      return {v, v};
    }
    return {static_cast<T>(std::stod(text.substr(0, colon))),
            static_cast<T>(std::stod(text.substr(colon + 1)))};
  } catch (const std::logic_error&) {
    throw UsageError(std::string("bad ") + what + " range '" + text +
                     "' (expected lo:hi)");
  }
}

std::vector<std::string> Argv(int argc, char** argv) {
  return std::vector<std::string>(argv, argv + argc);
}

sim::SpeakerCorpus LoadOrSynthCorpus(const std::string& dir, int speakers,
                                     std::uint64_t seed) {
  if (!dir.empty()) return sim::ReadCorpus(dir);
  sim::CorpusOptions o;
  o.num_speakers = speakers;
  return sim::SynthSpeakerCorpus(o, seed);
}

// ---------------------------------------------------------------- synth-corpus

struct SynthCorpusArgs {
  int speakers = 16;
  int utterances = 12;
  std::uint64_t seed = 1;
  bool force = false;
  std::string out;
};

int RunSynthCorpus(const SynthCorpusArgs& a, const std::vector<std::string>& argv) {
  const auto start = Clock::now();
  if (a.speakers < 1) throw UsageError("--speakers must be >= 1");
  if (a.utterances < 1) throw UsageError("--utterances must be >= 1");
  const std::string out = ResolveOutput(a.out, "corpus");
  PrepareOutputDir(out, a.force);
  sim::CorpusOptions o;
  o.num_speakers = a.speakers;
  o.utterances_per_speaker = a.utterances;
  const sim::SpeakerCorpus corpus = sim::SynthSpeakerCorpus(o, a.seed);
  sim::WriteCorpus(corpus, out);
  RunManifest m;
  m.command = "synth-corpus";
  m.argv = argv;
  m.config = {{"speakers", a.speakers}, {"utterances", a.utterances}};
  m.seed = a.seed;
  m.outputs = {out};
  m.wall_seconds = SecondsSince(start);
  WriteManifest(out, m);
  std::printf("wrote %d speakers x %d utterances to %s\n", a.speakers,
              a.utterances, out.c_str());
  return kExitOk;
}

// -------------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string corpus;
  int corpus_speakers = 16;
  std::uint64_t corpus_seed = 1;
  int n = 10;
  double duration = 10.0;
  std::string overlap = "0:0.4";
  std::string speakers = "1:4";
  int slots = 4;
  std::uint64_t seed = 1;
  bool force = false;
  std::string out;
};

int RunSimulate(const SimulateArgs& a, const std::vector<std::string>& argv) {
  const auto start = Clock::now();
  if (a.n < 1) throw UsageError("--n must be >= 1");
  sim::MeetingOptions mo;
  mo.duration_s = a.duration;
  mo.overlap = ParseRange<double>(a.overlap, "overlap");
  mo.num_speakers = ParseRange<int>(a.speakers, "speakers");
  mo.max_slots = a.slots;
  if (mo.num_speakers.first < 1 || mo.num_speakers.second > a.slots ||
      mo.num_speakers.first > mo.num_speakers.second) {
    throw UsageError("--speakers must satisfy 1 <= lo <= hi <= --slots");
  }
  if (mo.overlap.first < 0 || mo.overlap.second >= 1 ||
      mo.overlap.first > mo.overlap.second) {
    throw UsageError("--overlap must satisfy 0 <= lo <= hi < 1");
  }
  const sim::SpeakerCorpus corpus =
      LoadOrSynthCorpus(a.corpus, a.corpus_speakers, a.corpus_seed);
  const std::string out = ResolveOutput(a.out, "simulate");
  PrepareOutputDir(out, a.force);
  fs::create_directories(fs::path(out) / "wav");
  fs::create_directories(fs::path(out) / "rttm");

  const auto specs = train::SampleMeetings(corpus, mo, a.n, a.seed, "meeting-");
  double ratio_sum = 0.0;
  for (const auto& spec : specs) {
    const sim::RenderedMeeting r = sim::RenderMeeting(spec, corpus, a.slots);
    WriteWav((fs::path(out) / "wav" / (spec.meeting_id + ".wav")).string(),
             r.audio);
    WriteFileAtomic(
        (fs::path(out) / "rttm" / (spec.meeting_id + ".rttm")).string(),
        eval::RttmWrite(r.labels, spec.meeting_id));
    ratio_sum += sim::ComputeOverlapRatio(spec);
  }
  const std::string spec_path = (fs::path(out) / "meetings.jsonl").string();
  sim::WriteMeetingSpecs(spec_path, specs);

  RunManifest m;
  m.command = "simulate";
  m.argv = argv;
  m.config = {{"n", a.n},
              {"duration_s", a.duration},
              {"overlap", {mo.overlap.first, mo.overlap.second}},
              {"speakers", {mo.num_speakers.first, mo.num_speakers.second}},
              {"slots", a.slots},
              {"corpus", a.corpus.empty() ? json(nullptr) : json(a.corpus)},
              {"corpus_speakers", a.corpus_speakers},
              {"corpus_seed", a.corpus_seed}};
  m.seed = a.seed;
  if (!a.corpus.empty()) m.inputs = {a.corpus};
  m.outputs = {spec_path, (fs::path(out) / "wav").string(),
               (fs::path(out) / "rttm").string()};
  m.wall_seconds = SecondsSince(start);
  WriteManifest(out, m);
  std::printf("wrote %d meetings to %s; mean overlap ratio %.4f\n", a.n,
              out.c_str(), ratio_sum / a.n);
  return kExitOk;
}

// ----------------------------------------------------------------------- train

struct TrainArgs {
  std::string preset = "desk";
  std::string config;
  std::string corpus;
  int corpus_speakers = 16;
  std::uint64_t corpus_seed = 1;
  std::string meetings;
  std::string resume;
  std::string out;
  bool force = false;
  int eval_meetings = 0;
  std::optional<std::int64_t> steps;
  std::optional<int> batch;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::int64_t> eval_every;
  std::optional<std::string> attention;
  std::optional<int> sa_dim;
  std::optional<int> heads;
  std::optional<int> sa_layers;
  std::optional<int> repeats;
  std::optional<int> dilation_layers;
  std::optional<std::string> speaker_module;
  std::optional<bool> local_loss;
  std::optional<int> stages;
  std::optional<std::string> sequential;
  std::optional<std::int64_t> stage1_steps;
  std::optional<double> duration;
  std::optional<std::string> speakers;
  std::optional<std::string> overlap;
  std::optional<int> slots;
};

int RunTrain(const TrainArgs& a, const std::vector<std::string>& argv) {
  const auto start = Clock::now();
  model::ModelConfig mc;
  train::TrainConfig tc;
  if (a.preset == "desk") {
    mc = model::ModelConfig::Desk();
    tc = train::TrainConfig::Desk();
  } else if (a.preset == "paper") {
    mc = model::ModelConfig::Paper();
    tc = train::TrainConfig::Paper();
  } else {
    throw UsageError("--preset must be desk or paper");
  }
  if (!a.config.empty()) {
    json j;
    try {
      j = json::parse(ReadFile(a.config));
    } catch (const json::parse_error& e) {
      throw ConfigError(a.config + ": " + e.what());
    }
    if (j.contains("schema") && j.contains("config")) j = j["config"];
    if (j.contains("model")) mc = model::ModelConfig::FromJson(j["model"]);
    if (j.contains("train")) tc = train::TrainConfig::FromJson(j["train"]);
  }
  // Flags win over presets and config files.
  if (a.steps) tc.max_steps = *a.steps;
  if (a.batch) tc.batch_size = *a.batch;
  if (a.lr) tc.learning_rate = *a.lr;
  if (a.seed) tc.seed = *a.seed;
  if (a.mode) tc.mode = train::ParseDatasetMode(*a.mode);
  if (a.eval_every) tc.eval_every = *a.eval_every;
  if (a.attention) mc.attention = model::ParseAttentionKind(*a.attention);
  if (a.sa_dim) mc.model_dim = *a.sa_dim;
  if (a.heads) mc.heads = *a.heads;
  if (a.sa_layers) mc.sa_layers = *a.sa_layers;
  if (a.repeats) mc.repeats = *a.repeats;
  if (a.dilation_layers) mc.dilation_layers = *a.dilation_layers;
  if (a.speaker_module) {
    mc.speaker_module = model::ParseSpeakerModuleKind(*a.speaker_module);
  }
  if (a.local_loss) mc.local_head = *a.local_loss;
  if (a.stages) mc.stages = *a.stages;
  if (a.sequential) tc.sequential = train::ParseSequentialMode(*a.sequential);
  if (a.stage1_steps) tc.stage1_steps = *a.stage1_steps;
  if (a.duration) tc.meeting.duration_s = *a.duration;
  if (a.speakers) tc.meeting.num_speakers = ParseRange<int>(*a.speakers, "speakers");
  if (a.overlap) tc.meeting.overlap = ParseRange<double>(*a.overlap, "overlap");
  if (a.slots) {
    mc.num_slots = *a.slots;
    tc.meeting.max_slots = *a.slots;
  }

  const auto corpus = std::make_shared<const sim::SpeakerCorpus>(
      LoadOrSynthCorpus(a.corpus, a.corpus_speakers, a.corpus_seed));
  mc.num_train_speakers = static_cast<int>(corpus->num_speakers());
  mc.input_dim = tc.features.stacked_width();
  mc.Validate();
  tc.Validate();

  const std::string out = ResolveOutput(a.out, "train");
  if (a.resume.empty()) PrepareOutputDir(out, a.force);

  std::unique_ptr<train::ExampleSource> source;
  if (!a.meetings.empty()) {
    tc.mode = train::DatasetMode::kMaterialized;
    source = std::make_unique<train::MaterializedSource>(
        train::MakeExamples(sim::ReadMeetingSpecs(a.meetings), *corpus,
                            mc.num_slots, tc.features),
        tc.seed);
  } else {
    source = train::MakeSource(tc, corpus, mc.num_slots);
  }

  train::TrainOptions opts;
  opts.output_dir = out;
  opts.resume_from = a.resume;
  if (a.eval_meetings > 0) {
    opts.eval_set = train::MakeExamples(
        train::SampleMeetings(*corpus, tc.meeting, a.eval_meetings,
                              DeriveSeed(tc.seed, 0xE7A1), "eval-"),
        *corpus, mc.num_slots, tc.features);
  }
  const train::TrainResult result =
      train::TrainSequential(mc, tc, *source, opts);

  RunManifest m;
  m.command = "train";
  m.argv = argv;
  m.config = {{"model", mc.ToJson()},
              {"train", tc.ToJson()},
              {"preset", a.preset},
              {"corpus", a.corpus.empty() ? json(nullptr) : json(a.corpus)},
              {"corpus_speakers", a.corpus_speakers},
              {"corpus_seed", a.corpus_seed}};
  m.seed = tc.seed;
  if (!a.corpus.empty()) m.inputs.push_back(a.corpus);
  if (!a.meetings.empty()) m.inputs.push_back(a.meetings);
  if (!a.resume.empty()) m.inputs.push_back(a.resume);
  m.outputs = {result.final_checkpoint,
               (fs::path(out) / "train_log.csv").string()};
  m.wall_seconds = SecondsSince(start);
  WriteManifest(out, m);

  if (!result.log.empty()) {
    std::vector<double> losses;
    for (const auto& r : result.log) {
      losses.push_back(r.stages.back().diarization);
    }
    const auto smooth = train::MovingAverage(losses, train::kSmoothingWindow);
    std::printf("steps %lld  smoothed diarization loss %.4f -> %.4f\n",
                static_cast<long long>(result.state.step), smooth.front(),
                smooth.back());
  }
  std::printf("checkpoint %s\n", result.final_checkpoint.c_str());
  return kExitOk;
}

// ----------------------------------------------------------------------- infer

struct InferArgs {
  std::string checkpoint;
  std::string audio;
  std::string out;
  std::string file_id;
  double threshold = 0.7;
  int median = 31;
};

int RunInfer(const InferArgs& a, const std::vector<std::string>& argv) {
  const auto start = Clock::now();
  const train::CheckpointState st = train::LoadCheckpoint(a.checkpoint);
  const model::DiarizationModel model(st.model_config, st.params.Clone());
  const AudioClip audio = ReadWav(a.audio);
  const FeatureSequence f = ComputeFeatures(audio, st.train_config.features);
  if (f.frames.cols != static_cast<std::size_t>(st.model_config.input_dim)) {
    throw ConfigError("checkpoint expects " +
                      std::to_string(st.model_config.input_dim) +
                      "-wide features, audio gives " +
                      std::to_string(f.frames.cols));
  }
  const DiarizationProbs probs = model.Infer(f.frames);
  eval::PostProcessConfig pp;
  pp.threshold = a.threshold;
  pp.median_len = a.median;
  const DiarizationLabels labels = eval::Postprocess(probs, pp);

  const std::string id =
      a.file_id.empty() ? fs::path(a.audio).stem().string() : a.file_id;
  const std::string out = ResolveOutput(a.out, "infer");
  fs::create_directories(out);
  const std::string rttm_path = (fs::path(out) / (id + ".rttm")).string();
  const std::string probs_path = (fs::path(out) / (id + ".probs.mdt")).string();
  WriteFileAtomic(rttm_path, eval::RttmWrite(labels, id));
  grad::TensorArchive dump;
  dump.metadata = {{"kind", "meetdiar.probs"},
                   {"file_id", id},
                   {"frame_rate", kLabelFrameRate}};
  dump.Put("probs", {probs.num_slots, probs.num_frames}, probs.prob);
  dump.Save(probs_path);

  RunManifest m;
  m.command = "infer";
  m.argv = argv;
  m.config = {{"threshold", a.threshold},
              {"median_len", a.median},
              {"model", st.model_config.ToJson()}};
  m.inputs = {a.checkpoint, a.audio};
  m.outputs = {rttm_path, probs_path};
  m.wall_seconds = SecondsSince(start);
  WriteManifest(out, m);
  std::printf("%s: %d active slots, wrote %s\n", id.c_str(),
              eval::ReferenceSpeakerCount(labels), rttm_path.c_str());
  return kExitOk;
}

// ----------------------------------------------------------------------- score

struct ScoreArgs {
  std::string ref;
  std::string hyp;
  std::string out;
  int collar = 0;
  int min_active = eval::kMinActiveFrames;
};

// File id -> segments. Directories map each *.rttm file by its stem (an
// empty file is an empty hypothesis); single files group by the id field.
std::map<std::string, std::vector<eval::RttmSegment>> LoadRttmSet(
    const std::string& path) {
  std::map<std::string, std::vector<eval::RttmSegment>> set;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.path().extension() != ".rttm") continue;
      auto segs = eval::RttmParse(ReadFile(entry.path().string()));
      set[entry.path().stem().string()] = std::move(segs);
    }
  } else {
    for (auto& [id, segs] : eval::GroupByFile(eval::RttmParse(ReadFile(path)))) {
      set[id] = std::move(segs);
    }
  }
  return set;
}

std::size_t FramesNeeded(const std::vector<eval::RttmSegment>& segs) {
  std::size_t frames = 0;
  for (const auto& s : segs) {
    frames = std::max(frames, static_cast<std::size_t>(std::llround(
                                  (s.onset + s.duration) * kLabelFrameRate)));
  }
  return frames;
}

std::size_t SpeakersIn(const std::vector<eval::RttmSegment>& segs) {
  std::set<std::string> names;
  for (const auto& s : segs) names.insert(s.speaker);
  std::size_t slots = names.size();
  // Explicit slot names may point past the number of distinct names.
  for (const auto& n : names) {
    int k = 0;
    if (n.rfind("slot", 0) == 0 && std::sscanf(n.c_str() + 4, "%d", &k) == 1) {
      slots = std::max(slots, static_cast<std::size_t>(k) + 1);
    }
  }
  return slots;
}

int RunScore(const ScoreArgs& a, const std::vector<std::string>& argv) {
  const auto start = Clock::now();
  const auto refs = LoadRttmSet(a.ref);
  const auto hyps = LoadRttmSet(a.hyp);
  std::vector<std::string> unmatched;
  for (const auto& [id, segs] : refs) {
    if (!hyps.count(id)) unmatched.push_back("hypothesis missing for " + id);
  }
  for (const auto& [id, segs] : hyps) {
    if (!refs.count(id)) unmatched.push_back("reference missing for " + id);
  }
  if (!unmatched.empty()) {
    std::string msg = "unmatched file ids:";
    for (const auto& u : unmatched) msg += "\n  " + u;
    throw ParseError(msg);
  }
  std::vector<eval::MetricsRow> rows;
  std::vector<std::pair<DiarizationLabels, DiarizationLabels>> count_cases;
  std::size_t max_slots = 1;
  for (const auto& [id, ref_segs] : refs) {
    const auto& hyp_segs = hyps.at(id);
    const std::size_t T = std::max(FramesNeeded(ref_segs), FramesNeeded(hyp_segs));
    const std::size_t S =
        std::max<std::size_t>(1, std::max(SpeakersIn(ref_segs), SpeakersIn(hyp_segs)));
    max_slots = std::max(max_slots, S);
    DiarizationLabels ref = eval::SegmentsToLabels(ref_segs, S, T);
    DiarizationLabels hyp = eval::SegmentsToLabels(hyp_segs, S, T);
    rows.push_back({id, eval::Der(ref, hyp, a.collar)});
    count_cases.emplace_back(std::move(ref), std::move(hyp));
  }
  const std::string csv = eval::MetricsCsv(rows);
  const std::string out = ResolveOutput(a.out, "score");
  fs::create_directories(out);
  const std::string csv_path = (fs::path(out) / "metrics.csv").string();
  WriteFileAtomic(csv_path, csv);

  std::vector<eval::DerResult> results;
  for (const auto& r : rows) results.push_back(r.result);
  const eval::DerResult total = eval::Aggregate(results);
  const auto confusion =
      eval::SpeakerCountConfusion(count_cases, max_slots, a.min_active);
  json conf_json = confusion;

  RunManifest m;
  m.command = "score";
  m.argv = argv;
  m.config = {{"collar_frames", a.collar},
              {"min_active", a.min_active},
              {"speaker_count_confusion", conf_json}};
  m.inputs = {a.ref, a.hyp};
  m.outputs = {csv_path};
  m.wall_seconds = SecondsSince(start);
  WriteManifest(out, m);

  std::printf("files %zu  DER %.6f  (miss %.0f, fa %.0f, conf %.0f of %zu "
              "speaker-frames)\n",
              rows.size(), total.der, total.missed, total.false_alarm,
              total.confusion, total.total_speech_frames);
  std::printf("speaker count confusion [ref][est]:\n");
  for (std::size_t r = 0; r < confusion.size(); ++r) {
    std::printf("  %zu:", r);
    for (int v : confusion[r]) std::printf(" %d", v);
    std::printf("\n");
  }
  return kExitOk;
}

// ------------------------------------------------------------------- selfcheck

int RunSelfCheck(const std::string& fault, const std::string& out_dir,
                 const std::vector<std::string>& argv) {
  const auto start = Clock::now();
  if (!fault.empty()) {
    const auto names = SelfCheckNames();
    if (std::find(names.begin(), names.end(), fault) == names.end()) {
      throw UsageError("unknown --inject-fault '" + fault + "'");
    }
  }
  SelfCheckOptions o;
  o.inject_fault = fault;
  const auto results = RunSelfChecks(o);
  std::vector<std::string> failed;
  std::printf("%-10s %-6s %8s  %s\n", "check", "status", "seconds", "detail");
  for (const auto& r : results) {
    std::printf("%-10s %-6s %8.2f  %s\n", r.name.c_str(),
                r.passed ? "PASS" : "FAIL", r.seconds, r.detail.c_str());
    if (!r.passed) failed.push_back(r.name);
  }
  if (!out_dir.empty()) {
    RunManifest m;
    m.command = "selfcheck";
    m.argv = argv;
    m.config = {{"inject_fault", fault}};
    m.seed = o.seed;
    m.wall_seconds = SecondsSince(start);
    WriteManifest(out_dir, m);
  }
  if (failed.empty()) {
    std::printf("all %zu checks passed\n", results.size());
    return kExitOk;
  }
  std::string names;
  for (const auto& n : failed) names += (names.empty() ? "" : ", ") + n;
  std::fprintf(stderr, "failed checks: %s\n", names.c_str());
  return kExitFailure;
}

int Main(int argc, char** argv) {
  const std::vector<std::string> args = Argv(argc, argv);
  CLI::App app{"meetdiar: meeting diarization toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  SynthCorpusArgs sc;
  auto* synth = app.add_subcommand("synth-corpus", "Synthesize a speaker corpus");
  synth->add_option("--speakers", sc.speakers, "Number of speakers");
  synth->add_option("--utterances", sc.utterances, "Utterances per speaker");
  synth->add_option("--seed", sc.seed, "Random seed");
  synth->add_flag("--force", sc.force, "Overwrite a non-empty output directory");
  synth->add_option("out", sc.out, "Output directory");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Generate simulated meetings");
  simulate->add_option("--corpus", sa.corpus, "Corpus directory (default: synthesize)");
  simulate->add_option("--corpus-speakers", sa.corpus_speakers);
  simulate->add_option("--corpus-seed", sa.corpus_seed);
  simulate->add_option("--n", sa.n, "Number of meetings");
  simulate->add_option("--duration", sa.duration, "Meeting length in seconds");
  simulate->add_option("--overlap", sa.overlap, "Overlap target range lo:hi");
  simulate->add_option("--speakers", sa.speakers, "Speaker count range lo:hi");
  simulate->add_option("--slots", sa.slots, "Output slots S");
  simulate->add_option("--seed", sa.seed, "Random seed");
  simulate->add_flag("--force", sa.force);
  simulate->add_option("out", sa.out, "Output directory");

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a diarization model");
  trn->add_option("--preset", ta.preset, "desk | paper");
  trn->add_option("--config", ta.config, "JSON config or run manifest");
  trn->add_option("--corpus", ta.corpus, "Corpus directory (default: synthesize)");
  trn->add_option("--corpus-speakers", ta.corpus_speakers);
  trn->add_option("--corpus-seed", ta.corpus_seed);
  trn->add_option("--meetings", ta.meetings, "Meeting spec file (materialized pool)");
  trn->add_option("--resume", ta.resume, "Checkpoint to resume from");
  trn->add_option("--eval-meetings", ta.eval_meetings, "Held-out meetings for logged DER");
  trn->add_flag("--force", ta.force);
  trn->add_option("--steps", ta.steps);
  trn->add_option("--batch", ta.batch);
  trn->add_option("--lr", ta.lr);
  trn->add_option("--seed", ta.seed);
  trn->add_option("--mode", ta.mode, "materialized | dynamic");
  trn->add_option("--eval-every", ta.eval_every);
  trn->add_option("--attention", ta.attention, "full | linear");
  trn->add_option("--sa-dim", ta.sa_dim, "Model dimension D");
  trn->add_option("--heads", ta.heads);
  trn->add_option("--sa-layers", ta.sa_layers);
  trn->add_option("--repeats", ta.repeats, "TDCN repeats (0 = SA only)");
  trn->add_option("--dilation-layers", ta.dilation_layers);
  trn->add_option("--speaker-module", ta.speaker_module, "none | local | joint | individual");
  trn->add_option("--local-loss", ta.local_loss, "Enable the local diarization loss");
  trn->add_option("--stages", ta.stages, "1 | 2");
  trn->add_option("--sequential", ta.sequential, "joint | stagewise");
  trn->add_option("--stage1-steps", ta.stage1_steps);
  trn->add_option("--duration", ta.duration);
  trn->add_option("--speakers", ta.speakers, "lo:hi");
  trn->add_option("--overlap", ta.overlap, "lo:hi");
  trn->add_option("--slots", ta.slots);
  trn->add_option("out", ta.out, "Output directory");

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Diarize one WAV file");
  infer->add_option("--checkpoint", ia.checkpoint)->required();
  infer->add_option("--threshold", ia.threshold);
  infer->add_option("--median", ia.median);
  infer->add_option("--file-id", ia.file_id);
  infer->add_option("audio", ia.audio)->required();
  infer->add_option("out", ia.out, "Output directory");

  ScoreArgs sca;
  auto* score = app.add_subcommand("score", "Score hypothesis RTTMs");
  score->add_option("--ref", sca.ref)->required();
  score->add_option("--hyp", sca.hyp)->required();
  score->add_option("--collar", sca.collar, "Collar in frames");
  score->add_option("--min-active", sca.min_active);
  score->add_option("out", sca.out, "Output directory");

  std::string fault, selfcheck_out;
  auto* selfcheck = app.add_subcommand("selfcheck", "Run the invariant suite");
  selfcheck->add_option("--inject-fault", fault, "Corrupt one check on purpose");
  selfcheck->add_option("--out", selfcheck_out, "Directory for the run manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) return RunSynthCorpus(sc, args);
    if (*simulate) return RunSimulate(sa, args);
    if (*trn) return RunTrain(ta, args);
    if (*infer) return RunInfer(ia, args);
    if (*score) return RunScore(sca, args);
    if (*selfcheck) return RunSelfCheck(fault, selfcheck_out, args);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace
}  // namespace meetdiar::cli

int main(int argc, char** argv) { return meetdiar::cli::Main(argc, argv); }
