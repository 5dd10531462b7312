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

#include "meetdiar/sim/meeting.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "meetdiar/errors.h"
#include "meetdiar/random.h"

namespace meetdiar::sim {
namespace {

constexpr const char* kMeetingSchema = "meetdiar.meeting/1";
// Keeps overlaps strictly shorter than the utterances involved.
constexpr double kOverlapMargin = 0.05;
// Shortest prefix of a clip that may be scheduled.
constexpr double kMinPiece = 1.0;

struct Placement {
  std::vector<ScheduledUtterance> schedule;
  std::vector<int> first_appearance;
};

double UtteranceSeconds(const SpeakerCorpus& corpus, int speaker, int utt) {
  const AudioClip& clip =
      corpus.speaker(speaker).utterances[static_cast<std::size_t>(utt)];
  return static_cast<double>(clip.samples.size()) / clip.sample_rate;
}

std::optional<Placement> TryPlace(const SpeakerCorpus& corpus,
                                  const MeetingOptions& o,
                                  const std::vector<int>& participants,
                                  double target, Rng& rng) {
  const bool can_overlap = participants.size() > 1 && target > 0.0;
  std::vector<int> unused = participants;
  Placement p;
  double speech = 0.0, overlap = 0.0;
  double prev_onset = 0.0, prev_end = 0.0, prevprev_end = 0.0;
  int tail = -1;

  auto pick_speaker = [&]() {
    if (!unused.empty()) {
      const int s = unused.front();
      unused.erase(unused.begin());
      return s;
    }
    for (;;) {
      const int s = participants[static_cast<std::size_t>(
          rng.UniformInt(0, static_cast<std::int64_t>(participants.size()) - 1))];
      if (participants.size() == 1 || s != tail) return s;
    }
  };

  constexpr int kFitTries = 8;
  for (;;) {
    const bool fresh = !unused.empty();
    const int speaker = pick_speaker();
    // Speakers still waiting for their first turn share the remaining time.
    double share = INFINITY;
    if (fresh) {
      const double gap = 0.5 * (o.gap_s.first + o.gap_s.second);
      share = (o.duration_s - prev_end) / static_cast<double>(unused.size() + 1) -
              gap;
    }
    const auto n_utts =
        static_cast<std::int64_t>(corpus.speaker(speaker).utterances.size());
    bool placed = false;
    for (int attempt = 0; attempt < kFitTries && !placed; ++attempt) {
      const int utt = static_cast<int>(rng.UniformInt(0, n_utts - 1));
      double d = UtteranceSeconds(corpus, speaker, utt);
      if (d > share) d = std::max(kMinPiece, std::min(d, share));
      double onset;
      double o_len = 0.0;
      const double wanted =
          can_overlap ? target * (speech + d) / (1.0 + target) - overlap : 0.0;
      const double room = std::min(prev_end - std::max(prevprev_end, prev_onset),
                                   d) - kOverlapMargin;
      if (!p.schedule.empty() && can_overlap && wanted >= o.min_overlap_s &&
          room >= o.min_overlap_s) {
        o_len = std::min(wanted * rng.Uniform(0.8, 1.2), room);
        o_len = std::max(o_len, o.min_overlap_s);
        onset = prev_end - o_len;
      } else {
        onset = prev_end + (p.schedule.empty() ? rng.Uniform(0.0, o.gap_s.second)
                                               : rng.Uniform(o.gap_s.first, o.gap_s.second));
      }
      if (onset + d > o.duration_s) {
        // The recording may end mid-utterance.
        const double cut = o.duration_s - onset;
        if (cut < kMinPiece || cut < o_len + kOverlapMargin) continue;
        d = cut;
      }
      ScheduledUtterance u;
      u.speaker_id = speaker;
      u.utterance_index = utt;
      u.onset_s = onset;
      u.duration_s = d;
      u.gain_db = rng.Uniform(-o.gain_db_range, o.gain_db_range);
      p.schedule.push_back(u);
      if (std::find(p.first_appearance.begin(), p.first_appearance.end(),
                    speaker) == p.first_appearance.end()) {
        p.first_appearance.push_back(speaker);
      }
      speech += d;
      overlap += o_len;
      prevprev_end = prev_end;
      prev_onset = onset;
      prev_end = onset + d;
      tail = speaker;
      placed = true;
    }
    if (!placed) break;
  }
  if (p.first_appearance.size() != participants.size()) return std::nullopt;
  return p;
}

}  // namespace

double ComputeOverlapRatio(const MeetingSpec& spec) {
  std::vector<std::pair<double, int>> events;
  for (const auto& u : spec.schedule) {
    events.emplace_back(u.onset_s, +1);
    events.emplace_back(u.end_s(), -1);
  }
  // Ends sort before starts at equal times: touching intervals do not overlap.
  std::sort(events.begin(), events.end());
  double speech = 0.0, overlapped = 0.0;
  int active = 0;
  double last = 0.0;
  for (const auto& [time, delta] : events) {
    const double span = time - last;
    if (active >= 1) speech += span;
    if (active >= 2) overlapped += span;
    active += delta;
    last = time;
  }
  return speech > 0.0 ? overlapped / speech : 0.0;
}

void ValidateMeeting(const MeetingSpec& spec, int max_slots) {
  if (spec.participants.empty() && !spec.schedule.empty()) {
    throw SimulationError("schedule has utterances but no participants");
  }
  if (static_cast<int>(spec.participants.size()) > max_slots) {
    throw SimulationError("meeting has " +
                          std::to_string(spec.participants.size()) +
                          " participants but only " + std::to_string(max_slots) +
                          " slots");
  }
  std::map<int, std::vector<std::pair<double, double>>> by_speaker;
  for (const auto& u : spec.schedule) {
    if (std::find(spec.participants.begin(), spec.participants.end(),
                  u.speaker_id) == spec.participants.end()) {
      throw SimulationError("scheduled speaker " + std::to_string(u.speaker_id) +
                            " is not a participant");
    }
    if (u.onset_s < 0.0 || u.end_s() > spec.duration_s + 1e-9) {
      throw SimulationError("utterance exceeds meeting duration");
    }
    by_speaker[u.speaker_id].emplace_back(u.onset_s, u.end_s());
  }
  for (auto& [speaker, spans] : by_speaker) {
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i) {
      if (spans[i].first < spans[i - 1].second) {
        throw SimulationError("no-self-overlap violated: speaker " +
                              std::to_string(speaker) +
                              " has overlapping utterances");
      }
    }
  }
  std::vector<std::pair<double, int>> events;
  for (const auto& u : spec.schedule) {
    events.emplace_back(u.onset_s, +1);
    events.emplace_back(u.end_s(), -1);
  }
  std::sort(events.begin(), events.end());
  int active = 0;
  for (const auto& [time, delta] : events) {
    active += delta;
    if (active > 2) {
      throw SimulationError("at-most-two-active violated at t=" +
                            std::to_string(time) + " s");
    }
  }
}

MeetingSpec SampleMeeting(const SpeakerCorpus& corpus,
                          const MeetingOptions& o, std::uint64_t seed,
                          const std::string& meeting_id) {
  const auto [kmin, kmax] = o.num_speakers;
  if (kmin < 1 || kmax < kmin || kmax > o.max_slots) {
    throw ConfigError("speaker-count range must lie within [1, " +
                      std::to_string(o.max_slots) + "]");
  }
  if (static_cast<std::size_t>(kmax) > corpus.num_speakers()) {
    throw ConfigError("corpus has only " +
                      std::to_string(corpus.num_speakers()) + " speakers");
  }
  if (o.overlap.first < 0.0 || o.overlap.second >= 1.0 ||
      o.overlap.first > o.overlap.second) {
    throw ConfigError("overlap range must lie within [0, 1)");
  }
  Rng rng(seed);
  const int k = static_cast<int>(rng.UniformInt(kmin, kmax));
  std::vector<int> ids(corpus.num_speakers());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i) + 1;
  for (int i = 0; i < k; ++i) {
    const auto j = rng.UniformInt(i, static_cast<std::int64_t>(ids.size()) - 1);
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
  }
  const std::vector<int> chosen(ids.begin(), ids.begin() + k);
  const double target = rng.Uniform(o.overlap.first, o.overlap.second);
  const double effective = k > 1 ? target : 0.0;

  double best_gap = -1.0;
  for (int attempt = 0; attempt < o.max_attempts; ++attempt) {
    auto placement = TryPlace(corpus, o, chosen, effective, rng);
    if (!placement) continue;
    MeetingSpec spec;
    spec.meeting_id = meeting_id;
    spec.duration_s = o.duration_s;
    spec.participants = placement->first_appearance;
    spec.schedule = std::move(placement->schedule);
    spec.overlap_target = target;
    const double ratio = ComputeOverlapRatio(spec);
    best_gap = best_gap < 0 ? std::abs(ratio - effective)
                            : std::min(best_gap, std::abs(ratio - effective));
    if (k == 1 || std::abs(ratio - target) <= o.overlap_tolerance) {
      ValidateMeeting(spec, o.max_slots);
      return spec;
    }
  }
  std::ostringstream msg;
  msg << "meeting '" << meeting_id << "': ";
  if (best_gap < 0) {
    msg << "could not fit all " << k << " speakers into " << o.duration_s
        << " s";
  } else {
    msg << "overlap target " << target << " not reached within +/-"
        << o.overlap_tolerance << " (closest miss " << best_gap << ")";
  }
  msg << " after " << o.max_attempts << " attempts";
  throw SimulationError(msg.str());
}

std::size_t NumLabelFrames(double duration_s) {
  // Floor, like the feature frame count; the epsilon absorbs binary
  // representation error (0.3 * 10 = 2.9999...).
  return static_cast<std::size_t>(
      std::floor(duration_s * kLabelFrameRate + 1e-9));
}

DiarizationLabels MeetingLabels(const MeetingSpec& spec, int num_slots) {
  if (static_cast<int>(spec.participants.size()) > num_slots) {
    throw SimulationError("meeting has more participants than output slots");
  }
  const std::size_t T = NumLabelFrames(spec.duration_s);
  DiarizationLabels labels(static_cast<std::size_t>(num_slots), T);
  for (std::size_t s = 0; s < spec.participants.size(); ++s) {
    labels.slot_to_speaker[s] = spec.participants[s];
  }
  for (const auto& u : spec.schedule) {
    if (u.end_s() > spec.duration_s + 1e-9) {
      throw SimulationError("schedule exceeds meeting duration");
    }
    const auto it = std::find(spec.participants.begin(), spec.participants.end(),
                              u.speaker_id);
    if (it == spec.participants.end()) {
      throw SimulationError("scheduled speaker is not a participant");
    }
    const std::size_t slot =
        static_cast<std::size_t>(it - spec.participants.begin());
    for (std::size_t t = 0; t < T; ++t) {
      const double centre = (static_cast<double>(t) + 0.5) / kLabelFrameRate;
      if (centre >= u.onset_s && centre < u.end_s()) labels.set(slot, t, true);
    }
  }
  return labels;
}

RenderedMeeting RenderMeeting(const MeetingSpec& spec,
                              const SpeakerCorpus& corpus, int num_slots) {
  RenderedMeeting out;
  out.labels = MeetingLabels(spec, num_slots);
  const int sr = corpus.sample_rate;
  out.audio.sample_rate = sr;
  out.audio.samples.assign(
      static_cast<std::size_t>(std::llround(spec.duration_s * sr)), 0.0);
  for (const auto& u : spec.schedule) {
    const auto& utts = corpus.speaker(u.speaker_id).utterances;
    if (u.utterance_index < 0 ||
        static_cast<std::size_t>(u.utterance_index) >= utts.size()) {
      throw SimulationError("utterance reference out of range for speaker " +
                            std::to_string(u.speaker_id));
    }
    const AudioClip& clip = utts[static_cast<std::size_t>(u.utterance_index)];
    const double gain = std::pow(10.0, u.gain_db / 20.0);
    const auto start = static_cast<std::size_t>(std::llround(u.onset_s * sr));
    const std::size_t n = std::min(
        clip.samples.size(),
        static_cast<std::size_t>(std::llround(u.duration_s * sr)));
    for (std::size_t i = 0; i < n; ++i) {
      if (start + i >= out.audio.samples.size()) break;
      out.audio.samples[start + i] += gain * clip.samples[i];
    }
  }
  double peak = 0.0;
  for (double x : out.audio.samples) peak = std::max(peak, std::abs(x));
  if (peak > 0.0) {
    for (double& x : out.audio.samples) x *= 0.9 / peak;
  }
  return out;
}

std::string MeetingToJsonLine(const MeetingSpec& spec) {
  nlohmann::json j;
  j["schema"] = kMeetingSchema;
  j["id"] = spec.meeting_id;
  j["duration_s"] = spec.duration_s;
  j["participants"] = spec.participants;
  j["overlap_target"] = spec.overlap_target;
  j["schedule"] = nlohmann::json::array();
  for (const auto& u : spec.schedule) {
    j["schedule"].push_back({{"speaker", u.speaker_id},
                             {"utterance", u.utterance_index},
                             {"onset_s", u.onset_s},
                             {"duration_s", u.duration_s},
                             {"gain_db", u.gain_db}});
  }
  return j.dump();
}

MeetingSpec MeetingFromJsonLine(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
    if (j.value("schema", "") != kMeetingSchema) {
      throw ParseError("unsupported meeting schema '" +
                       j.value("schema", std::string()) + "'");
    }
    MeetingSpec spec;
    spec.meeting_id = j.at("id").get<std::string>();
    spec.duration_s = j.at("duration_s").get<double>();
    spec.participants = j.at("participants").get<std::vector<int>>();
    spec.overlap_target = j.at("overlap_target").get<double>();
    for (const auto& u : j.at("schedule")) {
      ScheduledUtterance s;
      s.speaker_id = u.at("speaker").get<int>();
      s.utterance_index = u.at("utterance").get<int>();
      s.onset_s = u.at("onset_s").get<double>();
      s.duration_s = u.at("duration_s").get<double>();
      s.gain_db = u.at("gain_db").get<double>();
      spec.schedule.push_back(s);
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("meeting record: ") + e.what());
  }
}

void WriteMeetingSpecs(const std::string& path,
                       const std::vector<MeetingSpec>& specs) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    for (const auto& s : specs) out << MeetingToJsonLine(s) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

std::vector<MeetingSpec> ReadMeetingSpecs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<MeetingSpec> specs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      specs.push_back(MeetingFromJsonLine(line));
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return specs;
}

}  // namespace meetdiar::sim
