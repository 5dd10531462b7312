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

#ifndef MEETDIAR_SIM_MEETING_H_
#define MEETDIAR_SIM_MEETING_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "meetdiar/features/audio.h"
#include "meetdiar/labels.h"
#include "meetdiar/sim/corpus.h"

namespace meetdiar::sim {

struct ScheduledUtterance {
  int speaker_id = 0;
  int utterance_index = 0;
  double onset_s = 0.0;
  double duration_s = 0.0;
  double gain_db = 0.0;

  double end_s() const { return onset_s + duration_s; }
  friend bool operator==(const ScheduledUtterance&,
                         const ScheduledUtterance&) = default;
};

// Utterance schedule of one simulated meeting. Invariants: no speaker
// overlaps itself, and at most two utterances are active at any instant.
struct MeetingSpec {
  std::string meeting_id;
  double duration_s = 0.0;
  std::vector<int> participants;  // global ids, slot order
  std::vector<ScheduledUtterance> schedule;  // sorted by onset
  double overlap_target = 0.0;

  friend bool operator==(const MeetingSpec&, const MeetingSpec&) = default;
};

struct MeetingOptions {
  double duration_s = 10.0;
  std::pair<int, int> num_speakers = {1, 4};
  std::pair<double, double> overlap = {0.0, 0.4};
  int max_slots = 4;
  // Silence inserted between consecutive utterances when not overlapping.
  std::pair<double, double> gap_s = {0.1, 1.0};
  // Overlaps shorter than this are replaced by a gap.
  double min_overlap_s = 0.2;
  double gain_db_range = 5.0;
  double overlap_tolerance = 0.05;
  int max_attempts = 100;
};

// (time with >= 2 active speakers) / (time with >= 1 active speaker);
// 0 for a meeting without speech.
double ComputeOverlapRatio(const MeetingSpec& spec);

// Draws a meeting: speaker count, participants and an overlap target, then
// places utterances sequentially, overlapping the previous utterance while
// the running overlap ratio is below target. Throws SimulationError when the
// constraints cannot be met within `max_attempts` schedules.
MeetingSpec SampleMeeting(const SpeakerCorpus& corpus,
                          const MeetingOptions& options, std::uint64_t seed,
                          const std::string& meeting_id = "meeting");

// Throws SimulationError naming the first violated constraint.
void ValidateMeeting(const MeetingSpec& spec, int max_slots);

struct RenderedMeeting {
  AudioClip audio;
  DiarizationLabels labels;
};

// Mixes the scheduled utterances (with their gains, then peak-normalized to
// 0.9) and derives the frame labels: slot s is active in frame t iff its
// speaker has an utterance covering the frame centre t/10 + 0.05 s.
RenderedMeeting RenderMeeting(const MeetingSpec& spec,
                              const SpeakerCorpus& corpus, int num_slots);

// Labels only (no audio); identical to RenderMeeting(...).labels.
DiarizationLabels MeetingLabels(const MeetingSpec& spec, int num_slots);

std::size_t NumLabelFrames(double duration_s);

// One JSON object per line, tagged with the schema version.
std::string MeetingToJsonLine(const MeetingSpec& spec);
MeetingSpec MeetingFromJsonLine(const std::string& line);
void WriteMeetingSpecs(const std::string& path,
                       const std::vector<MeetingSpec>& specs);
std::vector<MeetingSpec> ReadMeetingSpecs(const std::string& path);

}  // namespace meetdiar::sim

#endif  // MEETDIAR_SIM_MEETING_H_
