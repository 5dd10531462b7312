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

#ifndef MEETDIAR_EVAL_EVALUATE_H_
#define MEETDIAR_EVAL_EVALUATE_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "meetdiar/labels.h"

namespace meetdiar::eval {

struct PostProcessConfig {
  double threshold = 0.7;
  int median_len = 31;  // odd; 1 disables the filter
  // Filter the probabilities before thresholding instead of after.
  bool median_first = false;

  void Validate() const;
};

// Sliding median with windows shrunk symmetrically at the edges.
std::vector<double> MedianFilter(std::span<const double> x, int len);

DiarizationLabels Postprocess(const DiarizationProbs& probs,
                              const PostProcessConfig& config);

struct DerResult {
  double der = 0.0;
  // Error and speech amounts in speaker-frames.
  double missed = 0.0;
  double false_alarm = 0.0;
  double confusion = 0.0;
  std::size_t total_speech_frames = 0;
  std::size_t scored_frames = 0;

  double errors() const { return missed + false_alarm + confusion; }
};

// mapping[r] = hypothesis slot matched to reference slot r, or -1. Chosen to
// maximize the number of frames where both are active.
std::vector<int> SpeakerMapping(const DiarizationLabels& reference,
                                const DiarizationLabels& hypothesis);

// Frame-level DER with an optimal one-to-one slot mapping. Frames within
// `collar_frames` of a reference boundary are not scored.
DerResult Der(const DiarizationLabels& reference,
              const DiarizationLabels& hypothesis, int collar_frames = 0);

// DER for a fixed mapping (same convention as SpeakerMapping).
DerResult DerWithMapping(const DiarizationLabels& reference,
                         const DiarizationLabels& hypothesis,
                         const std::vector<int>& mapping,
                         int collar_frames = 0);

// Pools the components of several results into one.
DerResult Aggregate(std::span<const DerResult> results);

inline constexpr int kMinActiveFrames = 10;

// Slots active for at least `min_active` frames.
int EstimatedSpeakerCount(const DiarizationLabels& labels,
                          int min_active = kMinActiveFrames);
// Slots with any activity.
int ReferenceSpeakerCount(const DiarizationLabels& labels);

// (S+1) x (S+1) counts indexed [reference count][estimated count].
std::vector<std::vector<int>> SpeakerCountConfusion(
    const std::vector<std::pair<DiarizationLabels, DiarizationLabels>>& cases,
    std::size_t max_slots, int min_active = kMinActiveFrames);

// Fraction of cases with reference count k whose estimate was also k;
// negative when there are no such cases.
double CountAccuracy(const std::vector<std::vector<int>>& matrix, int k);

// RTTM SPEAKER lines, sorted by onset then slot, times at 0.01 s precision.
// Mapped slots are named "spk<id>", unmapped ones "slot<s>".
std::string RttmWrite(const DiarizationLabels& labels,
                      const std::string& file_id);

struct RttmSegment {
  std::string file_id;
  double onset = 0.0;
  double duration = 0.0;
  std::string speaker;
  int line = 0;
};

// Parses SPEAKER lines; blank lines and ";;" comments are skipped. Throws
// ParseError with the line number for malformed lines.
std::vector<RttmSegment> RttmParse(const std::string& text);

// Converts segments to a label image. "slot<k>" names go to slot k; other
// names take free slots in order of first appearance, and "spk<id>" names
// set slot_to_speaker.
DiarizationLabels SegmentsToLabels(const std::vector<RttmSegment>& segments,
                                   std::size_t num_slots,
                                   std::size_t num_frames,
                                   double frame_rate = kLabelFrameRate);

DiarizationLabels RttmRead(const std::string& text, std::size_t num_slots,
                           std::size_t num_frames);

// Groups segments by file id, preserving first-appearance order of ids.
std::vector<std::pair<std::string, std::vector<RttmSegment>>> GroupByFile(
    const std::vector<RttmSegment>& segments);

struct MetricsRow {
  std::string file_id;
  DerResult result;
};

// One row per meeting plus an "ALL" row with pooled components.
std::string MetricsCsv(const std::vector<MetricsRow>& rows);

}  // namespace meetdiar::eval

#endif  // MEETDIAR_EVAL_EVALUATE_H_
