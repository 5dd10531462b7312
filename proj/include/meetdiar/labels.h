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

#ifndef MEETDIAR_LABELS_H_
#define MEETDIAR_LABELS_H_

#include <cstddef>
#include <cstdint>
#include <vector>

namespace meetdiar {

inline constexpr double kLabelFrameRate = 10.0;

// Binary speaker-activity image: one row per output slot, one column per
// 100 ms frame.
struct DiarizationLabels {
  std::size_t num_slots = 0;
  std::size_t num_frames = 0;
  double frame_rate = kLabelFrameRate;
  std::vector<std::uint8_t> active;  // num_slots x num_frames
  // Global speaker id per slot, 0 when the slot is unmapped.
  std::vector<int> slot_to_speaker;

  DiarizationLabels() = default;
  DiarizationLabels(std::size_t slots, std::size_t frames)
      : num_slots(slots),
        num_frames(frames),
        active(slots * frames, 0),
        slot_to_speaker(slots, 0) {}

  bool at(std::size_t s, std::size_t t) const {
    return active[s * num_frames + t] != 0;
  }
  void set(std::size_t s, std::size_t t, bool v) {
    active[s * num_frames + t] = v ? 1 : 0;
  }
  std::size_t ActiveCount(std::size_t t) const {
    std::size_t n = 0;
    for (std::size_t s = 0; s < num_slots; ++s) n += at(s, t);
    return n;
  }
  std::size_t SlotFrames(std::size_t s) const {
    std::size_t n = 0;
    for (std::size_t t = 0; t < num_frames; ++t) n += at(s, t);
    return n;
  }

  friend bool operator==(const DiarizationLabels&,
                         const DiarizationLabels&) = default;
};

// Per-slot, per-frame speaker probabilities in (0, 1).
struct DiarizationProbs {
  std::size_t num_slots = 0;
  std::size_t num_frames = 0;
  std::vector<double> prob;  // num_slots x num_frames

  DiarizationProbs() = default;
  DiarizationProbs(std::size_t slots, std::size_t frames, double fill = 0.0)
      : num_slots(slots), num_frames(frames), prob(slots * frames, fill) {}

  double at(std::size_t s, std::size_t t) const {
    return prob[s * num_frames + t];
  }
  double& at(std::size_t s, std::size_t t) { return prob[s * num_frames + t]; }
};

}  // namespace meetdiar

#endif  // MEETDIAR_LABELS_H_
