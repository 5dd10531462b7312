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

#ifndef MEETDIAR_FEATURES_AUDIO_H_
#define MEETDIAR_FEATURES_AUDIO_H_

#include <string>
#include <vector>

namespace meetdiar {

// Mono audio with samples nominally in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// 16-bit PCM mono WAV. Reading accepts any sample rate; multi-channel or
// non-PCM files are rejected with ParseError.
AudioClip ReadWav(const std::string& path);
void WriteWav(const std::string& path, const AudioClip& clip);

// In-memory variants of the above.
AudioClip DecodeWav(const std::string& bytes);
std::string EncodeWav(const AudioClip& clip);

}  // namespace meetdiar

#endif  // MEETDIAR_FEATURES_AUDIO_H_
