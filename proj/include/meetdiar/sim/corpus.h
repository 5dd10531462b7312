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

#ifndef MEETDIAR_SIM_CORPUS_H_
#define MEETDIAR_SIM_CORPUS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "meetdiar/features/audio.h"

namespace meetdiar::sim {

// Parameters of one synthetic voice: a harmonic source shaped by a few
// resonances and a spectral tilt.
struct VoiceProfile {
  double f0_hz = 120.0;
  std::vector<double> formant_hz;
  std::vector<double> bandwidth_hz;
  std::vector<double> formant_gain;
  double tilt_db_per_octave = -6.0;
  double vibrato_depth = 0.03;
  double noise_level = 0.02;
};

struct Speaker {
  int id = 0;  // 1-based global id
  VoiceProfile voice;
  std::vector<AudioClip> utterances;
};

struct SpeakerCorpus {
  std::vector<Speaker> speakers;  // speakers[i].id == i + 1
  int sample_rate = 16000;

  std::size_t num_speakers() const { return speakers.size(); }
  const Speaker& speaker(int id) const;
};

struct CorpusOptions {
  int num_speakers = 16;
  int utterances_per_speaker = 12;
  double min_utterance_s = 2.0;
  double max_utterance_s = 4.5;
  int sample_rate = 16000;
  // Every pair of speakers must differ by at least `min_db_gap` in the mean
  // log-mel energy of at least `min_differing_bins` of the 64 bins.
  double min_db_gap = 3.0;
  int min_differing_bins = 8;
};

// Synthesizes C speakers with distinct voices. Deterministic in `seed`.
// Voices that fail the pairwise separation check are redrawn.
SpeakerCorpus SynthSpeakerCorpus(const CorpusOptions& options,
                                 std::uint64_t seed);

// Renders one utterance of `voice` (pitch contour and syllable envelope
// drawn from `seed`).
AudioClip SynthUtterance(const VoiceProfile& voice, double duration_s,
                         int sample_rate, std::uint64_t seed);

// Mean 64-bin log-mel vector over every utterance of a speaker.
std::vector<double> MeanLogMel(const Speaker& speaker, int sample_rate);

// Number of bins where two mean log-mel vectors differ by >= `db` decibels.
int CountBinsDifferingBy(const std::vector<double>& a,
                         const std::vector<double>& b, double db);

// On-disk layout: <dir>/speakers.json index plus <dir>/spkNNN/uttNNN.wav.
void WriteCorpus(const SpeakerCorpus& corpus, const std::string& dir);
SpeakerCorpus ReadCorpus(const std::string& dir);

}  // namespace meetdiar::sim

#endif  // MEETDIAR_SIM_CORPUS_H_
