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

#ifndef MEETDIAR_FEATURES_FEATURES_H_
#define MEETDIAR_FEATURES_FEATURES_H_

#include <cstddef>
#include <vector>

#include "meetdiar/features/audio.h"

namespace meetdiar {

// Dense row-major real matrix used for feature frames.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
};

struct FeatureConfig {
  int n_mels = 64;
  double window_ms = 40.0;
  double hop_ms = 10.0;
  double fmin_hz = 125.0;
  double fmax_hz = 7500.0;
  double log_floor = 1e-8;
  int context = 21;
  int factor = 10;

  int stacked_width() const { return n_mels * context; }
};

// Stacked log-mel frames at the label rate.
struct FeatureSequence {
  Matrix frames;  // T x F
  double frame_rate = 10.0;

  std::size_t num_frames() const { return frames.rows; }
  std::size_t width() const { return frames.cols; }
};

double HzToMel(double hz);
double MelToHz(double mel);

// Triangular mel filter bank over the non-negative FFT bins:
// [n_mels x (fft_size/2 + 1)].
Matrix MelFilterBank(int n_mels, int fft_size, int sample_rate, double fmin_hz,
                     double fmax_hz);
// Smallest power of two >= n.
int NextPowerOfTwo(int n);

// Hann-windowed log-mel spectrogram, one frame per hop. Frame i is centred
// on sample (i + 1/2) * hop with zero padding at the clip edges, so a clip of
// N samples yields floor(N / hop) frames. Throws UsageError if the clip is
// shorter than one window.
Matrix LogMel(const AudioClip& audio, int n_mels, double window_ms,
              double hop_ms, double fmin_hz = 125.0, double fmax_hz = 7500.0,
              double log_floor = 1e-8);

// Concatenates `context` neighbouring frames centred on every `factor`-th
// input frame (edge frames replicated). Output frame t covers input frames
// [t*factor - context/2, t*factor + context/2]; there are floor(T'/factor)
// output frames at (100 / factor) Hz for 10 ms input hops.
FeatureSequence StackAndDownsample(const Matrix& mel, int context = 21,
                                   int factor = 10, double input_rate = 100.0);

// LogMel followed by StackAndDownsample.
FeatureSequence ComputeFeatures(const AudioClip& audio,
                                const FeatureConfig& config = {});

}  // namespace meetdiar

#endif  // MEETDIAR_FEATURES_FEATURES_H_
