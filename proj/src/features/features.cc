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

#include "meetdiar/features/features.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <utility>

#include "meetdiar/errors.h"

namespace meetdiar {
namespace {

// The FFTW planner is not thread-safe; execution is.
std::mutex& PlannerMutex() {
  static std::mutex mu;
  return mu;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(static_cast<std::size_t>(n));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    std::lock_guard<std::mutex> lock(PlannerMutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(PlannerMutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  // Computes |X_k|^2 for k in [0, n/2].
  void PowerSpectrum(std::vector<double>& power) {
    fftw_execute(plan_);
    power.resize(static_cast<std::size_t>(n_ / 2 + 1));
    for (int k = 0; k <= n_ / 2; ++k) {
      power[static_cast<std::size_t>(k)] =
          out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
    }
  }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

}  // namespace

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double MelToHz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

int NextPowerOfTwo(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

Matrix MelFilterBank(int n_mels, int fft_size, int sample_rate, double fmin_hz,
                     double fmax_hz) {
  if (n_mels < 1 || fmin_hz < 0 || fmax_hz <= fmin_hz ||
      fmax_hz > sample_rate / 2.0) {
    throw ConfigError("invalid mel filter bank configuration");
  }
  const int n_bins = fft_size / 2 + 1;
  const double mel_lo = HzToMel(fmin_hz);
  const double mel_hi = HzToMel(fmax_hz);
  std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[static_cast<std::size_t>(i)] =
        MelToHz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  }
  Matrix bank(static_cast<std::size_t>(n_mels), static_cast<std::size_t>(n_bins));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m + 1)];
    const double hi = edges[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      bank(static_cast<std::size_t>(m), static_cast<std::size_t>(k)) = w;
    }
  }
  return bank;
}

Matrix LogMel(const AudioClip& audio, int n_mels, double window_ms,
              double hop_ms, double fmin_hz, double fmax_hz,
              double log_floor) {
  if (audio.sample_rate <= 0) throw ConfigError("sample rate must be positive");
  if (window_ms < hop_ms || hop_ms <= 0) {
    throw ConfigError("log-mel window must be at least one hop");
  }
  const int win = static_cast<int>(std::lround(window_ms * audio.sample_rate / 1000.0));
  const int hop = static_cast<int>(std::lround(hop_ms * audio.sample_rate / 1000.0));
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(audio.samples.size());
  if (n < win) {
    throw UsageError("audio of " + std::to_string(n) +
                     " samples is shorter than one analysis window (" +
                     std::to_string(win) + ")");
  }
  const int fft_size = NextPowerOfTwo(win);
  const Matrix bank =
      MelFilterBank(n_mels, fft_size, audio.sample_rate, fmin_hz, fmax_hz);
  std::vector<double> window(static_cast<std::size_t>(win));
  for (int i = 0; i < win; ++i) {
    window[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / win);
  }

  // Each triangle is nonzero only over a short band of FFT bins.
  std::vector<std::pair<std::size_t, std::size_t>> band(bank.rows);
  for (std::size_t m = 0; m < bank.rows; ++m) {
    std::size_t lo = bank.cols, hi = 0;
    for (std::size_t k = 0; k < bank.cols; ++k) {
      if (bank(m, k) != 0.0) {
        lo = std::min(lo, k);
        hi = k + 1;
      }
    }
    band[m] = {std::min(lo, hi), hi};
  }

  const std::size_t n_frames = static_cast<std::size_t>(n / hop);
  Matrix mel(n_frames, static_cast<std::size_t>(n_mels));
  RealFft fft(fft_size);
  std::vector<double> power;
  const std::ptrdiff_t lead = (win - hop) / 2;
  for (std::size_t i = 0; i < n_frames; ++i) {
    double* in = fft.input();
    std::fill(in, in + fft_size, 0.0);
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(i) * hop - lead;
    for (int j = 0; j < win; ++j) {
      const std::ptrdiff_t s = start + j;
      if (s >= 0 && s < n) {
        in[j] = audio.samples[static_cast<std::size_t>(s)] *
                window[static_cast<std::size_t>(j)];
      }
    }
    fft.PowerSpectrum(power);
    for (std::size_t m = 0; m < bank.rows; ++m) {
      double e = 0.0;
      const double* w = &bank.data[m * bank.cols];
      for (std::size_t k = band[m].first; k < band[m].second; ++k) {
        e += w[k] * power[k];
      }
      mel(i, m) = std::log(e + log_floor);
    }
  }
  return mel;
}

FeatureSequence StackAndDownsample(const Matrix& mel, int context, int factor,
                                   double input_rate) {
  if (context < 1 || context % 2 == 0) {
    throw ConfigError("stacking context must be a positive odd number, got " +
                      std::to_string(context));
  }
  if (factor < 1) throw ConfigError("downsampling factor must be >= 1");
  const std::size_t n_out = mel.rows / static_cast<std::size_t>(factor);
  const std::size_t width = mel.cols * static_cast<std::size_t>(context);
  const std::ptrdiff_t half = context / 2;
  const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(mel.rows) - 1;
  FeatureSequence seq;
  seq.frame_rate = input_rate / factor;
  seq.frames = Matrix(n_out, width);
  for (std::size_t t = 0; t < n_out; ++t) {
    const std::ptrdiff_t centre = static_cast<std::ptrdiff_t>(t) * factor;
    double* dst = &seq.frames.data[t * width];
    for (std::ptrdiff_t j = -half; j <= half; ++j) {
      const std::ptrdiff_t src = std::clamp<std::ptrdiff_t>(centre + j, 0, last);
      std::copy_n(&mel.data[static_cast<std::size_t>(src) * mel.cols], mel.cols,
                  dst + static_cast<std::size_t>(j + half) * mel.cols);
    }
  }
  return seq;
}

FeatureSequence ComputeFeatures(const AudioClip& audio,
                                const FeatureConfig& config) {
  const Matrix mel = LogMel(audio, config.n_mels, config.window_ms,
                            config.hop_ms, config.fmin_hz, config.fmax_hz,
                            config.log_floor);
  return StackAndDownsample(mel, config.context, config.factor,
                            1000.0 / config.hop_ms);
}

}  // namespace meetdiar
