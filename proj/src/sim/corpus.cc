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

#include "meetdiar/sim/corpus.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>

#include "meetdiar/errors.h"
#include "meetdiar/features/features.h"
#include "meetdiar/random.h"

namespace meetdiar::sim {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kMaxVoiceRedraws = 64;
constexpr double kMaxHarmonicHz = 5000.0;

VoiceProfile DrawVoice(Rng& rng) {
  VoiceProfile v;
  v.f0_hz = std::exp(rng.Uniform(std::log(85.0), std::log(260.0)));
  v.formant_hz = {rng.Uniform(300, 900), rng.Uniform(900, 2500),
                  rng.Uniform(2300, 3600)};
  v.bandwidth_hz = {rng.Uniform(60, 160), rng.Uniform(80, 220),
                    rng.Uniform(120, 300)};
  v.formant_gain = {1.0, rng.Uniform(0.3, 0.9), rng.Uniform(0.1, 0.5)};
  v.tilt_db_per_octave = rng.Uniform(-9.0, -3.0);
  v.vibrato_depth = rng.Uniform(0.01, 0.05);
  v.noise_level = rng.Uniform(0.005, 0.03);
  return v;
}

// Spectral envelope of the voice at frequency f, with formant frequencies
// scaled by `shift` (vowel variation).
double Envelope(const VoiceProfile& v, double f, double shift) {
  double resonance = 0.05;
  for (std::size_t i = 0; i < v.formant_hz.size(); ++i) {
    const double x = (f - v.formant_hz[i] * shift) / v.bandwidth_hz[i];
    resonance += v.formant_gain[i] / (1.0 + x * x);
  }
  const double octaves = std::log2(std::max(f, 50.0) / 100.0);
  return resonance * std::pow(10.0, v.tilt_db_per_octave * octaves / 20.0);
}

bool WellSeparated(const std::vector<double>& mean,
                   const std::vector<std::vector<double>>& others,
                   const CorpusOptions& o) {
  for (const auto& other : others) {
    if (CountBinsDifferingBy(mean, other, o.min_db_gap) < o.min_differing_bins) {
      return false;
    }
  }
  return true;
}

}  // namespace

const Speaker& SpeakerCorpus::speaker(int id) const {
  if (id < 1 || static_cast<std::size_t>(id) > speakers.size()) {
    throw UsageError("speaker id " + std::to_string(id) + " not in corpus of " +
                     std::to_string(speakers.size()));
  }
  return speakers[static_cast<std::size_t>(id - 1)];
}

AudioClip SynthUtterance(const VoiceProfile& voice, double duration_s,
                         int sample_rate, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n =
      static_cast<std::size_t>(std::lround(duration_s * sample_rate));
  const std::size_t block = static_cast<std::size_t>(sample_rate / 100);
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.assign(n, 0.0);

  // Intonation: two slow sinusoids; syllables: ~4 per second, each with its
  // own vowel shift and a raised-sine envelope that never reaches zero.
  const double p1 = rng.Uniform(0.3, 1.2), p2 = rng.Uniform(1.2, 2.5);
  const double a1 = rng.Uniform(0.03, 0.08), a2 = rng.Uniform(0.01, 0.04);
  const double ph1 = rng.Uniform(0, kTwoPi), ph2 = rng.Uniform(0, kTwoPi);
  const double syllable_s = rng.Uniform(0.18, 0.3);
  const std::size_t n_syll =
      static_cast<std::size_t>(std::ceil(duration_s / syllable_s)) + 1;
  std::vector<double> vowel_shift(n_syll);
  for (double& s : vowel_shift) s = rng.Uniform(0.85, 1.15);

  const std::size_t max_h = static_cast<std::size_t>(
      kMaxHarmonicHz / (voice.f0_hz * (1.0 - 0.15)));
  std::vector<std::complex<double>> phasor(max_h + 1, {1.0, 0.0});
  for (std::size_t h = 1; h <= max_h; ++h) {
    const double ph = rng.Uniform(0, kTwoPi);
    phasor[h] = {std::cos(ph), std::sin(ph)};
  }
  std::vector<double> amp(max_h + 1);
  std::vector<std::complex<double>> rot(max_h + 1);

  for (std::size_t b0 = 0; b0 < n; b0 += block) {
    const double t = static_cast<double>(b0) / sample_rate;
    const double f0 = voice.f0_hz *
                      (1.0 + a1 * std::sin(kTwoPi * p1 * t + ph1) +
                       a2 * std::sin(kTwoPi * p2 * t + ph2) +
                       voice.vibrato_depth * std::sin(kTwoPi * 5.5 * t));
    const double syll_pos = t / syllable_s;
    const std::size_t si = std::min(static_cast<std::size_t>(syll_pos), n_syll - 1);
    const double shift = vowel_shift[si];
    const double env = 0.3 + 0.7 * std::sin(std::numbers::pi * (syll_pos - std::floor(syll_pos)));
    for (std::size_t h = 1; h <= max_h; ++h) {
      const double f = f0 * static_cast<double>(h);
      amp[h] = f < kMaxHarmonicHz ? env * Envelope(voice, f, shift) : 0.0;
      const double w = kTwoPi * f / sample_rate;
      rot[h] = {std::cos(w), std::sin(w)};
      phasor[h] /= std::abs(phasor[h]);
    }
    const std::size_t b1 = std::min(n, b0 + block);
    for (std::size_t i = b0; i < b1; ++i) {
      double s = 0.0;
      for (std::size_t h = 1; h <= max_h; ++h) {
        s += amp[h] * phasor[h].imag();
        phasor[h] *= rot[h];
      }
      clip.samples[i] = s + voice.noise_level * env * rng.Normal();
    }
  }

  // 10 ms fades, then peak-normalize to 0.5.
  const std::size_t fade = std::min(block, n / 2);
  for (std::size_t i = 0; i < fade; ++i) {
    const double g = static_cast<double>(i) / fade;
    clip.samples[i] *= g;
    clip.samples[n - 1 - i] *= g;
  }
  double peak = 0.0;
  for (double x : clip.samples) peak = std::max(peak, std::abs(x));
  if (peak > 0) {
    for (double& x : clip.samples) x *= 0.5 / peak;
  }
  return clip;
}

std::vector<double> MeanLogMel(const Speaker& speaker, int sample_rate) {
  std::vector<double> mean;
  std::size_t frames = 0;
  for (AudioClip clip : speaker.utterances) {
    clip.sample_rate = sample_rate;
    const Matrix mel = LogMel(clip, 64, 40.0, 10.0);
    if (mean.empty()) mean.assign(mel.cols, 0.0);
    for (std::size_t r = 0; r < mel.rows; ++r) {
      for (std::size_t c = 0; c < mel.cols; ++c) mean[c] += mel(r, c);
    }
    frames += mel.rows;
  }
  for (double& m : mean) m /= static_cast<double>(std::max<std::size_t>(frames, 1));
  return mean;
}

int CountBinsDifferingBy(const std::vector<double>& a,
                         const std::vector<double>& b, double db) {
  // Natural-log power difference -> decibels.
  const double to_db = 10.0 / std::log(10.0);
  int count = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    if (std::abs(a[i] - b[i]) * to_db >= db) ++count;
  }
  return count;
}

SpeakerCorpus SynthSpeakerCorpus(const CorpusOptions& o, std::uint64_t seed) {
  if (o.num_speakers < 1) throw UsageError("corpus needs at least one speaker");
  if (o.utterances_per_speaker < 1) {
    throw UsageError("corpus needs at least one utterance per speaker");
  }
  if (o.min_utterance_s < 1.0 || o.max_utterance_s < o.min_utterance_s) {
    throw ConfigError("utterance durations must satisfy 1.0 <= min <= max");
  }
  SpeakerCorpus corpus;
  corpus.sample_rate = o.sample_rate;
  std::vector<std::vector<double>> means;
  for (int i = 0; i < o.num_speakers; ++i) {
    const std::uint64_t speaker_seed = DeriveSeed(seed, static_cast<std::uint64_t>(i));
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxVoiceRedraws) {
        throw SimulationError("could not draw a voice for speaker " +
                              std::to_string(i + 1) +
                              " that is separable from all previous speakers");
      }
      Rng rng(DeriveSeed(speaker_seed, static_cast<std::uint64_t>(attempt)));
      Speaker spk;
      spk.id = i + 1;
      spk.voice = DrawVoice(rng);
      for (int u = 0; u < o.utterances_per_speaker; ++u) {
        const double dur = rng.Uniform(o.min_utterance_s, o.max_utterance_s);
        spk.utterances.push_back(
            SynthUtterance(spk.voice, dur, o.sample_rate, rng.NextU64()));
      }
      std::vector<double> mean = MeanLogMel(spk, o.sample_rate);
      if (WellSeparated(mean, means, o)) {
        means.push_back(std::move(mean));
        corpus.speakers.push_back(std::move(spk));
        break;
      }
    }
  }
  return corpus;
}

void WriteCorpus(const SpeakerCorpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json index;
  index["schema"] = "meetdiar.corpus/1";
  index["sample_rate"] = corpus.sample_rate;
  index["speakers"] = nlohmann::json::array();
  for (const Speaker& spk : corpus.speakers) {
    char name[32];
    std::snprintf(name, sizeof(name), "spk%03d", spk.id);
    const fs::path sdir = fs::path(dir) / name;
    fs::create_directories(sdir);
    nlohmann::json entry;
    entry["id"] = spk.id;
    entry["dir"] = name;
    entry["voice"] = {{"f0_hz", spk.voice.f0_hz},
                      {"formant_hz", spk.voice.formant_hz},
                      {"bandwidth_hz", spk.voice.bandwidth_hz},
                      {"formant_gain", spk.voice.formant_gain},
                      {"tilt_db_per_octave", spk.voice.tilt_db_per_octave},
                      {"vibrato_depth", spk.voice.vibrato_depth},
                      {"noise_level", spk.voice.noise_level}};
    entry["utterances"] = nlohmann::json::array();
    for (std::size_t u = 0; u < spk.utterances.size(); ++u) {
      char uname[32];
      std::snprintf(uname, sizeof(uname), "utt%03zu.wav", u);
      WriteWav((sdir / uname).string(), spk.utterances[u]);
      entry["utterances"].push_back(uname);
    }
    index["speakers"].push_back(entry);
  }
  const fs::path idx = fs::path(dir) / "speakers.json";
  std::ofstream out(idx.string() + ".tmp");
  out << index.dump(2) << '\n';
  out.close();
  fs::rename(idx.string() + ".tmp", idx);
}

SpeakerCorpus ReadCorpus(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path idx = fs::path(dir) / "speakers.json";
  std::ifstream in(idx);
  if (!in) throw IoError("cannot open corpus index '" + idx.string() + "'");
  nlohmann::json index;
  try {
    in >> index;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("corpus index: " + std::string(e.what()));
  }
  if (index.value("schema", "") != "meetdiar.corpus/1") {
    throw ParseError("unsupported corpus index schema");
  }
  SpeakerCorpus corpus;
  corpus.sample_rate = index.at("sample_rate").get<int>();
  for (const auto& entry : index.at("speakers")) {
    Speaker spk;
    spk.id = entry.at("id").get<int>();
    const auto& v = entry.at("voice");
    spk.voice.f0_hz = v.at("f0_hz");
    spk.voice.formant_hz = v.at("formant_hz").get<std::vector<double>>();
    spk.voice.bandwidth_hz = v.at("bandwidth_hz").get<std::vector<double>>();
    spk.voice.formant_gain = v.at("formant_gain").get<std::vector<double>>();
    spk.voice.tilt_db_per_octave = v.at("tilt_db_per_octave");
    spk.voice.vibrato_depth = v.at("vibrato_depth");
    spk.voice.noise_level = v.at("noise_level");
    const fs::path sdir = fs::path(dir) / entry.at("dir").get<std::string>();
    for (const auto& u : entry.at("utterances")) {
      spk.utterances.push_back(ReadWav((sdir / u.get<std::string>()).string()));
    }
    if (spk.id != static_cast<int>(corpus.speakers.size()) + 1) {
      throw ParseError("corpus speaker ids must be dense and ordered from 1");
    }
    corpus.speakers.push_back(std::move(spk));
  }
  return corpus;
}

}  // namespace meetdiar::sim
