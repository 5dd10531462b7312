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

#include "meetdiar/eval/evaluate.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "meetdiar/errors.h"
#include "meetdiar/loss/losses.h"

namespace meetdiar::eval {
namespace {

void CheckComparable(const DiarizationLabels& ref,
                     const DiarizationLabels& hyp) {
  if (ref.num_frames != hyp.num_frames) {
    throw UsageError("der: reference has " + std::to_string(ref.num_frames) +
                     " frames, hypothesis " + std::to_string(hyp.num_frames));
  }
  if (ref.frame_rate != hyp.frame_rate) {
    throw UsageError("der: frame rates differ");
  }
}

std::vector<bool> ScoredFrames(const DiarizationLabels& ref, int collar) {
  const std::size_t T = ref.num_frames;
  std::vector<bool> scored(T, true);
  if (collar <= 0) return scored;
  const auto c = static_cast<std::ptrdiff_t>(collar);
  const auto n = static_cast<std::ptrdiff_t>(T);
  for (std::size_t s = 0; s < ref.num_slots; ++s) {
    for (std::size_t b = 0; b <= T; ++b) {
      const bool before = b > 0 && ref.at(s, b - 1);
      const bool after = b < T && ref.at(s, b);
      if (before == after) continue;
      const auto bi = static_cast<std::ptrdiff_t>(b);
      for (std::ptrdiff_t t = std::max<std::ptrdiff_t>(0, bi - c);
           t < std::min(n, bi + c); ++t) {
        scored[static_cast<std::size_t>(t)] = false;
      }
    }
  }
  return scored;
}

std::string FormatTime(double seconds) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", seconds);
  return buf;
}

bool ParseIntSuffix(const std::string& s, const std::string& prefix,
                    int* value) {
  if (s.size() <= prefix.size() || s.compare(0, prefix.size(), prefix) != 0) {
    return false;
  }
  const char* first = s.data() + prefix.size();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, *value);
  return ec == std::errc() && ptr == last;
}

}  // namespace

void PostProcessConfig::Validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("postprocess: threshold must be in (0, 1)");
  }
  if (median_len < 1 || median_len % 2 == 0) {
    throw ConfigError("postprocess: median_len must be a positive odd number");
  }
}

std::vector<double> MedianFilter(std::span<const double> x, int len) {
  if (len < 1 || len % 2 == 0) {
    throw ConfigError("median filter length must be a positive odd number");
  }
  const std::size_t T = x.size();
  const std::size_t half = static_cast<std::size_t>(len / 2);
  std::vector<double> out(T), window;
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t h = std::min({half, t, T - 1 - t});
    window.assign(x.begin() + static_cast<std::ptrdiff_t>(t - h),
                  x.begin() + static_cast<std::ptrdiff_t>(t + h + 1));
    std::nth_element(window.begin(), window.begin() + static_cast<std::ptrdiff_t>(h),
                     window.end());
    out[t] = window[h];
  }
  return out;
}

DiarizationLabels Postprocess(const DiarizationProbs& probs,
                              const PostProcessConfig& config) {
  config.Validate();
  const std::size_t S = probs.num_slots, T = probs.num_frames;
  DiarizationLabels out(S, T);
  std::vector<double> row(T);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t t = 0; t < T; ++t) row[t] = probs.at(s, t);
    if (config.median_first) {
      row = MedianFilter(row, config.median_len);
      for (double& v : row) v = v >= config.threshold ? 1.0 : 0.0;
    } else {
      for (double& v : row) v = v >= config.threshold ? 1.0 : 0.0;
      row = MedianFilter(row, config.median_len);
    }
    for (std::size_t t = 0; t < T; ++t) out.set(s, t, row[t] > 0.5);
  }
  return out;
}

std::vector<int> SpeakerMapping(const DiarizationLabels& reference,
                                const DiarizationLabels& hypothesis) {
  CheckComparable(reference, hypothesis);
  const std::size_t R = reference.num_slots, H = hypothesis.num_slots;
  const std::size_t n = std::max(R, H), T = reference.num_frames;
  std::vector<int> mapping(R, -1);
  if (n == 0) return mapping;
  std::vector<double> cost(n * n, 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t h = 0; h < H; ++h) {
      std::size_t both = 0;
      for (std::size_t t = 0; t < T; ++t) {
        both += reference.at(r, t) && hypothesis.at(h, t);
      }
      cost[r * n + h] = -static_cast<double>(both);
    }
  }
  const std::vector<int> assign = loss::SolveAssignment(cost, n);
  for (std::size_t r = 0; r < R; ++r) {
    if (static_cast<std::size_t>(assign[r]) < H) mapping[r] = assign[r];
  }
  return mapping;
}

DerResult DerWithMapping(const DiarizationLabels& reference,
                         const DiarizationLabels& hypothesis,
                         const std::vector<int>& mapping, int collar_frames) {
  CheckComparable(reference, hypothesis);
  const std::vector<bool> scored = ScoredFrames(reference, collar_frames);
  DerResult r;
  for (std::size_t t = 0; t < reference.num_frames; ++t) {
    if (!scored[t]) continue;
    ++r.scored_frames;
    std::size_t n_ref = 0, n_hyp = 0, n_correct = 0;
    for (std::size_t s = 0; s < reference.num_slots; ++s) {
      if (!reference.at(s, t)) continue;
      ++n_ref;
      const int h = mapping[s];
      if (h >= 0 && hypothesis.at(static_cast<std::size_t>(h), t)) ++n_correct;
    }
    n_hyp = hypothesis.ActiveCount(t);
    r.total_speech_frames += n_ref;
    r.missed += static_cast<double>(n_ref > n_hyp ? n_ref - n_hyp : 0);
    r.false_alarm += static_cast<double>(n_hyp > n_ref ? n_hyp - n_ref : 0);
    r.confusion += static_cast<double>(std::min(n_ref, n_hyp) - n_correct);
  }
  if (r.total_speech_frames > 0) {
    r.der = r.errors() / static_cast<double>(r.total_speech_frames);
  } else {
    r.der = r.errors() > 0 ? 1.0 : 0.0;
  }
  return r;
}

DerResult Der(const DiarizationLabels& reference,
              const DiarizationLabels& hypothesis, int collar_frames) {
  return DerWithMapping(reference, hypothesis,
                        SpeakerMapping(reference, hypothesis), collar_frames);
}

DerResult Aggregate(std::span<const DerResult> results) {
  DerResult total;
  for (const DerResult& r : results) {
    total.missed += r.missed;
    total.false_alarm += r.false_alarm;
    total.confusion += r.confusion;
    total.total_speech_frames += r.total_speech_frames;
    total.scored_frames += r.scored_frames;
  }
  if (total.total_speech_frames > 0) {
    total.der = total.errors() / static_cast<double>(total.total_speech_frames);
  } else {
    total.der = total.errors() > 0 ? 1.0 : 0.0;
  }
  return total;
}

int EstimatedSpeakerCount(const DiarizationLabels& labels, int min_active) {
  int n = 0;
  for (std::size_t s = 0; s < labels.num_slots; ++s) {
    n += labels.SlotFrames(s) >= static_cast<std::size_t>(min_active);
  }
  return n;
}

int ReferenceSpeakerCount(const DiarizationLabels& labels) {
  int n = 0;
  for (std::size_t s = 0; s < labels.num_slots; ++s) {
    n += labels.SlotFrames(s) > 0;
  }
  return n;
}

std::vector<std::vector<int>> SpeakerCountConfusion(
    const std::vector<std::pair<DiarizationLabels, DiarizationLabels>>& cases,
    std::size_t max_slots, int min_active) {
  std::vector<std::vector<int>> m(max_slots + 1,
                                  std::vector<int>(max_slots + 1, 0));
  for (const auto& [ref, hyp] : cases) {
    const auto r = static_cast<std::size_t>(ReferenceSpeakerCount(ref));
    const auto e =
        static_cast<std::size_t>(EstimatedSpeakerCount(hyp, min_active));
    if (r > max_slots || e > max_slots) {
      throw UsageError("speaker count exceeds the confusion matrix size");
    }
    ++m[r][e];
  }
  return m;
}

double CountAccuracy(const std::vector<std::vector<int>>& matrix, int k) {
  const auto& row = matrix.at(static_cast<std::size_t>(k));
  int total = 0;
  for (int v : row) total += v;
  if (total == 0) return -1.0;
  return static_cast<double>(row[static_cast<std::size_t>(k)]) / total;
}

std::string RttmWrite(const DiarizationLabels& labels,
                      const std::string& file_id) {
  struct Run {
    std::size_t start, end, slot;
  };
  std::vector<Run> runs;
  for (std::size_t s = 0; s < labels.num_slots; ++s) {
    std::size_t t = 0;
    while (t < labels.num_frames) {
      if (!labels.at(s, t)) {
        ++t;
        continue;
      }
      const std::size_t start = t;
      while (t < labels.num_frames && labels.at(s, t)) ++t;
      runs.push_back({start, t, s});
    }
  }
  std::sort(runs.begin(), runs.end(), [](const Run& a, const Run& b) {
    return a.start != b.start ? a.start < b.start : a.slot < b.slot;
  });
  std::ostringstream out;
  for (const Run& r : runs) {
    const int id = r.slot < labels.slot_to_speaker.size()
                       ? labels.slot_to_speaker[r.slot]
                       : 0;
    const std::string name = id > 0 ? "spk" + std::to_string(id)
                                    : "slot" + std::to_string(r.slot);
    const double onset = static_cast<double>(r.start) / labels.frame_rate;
    const double dur = static_cast<double>(r.end - r.start) / labels.frame_rate;
    out << "SPEAKER " << file_id << " 1 " << FormatTime(onset) << ' '
        << FormatTime(dur) << " <NA> <NA> " << name << " <NA> <NA>\n";
  }
  return out.str();
}

std::vector<RttmSegment> RttmParse(const std::string& text) {
  std::vector<RttmSegment> segments;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream fields(line);
    std::vector<std::string> f;
    for (std::string w; fields >> w;) f.push_back(w);
    if (f.empty() || f[0].rfind(";;", 0) == 0) continue;
    auto fail = [&](const std::string& why) {
      throw ParseError("rttm line " + std::to_string(number) + ": " + why);
    };
    if (f[0] != "SPEAKER") fail("expected a SPEAKER record");
    if (f.size() < 8) fail("expected at least 8 fields");
    RttmSegment seg;
    seg.file_id = f[1];
    seg.speaker = f[7];
    seg.line = number;
    try {
      std::size_t used = 0;
      seg.onset = std::stod(f[3], &used);
      if (used != f[3].size()) fail("bad onset '" + f[3] + "'");
      seg.duration = std::stod(f[4], &used);
      if (used != f[4].size()) fail("bad duration '" + f[4] + "'");
    } catch (const std::logic_error&) {
      fail("non-numeric onset or duration");
    }
    if (!(seg.onset >= 0.0) || !(seg.duration >= 0.0)) {
      fail("negative onset or duration");
    }
    segments.push_back(std::move(seg));
  }
  return segments;
}

DiarizationLabels SegmentsToLabels(const std::vector<RttmSegment>& segments,
                                   std::size_t num_slots,
                                   std::size_t num_frames, double frame_rate) {
  DiarizationLabels labels(num_slots, num_frames);
  labels.frame_rate = frame_rate;
  std::map<std::string, std::size_t> slot_of;
  std::vector<bool> used(num_slots, false);
  // Explicit slot names are reserved first so that named speakers cannot
  // take their slots.
  for (const RttmSegment& seg : segments) {
    int k = 0;
    if (ParseIntSuffix(seg.speaker, "slot", &k)) {
      if (k < 0 || static_cast<std::size_t>(k) >= num_slots) {
        throw ParseError("rttm line " + std::to_string(seg.line) + ": slot " +
                         std::to_string(k) + " out of range");
      }
      slot_of[seg.speaker] = static_cast<std::size_t>(k);
      used[static_cast<std::size_t>(k)] = true;
    }
  }
  for (const RttmSegment& seg : segments) {
    if (slot_of.count(seg.speaker)) continue;
    auto free = std::find(used.begin(), used.end(), false);
    if (free == used.end()) {
      throw ParseError("rttm line " + std::to_string(seg.line) +
                       ": more speakers than " + std::to_string(num_slots) +
                       " slots");
    }
    const auto slot = static_cast<std::size_t>(free - used.begin());
    *free = true;
    slot_of[seg.speaker] = slot;
    int id = 0;
    if (ParseIntSuffix(seg.speaker, "spk", &id) && id > 0) {
      labels.slot_to_speaker[slot] = id;
    }
  }
  for (const RttmSegment& seg : segments) {
    const std::size_t s = slot_of.at(seg.speaker);
    const auto start = static_cast<long long>(std::llround(seg.onset * frame_rate));
    const auto end = static_cast<long long>(
        std::llround((seg.onset + seg.duration) * frame_rate));
    for (long long t = std::max(0LL, start);
         t < std::min(end, static_cast<long long>(num_frames)); ++t) {
      labels.set(s, static_cast<std::size_t>(t), true);
    }
  }
  return labels;
}

DiarizationLabels RttmRead(const std::string& text, std::size_t num_slots,
                           std::size_t num_frames) {
  return SegmentsToLabels(RttmParse(text), num_slots, num_frames);
}

std::vector<std::pair<std::string, std::vector<RttmSegment>>> GroupByFile(
    const std::vector<RttmSegment>& segments) {
  std::vector<std::pair<std::string, std::vector<RttmSegment>>> groups;
  std::map<std::string, std::size_t> index;
  for (const RttmSegment& seg : segments) {
    auto [it, inserted] = index.emplace(seg.file_id, groups.size());
    if (inserted) groups.push_back({seg.file_id, {}});
    groups[it->second].second.push_back(seg);
  }
  return groups;
}

std::string MetricsCsv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "file_id,der,miss,fa,conf,speech_frames\n";
  std::vector<DerResult> all;
  auto emit = [&out](const std::string& id, const DerResult& r) {
    out << id << ',' << r.der << ',' << r.missed << ',' << r.false_alarm << ','
        << r.confusion << ',' << r.total_speech_frames << '\n';
  };
  for (const MetricsRow& row : rows) {
    emit(row.file_id, row.result);
    all.push_back(row.result);
  }
  emit("ALL", Aggregate(all));
  return out.str();
}

}  // namespace meetdiar::eval
