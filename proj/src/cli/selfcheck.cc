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

#include "meetdiar/cli/selfcheck.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "meetdiar/errors.h"
#include "meetdiar/eval/evaluate.h"
#include "meetdiar/grad/gradcheck.h"
#include "meetdiar/grad/ops.h"
#include "meetdiar/loss/losses.h"
#include "meetdiar/model/attention.h"
#include "meetdiar/model/network.h"
#include "meetdiar/random.h"
#include "meetdiar/sim/corpus.h"
#include "meetdiar/sim/meeting.h"

namespace meetdiar::cli {
namespace {

using Check = std::function<std::string(bool fault, Rng& rng)>;

DiarizationLabels RandomLabels(std::size_t S, std::size_t T, Rng& rng,
                               double p = 0.4) {
  DiarizationLabels y(S, T);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t t = 0; t < T; ++t) y.set(s, t, rng.Uniform() < p);
  }
  return y;
}

std::string GradientCheck(bool fault, Rng& rng) {
  model::ModelConfig c;
  c.num_slots = 2;
  c.input_dim = 6;
  c.model_dim = 8;
  c.heads = 2;
  c.dilation_layers = 2;
  c.repeats = 1;
  c.sa_layers = 2;
  c.local_head = true;
  const std::size_t T = 12;
  model::DiarizationModel m(c, rng.NextU64());
  std::vector<double> x(T * 6);
  for (double& v : x) v = rng.Normal();
  const grad::Tensor features = grad::Tensor::FromData({T, 6}, x);
  const loss::Targets targets =
      loss::MakeTargets(RandomLabels(2, T, rng), c);
  const loss::LossConfig lc = loss::LossConfig::ForModel(c);
  auto fn = [&](grad::Tape& tape) {
    grad::Tensor l =
        loss::TotalLoss(tape, m.Forward(tape, features), targets, lc, nullptr);
    return fault && !tape.enabled() ? grad::Scale(tape, l, 1.01) : l;
  };
  const grad::GradCheckResult r = grad::CheckGradients(
      std::vector<std::pair<std::string, grad::Tensor>>(
          m.params().entries().begin(), m.params().entries().end()),
      fn, {.step = 1e-6, .tolerance = 1e-4, .absolute_floor = 1e-8});
  std::ostringstream out;
  out << r.checked << " scalars, max rel err " << r.max_relative_error;
  if (!r.ok()) throw NumericError(out.str() + " at " + r.worst);
  return out.str();
}

std::string PitCheck(bool fault, Rng& rng) {
  double worst = 0.0;
  int cases = 0;
  for (std::size_t S = 2; S <= 6; ++S) {
    for (int n = 0; n < 100; ++n) {
      const std::size_t T = 8;
      const DiarizationLabels y = RandomLabels(S, T, rng, 0.5);
      std::vector<double> p(S * T);
      for (double& v : p) v = rng.Uniform(0.01, 0.99);
      loss::PitResult r = loss::PitDiarization(p, y);
      if (fault) {
        const auto cost = loss::PitCostMatrix(p, y);
        r.loss = 0.0;
        for (std::size_t s = 0; s < S; ++s) r.loss += cost[s * S + s];
      }
      std::vector<int> perm(S);
      std::iota(perm.begin(), perm.end(), 0);
      double best = INFINITY;
      do {
        double total = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
          const auto h = static_cast<std::size_t>(perm[s]);
          for (std::size_t t = 0; t < T; ++t) {
            total += loss::Bce(p[h * T + t], y.at(s, t));
          }
        }
        best = std::min(best, total);
      } while (std::next_permutation(perm.begin(), perm.end()));
      worst = std::max(worst, std::abs(best - r.loss));
      ++cases;
    }
  }
  std::ostringstream out;
  out << cases << " instances, max |assignment - brute force| " << worst;
  if (!(worst < 1e-10)) throw NumericError(out.str());
  return out.str();
}

std::string AttentionCheck(bool fault, Rng& rng) {
  const std::size_t T = 6, dh = 4;
  Matrix q(T, dh), k(T, dh), v(T, dh);
  for (Matrix* m : {&q, &k, &v}) {
    for (double& x : m->data) x = rng.Normal();
  }
  Matrix out = model::AttentionFull(q, k, v);
  if (fault) out(0, 0) += 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    std::vector<double> w(T);
    double z = 0.0;
    for (std::size_t j = 0; j < T; ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < dh; ++d) s += q(i, d) * k(j, d);
      w[j] = std::exp(s / std::sqrt(static_cast<double>(dh)));
      z += w[j];
    }
    for (std::size_t d = 0; d < dh; ++d) {
      double o = 0.0;
      for (std::size_t j = 0; j < T; ++j) o += w[j] / z * v(j, d);
      worst = std::max(worst, std::abs(o - out(i, d)));
    }
  }
  Matrix q1(1, dh), k1(1, dh), v1(1, dh);
  for (std::size_t d = 0; d < dh; ++d) {
    q1(0, d) = rng.Normal();
    k1(0, d) = rng.Normal();
    v1(0, d) = rng.Normal();
  }
  const Matrix lin1 = model::AttentionLinear(q1, k1, v1);
  double lin_err = 0.0;
  for (std::size_t d = 0; d < dh; ++d) {
    lin_err = std::max(lin_err, std::abs(lin1(0, d) - v1(0, d)));
  }
  std::ostringstream msg;
  msg << "full vs loop " << worst << ", linear T=1 " << lin_err;
  if (!(worst < 1e-10) || !(lin_err < 1e-12)) throw NumericError(msg.str());
  return msg.str();
}

std::string SimulatorCheck(bool fault, Rng& rng) {
  sim::CorpusOptions co;
  co.num_speakers = 6;
  co.utterances_per_speaker = 4;
  const sim::SpeakerCorpus corpus = sim::SynthSpeakerCorpus(co, rng.NextU64());
  sim::MeetingOptions mo;
  mo.num_speakers = {2, 4};
  mo.overlap = {0.0, 0.4};
  const int n = 200;
  double worst_gap = 0.0;
  for (int i = 0; i < n; ++i) {
    sim::MeetingSpec spec = sim::SampleMeeting(corpus, mo, rng.NextU64());
    if (fault && !spec.schedule.empty()) {
      spec.schedule.push_back(spec.schedule.front());
    }
    // Interval sweep over all boundaries.
    std::vector<double> cuts;
    for (const auto& u : spec.schedule) {
      cuts.push_back(u.onset_s);
      cuts.push_back(u.end_s());
    }
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double mid = 0.5 * (cuts[c] + cuts[c + 1]);
      if (cuts[c + 1] - cuts[c] < 1e-12) continue;
      std::vector<int> who;
      for (const auto& u : spec.schedule) {
        if (u.onset_s <= mid && mid < u.end_s()) who.push_back(u.speaker_id);
      }
      if (who.size() > 2) {
        throw SimulationError("more than two active speakers in " +
                              spec.meeting_id);
      }
      if (who.size() == 2 && who[0] == who[1]) {
        throw SimulationError("self-overlap in " + spec.meeting_id);
      }
    }
    worst_gap = std::max(
        worst_gap, std::abs(sim::ComputeOverlapRatio(spec) - spec.overlap_target));
  }
  std::ostringstream out;
  out << n << " meetings, max |ratio - target| " << worst_gap;
  if (worst_gap > mo.overlap_tolerance + 1e-12) throw SimulationError(out.str());
  return out.str();
}

std::string DerCheck(bool fault, Rng& rng) {
  double worst = 0.0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    const std::size_t S = 2 + static_cast<std::size_t>(rng.UniformInt(0, 4));
    const std::size_t T = 20;
    const DiarizationLabels ref = RandomLabels(S, T, rng, 0.3);
    const DiarizationLabels hyp = RandomLabels(S, T, rng, 0.3);
    std::vector<int> perm(S);
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
      best = std::min(best, eval::DerWithMapping(ref, hyp, perm).der);
    } while (std::next_permutation(perm.begin(), perm.end()));
    std::vector<int> mapping = eval::SpeakerMapping(ref, hyp);
    if (fault) std::iota(mapping.begin(), mapping.end(), 0);
    worst = std::max(worst,
                     std::abs(eval::DerWithMapping(ref, hyp, mapping).der - best));
  }
  std::ostringstream out;
  out << n << " cases, max |assignment - exhaustive| " << worst;
  if (!(worst < 1e-12)) throw NumericError(out.str());
  return out.str();
}

std::string RttmCheck(bool fault, Rng& rng) {
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    const std::size_t S = 1 + static_cast<std::size_t>(rng.UniformInt(0, 5));
    const std::size_t T = 50;
    const DiarizationLabels y = RandomLabels(S, T, rng, 0.3);
    const std::string text = eval::RttmWrite(y, "f");
    const DiarizationLabels back = eval::RttmRead(text, S, fault ? T - 1 : T);
    if (!(back == y)) {
      throw ParseError("round trip differs for case " + std::to_string(i));
    }
  }
  return std::to_string(n) + " label images round-tripped";
}

std::string AdamCheck(bool fault, Rng&) {
  grad::AdamOptions o;
  o.learning_rate = fault ? 0.2 : 0.1;
  double w = 0.0, g = 1.0, m = 0.0, v = 0.0;
  grad::AdamUpdate({&w, 1}, {&g, 1}, {&m, 1}, {&v, 1}, o, 1);
  std::ostringstream out;
  out << "first step " << w;
  if (!(std::abs(w + 0.1) < 1e-6)) throw NumericError(out.str());
  return out.str();
}

const std::vector<std::pair<std::string, Check>>& Checks() {
  static const std::vector<std::pair<std::string, Check>> checks = {
      {"gradients", GradientCheck}, {"pit", PitCheck},
      {"attention", AttentionCheck}, {"simulator", SimulatorCheck},
      {"der", DerCheck},             {"rttm", RttmCheck},
      {"adam", AdamCheck}};
  return checks;
}

}  // namespace

std::vector<std::string> SelfCheckNames() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : Checks()) names.push_back(name);
  return names;
}

std::vector<CheckResult> RunSelfChecks(const SelfCheckOptions& options) {
  if (!options.inject_fault.empty()) {
    const auto names = SelfCheckNames();
    if (std::find(names.begin(), names.end(), options.inject_fault) ==
        names.end()) {
      throw UsageError("unknown check '" + options.inject_fault + "'");
    }
  }
  std::vector<CheckResult> results;
  std::uint64_t stream = 0;
  for (const auto& [name, fn] : Checks()) {
    CheckResult r;
    r.name = name;
    Rng rng(DeriveSeed(options.seed, stream++));
    const auto start = std::chrono::steady_clock::now();
    try {
      r.detail = fn(options.inject_fault == name, rng);
      r.passed = true;
    } catch (const std::exception& e) {
      r.detail = e.what();
      r.passed = false;
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              start)
                    .count();
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace meetdiar::cli
