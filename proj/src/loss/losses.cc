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

#include "meetdiar/loss/losses.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "meetdiar/errors.h"
#include "meetdiar/grad/ops.h"

namespace meetdiar::loss {
namespace {

// Classic O(n^3) Hungarian method with row/column potentials.
std::vector<int> Hungarian(const std::vector<double>& a, std::size_t n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col(n, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] != 0) col[p[j] - 1] = static_cast<int>(j - 1);
  }
  return col;
}

// Optimal cost over rows [first, n) using only the free columns.
double RestrictedOptimum(std::span<const double> cost, std::size_t n,
                         std::size_t first, const std::vector<bool>& taken) {
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < n; ++j) {
    if (!taken[j]) cols.push_back(j);
  }
  const std::size_t m = n - first;
  if (m == 0) return 0.0;
  std::vector<double> sub(m * m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      sub[r * m + c] = cost[(first + r) * n + cols[c]];
    }
  }
  const std::vector<int> assign = Hungarian(sub, m);
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    total += sub[r * m + static_cast<std::size_t>(assign[r])];
  }
  return total;
}

void CheckPermutation(const std::vector<int>& pi, std::size_t n) {
  if (pi.size() != n) {
    throw UsageError("permutation has " + std::to_string(pi.size()) +
                     " entries, expected " + std::to_string(n));
  }
  std::vector<bool> seen(n, false);
  for (int v : pi) {
    if (v < 0 || static_cast<std::size_t>(v) >= n ||
        seen[static_cast<std::size_t>(v)]) {
      throw UsageError("argument is not a permutation");
    }
    seen[static_cast<std::size_t>(v)] = true;
  }
}

}  // namespace

double ClampProb(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

double Bce(double p, double y) {
  const double q = ClampProb(p);
  return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

std::vector<int> SolveAssignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw ShapeError("assignment: cost is not n x n");
  if (n == 0) return {};
  const double optimum = RestrictedOptimum(cost, n, 0,
                                           std::vector<bool>(n, false));
  const double tol = 1e-12 * std::max(1.0, std::abs(optimum));
  std::vector<int> result(n, -1);
  std::vector<bool> taken(n, false);
  double prefix = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (taken[j]) continue;
      taken[j] = true;
      const double total =
          prefix + cost[i * n + j] + RestrictedOptimum(cost, n, i + 1, taken);
      if (total <= optimum + tol) {
        result[i] = static_cast<int>(j);
        prefix += cost[i * n + j];
        break;
      }
      taken[j] = false;
    }
  }
  return result;
}

std::vector<double> PitCostMatrix(std::span<const double> y_hat,
                                  const DiarizationLabels& y) {
  const std::size_t S = y.num_slots, T = y.num_frames;
  if (y_hat.size() != S * T) {
    throw ShapeError("pit: prediction size " + std::to_string(y_hat.size()) +
                     " vs labels " + std::to_string(S) + "x" +
                     std::to_string(T));
  }
  std::vector<double> cost(S * S, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t h = 0; h < S; ++h) {
      double c = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        c += Bce(y_hat[h * T + t], y.at(s, t) ? 1.0 : 0.0);
      }
      cost[s * S + h] = c;
    }
  }
  return cost;
}

PitResult PitDiarization(std::span<const double> y_hat,
                         const DiarizationLabels& y) {
  const std::vector<double> cost = PitCostMatrix(y_hat, y);
  const std::size_t S = y.num_slots;
  PitResult r;
  r.permutation = SolveAssignment(cost, S);
  for (std::size_t s = 0; s < S; ++s) {
    r.loss += cost[s * S + static_cast<std::size_t>(r.permutation[s])];
  }
  return r;
}

Tensor BceSum(Tape& tape, const Tensor& probs, std::vector<double> targets) {
  if (targets.size() != probs.size()) {
    throw ShapeError("bce: target size mismatch");
  }
  Tensor out = grad::MakeOutput(tape, {}, {&probs});
  auto p = probs.values();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += Bce(p[i], targets[i]);
  out.mutable_values()[0] = total;
  if (out.requires_grad()) {
    tape.Record([pn = probs.shared(), on = out.shared(),
                 y = std::move(targets)] {
      double* g = grad::GradOrNull(pn);
      if (!g || on->grad.empty()) return;
      const double go = on->grad[0];
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double q = pn->value[i];
        if (q < kProbClamp || q > 1.0 - kProbClamp) continue;
        g[i] += go * (q - y[i]) / (q * (1.0 - q));
      }
    });
  }
  return out;
}

Tensor NllSum(Tape& tape, const Tensor& probs, std::vector<int> classes) {
  const std::size_t T = probs.rows(), K = probs.cols();
  if (classes.size() != T) throw ShapeError("nll: class count mismatch");
  for (int c : classes) {
    if (c < 0 || static_cast<std::size_t>(c) >= K) {
      throw ShapeError("nll: class id out of range");
    }
  }
  Tensor out = grad::MakeOutput(tape, {}, {&probs});
  auto p = probs.values();
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    total -= std::log(std::max(p[t * K + static_cast<std::size_t>(classes[t])],
                               kProbClamp));
  }
  out.mutable_values()[0] = total;
  if (out.requires_grad()) {
    tape.Record([pn = probs.shared(), on = out.shared(),
                 cls = std::move(classes), K] {
      double* g = grad::GradOrNull(pn);
      if (!g || on->grad.empty()) return;
      const double go = on->grad[0];
      for (std::size_t t = 0; t < cls.size(); ++t) {
        const std::size_t i = t * K + static_cast<std::size_t>(cls[t]);
        if (pn->value[i] < kProbClamp) continue;
        g[i] -= go / pn->value[i];
      }
    });
  }
  return out;
}

Tensor PitDiarizationLoss(Tape& tape, const Tensor& probs,
                          const DiarizationLabels& y, PitResult* result) {
  PitResult r = PitDiarization(probs.values(), y);
  const std::size_t S = y.num_slots, T = y.num_frames;
  std::vector<double> targets(S * T);
  for (std::size_t s = 0; s < S; ++s) {
    const std::size_t h = static_cast<std::size_t>(r.permutation[s]);
    for (std::size_t t = 0; t < T; ++t) targets[h * T + t] = y.at(s, t);
  }
  if (result) *result = std::move(r);
  return BceSum(tape, probs, std::move(targets));
}

std::vector<std::uint8_t> JointSpeakerLabels(const DiarizationLabels& y,
                                             int num_speakers) {
  const std::size_t C = static_cast<std::size_t>(num_speakers);
  const std::size_t T = y.num_frames;
  std::vector<std::uint8_t> u(C * T, 0);
  for (std::size_t s = 0; s < y.num_slots; ++s) {
    const int id = y.slot_to_speaker[s];
    if (id == 0) continue;
    if (id < 0 || id > num_speakers) {
      throw ConfigError("speaker id " + std::to_string(id) +
                        " outside the training set of " +
                        std::to_string(num_speakers));
    }
    for (std::size_t t = 0; t < T; ++t) {
      if (y.at(s, t)) u[static_cast<std::size_t>(id - 1) * T + t] = 1;
    }
  }
  return u;
}

std::vector<int> IndividualSpeakerLabels(const DiarizationLabels& y) {
  std::vector<int> z(y.num_slots * y.num_frames, 0);
  for (std::size_t s = 0; s < y.num_slots; ++s) {
    for (std::size_t t = 0; t < y.num_frames; ++t) {
      if (y.at(s, t)) z[s * y.num_frames + t] = y.slot_to_speaker[s];
    }
  }
  return z;
}

double JointSpeakerLossValue(std::span<const double> u_hat,
                             std::span<const std::uint8_t> u) {
  if (u_hat.size() != u.size()) throw ShapeError("joint speaker: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) total += Bce(u_hat[i], u[i]);
  return total;
}

Tensor JointSpeakerLoss(Tape& tape, const Tensor& u_hat,
                        std::span<const std::uint8_t> u) {
  if (u_hat.size() != u.size()) throw ShapeError("joint speaker: size mismatch");
  return BceSum(tape, u_hat, std::vector<double>(u.begin(), u.end()));
}

Tensor IndividualSpeakerLoss(Tape& tape, const std::vector<Tensor>& slot_probs,
                             std::span<const int> z, std::size_t num_frames,
                             const std::vector<int>& pi) {
  const std::size_t S = slot_probs.size();
  CheckPermutation(pi, S);
  if (z.size() != S * num_frames) {
    throw ShapeError("individual speaker: label size mismatch");
  }
  std::vector<Tensor> parts;
  for (std::size_t s = 0; s < S; ++s) {
    const Tensor& probs = slot_probs[static_cast<std::size_t>(pi[s])];
    if (probs.rows() != num_frames) {
      throw ShapeError("individual speaker: frame count mismatch");
    }
    parts.push_back(NllSum(
        tape, probs,
        std::vector<int>(z.begin() + static_cast<std::ptrdiff_t>(s * num_frames),
                         z.begin() +
                             static_cast<std::ptrdiff_t>((s + 1) * num_frames))));
  }
  Tensor total = parts.front();
  for (std::size_t s = 1; s < S; ++s) total = grad::Add(tape, total, parts[s]);
  return total;
}

void LossConfig::Validate() const {
  if (joint_speaker && individual_speaker) {
    throw ConfigError("joint and individual speaker losses are exclusive");
  }
  if (diarization_weight < 0 || local_weight < 0 || speaker_weight < 0) {
    throw ConfigError("loss weights must be >= 0");
  }
}

LossConfig LossConfig::ForModel(const model::ModelConfig& config) {
  LossConfig c;
  c.local = config.local_head;
  c.joint_speaker =
      config.speaker_module == model::SpeakerModuleKind::kJoint ||
      config.speaker_module == model::SpeakerModuleKind::kLocal;
  c.individual_speaker =
      config.speaker_module == model::SpeakerModuleKind::kIndividual;
  return c;
}

Targets MakeTargets(const DiarizationLabels& labels,
                    const model::ModelConfig& config) {
  Targets t;
  t.labels = labels;
  if (config.speaker_module == model::SpeakerModuleKind::kJoint ||
      config.speaker_module == model::SpeakerModuleKind::kLocal) {
    t.joint = JointSpeakerLabels(labels, config.num_train_speakers);
  } else if (config.speaker_module == model::SpeakerModuleKind::kIndividual) {
    t.individual = IndividualSpeakerLabels(labels);
  }
  return t;
}

Tensor TotalLoss(Tape& tape, const std::vector<model::StageOutput>& outputs,
                 const Targets& targets, const LossConfig& config,
                 LossBreakdown* breakdown) {
  config.Validate();
  const DiarizationLabels& y = targets.labels;
  LossBreakdown b;
  b.slots = y.num_slots;
  b.frames = y.num_frames;
  Tensor total;
  auto accumulate = [&](const Tensor& part, double weight) {
    if (weight == 0.0) return;
    Tensor scaled = weight == 1.0 ? part : grad::Scale(tape, part, weight);
    total = total.defined() ? grad::Add(tape, total, scaled) : scaled;
  };
  for (const model::StageOutput& out : outputs) {
    StageLossValues v;
    PitResult pit;
    Tensor diar = PitDiarizationLoss(tape, out.probs, y, &pit);
    v.diarization = diar.item();
    v.permutation = pit.permutation;
    if (config.diarization) accumulate(diar, config.diarization_weight);
    if (config.local) {
      if (!out.local_probs.defined()) {
        throw ConfigError("local loss enabled but the model has no local head");
      }
      Tensor local = PitDiarizationLoss(tape, out.local_probs, y, nullptr);
      v.local = local.item();
      accumulate(local, config.local_weight);
    }
    if (config.joint_speaker) {
      if (!out.joint_speaker_probs.defined()) {
        throw ConfigError("joint speaker loss enabled but the model has no "
                          "joint speaker classifier");
      }
      Tensor spk = JointSpeakerLoss(tape, out.joint_speaker_probs,
                                    targets.joint);
      v.speaker = spk.item();
      accumulate(spk, config.speaker_weight);
    }
    if (config.individual_speaker) {
      if (out.slot_speaker_probs.empty()) {
        throw ConfigError("individual speaker loss enabled but the model has "
                          "no slot classifiers");
      }
      Tensor spk = IndividualSpeakerLoss(tape, out.slot_speaker_probs,
                                         targets.individual, y.num_frames,
                                         pit.permutation);
      v.speaker = spk.item();
      accumulate(spk, config.speaker_weight);
    }
    b.stages.push_back(std::move(v));
  }
  if (!total.defined()) total = Tensor::Scalar(0.0);
  b.total = total.item();
  if (breakdown) *breakdown = std::move(b);
  return total;
}

}  // namespace meetdiar::loss
