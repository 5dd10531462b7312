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

#ifndef MEETDIAR_LOSS_LOSSES_H_
#define MEETDIAR_LOSS_LOSSES_H_

#include <cstdint>
#include <span>
#include <vector>

#include "meetdiar/grad/tensor.h"
#include "meetdiar/labels.h"
#include "meetdiar/model/config.h"
#include "meetdiar/model/network.h"

namespace meetdiar::loss {

using grad::Tape;
using grad::Tensor;

inline constexpr double kProbClamp = 1e-7;

double ClampProb(double p);
// Binary cross-entropy of one prediction, with clamping.
double Bce(double p, double y);

// Minimum-cost perfect matching on a row-major n x n cost matrix. Returns
// col[row]. Among optimal matchings the lexicographically smallest is
// returned.
std::vector<int> SolveAssignment(std::span<const double> cost, std::size_t n);

// Pairwise cost C[s][s'] = sum_t BCE(y_hat[s'][t], y[s][t]), row-major S x S.
std::vector<double> PitCostMatrix(std::span<const double> y_hat,
                                  const DiarizationLabels& y);

struct PitResult {
  double loss = 0.0;
  // permutation[s] = output row matched to reference slot s.
  std::vector<int> permutation;
};

PitResult PitDiarization(std::span<const double> y_hat,
                         const DiarizationLabels& y);

// Sum over entries of BCE(probs, targets); targets has the probs shape.
Tensor BceSum(Tape& tape, const Tensor& probs,
              std::vector<double> targets);
// -sum_t log probs[t, classes[t]] with clamping.
Tensor NllSum(Tape& tape, const Tensor& probs, std::vector<int> classes);

// Differentiable permutation-invariant diarization loss on an S x T output.
Tensor PitDiarizationLoss(Tape& tape, const Tensor& probs,
                          const DiarizationLabels& y, PitResult* result);

// C x T multi-hot labels from the slot-to-speaker mapping (ids 1..C).
std::vector<std::uint8_t> JointSpeakerLabels(const DiarizationLabels& y,
                                             int num_speakers);
// S x T class ids: speaker id when the slot is active, otherwise 0.
std::vector<int> IndividualSpeakerLabels(const DiarizationLabels& y);

double JointSpeakerLossValue(std::span<const double> u_hat,
                             std::span<const std::uint8_t> u);
Tensor JointSpeakerLoss(Tape& tape, const Tensor& u_hat,
                        std::span<const std::uint8_t> u);

// slot_probs[s] is T x (C+1); z is S x T; pi from the diarization loss.
Tensor IndividualSpeakerLoss(Tape& tape, const std::vector<Tensor>& slot_probs,
                             std::span<const int> z, std::size_t num_frames,
                             const std::vector<int>& pi);

struct LossConfig {
  bool diarization = true;
  bool local = false;
  bool joint_speaker = false;
  bool individual_speaker = false;
  double diarization_weight = 1.0;
  double local_weight = 1.0;
  double speaker_weight = 1.0;

  // Throws ConfigError for negative weights or both speaker variants.
  void Validate() const;
  // Components available from a model configuration.
  static LossConfig ForModel(const model::ModelConfig& config);
};

struct StageLossValues {
  double diarization = 0.0;
  double local = 0.0;
  double speaker = 0.0;
  std::vector<int> permutation;
};

struct LossBreakdown {
  std::vector<StageLossValues> stages;
  double total = 0.0;
  std::size_t slots = 0;
  std::size_t frames = 0;
  // Per-slot-per-frame value of a raw sum, for logging.
  double Normalized(double raw) const {
    return slots * frames == 0 ? 0.0 : raw / static_cast<double>(slots * frames);
  }
};

struct Targets {
  DiarizationLabels labels;
  std::vector<std::uint8_t> joint;  // C x T
  std::vector<int> individual;      // S x T
};

Targets MakeTargets(const DiarizationLabels& labels,
                    const model::ModelConfig& config);

// Weighted sum of every enabled component over all stages.
Tensor TotalLoss(Tape& tape, const std::vector<model::StageOutput>& outputs,
                 const Targets& targets, const LossConfig& config,
                 LossBreakdown* breakdown);

}  // namespace meetdiar::loss

#endif  // MEETDIAR_LOSS_LOSSES_H_
