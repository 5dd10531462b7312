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

#ifndef MEETDIAR_MODEL_NETWORK_H_
#define MEETDIAR_MODEL_NETWORK_H_

#include <cstdint>
#include <string>
#include <vector>

#include "meetdiar/features/features.h"
#include "meetdiar/grad/ops.h"
#include "meetdiar/grad/params.h"
#include "meetdiar/labels.h"
#include "meetdiar/model/config.h"
#include "meetdiar/random.h"

namespace meetdiar::model {

using grad::ParameterSet;
using grad::Tape;
using grad::Tensor;

// Parameter registration. Weights are U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
// biases zero, layer-norm gains one, PReLU slopes 0.25.
void AddLinearParams(ParameterSet& params, const std::string& prefix,
                     std::size_t in, std::size_t out, Rng& rng,
                     bool bias = true);
void AddLayerNormParams(ParameterSet& params, const std::string& prefix,
                        std::size_t width);
void AddTdcnParams(ParameterSet& params, const std::string& prefix,
                   const ModelConfig& config, Rng& rng);
void AddSaBlockParams(ParameterSet& params, const std::string& prefix,
                      const ModelConfig& config, Rng& rng);

// x W + b using "<prefix>/w" and "<prefix>/b" (bias optional).
Tensor LinearLayer(Tape& tape, const ParameterSet& params,
                   const std::string& prefix, const Tensor& x);
Tensor LayerNormLayer(Tape& tape, const ParameterSet& params,
                      const std::string& prefix, const Tensor& x, double eps);

// Stack of tdcn_blocks() residual blocks on a [T x D] input.
Tensor TdcnForward(Tape& tape, const ParameterSet& params,
                   const std::string& prefix, const ModelConfig& config,
                   const Tensor& x);

// One self-attention block on a [T x D] input.
Tensor SaBlockForward(Tape& tape, const ParameterSet& params,
                      const std::string& prefix, const ModelConfig& config,
                      const Tensor& x);

// sigmoid(e W + b) transposed to [S x T].
Tensor DiarizationHead(Tape& tape, const ParameterSet& params,
                       const std::string& prefix, const Tensor& e);

struct StageOutput {
  Tensor probs;        // S x T
  Tensor local_probs;  // S x T, when the local head is enabled
  Tensor local_embeddings;   // T x D
  Tensor global_embeddings;  // T x D
  // joint / local speaker module: C x T sigmoid outputs.
  Tensor joint_speaker_probs;
  // individual speaker module: S tensors of T x (C+1) softmax rows, and the
  // matching l2-normalized T x (D/S) slot embeddings.
  std::vector<Tensor> slot_speaker_probs;
  std::vector<Tensor> slot_embeddings;
};

class DiarizationModel {
 public:
  // Fresh model with seeded initialization.
  DiarizationModel(ModelConfig config, std::uint64_t seed);
  // Adopts existing parameters; throws ConfigError when names or shapes do
  // not match the configuration.
  DiarizationModel(ModelConfig config, ParameterSet params);

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Prefix of stage `stage` (1-based), e.g. "stage1".
  static std::string StagePrefix(int stage);
  // Marks the parameters of one stage (non-)trainable.
  void SetStageTrainable(int stage, bool trainable);

  // One output per stage; the last entry is the final prediction. A positive
  // `max_stage` stops after that stage.
  std::vector<StageOutput> Forward(Tape& tape, const Tensor& features,
                                   int max_stage = 0) const;
  // Runs a single stage on a [T x stage_input_dim] input.
  StageOutput ForwardStage(Tape& tape, int stage, const Tensor& input) const;

  // Gradient-free forward pass returning the final probabilities.
  DiarizationProbs Infer(const Matrix& features) const;

 private:
  ModelConfig config_;
  ParameterSet params_;
};

// Expected parameter layout for a configuration (names and shapes only).
ParameterSet BuildParameters(const ModelConfig& config, std::uint64_t seed);

DiarizationProbs ToProbs(const Tensor& probs);
Tensor FeaturesToTensor(const Matrix& features);

}  // namespace meetdiar::model

#endif  // MEETDIAR_MODEL_NETWORK_H_
