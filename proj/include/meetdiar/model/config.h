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

#ifndef MEETDIAR_MODEL_CONFIG_H_
#define MEETDIAR_MODEL_CONFIG_H_

#include <nlohmann/json.hpp>
#include <string>

namespace meetdiar::model {

enum class AttentionKind { kFull, kLinear };

enum class SpeakerModuleKind {
  kNone,
  kLocal,       // joint speaker classifier applied to the local embeddings
  kJoint,       // separate TDCN, one embedding per frame, multi-label BCE
  kIndividual,  // separate TDCN, S l2-normalized slot embeddings, softmax
};

std::string ToString(AttentionKind kind);
std::string ToString(SpeakerModuleKind kind);
AttentionKind ParseAttentionKind(const std::string& s);
SpeakerModuleKind ParseSpeakerModuleKind(const std::string& s);

inline constexpr int kModelConfigVersion = 1;

struct ModelConfig {
  int num_slots = 4;             // S
  int input_dim = 64 * 21;       // F
  int model_dim = 64;            // D
  int heads = 4;                 // H
  int dilation_layers = 4;       // M; block b uses dilation 2^(b mod M)
  int repeats = 2;               // total TDCN blocks = repeats * M
  int tdcn_kernel = 3;
  int sa_layers = 2;
  int ffn_expansion = 4;
  AttentionKind attention = AttentionKind::kFull;
  SpeakerModuleKind speaker_module = SpeakerModuleKind::kNone;
  int num_train_speakers = 16;   // C
  int stages = 1;
  // Adds the separate diarization layer on the local embeddings.
  bool local_head = false;
  double layer_norm_eps = 1e-5;

  int tdcn_blocks() const { return repeats * dilation_layers; }
  // Input width of stage `stage` (1-based): stage 2 also sees stage-1 probs.
  int stage_input_dim(int stage) const {
    return stage == 1 ? input_dim : input_dim + num_slots;
  }

  // Throws ConfigError on inconsistent settings.
  void Validate() const;

  nlohmann::json ToJson() const;
  static ModelConfig FromJson(const nlohmann::json& j);

  // Small model that trains in minutes on a CPU.
  static ModelConfig Desk();
  // Architecture sizes used for the full-scale experiments (TDCN with 32
  // blocks, M=8; SA with H=8, D=512, 6 layers; up to 8 speakers).
  static ModelConfig Paper();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace meetdiar::model

#endif  // MEETDIAR_MODEL_CONFIG_H_
