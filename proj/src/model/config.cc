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

#include "meetdiar/model/config.h"

#include "meetdiar/errors.h"

namespace meetdiar::model {

std::string ToString(AttentionKind kind) {
  return kind == AttentionKind::kFull ? "full" : "linear";
}

std::string ToString(SpeakerModuleKind kind) {
  switch (kind) {
    case SpeakerModuleKind::kNone: return "none";
    case SpeakerModuleKind::kLocal: return "local";
    case SpeakerModuleKind::kJoint: return "joint";
    case SpeakerModuleKind::kIndividual: return "individual";
  }
  return "none";
}

AttentionKind ParseAttentionKind(const std::string& s) {
  if (s == "full") return AttentionKind::kFull;
  if (s == "linear") return AttentionKind::kLinear;
  throw ConfigError("unknown attention kind '" + s + "' (full|linear)");
}

SpeakerModuleKind ParseSpeakerModuleKind(const std::string& s) {
  if (s == "none") return SpeakerModuleKind::kNone;
  if (s == "local") return SpeakerModuleKind::kLocal;
  if (s == "joint") return SpeakerModuleKind::kJoint;
  if (s == "individual") return SpeakerModuleKind::kIndividual;
  throw ConfigError("unknown speaker module '" + s +
                    "' (none|local|joint|individual)");
}

void ModelConfig::Validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("model config: " + what);
  };
  require(num_slots >= 1, "num_slots must be >= 1");
  require(input_dim >= 1, "input_dim must be >= 1");
  require(model_dim >= 2, "model_dim must be >= 2");
  require(heads >= 1 && model_dim % heads == 0,
          "model_dim must be divisible by heads");
  require(dilation_layers >= 0 && repeats >= 0, "TDCN sizes must be >= 0");
  require(tdcn_kernel >= 1 && tdcn_kernel % 2 == 1,
          "tdcn_kernel must be odd");
  require(sa_layers >= 0, "sa_layers must be >= 0");
  require(ffn_expansion >= 1, "ffn_expansion must be >= 1");
  require(stages == 1 || stages == 2, "stages must be 1 or 2");
  require(num_train_speakers >= 1 ||
              speaker_module == SpeakerModuleKind::kNone,
          "speaker module needs num_train_speakers >= 1");
  if (speaker_module == SpeakerModuleKind::kIndividual) {
    require(model_dim % num_slots == 0,
            "individual speaker embeddings need model_dim divisible by "
            "num_slots");
    require(model_dim / num_slots >= 1, "slot embedding width must be >= 1");
  }
}

nlohmann::json ModelConfig::ToJson() const {
  return {{"version", kModelConfigVersion},
          {"num_slots", num_slots},
          {"input_dim", input_dim},
          {"model_dim", model_dim},
          {"heads", heads},
          {"dilation_layers", dilation_layers},
          {"repeats", repeats},
          {"tdcn_kernel", tdcn_kernel},
          {"sa_layers", sa_layers},
          {"ffn_expansion", ffn_expansion},
          {"attention", ToString(attention)},
          {"speaker_module", ToString(speaker_module)},
          {"num_train_speakers", num_train_speakers},
          {"stages", stages},
          {"local_head", local_head},
          {"layer_norm_eps", layer_norm_eps}};
}

ModelConfig ModelConfig::FromJson(const nlohmann::json& j) {
  try {
    if (j.value("version", kModelConfigVersion) != kModelConfigVersion) {
      throw ConfigError("unsupported model config version");
    }
    ModelConfig c;
    c.num_slots = j.value("num_slots", c.num_slots);
    c.input_dim = j.value("input_dim", c.input_dim);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.heads = j.value("heads", c.heads);
    c.dilation_layers = j.value("dilation_layers", c.dilation_layers);
    c.repeats = j.value("repeats", c.repeats);
    c.tdcn_kernel = j.value("tdcn_kernel", c.tdcn_kernel);
    c.sa_layers = j.value("sa_layers", c.sa_layers);
    c.ffn_expansion = j.value("ffn_expansion", c.ffn_expansion);
    c.attention = ParseAttentionKind(j.value("attention", ToString(c.attention)));
    c.speaker_module = ParseSpeakerModuleKind(
        j.value("speaker_module", ToString(c.speaker_module)));
    c.num_train_speakers = j.value("num_train_speakers", c.num_train_speakers);
    c.stages = j.value("stages", c.stages);
    c.local_head = j.value("local_head", c.local_head);
    c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
    c.Validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

ModelConfig ModelConfig::Desk() { return ModelConfig{}; }

ModelConfig ModelConfig::Paper() {
  ModelConfig c;
  c.num_slots = 8;
  c.input_dim = 64 * 21;
  c.model_dim = 512;
  c.heads = 8;
  c.dilation_layers = 8;
  c.repeats = 4;
  c.sa_layers = 6;
  c.ffn_expansion = 4;
  c.local_head = true;
  return c;
}

}  // namespace meetdiar::model
