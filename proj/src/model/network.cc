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

#include "meetdiar/model/network.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <utility>

#include "meetdiar/errors.h"
#include "meetdiar/model/attention.h"

namespace meetdiar::model {
namespace {

std::string Indexed(const std::string& base, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d", i);
  return base + buf;
}

std::vector<double> UniformValues(std::size_t n, double bound, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.Uniform(-bound, bound);
  return v;
}

std::size_t Dim(int v) { return static_cast<std::size_t>(v); }

bool HasSpeakerTdcn(const ModelConfig& c) {
  return c.speaker_module == SpeakerModuleKind::kJoint ||
         c.speaker_module == SpeakerModuleKind::kIndividual;
}

void AddStageParams(ParameterSet& p, const ModelConfig& c, int stage,
                    Rng& rng) {
  const std::string st = DiarizationModel::StagePrefix(stage);
  const std::size_t fin = Dim(c.stage_input_dim(stage)), d = Dim(c.model_dim);
  const std::size_t s = Dim(c.num_slots), C = Dim(c.num_train_speakers);
  AddLayerNormParams(p, st + "/in_norm", fin);
  AddLinearParams(p, st + "/in_proj", fin, d, rng);
  AddTdcnParams(p, st + "/tdcn", c, rng);
  if (c.local_head) AddLinearParams(p, st + "/local_diar", d, s, rng);
  switch (c.speaker_module) {
    case SpeakerModuleKind::kNone:
      break;
    case SpeakerModuleKind::kLocal:
      AddLinearParams(p, st + "/spk_cls", d, C, rng);
      break;
    case SpeakerModuleKind::kJoint:
    case SpeakerModuleKind::kIndividual:
      AddLayerNormParams(p, st + "/spk_in_norm", fin);
      AddLinearParams(p, st + "/spk_in_proj", fin, d, rng);
      AddTdcnParams(p, st + "/spk_tdcn", c, rng);
      if (c.speaker_module == SpeakerModuleKind::kJoint) {
        AddLinearParams(p, st + "/spk_cls", d, C, rng);
      } else {
        for (int k = 0; k < c.num_slots; ++k) {
          AddLinearParams(p, Indexed(st + "/spk_slot", k), d / s, C + 1, rng);
        }
      }
      AddLinearParams(p, st + "/fuse", 2 * d, d, rng);
      break;
  }
  for (int l = 0; l < c.sa_layers; ++l) {
    AddSaBlockParams(p, Indexed(st + "/sa/layer", l), c, rng);
  }
  AddLinearParams(p, st + "/diar", d, s, rng);
}

}  // namespace

void AddLinearParams(ParameterSet& params, const std::string& prefix,
                     std::size_t in, std::size_t out, Rng& rng, bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  params.Add(prefix + "/w", {in, out}, UniformValues(in * out, bound, rng));
  if (bias) params.Add(prefix + "/b", {out}, 0.0);
}

void AddLayerNormParams(ParameterSet& params, const std::string& prefix,
                        std::size_t width) {
  params.Add(prefix + "/gain", {width}, 1.0);
  params.Add(prefix + "/bias", {width}, 0.0);
}

void AddTdcnParams(ParameterSet& params, const std::string& prefix,
                   const ModelConfig& config, Rng& rng) {
  const std::size_t d = Dim(config.model_dim), k = Dim(config.tdcn_kernel);
  for (int b = 0; b < config.tdcn_blocks(); ++b) {
    const std::string bp = Indexed(prefix + "/block", b);
    AddLinearParams(params, bp + "/conv_in", d, d, rng);
    params.Add(bp + "/prelu1", {d}, 0.25);
    AddLayerNormParams(params, bp + "/norm1", d);
    params.Add(bp + "/dconv/w", {k, d},
               UniformValues(k * d, 1.0 / std::sqrt(static_cast<double>(k)),
                             rng));
    params.Add(bp + "/dconv/b", {d}, 0.0);
    params.Add(bp + "/prelu2", {d}, 0.25);
    AddLayerNormParams(params, bp + "/norm2", d);
    AddLinearParams(params, bp + "/conv_out", d, d, rng);
  }
}

void AddSaBlockParams(ParameterSet& params, const std::string& prefix,
                      const ModelConfig& config, Rng& rng) {
  const std::size_t d = Dim(config.model_dim);
  const std::size_t hidden = d * Dim(config.ffn_expansion);
  AddLinearParams(params, prefix + "/q", d, d, rng);
  AddLinearParams(params, prefix + "/k", d, d, rng);
  AddLinearParams(params, prefix + "/v", d, d, rng);
  AddLinearParams(params, prefix + "/o", d, d, rng);
  AddLayerNormParams(params, prefix + "/norm1", d);
  AddLinearParams(params, prefix + "/ffn1", d, hidden, rng);
  AddLinearParams(params, prefix + "/ffn2", hidden, d, rng);
  AddLayerNormParams(params, prefix + "/norm2", d);
}

Tensor LinearLayer(Tape& tape, const ParameterSet& params,
                   const std::string& prefix, const Tensor& x) {
  const std::string bias = prefix + "/b";
  return grad::Linear(tape, x, params.Get(prefix + "/w"),
                      params.Contains(bias) ? params.Get(bias) : Tensor());
}

Tensor LayerNormLayer(Tape& tape, const ParameterSet& params,
                      const std::string& prefix, const Tensor& x, double eps) {
  return grad::LayerNorm(tape, x, params.Get(prefix + "/gain"),
                         params.Get(prefix + "/bias"), eps);
}

Tensor TdcnForward(Tape& tape, const ParameterSet& params,
                   const std::string& prefix, const ModelConfig& config,
                   const Tensor& x) {
  if (x.cols() != Dim(config.model_dim)) {
    throw ShapeError("tdcn: input width " + std::to_string(x.cols()) +
                     " != model_dim " + std::to_string(config.model_dim));
  }
  const double eps = config.layer_norm_eps;
  Tensor h = x;
  for (int b = 0; b < config.tdcn_blocks(); ++b) {
    const std::string bp = Indexed(prefix + "/block", b);
    const std::size_t dilation = std::size_t{1}
                                 << (b % config.dilation_layers);
    Tensor y = LinearLayer(tape, params, bp + "/conv_in", h);
    y = grad::Prelu(tape, y, params.Get(bp + "/prelu1"));
    y = LayerNormLayer(tape, params, bp + "/norm1", y, eps);
    y = grad::DepthwiseConv1dDilated(tape, y, params.Get(bp + "/dconv/w"),
                                     params.Get(bp + "/dconv/b"), dilation);
    y = grad::Prelu(tape, y, params.Get(bp + "/prelu2"));
    y = LayerNormLayer(tape, params, bp + "/norm2", y, eps);
    y = LinearLayer(tape, params, bp + "/conv_out", y);
    h = grad::Add(tape, h, y);
  }
  return h;
}

Tensor SaBlockForward(Tape& tape, const ParameterSet& params,
                      const std::string& prefix, const ModelConfig& config,
                      const Tensor& x) {
  const double eps = config.layer_norm_eps;
  Tensor q = LinearLayer(tape, params, prefix + "/q", x);
  Tensor k = LinearLayer(tape, params, prefix + "/k", x);
  Tensor v = LinearLayer(tape, params, prefix + "/v", x);
  Tensor att = MultiHeadAttention(tape, q, k, v, config.heads,
                                  config.attention);
  att = LinearLayer(tape, params, prefix + "/o", att);
  Tensor y = LayerNormLayer(tape, params, prefix + "/norm1",
                            grad::Add(tape, x, att), eps);
  Tensor f = grad::Relu(tape, LinearLayer(tape, params, prefix + "/ffn1", y));
  f = LinearLayer(tape, params, prefix + "/ffn2", f);
  return LayerNormLayer(tape, params, prefix + "/norm2",
                        grad::Add(tape, y, f), eps);
}

Tensor DiarizationHead(Tape& tape, const ParameterSet& params,
                       const std::string& prefix, const Tensor& e) {
  return grad::Transpose(
      tape, grad::Sigmoid(tape, LinearLayer(tape, params, prefix, e)));
}

ParameterSet BuildParameters(const ModelConfig& config, std::uint64_t seed) {
  config.Validate();
  ParameterSet params;
  Rng rng(seed);
  for (int stage = 1; stage <= config.stages; ++stage) {
    AddStageParams(params, config, stage, rng);
  }
  return params;
}

DiarizationModel::DiarizationModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), params_(BuildParameters(config_, seed)) {}

DiarizationModel::DiarizationModel(ModelConfig config, ParameterSet params)
    : config_(std::move(config)), params_(std::move(params)) {
  const ParameterSet expected = BuildParameters(config_, 0);
  if (expected.size() != params_.size()) {
    throw ConfigError("model parameters: expected " +
                      std::to_string(expected.size()) + " tensors, got " +
                      std::to_string(params_.size()));
  }
  for (const auto& [name, tensor] : expected.entries()) {
    if (!params_.Contains(name)) {
      throw ConfigError("model parameters: missing '" + name + "'");
    }
    if (params_.Get(name).shape() != tensor.shape()) {
      throw ConfigError("model parameters: '" + name + "' has shape " +
                        grad::ShapeString(params_.Get(name).shape()) +
                        ", config expects " +
                        grad::ShapeString(tensor.shape()));
    }
  }
}

std::string DiarizationModel::StagePrefix(int stage) {
  return "stage" + std::to_string(stage);
}

void DiarizationModel::SetStageTrainable(int stage, bool trainable) {
  const std::string prefix = StagePrefix(stage) + "/";
  for (const auto& [name, tensor] : params_.entries()) {
    if (name.rfind(prefix, 0) == 0) tensor.node()->requires_grad = trainable;
  }
}

StageOutput DiarizationModel::ForwardStage(Tape& tape, int stage,
                                           const Tensor& input) const {
  const ModelConfig& c = config_;
  if (input.cols() != Dim(c.stage_input_dim(stage))) {
    throw ShapeError("stage " + std::to_string(stage) + ": input width " +
                     std::to_string(input.cols()) + " != " +
                     std::to_string(c.stage_input_dim(stage)));
  }
  const std::string st = StagePrefix(stage);
  const double eps = c.layer_norm_eps;
  StageOutput out;

  Tensor x = LayerNormLayer(tape, params_, st + "/in_norm", input, eps);
  x = LinearLayer(tape, params_, st + "/in_proj", x);
  Tensor local = TdcnForward(tape, params_, st + "/tdcn", c, x);
  out.local_embeddings = local;
  if (c.local_head) {
    out.local_probs = DiarizationHead(tape, params_, st + "/local_diar", local);
  }

  Tensor global_in = local;
  if (c.speaker_module == SpeakerModuleKind::kLocal) {
    out.joint_speaker_probs =
        DiarizationHead(tape, params_, st + "/spk_cls", local);
  } else if (HasSpeakerTdcn(c)) {
    Tensor e = LayerNormLayer(tape, params_, st + "/spk_in_norm", input, eps);
    e = LinearLayer(tape, params_, st + "/spk_in_proj", e);
    e = TdcnForward(tape, params_, st + "/spk_tdcn", c, e);
    Tensor spk;
    if (c.speaker_module == SpeakerModuleKind::kJoint) {
      out.joint_speaker_probs =
          DiarizationHead(tape, params_, st + "/spk_cls", e);
      spk = e;
    } else {
      const std::size_t width = Dim(c.model_dim / c.num_slots);
      std::vector<Tensor> slots;
      for (int s = 0; s < c.num_slots; ++s) {
        Tensor z = grad::L2NormalizeRows(
            tape, grad::SliceCols(tape, e, Dim(s) * width, width));
        out.slot_speaker_probs.push_back(grad::SoftmaxRows(
            tape, LinearLayer(tape, params_, Indexed(st + "/spk_slot", s), z)));
        out.slot_embeddings.push_back(z);
        slots.push_back(z);
      }
      spk = grad::ConcatCols(tape, slots);
    }
    global_in = LinearLayer(tape, params_, st + "/fuse",
                            grad::ConcatCols(tape, {local, spk}));
  }

  Tensor g = global_in;
  for (int l = 0; l < c.sa_layers; ++l) {
    g = SaBlockForward(tape, params_, Indexed(st + "/sa/layer", l), c, g);
  }
  out.global_embeddings = g;
  out.probs = DiarizationHead(tape, params_, st + "/diar", g);
  return out;
}

std::vector<StageOutput> DiarizationModel::Forward(
    Tape& tape, const Tensor& features, int max_stage) const {
  if (features.shape().size() != 2 ||
      features.cols() != Dim(config_.input_dim)) {
    throw ShapeError("model: features " + grad::ShapeString(features.shape()) +
                     " do not match input_dim " +
                     std::to_string(config_.input_dim));
  }
  std::vector<StageOutput> outputs;
  outputs.push_back(ForwardStage(tape, 1, features));
  const int last = max_stage > 0 ? std::min(max_stage, config_.stages)
                                 : config_.stages;
  for (int stage = 2; stage <= last; ++stage) {
    Tensor prev = grad::Transpose(tape, outputs.back().probs);
    outputs.push_back(
        ForwardStage(tape, stage, grad::ConcatCols(tape, {features, prev})));
  }
  return outputs;
}

DiarizationProbs DiarizationModel::Infer(const Matrix& features) const {
  Tape tape(/*enabled=*/false);
  return ToProbs(Forward(tape, FeaturesToTensor(features)).back().probs);
}

DiarizationProbs ToProbs(const Tensor& probs) {
  DiarizationProbs p(probs.rows(), probs.cols());
  auto v = probs.values();
  p.prob.assign(v.begin(), v.end());
  return p;
}

Tensor FeaturesToTensor(const Matrix& features) {
  return Tensor::FromData({features.rows, features.cols}, features.data);
}

}  // namespace meetdiar::model
