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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "meetdiar/cli/selfcheck.h"
#include "meetdiar/errors.h"
#include "meetdiar/eval/evaluate.h"
#include "meetdiar/features/features.h"
#include "meetdiar/loss/losses.h"
#include "meetdiar/model/network.h"
#include "meetdiar/train/trainer.h"

namespace py = pybind11;
using namespace meetdiar;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8Array =
    py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

void Require2d(const py::buffer_info& info, const char* what) {
  if (info.ndim != 2) {
    throw UsageError(std::string(what) + " must be two-dimensional");
  }
}

py::array_t<double> ToNumpy(const Matrix& m) {
  py::array_t<double> out({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

py::array_t<std::uint8_t> ToNumpy(const DiarizationLabels& y) {
  py::array_t<std::uint8_t> out({y.num_slots, y.num_frames});
  std::copy(y.active.begin(), y.active.end(), out.mutable_data());
  return out;
}

DiarizationLabels ToLabels(const U8Array& a,
                           const std::optional<std::vector<int>>& speakers) {
  const py::buffer_info info = a.request();
  Require2d(info, "labels");
  DiarizationLabels y(static_cast<std::size_t>(info.shape[0]),
                      static_cast<std::size_t>(info.shape[1]));
  const auto* p = static_cast<const std::uint8_t*>(info.ptr);
  for (std::size_t i = 0; i < y.active.size(); ++i) y.active[i] = p[i] != 0;
  if (speakers) {
    if (speakers->size() != y.num_slots) {
      throw UsageError("slot_to_speaker needs one entry per slot");
    }
    y.slot_to_speaker = *speakers;
  }
  return y;
}

DiarizationProbs ToProbs(const F64Array& a) {
  const py::buffer_info info = a.request();
  Require2d(info, "probs");
  DiarizationProbs p(static_cast<std::size_t>(info.shape[0]),
                     static_cast<std::size_t>(info.shape[1]));
  const auto* d = static_cast<const double*>(info.ptr);
  std::copy(d, d + p.prob.size(), p.prob.begin());
  return p;
}

AudioClip ToClip(const F64Array& samples, int sample_rate) {
  const py::buffer_info info = samples.request();
  if (info.ndim != 1) throw UsageError("samples must be one-dimensional");
  AudioClip clip;
  clip.sample_rate = sample_rate;
  const auto* d = static_cast<const double*>(info.ptr);
  clip.samples.assign(d, d + info.shape[0]);
  return clip;
}

py::dict DerDict(const eval::DerResult& r) {
  py::dict d;
  d["der"] = r.der;
  d["missed"] = r.missed;
  d["false_alarm"] = r.false_alarm;
  d["confusion"] = r.confusion;
  d["total_speech_frames"] = r.total_speech_frames;
  d["scored_frames"] = r.scored_frames;
  return d;
}

class Model {
 public:
  explicit Model(const std::string& checkpoint)
      : state_(train::LoadCheckpoint(checkpoint)),
        model_(state_.model_config, state_.params.Clone()) {}

  py::array_t<double> Infer(const F64Array& features) const {
    const py::buffer_info info = features.request();
    Require2d(info, "features");
    Matrix m(static_cast<std::size_t>(info.shape[0]),
             static_cast<std::size_t>(info.shape[1]));
    const auto* d = static_cast<const double*>(info.ptr);
    std::copy(d, d + m.data.size(), m.data.begin());
    DiarizationProbs p;
    {
      py::gil_scoped_release release;
      p = model_.Infer(m);
    }
    py::array_t<double> out({p.num_slots, p.num_frames});
    std::copy(p.prob.begin(), p.prob.end(), out.mutable_data());
    return out;
  }

  std::string config_json() const {
    return state_.model_config.ToJson().dump();
  }
  std::int64_t step() const { return state_.step; }

 private:
  train::CheckpointState state_;
  model::DiarizationModel model_;
};

}  // namespace

PYBIND11_MODULE(_meetdiar, m) {
  m.doc() = "Neural speaker diarization toolkit";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def(
      "log_mel",
      [](const F64Array& samples, int sample_rate, int n_mels,
         double window_ms, double hop_ms) {
        return ToNumpy(LogMel(ToClip(samples, sample_rate), n_mels, window_ms,
                              hop_ms));
      },
      py::arg("samples"), py::arg("sample_rate") = 16000,
      py::arg("n_mels") = 64, py::arg("window_ms") = 40.0,
      py::arg("hop_ms") = 10.0);

  m.def(
      "compute_features",
      [](const F64Array& samples, int sample_rate) {
        return ToNumpy(ComputeFeatures(ToClip(samples, sample_rate)).frames);
      },
      py::arg("samples"), py::arg("sample_rate") = 16000,
      "Stacked log-mel frames at 10 Hz, shape (T, 1344).");

  m.def(
      "median_filter",
      [](const F64Array& x, int length) {
        const py::buffer_info info = x.request();
        if (info.ndim != 1) throw UsageError("x must be one-dimensional");
        const auto* d = static_cast<const double*>(info.ptr);
        const std::vector<double> y = eval::MedianFilter(
            std::span<const double>(d, static_cast<std::size_t>(info.shape[0])),
            length);
        return py::array_t<double>(y.size(), y.data());
      },
      py::arg("x"), py::arg("length"));

  m.def(
      "postprocess",
      [](const F64Array& probs, double threshold, int median_len) {
        eval::PostProcessConfig c;
        c.threshold = threshold;
        c.median_len = median_len;
        return ToNumpy(eval::Postprocess(ToProbs(probs), c));
      },
      py::arg("probs"), py::arg("threshold") = 0.7,
      py::arg("median_len") = 31);

  m.def(
      "der",
      [](const U8Array& reference, const U8Array& hypothesis, int collar) {
        return DerDict(eval::Der(ToLabels(reference, std::nullopt),
                                 ToLabels(hypothesis, std::nullopt), collar));
      },
      py::arg("reference"), py::arg("hypothesis"), py::arg("collar") = 0);

  m.def(
      "pit_loss",
      [](const F64Array& probs, const U8Array& labels) {
        const DiarizationProbs p = ToProbs(probs);
        const DiarizationLabels y = ToLabels(labels, std::nullopt);
        const loss::PitResult r = loss::PitDiarization(p.prob, y);
        return py::make_tuple(r.loss, r.permutation);
      },
      py::arg("probs"), py::arg("labels"),
      "Permutation-invariant BCE; returns (loss, permutation).");

  m.def(
      "rttm_write",
      [](const U8Array& labels, const std::string& file_id,
         const std::optional<std::vector<int>>& slot_to_speaker) {
        return eval::RttmWrite(ToLabels(labels, slot_to_speaker), file_id);
      },
      py::arg("labels"), py::arg("file_id"),
      py::arg("slot_to_speaker") = std::nullopt);

  m.def(
      "rttm_read",
      [](const std::string& text, std::size_t num_slots,
         std::size_t num_frames) {
        return ToNumpy(eval::RttmRead(text, num_slots, num_frames));
      },
      py::arg("text"), py::arg("num_slots"), py::arg("num_frames"));

  m.def(
      "selfcheck",
      [](std::uint64_t seed) {
        cli::SelfCheckOptions o;
        o.seed = seed;
        std::vector<cli::CheckResult> results;
        {
          py::gil_scoped_release release;
          results = cli::RunSelfChecks(o);
        }
        py::list out;
        for (const auto& r : results) {
          out.append(py::make_tuple(r.name, r.passed, r.detail));
        }
        return out;
      },
      py::arg("seed") = 2024);

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("infer", &Model::Infer, py::arg("features"),
           "Speaker probabilities, shape (S, T).")
      .def_property_readonly("config_json", &Model::config_json)
      .def_property_readonly("step", &Model::step);
}
