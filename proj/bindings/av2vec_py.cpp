// av2vec_py.cpp

// Copyright 2026  AV2vec Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "av2vec/cluster.hpp"
#include "av2vec/config.hpp"
#include "av2vec/corruption.hpp"
#include "av2vec/distill.hpp"
#include "av2vec/synthdata.hpp"

namespace py = pybind11;
using namespace av2vec;

namespace {

Tensor<float> tensor2d_from(const py::array_t<float>& arr) {
  if (arr.ndim() != 2) throw ShapeError("expected a 2-D float32 array");
  Tensor<float> t({static_cast<int>(arr.shape(0)),
                   static_cast<int>(arr.shape(1))});
  auto view = arr.unchecked<2>();
  for (py::ssize_t r = 0; r < arr.shape(0); ++r)
    for (py::ssize_t c = 0; c < arr.shape(1); ++c)
      t.at(static_cast<int>(r), static_cast<int>(c)) = view(r, c);
  return t;
}

py::array_t<float> array_from(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<float> arr(shape);
  std::memcpy(arr.mutable_data(), t.data.data(),
              t.data.size() * sizeof(float));
  return arr;
}

py::array_t<double> array_from_d(const Tensor<double>& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<double> arr(shape);
  std::memcpy(arr.mutable_data(), t.data.data(),
              t.data.size() * sizeof(double));
  return arr;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Core operations of the audio-visual self-distillation trainer: "
      "synthetic corpus generation, SNR-exact noise mixing, span masking, "
      "schedules, instance normalization and k-means targets.";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<ShapeError>(m, "ShapeError_");
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError");

  m.def(
      "generate_corpus",
      [](int num_utterances, int frames_min, int frames_max, int states,
         int audio_dim, int video_hw, int audio_rate_ratio, uint64_t seed) {
        CorpusSpec spec;
        spec.num_utterances = num_utterances;
        spec.frames_min = frames_min;
        spec.frames_max = frames_max;
        spec.num_latent_states = states;
        spec.audio_dim = audio_dim;
        spec.video_height = video_hw;
        spec.video_width = video_hw;
        spec.audio_rate_ratio = audio_rate_ratio;
        spec.seed = seed;
        py::list out;
        for (const auto& s : generate_corpus(spec)) {
          py::dict d;
          d["utterance_id"] = s.utterance_id;
          d["latent_labels"] = s.latent_labels;
          d["audio"] = array_from(s.audio_clean.frames);
          d["video"] = array_from(s.video.frames);
          out.append(d);
        }
        return out;
      },
      py::arg("num_utterances"), py::arg("frames_min") = 8,
      py::arg("frames_max") = 16, py::arg("states") = 4,
      py::arg("audio_dim") = 6, py::arg("video_hw") = 4,
      py::arg("audio_rate_ratio") = 1, py::arg("seed") = 0,
      "Deterministic synthetic paired corpus as a list of dicts.");

  m.def(
      "mix_noise",
      [](const py::array_t<float>& clean, const py::array_t<float>& noise,
         double snr_db, uint64_t seed) {
        FeatureSequence seq;
        seq.frames = tensor2d_from(clean);
        seq.frame_rate_hz = 100.0;
        Rng rng(seed);
        return array_from(
            mix_noise(seq, tensor2d_from(noise), snr_db, rng).frames);
      },
      py::arg("clean"), py::arg("noise"), py::arg("snr_db"),
      py::arg("seed") = 0,
      "Add noise scaled to an exact SNR in dB (inf returns clean).");

  m.def(
      "measure_snr",
      [](const py::array_t<float>& clean, const py::array_t<float>& noisy) {
        FeatureSequence a, b;
        a.frames = tensor2d_from(clean);
        b.frames = tensor2d_from(noisy);
        return measure_snr(a, b);
      },
      py::arg("clean"), py::arg("noisy"));

  m.def(
      "sample_span_mask",
      [](int t_frames, double mask_rate, int span_length, uint64_t seed) {
        Rng rng(seed);
        return sample_span_mask(t_frames, {mask_rate, span_length}, rng)
            .indices;
      },
      py::arg("t_frames"), py::arg("mask_rate"), py::arg("span_length"),
      py::arg("seed") = 0,
      "Span mask with exactly round(mask_rate * T) indices.");

  m.def(
      "lambda_at",
      [](int64_t step, double lambda_b, double lambda_e, int64_t n) {
        return lambda_at(step, {lambda_b, lambda_e, n});
      },
      py::arg("step"), py::arg("lambda_b") = 0.999,
      py::arg("lambda_e") = 0.9999, py::arg("n") = 30000,
      "EMA momentum coefficient at a given update step.");

  m.def(
      "lr_at",
      [](int64_t step, double peak_lr, int64_t total_updates,
         double final_lr_ratio) {
        LrSchedule sched;
        sched.peak_lr = peak_lr;
        sched.total_updates = total_updates;
        sched.final_lr_ratio = final_lr_ratio;
        return lr_at(step, sched);
      },
      py::arg("step"), py::arg("peak_lr") = 5e-4,
      py::arg("total_updates") = 100000, py::arg("final_lr_ratio") = 0.05,
      "Warmup/constant/exponential-decay learning rate.");

  m.def(
      "instance_norm",
      [](const py::array_t<double>& x, double eps) {
        if (x.ndim() != 2) throw ShapeError("expected a 2-D float64 array");
        Tensor<double> t({static_cast<int>(x.shape(0)),
                          static_cast<int>(x.shape(1))});
        auto view = x.unchecked<2>();
        for (py::ssize_t r = 0; r < x.shape(0); ++r)
          for (py::ssize_t c = 0; c < x.shape(1); ++c)
            t.at(static_cast<int>(r), static_cast<int>(c)) = view(r, c);
        return array_from_d(instance_norm(t, eps));
      },
      py::arg("x"), py::arg("eps") = 1e-5,
      "Per-channel normalization over the time axis.");

  m.def(
      "ema_update",
      [](const py::array_t<double>& theta, const py::array_t<double>& phi,
         double lam) {
        if (theta.size() != phi.size())
          throw ShapeError("ema_update: size mismatch");
        py::array_t<double> out(std::vector<py::ssize_t>(
            theta.shape(), theta.shape() + theta.ndim()));
        const double* t = theta.data();
        const double* p = phi.data();
        double* o = out.mutable_data();
        for (py::ssize_t i = 0; i < theta.size(); ++i)
          o[i] = lam * t[i] + (1.0 - lam) * p[i];
        return out;
      },
      py::arg("theta"), py::arg("phi"), py::arg("lam"),
      "Elementwise momentum update lam*theta + (1-lam)*phi.");

  m.def(
      "kmeans_fit",
      [](const py::array_t<double>& x, int k, int max_iters, uint64_t seed) {
        if (x.ndim() != 2) throw ShapeError("expected a 2-D float64 array");
        Tensor<double> t({static_cast<int>(x.shape(0)),
                          static_cast<int>(x.shape(1))});
        auto view = x.unchecked<2>();
        for (py::ssize_t r = 0; r < x.shape(0); ++r)
          for (py::ssize_t c = 0; c < x.shape(1); ++c)
            t.at(static_cast<int>(r), static_cast<int>(c)) = view(r, c);
        const KmeansResult res = kmeans_fit(t, k, max_iters, seed);
        return py::make_tuple(array_from_d(res.centroids), res.assignments,
                              res.objective);
      },
      py::arg("x"), py::arg("k"), py::arg("max_iters") = 50,
      py::arg("seed") = 0,
      "Lloyd's algorithm with k-means++ init; returns (centroids, "
      "assignments, objective).");

  m.attr("__version__") = "0.1.0";
}
