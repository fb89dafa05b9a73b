// av2vec/distill.hpp

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

#ifndef AV2VEC_DISTILL_HPP_
#define AV2VEC_DISTILL_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "av2vec/corruption.hpp"
#include "av2vec/encoder.hpp"

namespace av2vec {

struct EmaSchedule {
  double lambda_b = 0.999;
  double lambda_e = 0.9999;
  int64_t n = 30000;

  void validate() const {
    if (!(lambda_b > 0.0 && lambda_b <= lambda_e && lambda_e < 1.0))
      throw ConfigError("EMA schedule requires 0 < lambda_b <= lambda_e < 1");
    if (n < 1) throw ConfigError("EMA schedule requires n >= 1");
  }
};

// Linear ramp from lambda_b to lambda_e over the first n updates, constant
// afterwards.
inline double lambda_at(int64_t step, const EmaSchedule& sched) {
  sched.validate();
  if (step < 0) throw ConfigError("lambda_at: step must be >= 0");
  const double frac =
      static_cast<double>(std::min(step, sched.n)) / static_cast<double>(sched.n);
  return sched.lambda_b + (sched.lambda_e - sched.lambda_b) * frac;
}

// Teacher modality-dropout ablation switch: `none` is the proposed setup
// (teacher always sees both clean streams); `same`/`opposite` drop a teacher
// stream relative to the student's selection.
enum class TeacherDropoutMode { kNone, kSame, kOpposite };

inline TeacherDropoutMode teacher_dropout_mode_from_string(
    const std::string& s) {
  if (s == "none") return TeacherDropoutMode::kNone;
  if (s == "same") return TeacherDropoutMode::kSame;
  if (s == "opposite") return TeacherDropoutMode::kOpposite;
  throw ConfigError("teacher_dropout_mode must be none|same|opposite, got '" +
                    s + "'");
}

// EMA copy of the student's transformer blocks. The teacher has no feature
// extractors, heads, or gradient state of its own; extractor evaluation on
// the teacher path always reads the student's live parameters.
template <typename T>
struct TeacherState {
  std::vector<TransformerBlock<T>> blocks;
  int64_t update_step = 0;

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].register_params(reg, prefix + ".block" + std::to_string(i));
  }
};

template <typename T>
TeacherState<T> init_teacher(const std::vector<TransformerBlock<T>>& student) {
  TeacherState<T> t;
  t.blocks = student;  // theta_0 = phi_0
  t.update_step = 0;
  return t;
}

// theta_i = lambda * theta_{i-1} + (1 - lambda) * phi_i, elementwise over
// the transformer block parameters; increments the update step.
template <typename T>
void ema_update(TeacherState<T>& teacher,
                std::vector<TransformerBlock<T>>& student_blocks,
                double lambda) {
  ParamRegistry<T> treg, sreg;
  teacher.register_params(treg, "t");
  for (size_t i = 0; i < student_blocks.size(); ++i)
    student_blocks[i].register_params(sreg, "t.block" + std::to_string(i));
  if (treg.size() != sreg.size())
    throw ShapeError("ema_update: teacher/student block count mismatch");
  for (size_t i = 0; i < treg.size(); ++i) {
    Tensor<T>& th = *treg.entries[i].tensor;
    const Tensor<T>& ph = *sreg.entries[i].tensor;
    if (!th.same_shape(ph))
      throw ShapeError("ema_update: shape mismatch at " + treg.entries[i].name);
    for (int64_t j = 0; j < th.numel(); ++j)
      th[j] = static_cast<T>(lambda * th[j] + (1.0 - lambda) * ph[j]);
  }
  teacher.update_step += 1;
}

// Per-channel normalization over the time axis of one sample, population
// variance, epsilon-guarded.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& h, double eps) {
  if (h.rank() != 2) throw ShapeError("instance_norm: need [T, D]");
  const int t_frames = h.rows(), d = h.cols();
  Tensor<T> out = h;
  for (int c = 0; c < d; ++c) {
    double mu = 0;
    for (int t = 0; t < t_frames; ++t) mu += h.at(t, c);
    mu /= t_frames;
    double var = 0;
    for (int t = 0; t < t_frames; ++t) {
      const double dv = h.at(t, c) - mu;
      var += dv * dv;
    }
    var /= t_frames;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int t = 0; t < t_frames; ++t)
      out.at(t, c) = static_cast<T>((h.at(t, c) - mu) * inv);
  }
  return out;
}

// Regression targets plus the index set they are valid on (M_a ∪ M_v).
template <typename T>
struct DistillTargets {
  Tensor<T> y;  // [T, d_model]
  std::vector<int> valid;
};

inline std::vector<int> mask_union(const MaskSet& a, const MaskSet& b) {
  std::vector<int> u;
  u.reserve(a.indices.size() + b.indices.size());
  std::set_union(a.indices.begin(), a.indices.end(), b.indices.begin(),
                 b.indices.end(), std::back_inserter(u));
  return u;
}

// Mean over the last k layers of the instance-normalized layer outputs.
template <typename T>
DistillTargets<T> make_targets(const std::vector<Tensor<T>>& layer_outputs,
                               int k, double eps, std::vector<int> valid) {
  const int layers = static_cast<int>(layer_outputs.size());
  if (k < 1 || k > layers)
    throw ConfigError("make_targets: k=" + std::to_string(k) +
                      " out of [1, " + std::to_string(layers) + "]");
  DistillTargets<T> targets;
  targets.valid = std::move(valid);
  targets.y = Tensor<T>(layer_outputs.back().shape);
  for (int l = layers - k; l < layers; ++l) {
    const Tensor<T> normed = instance_norm(layer_outputs[static_cast<size_t>(l)], eps);
    for (int64_t i = 0; i < targets.y.numel(); ++i) targets.y[i] += normed[i];
  }
  const T inv = static_cast<T>(1.0 / k);
  for (auto& v : targets.y.data) v *= inv;
  return targets;
}

// Pooled standard deviation of the target entries; instance norm makes a
// collapsed (constant) teacher output show up as ~0 here.
template <typename T>
double target_std(const std::vector<const Tensor<T>*>& ys) {
  double sum = 0, sq = 0;
  int64_t n = 0;
  for (const Tensor<T>* y : ys) {
    for (int64_t i = 0; i < y->numel(); ++i) {
      sum += (*y)[i];
      sq += static_cast<double>((*y)[i]) * (*y)[i];
      ++n;
    }
  }
  if (n == 0) return 0.0;
  const double mu = sum / static_cast<double>(n);
  return std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mu * mu));
}

// Eq-style masked losses. Raw sums over M_a ∪ M_v; frames outside the union
// contribute exactly zero.
template <typename T>
typename Tape<T>::Var loss_reg(Tape<T>& tape, typename Tape<T>::Var x,
                               const DistillTargets<T>& targets) {
  return tape.masked_sq_error(x, targets.y, targets.valid);
}

template <typename T>
typename Tape<T>::Var loss_mlm(Tape<T>& tape, typename Tape<T>::Var logits,
                               const std::vector<int>& labels,
                               const std::vector<int>& mask_union_rows) {
  return tape.masked_cross_entropy(logits, labels, mask_union_rows);
}

template <typename T>
typename Tape<T>::Var loss_total(Tape<T>& tape, typename Tape<T>::Var reg,
                                 typename Tape<T>::Var mlm, bool mlm_enabled) {
  if (!mlm_enabled) return reg;
  return tape.add(reg, mlm);
}

}  // namespace av2vec

#endif  // AV2VEC_DISTILL_HPP_
