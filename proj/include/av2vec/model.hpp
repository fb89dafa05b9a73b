// av2vec/model.hpp

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

#ifndef AV2VEC_MODEL_HPP_
#define AV2VEC_MODEL_HPP_

#include <string>
#include <utility>
#include <vector>

#include "av2vec/distill.hpp"
#include "av2vec/features.hpp"

namespace av2vec {

struct ModelConfig {
  int audio_dim = 13;        // per-frame dim at the audio rate
  int audio_rate_ratio = 4;  // stacked by align_rates before the extractor
  int d_feat = 64;
  int video_channels_in = 1;
  int video_channels = 8;
  int num_res_blocks = 1;
  EncoderConfig encoder;
  bool mlm_enabled = false;
  int num_clusters = 16;

  int audio_in_dim() const { return audio_dim * audio_rate_ratio; }

  void validate() const {
    encoder.validate();
    if (audio_dim < 1 || audio_rate_ratio < 1 || d_feat < 1)
      throw ConfigError("model dims must be >= 1");
    if (video_channels_in < 1 || video_channels < 1 || num_res_blocks < 0)
      throw ConfigError("video extractor config invalid");
    if (mlm_enabled && num_clusters < 2)
      throw ConfigError("num_clusters must be >= 2 when mlm_enabled");
  }
};

// The student: extractors, mask embeddings, fusion projection, transformer
// stack and the two heads. The regression head predicts in d_model space
// (teacher targets live there).
template <typename T>
struct StudentModel {
  ModelConfig cfg;
  AudioExtractor<T> audio_ext;
  VideoExtractor<T> video_ext;
  Tensor<T> mask_emb_audio;  // e^a
  Tensor<T> mask_emb_video;  // e^v
  Linear<T> input_proj;      // 2*d_feat -> d_model
  std::vector<TransformerBlock<T>> blocks;
  LayerNorm<T> final_norm;
  Linear<T> reg_head;
  Linear<T> mlm_head;  // present only in MLM mode

  StudentModel() = default;
  StudentModel(const ModelConfig& config, Rng& rng) : cfg(config) {
    cfg.validate();
    audio_ext = AudioExtractor<T>(cfg.audio_in_dim(), cfg.d_feat, rng);
    video_ext = VideoExtractor<T>(cfg.video_channels_in, cfg.video_channels,
                                  cfg.num_res_blocks, cfg.d_feat, rng);
    mask_emb_audio = Tensor<T>::randn({cfg.d_feat}, rng, static_cast<T>(0.1));
    mask_emb_video = Tensor<T>::randn({cfg.d_feat}, rng, static_cast<T>(0.1));
    input_proj = Linear<T>(2 * cfg.d_feat, cfg.encoder.d_model, rng);
    for (int i = 0; i < cfg.encoder.num_layers; ++i)
      blocks.emplace_back(cfg.encoder, rng);
    final_norm = LayerNorm<T>(cfg.encoder.d_model);
    reg_head = Linear<T>(cfg.encoder.d_model, cfg.encoder.d_model, rng);
    if (cfg.mlm_enabled)
      mlm_head = Linear<T>(cfg.encoder.d_model, cfg.num_clusters, rng);
  }

  void register_params(ParamRegistry<T>& reg) {
    audio_ext.register_params(reg, "audio_ext");
    video_ext.register_params(reg, "video_ext");
    reg.add("mask_emb.audio", &mask_emb_audio);
    reg.add("mask_emb.video", &mask_emb_video);
    input_proj.register_params(reg, "input_proj");
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].register_params(reg, "enc.block" + std::to_string(i));
    final_norm.register_params(reg, "enc.final_norm");
    reg_head.register_params(reg, "head.reg");
    if (cfg.mlm_enabled) mlm_head.register_params(reg, "head.mlm");
  }

  struct StudentOut {
    typename Tape<T>::Var x_reg;       // [T, d_model]
    typename Tape<T>::Var mlm_logits;  // [T, K], invalid unless MLM mode
    typename Tape<T>::Var final_hidden;
    std::vector<typename Tape<T>::Var> layer_outs;
  };

  // Corrupted-path forward: extract -> mask -> modality dropout -> fuse ->
  // encode -> heads. `audio` is the (possibly noisy) rate-aligned input.
  StudentOut forward_student(Tape<T>& tape, const Tensor<T>& audio,
                             const Tensor<T>& video, const MaskSet& mask_a,
                             const MaskSet& mask_v, ModalitySelection sel) {
    using Var = typename Tape<T>::Var;
    Var fa = audio_ext.forward(tape, tape.constant(audio));
    Var fv = video_ext.forward(tape, tape.constant(video));
    fa = apply_mask(tape, fa, mask_a, &mask_emb_audio);
    fv = apply_mask(tape, fv, mask_v, &mask_emb_video);
    auto dropped = apply_modality_dropout(tape, fa, fv, sel);
    Var fav = fuse(tape, dropped.first, dropped.second);
    StudentOut out;
    out.layer_outs = encode_blocks(tape, fav, input_proj, blocks);
    out.final_hidden = final_norm.forward(tape, out.layer_outs.back());
    out.x_reg = reg_head.forward(tape, out.final_hidden);
    if (cfg.mlm_enabled)
      out.mlm_logits = mlm_head.forward(tape, out.final_hidden);
    return out;
  }

  struct ReprOut {
    typename Tape<T>::Var final_hidden;
    std::vector<typename Tape<T>::Var> layer_outs;
  };

  // Clean, unmasked forward; `condition` zeroes a stream for the
  // audio-only / video-only evaluation conditions.
  ReprOut forward_repr(Tape<T>& tape, const Tensor<T>& audio,
                       const Tensor<T>& video, ModalitySelection condition) {
    using Var = typename Tape<T>::Var;
    Var fa = audio_ext.forward(tape, tape.constant(audio));
    Var fv = video_ext.forward(tape, tape.constant(video));
    auto dropped = apply_modality_dropout(tape, fa, fv, condition);
    Var fav = fuse(tape, dropped.first, dropped.second);
    ReprOut out;
    out.layer_outs = encode_blocks(tape, fav, input_proj, blocks);
    out.final_hidden = final_norm.forward(tape, out.layer_outs.back());
    return out;
  }

  // Teacher path: clean full input, no masking, no noise. Extractors and
  // the input projection are evaluated with the student's live parameters;
  // only the transformer blocks come from the EMA teacher. Must run on a
  // gradient-disabled tape.
  std::vector<Tensor<T>> forward_teacher(Tape<T>& tape,
                                         const Tensor<T>& audio_clean,
                                         const Tensor<T>& video,
                                         TeacherState<T>& teacher,
                                         TeacherDropoutMode mode,
                                         ModalitySelection student_sel) {
    if (tape.grad_enabled())
      throw TrainingError("forward_teacher requires a gradient-disabled tape");
    using Var = typename Tape<T>::Var;
    Var fa = audio_ext.forward(tape, tape.constant(audio_clean));
    Var fv = video_ext.forward(tape, tape.constant(video));
    ModalitySelection teacher_sel = ModalitySelection::kBoth;
    if (mode == TeacherDropoutMode::kSame) {
      teacher_sel = student_sel;
    } else if (mode == TeacherDropoutMode::kOpposite) {
      if (student_sel == ModalitySelection::kAudioOnly)
        teacher_sel = ModalitySelection::kVideoOnly;
      else if (student_sel == ModalitySelection::kVideoOnly)
        teacher_sel = ModalitySelection::kAudioOnly;
    }
    auto dropped = apply_modality_dropout(tape, fa, fv, teacher_sel);
    Var fav = fuse(tape, dropped.first, dropped.second);
    auto outs = encode_blocks(tape, fav, input_proj, teacher.blocks);
    std::vector<Tensor<T>> values;
    values.reserve(outs.size());
    for (Var v : outs) values.push_back(tape.val(v));
    return values;
  }
};

// Linear frame classifier used by the finetuning protocol in place of a
// full decoder.
template <typename T>
struct ProbeModel {
  Linear<T> head;

  ProbeModel() = default;
  ProbeModel(int d_model, int num_classes, Rng& rng)
      : head(d_model, num_classes, rng) {}

  typename Tape<T>::Var forward(Tape<T>& tape, typename Tape<T>::Var hidden) {
    return head.forward(tape, hidden);
  }

  void register_params(ParamRegistry<T>& reg) {
    head.register_params(reg, "probe");
  }
};

}  // namespace av2vec

#endif  // AV2VEC_MODEL_HPP_
