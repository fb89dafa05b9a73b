// av2vec/config.hpp

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

#ifndef AV2VEC_CONFIG_HPP_
#define AV2VEC_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "av2vec/corruption.hpp"
#include "av2vec/distill.hpp"
#include "av2vec/model.hpp"
#include "av2vec/synthdata.hpp"

#include <json.hpp>

namespace av2vec {

struct LrSchedule {
  double peak_lr = 5e-4;
  int64_t total_updates = 2000;
  double warmup_frac = 0.03;
  double constant_frac = 0.90;
  double decay_frac = 0.07;
  double final_lr_ratio = 0.05;

  void validate() const;
};

// Linear warmup to the peak over the first warmup fraction, constant, then
// exponential decay from peak to peak*final_lr_ratio.
double lr_at(int64_t step, const LrSchedule& sched);

struct FinetuneConfig {
  int64_t freeze_steps = 300;
  int64_t total_updates = 400;
  double lr = 2e-3;
  int batch_size = 8;
  bool apply_noise = true;
  bool apply_modality_dropout = true;

  void validate() const {
    if (freeze_steps < 0 || total_updates < 0)
      throw ConfigError("finetune steps must be >= 0");
    if (freeze_steps > total_updates)
      throw ConfigError("ft_freeze_steps must be <= ft_total_updates");
    if (lr <= 0) throw ConfigError("ft_lr must be > 0");
    if (batch_size < 1) throw ConfigError("ft_batch_size must be >= 1");
  }
};

// Flat key-value run configuration; one file drives every subcommand.
// Unknown keys are an error.
struct RunConfig {
  std::string mode = "av2vec";  // av2vec | av2vec-mlm
  uint64_t seed = 1;

  // synthdata
  int data_num_utterances = 200;
  int data_frames_min = 16;
  int data_frames_max = 32;
  int data_num_latent_states = 8;
  int data_audio_dim = 13;
  int data_video_height = 8;
  int data_video_width = 8;
  int data_video_channels = 1;
  double data_latent_dwell = 4.0;
  int data_video_rate_hz = 25;
  int data_audio_rate_ratio = 4;
  double data_audio_jitter = 0.3;
  double data_video_jitter = 0.2;
  double data_video_smooth = 0.5;
  double data_test_fraction = 0.2;
  int data_noise_bank_size = 8;
  int data_noise_bank_length = 1024;

  // features
  int d_feat = 64;
  int video_channels = 8;
  int num_res_blocks = 1;

  // corruption
  double mask_rate_audio = 0.8;
  double mask_rate_video = 0.3;
  int span_len_audio = 10;
  int span_len_video = 5;
  double p_noise = 0.25;
  double p_m = 0.5;
  double p_a = 0.5;
  bool tied_masks = false;

  // encoder
  int num_layers = 2;
  int d_model = 128;
  int ffn_dim = 256;
  int num_heads = 4;
  bool mlm_enabled = false;
  int num_clusters = 16;

  // distill
  double ema_lambda_b = 0.999;
  double ema_lambda_e = 0.9999;
  int64_t ema_n = 1000;
  int avg_last_k = 2;
  std::string teacher_dropout_mode = "none";
  double instance_norm_eps = 1e-5;

  // trainkit
  double peak_lr = 5e-4;
  int64_t total_updates = 2000;
  double warmup_frac = 0.03;
  double constant_frac = 0.90;
  double decay_frac = 0.07;
  double final_lr_ratio = 0.05;
  int batch_size = 8;
  int64_t checkpoint_interval = 500;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-6;
  std::string dtype = "f32";  // f32 | f64

  // finetune
  int64_t ft_freeze_steps = 300;
  int64_t ft_total_updates = 400;
  double ft_lr = 2e-3;
  int ft_batch_size = 8;
  bool ft_apply_noise = true;
  bool ft_apply_modality_dropout = true;

  // cluster
  int cluster_layer = 0;  // 0 = middle layer
  int cluster_max_iters = 50;

  void validate() const;

  CorpusSpec corpus_spec() const;
  ModelConfig model_config() const;
  EmaSchedule ema_schedule() const;
  LrSchedule lr_schedule() const;
  FinetuneConfig finetune_config() const;
  MaskPolicy audio_mask_policy() const { return {mask_rate_audio, span_len_audio}; }
  MaskPolicy video_mask_policy() const { return {mask_rate_video, span_len_video}; }
  TeacherDropoutMode teacher_mode() const {
    return teacher_dropout_mode_from_string(teacher_dropout_mode);
  }
  int resolved_cluster_layer() const {
    return cluster_layer > 0 ? cluster_layer : (num_layers + 1) / 2;
  }

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);

  // Sorted list of every recognized key; the CLI help text prints these.
  static const std::vector<std::string>& known_keys();
};

}  // namespace av2vec

#endif  // AV2VEC_CONFIG_HPP_
