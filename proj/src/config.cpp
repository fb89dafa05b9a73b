// config.cpp

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

#include "av2vec/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace av2vec {

void LrSchedule::validate() const {
  if (peak_lr <= 0) throw ConfigError("peak_lr must be > 0");
  if (total_updates < 0) throw ConfigError("total_updates must be >= 0");
  if (warmup_frac < 0 || constant_frac < 0 || decay_frac < 0)
    throw ConfigError("schedule fractions must be >= 0");
  if (std::abs(warmup_frac + constant_frac + decay_frac - 1.0) > 1e-9)
    throw ConfigError("schedule fractions must sum to 1.0");
  if (final_lr_ratio <= 0 || final_lr_ratio > 1)
    throw ConfigError("final_lr_ratio must be in (0, 1]");
}

double lr_at(int64_t step, const LrSchedule& sched) {
  sched.validate();
  if (step < 0 || step > sched.total_updates)
    throw ConfigError("lr_at: step out of [0, total_updates]");
  const int64_t warmup =
      std::llround(sched.warmup_frac * static_cast<double>(sched.total_updates));
  const int64_t decay_start =
      sched.total_updates -
      std::llround(sched.decay_frac * static_cast<double>(sched.total_updates));
  if (step <= warmup)
    return warmup == 0
               ? sched.peak_lr
               : sched.peak_lr * static_cast<double>(step) /
                     static_cast<double>(warmup);
  if (step <= decay_start) return sched.peak_lr;
  const double frac = static_cast<double>(step - decay_start) /
                      static_cast<double>(sched.total_updates - decay_start);
  return sched.peak_lr * std::pow(sched.final_lr_ratio, frac);
}

namespace {

// Single authoritative field table: drives parsing, serialization and the
// known-keys listing.
template <typename C, typename F>
void visit_fields(C& c, F&& f) {
  f("mode", c.mode);
  f("seed", c.seed);
  f("data_num_utterances", c.data_num_utterances);
  f("data_frames_min", c.data_frames_min);
  f("data_frames_max", c.data_frames_max);
  f("data_num_latent_states", c.data_num_latent_states);
  f("data_audio_dim", c.data_audio_dim);
  f("data_video_height", c.data_video_height);
  f("data_video_width", c.data_video_width);
  f("data_video_channels", c.data_video_channels);
  f("data_latent_dwell", c.data_latent_dwell);
  f("data_video_rate_hz", c.data_video_rate_hz);
  f("data_audio_rate_ratio", c.data_audio_rate_ratio);
  f("data_audio_jitter", c.data_audio_jitter);
  f("data_video_jitter", c.data_video_jitter);
  f("data_video_smooth", c.data_video_smooth);
  f("data_test_fraction", c.data_test_fraction);
  f("data_noise_bank_size", c.data_noise_bank_size);
  f("data_noise_bank_length", c.data_noise_bank_length);
  f("d_feat", c.d_feat);
  f("video_channels", c.video_channels);
  f("num_res_blocks", c.num_res_blocks);
  f("mask_rate_audio", c.mask_rate_audio);
  f("mask_rate_video", c.mask_rate_video);
  f("span_len_audio", c.span_len_audio);
  f("span_len_video", c.span_len_video);
  f("p_noise", c.p_noise);
  f("p_m", c.p_m);
  f("p_a", c.p_a);
  f("tied_masks", c.tied_masks);
  f("num_layers", c.num_layers);
  f("d_model", c.d_model);
  f("ffn_dim", c.ffn_dim);
  f("num_heads", c.num_heads);
  f("mlm_enabled", c.mlm_enabled);
  f("num_clusters", c.num_clusters);
  f("ema_lambda_b", c.ema_lambda_b);
  f("ema_lambda_e", c.ema_lambda_e);
  f("ema_n", c.ema_n);
  f("avg_last_k", c.avg_last_k);
  f("teacher_dropout_mode", c.teacher_dropout_mode);
  f("instance_norm_eps", c.instance_norm_eps);
  f("peak_lr", c.peak_lr);
  f("total_updates", c.total_updates);
  f("warmup_frac", c.warmup_frac);
  f("constant_frac", c.constant_frac);
  f("decay_frac", c.decay_frac);
  f("final_lr_ratio", c.final_lr_ratio);
  f("batch_size", c.batch_size);
  f("checkpoint_interval", c.checkpoint_interval);
  f("adam_beta1", c.adam_beta1);
  f("adam_beta2", c.adam_beta2);
  f("adam_eps", c.adam_eps);
  f("dtype", c.dtype);
  f("ft_freeze_steps", c.ft_freeze_steps);
  f("ft_total_updates", c.ft_total_updates);
  f("ft_lr", c.ft_lr);
  f("ft_batch_size", c.ft_batch_size);
  f("ft_apply_noise", c.ft_apply_noise);
  f("ft_apply_modality_dropout", c.ft_apply_modality_dropout);
  f("cluster_layer", c.cluster_layer);
  f("cluster_max_iters", c.cluster_max_iters);
}

}  // namespace

void RunConfig::validate() const {
  if (mode != "av2vec" && mode != "av2vec-mlm")
    throw ConfigError("mode must be av2vec or av2vec-mlm, got '" + mode + "'");
  if (dtype != "f32" && dtype != "f64")
    throw ConfigError("dtype must be f32 or f64, got '" + dtype + "'");
  if (mode == "av2vec-mlm" && !mlm_enabled)
    throw ConfigError("mode av2vec-mlm requires mlm_enabled=true");
  if (mode == "av2vec" && mlm_enabled)
    throw ConfigError("mode av2vec is inconsistent with mlm_enabled=true");
  corpus_spec().validate();
  model_config().validate();
  ema_schedule().validate();
  lr_schedule().validate();
  finetune_config().validate();
  audio_mask_policy().validate();
  video_mask_policy().validate();
  teacher_mode();  // throws on bad string
  if (p_noise < 0 || p_noise > 1 || p_m < 0 || p_m > 1 || p_a < 0 || p_a > 1)
    throw ConfigError("p_noise, p_m, p_a must be in [0, 1]");
  if (avg_last_k < 1 || avg_last_k > num_layers)
    throw ConfigError("avg_last_k must be in [1, num_layers]");
  if (instance_norm_eps <= 0)
    throw ConfigError("instance_norm_eps must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (checkpoint_interval < 0)
    throw ConfigError("checkpoint_interval must be >= 0");
  if (cluster_layer < 0 || cluster_layer > num_layers)
    throw ConfigError("cluster_layer must be in [0, num_layers]");
  if (cluster_max_iters < 1)
    throw ConfigError("cluster_max_iters must be >= 1");
  if (num_clusters < 2) throw ConfigError("num_clusters must be >= 2");
  if (data_noise_bank_length < data_frames_max * data_audio_rate_ratio)
    throw ConfigError(
        "data_noise_bank_length must cover the longest utterance");
}

CorpusSpec RunConfig::corpus_spec() const {
  CorpusSpec spec;
  spec.num_utterances = data_num_utterances;
  spec.frames_min = data_frames_min;
  spec.frames_max = data_frames_max;
  spec.num_latent_states = data_num_latent_states;
  spec.audio_dim = data_audio_dim;
  spec.video_height = data_video_height;
  spec.video_width = data_video_width;
  spec.video_channels = data_video_channels;
  spec.latent_dwell = data_latent_dwell;
  spec.video_rate_hz = data_video_rate_hz;
  spec.audio_rate_ratio = data_audio_rate_ratio;
  spec.audio_jitter = data_audio_jitter;
  spec.video_jitter = data_video_jitter;
  spec.video_smooth = data_video_smooth;
  spec.seed = seed;
  return spec;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.audio_dim = data_audio_dim;
  m.audio_rate_ratio = data_audio_rate_ratio;
  m.d_feat = d_feat;
  m.video_channels_in = data_video_channels;
  m.video_channels = video_channels;
  m.num_res_blocks = num_res_blocks;
  m.encoder.num_layers = num_layers;
  m.encoder.d_model = d_model;
  m.encoder.ffn_dim = ffn_dim;
  m.encoder.num_heads = num_heads;
  m.mlm_enabled = mlm_enabled;
  m.num_clusters = num_clusters;
  return m;
}

EmaSchedule RunConfig::ema_schedule() const {
  return {ema_lambda_b, ema_lambda_e, ema_n};
}

LrSchedule RunConfig::lr_schedule() const {
  return {peak_lr,       total_updates, warmup_frac,
          constant_frac, decay_frac,    final_lr_ratio};
}

FinetuneConfig RunConfig::finetune_config() const {
  return {ft_freeze_steps, ft_total_updates,        ft_lr,
          ft_batch_size,   ft_apply_noise, ft_apply_modality_dropout};
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  visit_fields(*this, [&j](const char* key, const auto& value) {
    j[key] = value;
  });
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg;
  bool mode_given = j.contains("mode");
  bool mlm_given = j.contains("mlm_enabled");
  std::vector<std::string> known;
  visit_fields(cfg, [&](const char* key, auto& value) {
    known.push_back(key);
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(value);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad value for config key '") + key +
                        "': " + e.what());
    }
  });
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("unknown config key '" + it.key() + "'");
  }
  // mode is the master switch for the MLM head unless both were given.
  if (mode_given && !mlm_given) cfg.mlm_enabled = (cfg.mode == "av2vec-mlm");
  if (!mode_given && mlm_given) cfg.mode = cfg.mlm_enabled ? "av2vec-mlm" : "av2vec";
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " +
                      e.what());
  }
  return from_json(j);
}

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    RunConfig c;
    std::vector<std::string> k;
    visit_fields(c, [&k](const char* key, auto&) { k.emplace_back(key); });
    std::sort(k.begin(), k.end());
    return k;
  }();
  return keys;
}

}  // namespace av2vec
