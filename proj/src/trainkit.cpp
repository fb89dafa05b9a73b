// trainkit.cpp

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

#include "av2vec/trainkit.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "av2vec/trainkit_io.hpp"

namespace av2vec {

nlohmann::json metrics_to_json(const StepMetrics& m) {
  nlohmann::json j;
  j["step"] = m.step;
  j["loss_reg"] = m.loss_reg;
  if (m.mlm) {
    j["loss_mlm"] = m.loss_mlm;
    j["loss_mlm_sum"] = m.loss_mlm_sum;
  }
  j["loss_total"] = m.loss_total;
  j["lr"] = m.lr;
  j["lambda"] = m.lambda;
  j["target_std"] = m.target_std;
  j["masked_frames"] = m.masked_frames;
  j["loss_reg_sum"] = m.loss_reg_sum;
  return j;
}

std::string condition_name(ModalitySelection sel) {
  switch (sel) {
    case ModalitySelection::kBoth:
      return "both";
    case ModalitySelection::kAudioOnly:
      return "audio-only";
    case ModalitySelection::kVideoOnly:
      return "video-only";
  }
  return "?";
}

namespace {

std::string format_snr(double snr) {
  if (std::isinf(snr) && snr > 0) return "inf";
  std::ostringstream os;
  os << snr;
  return os.str();
}

}  // namespace

void write_accuracy_csv(const std::string& path,
                        const std::vector<EvalRow>& rows) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw CorruptFileError("cannot write accuracy report: " + path);
  os << "condition,snr_db,frame_accuracy,n_frames\n";
  for (const auto& r : rows) {
    std::ostringstream acc;
    acc.precision(6);
    acc << std::fixed << r.frame_accuracy;
    os << r.condition << "," << format_snr(r.snr_db) << "," << acc.str()
       << "," << r.n_frames << "\n";
  }
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  using namespace ckpt_detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptFileError("cannot open checkpoint: " + path);
  if (get_u32(is, path) != kCheckpointMagic)
    throw CorruptFileError("bad magic in checkpoint: " + path);
  if (get_u32(is, path) != kCheckpointVersion)
    throw CorruptFileError("unsupported checkpoint version: " + path);
  CheckpointInfo info;
  info.dtype = dtype_name(get_u8(is, path));
  const uint64_t cfg_len = get_u64(is, path);
  if (cfg_len > (1ull << 30))
    throw CorruptFileError("bad config length: " + path);
  std::string cfg_json(cfg_len, '\0');
  is.read(cfg_json.data(), static_cast<std::streamsize>(cfg_len));
  if (!is) throw CorruptFileError("truncated checkpoint: " + path);
  try {
    info.config = RunConfig::from_json(nlohmann::json::parse(cfg_json));
  } catch (const nlohmann::json::exception&) {
    throw CorruptFileError("unparseable config in checkpoint: " + path);
  }
  info.update_step = static_cast<int64_t>(get_u64(is, path));
  return info;
}

void check_checkpoint_compatible(const RunConfig& provided,
                                 const RunConfig& loaded) {
  const auto mismatch = [](const std::string& key) {
    throw ConfigError("config key '" + key +
                      "' does not match the checkpoint");
  };
  if (provided.dtype != loaded.dtype) mismatch("dtype");
  if (provided.d_model != loaded.d_model) mismatch("d_model");
  if (provided.num_layers != loaded.num_layers) mismatch("num_layers");
  if (provided.ffn_dim != loaded.ffn_dim) mismatch("ffn_dim");
  if (provided.num_heads != loaded.num_heads) mismatch("num_heads");
  if (provided.d_feat != loaded.d_feat) mismatch("d_feat");
  if (provided.video_channels != loaded.video_channels)
    mismatch("video_channels");
  if (provided.num_res_blocks != loaded.num_res_blocks)
    mismatch("num_res_blocks");
  if (provided.mlm_enabled != loaded.mlm_enabled) mismatch("mlm_enabled");
  if (provided.num_clusters != loaded.num_clusters) mismatch("num_clusters");
  if (provided.data_audio_dim != loaded.data_audio_dim)
    mismatch("data_audio_dim");
  if (provided.data_audio_rate_ratio != loaded.data_audio_rate_ratio)
    mismatch("data_audio_rate_ratio");
  if (provided.data_video_height != loaded.data_video_height)
    mismatch("data_video_height");
  if (provided.data_video_width != loaded.data_video_width)
    mismatch("data_video_width");
  if (provided.data_video_channels != loaded.data_video_channels)
    mismatch("data_video_channels");
  if (provided.data_num_latent_states != loaded.data_num_latent_states)
    mismatch("data_num_latent_states");
}

}  // namespace av2vec
