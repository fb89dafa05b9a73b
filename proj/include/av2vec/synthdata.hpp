// av2vec/synthdata.hpp

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

#ifndef AV2VEC_SYNTHDATA_HPP_
#define AV2VEC_SYNTHDATA_HPP_

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "av2vec/rng.hpp"
#include "av2vec/tensor.hpp"

namespace av2vec {

enum class Modality { kAudio, kVideo };

// Time-major frame sequence. Audio frames are [T, D]; video frames are
// [T, H, W, C]. Frame count is always shape[0].
struct FeatureSequence {
  Modality modality = Modality::kAudio;
  Tensor<float> frames;
  double frame_rate_hz = 0.0;

  int num_frames() const { return frames.shape.empty() ? 0 : frames.shape[0]; }
};

// Paired utterance: a shared latent state path rendered into two modalities.
struct SyntheticSample {
  std::string utterance_id;
  std::vector<int> latent_labels;  // length T, values < num_latent_states
  FeatureSequence audio_clean;     // [T * audio_rate_ratio, audio_dim]
  FeatureSequence video;           // [T, H, W, C]
};

struct CorpusSpec {
  int num_utterances = 0;
  int frames_min = 1;  // range of T, the common (video-rate) frame count
  int frames_max = 1;
  int num_latent_states = 2;
  int audio_dim = 1;
  int video_height = 1;
  int video_width = 1;
  int video_channels = 1;
  double latent_dwell = 4.0;  // mean frames per latent state
  int video_rate_hz = 25;
  int audio_rate_ratio = 1;  // audio frames per video frame
  double audio_jitter = 0.3;
  double video_jitter = 0.2;
  double video_smooth = 0.5;  // blend weight of the new frame, (0, 1]
  uint64_t seed = 0;

  void validate() const;
};

using Corpus = std::vector<SyntheticSample>;

// Deterministic given (spec, seed): the same spec yields bit-identical
// corpora on every call. Audio frames are per-state templates plus i.i.d.
// jitter; video frames render the same state path through per-state images
// with temporal smoothing, so both modalities carry the latent labels.
Corpus generate_corpus(const CorpusSpec& spec);

// Seeded bank of AR(1)-colored Gaussian noise sequences in the audio
// feature domain.
struct NoiseBank {
  std::vector<Tensor<float>> sequences;  // each [L, audio_dim]
};

NoiseBank make_noise_bank(uint64_t seed, int count, int length, int dim);

constexpr double kSnrInf = std::numeric_limits<double>::infinity();

// The five finite SNR levels of the evaluation grid plus the clean set.
const std::vector<double>& eval_snr_levels();

// out = clean + g * crop(noise), with g chosen so the measured SNR of the
// added noise against the clean signal equals snr_db. snr_db = +inf returns
// the clean input unchanged. The crop offset is drawn from rng.
FeatureSequence mix_noise(const FeatureSequence& clean,
                          const Tensor<float>& noise, double snr_db, Rng& rng);

// 10*log10(E_clean / E_{noisy-clean}); +inf when the difference is zero.
double measure_snr(const FeatureSequence& clean, const FeatureSequence& noisy);

// One noisy copy of the corpus per SNR level, plus the bit-identical clean
// (+inf) set. Video streams and labels are untouched.
std::map<double, Corpus> build_eval_sets(const Corpus& corpus,
                                         const NoiseBank& bank, uint64_t seed);

// Deterministic head/tail split; the last ceil(test_fraction * N)
// utterances form the evaluation split.
void split_corpus(const Corpus& corpus, double test_fraction, Corpus* train,
                  Corpus* test);

// --- corpus persistence (binary records + UTF-8 manifest) ---------------

void write_corpus(const std::string& dir, const Corpus& corpus);
Corpus read_corpus(const std::string& dir);

void write_record(const std::string& path, const SyntheticSample& sample);
SyntheticSample read_record(const std::string& path);

}  // namespace av2vec

#endif  // AV2VEC_SYNTHDATA_HPP_
