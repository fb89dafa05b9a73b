// av2vec/corruption.hpp

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

#ifndef AV2VEC_CORRUPTION_HPP_
#define AV2VEC_CORRUPTION_HPP_

#include <algorithm>
#include <cmath>
#include <vector>

#include "av2vec/autodiff.hpp"
#include "av2vec/errors.hpp"
#include "av2vec/rng.hpp"

namespace av2vec {

// Sorted set of masked frame indices for one modality.
struct MaskSet {
  std::vector<int> indices;

  size_t size() const { return indices.size(); }
  bool contains(int i) const {
    return std::binary_search(indices.begin(), indices.end(), i);
  }
};

struct MaskPolicy {
  double mask_rate = 0.8;
  int span_length = 10;

  void validate() const {
    if (mask_rate < 0.0 || mask_rate > 1.0)
      throw ConfigError("mask_rate must be in [0, 1]");
    if (span_length < 1) throw ConfigError("span_length must be >= 1");
  }
};

enum class ModalitySelection { kBoth, kAudioOnly, kVideoOnly };

// True with probability p_noise under the given stream.
inline bool sample_noise_decision(double p_noise, Rng& rng) {
  if (p_noise < 0.0 || p_noise > 1.0)
    throw ConfigError("p_noise must be in [0, 1]");
  return rng.uniform() < p_noise;
}

// Fixed-length spans with uniformly drawn starts (without replacement),
// clipped at the sequence end, until at least round(mask_rate*T) indices are
// covered; the tail of the last span is then trimmed so the count is exact.
inline MaskSet sample_span_mask(int t_frames, const MaskPolicy& policy,
                                Rng& rng) {
  policy.validate();
  if (t_frames < 1) throw ConfigError("sample_span_mask: T must be >= 1");
  const int target =
      static_cast<int>(std::lround(policy.mask_rate * t_frames));
  MaskSet mask;
  if (target == 0) return mask;

  std::vector<int> starts(static_cast<size_t>(t_frames));
  for (int i = 0; i < t_frames; ++i) starts[static_cast<size_t>(i)] = i;
  for (int i = t_frames - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(i + 1));
    std::swap(starts[static_cast<size_t>(i)], starts[static_cast<size_t>(j)]);
  }

  std::vector<char> covered(static_cast<size_t>(t_frames), 0);
  int count = 0;
  for (int start : starts) {
    std::vector<int> added;
    for (int i = start; i < std::min(start + policy.span_length, t_frames);
         ++i) {
      if (!covered[static_cast<size_t>(i)]) {
        covered[static_cast<size_t>(i)] = 1;
        added.push_back(i);
        ++count;
      }
    }
    if (count >= target) {
      // Trim the tail of the span that overshot.
      for (size_t k = added.size(); count > target; --k) {
        covered[static_cast<size_t>(added[k - 1])] = 0;
        --count;
      }
      break;
    }
  }
  for (int i = 0; i < t_frames; ++i)
    if (covered[static_cast<size_t>(i)]) mask.indices.push_back(i);
  return mask;
}

// both w.p. p_m; otherwise audio-only w.p. p_a, video-only w.p. 1-p_a.
inline ModalitySelection sample_modality_dropout(double p_m, double p_a,
                                                 Rng& rng) {
  if (p_m < 0.0 || p_m > 1.0 || p_a < 0.0 || p_a > 1.0)
    throw ConfigError("p_m and p_a must be in [0, 1]");
  if (rng.uniform() < p_m) return ModalitySelection::kBoth;
  return rng.uniform() < p_a ? ModalitySelection::kAudioOnly
                             : ModalitySelection::kVideoOnly;
}

// Frames at the masked indices are replaced by the learned embedding; all
// other frames pass through bit-identical.
template <typename T>
typename Tape<T>::Var apply_mask(Tape<T>& tape, typename Tape<T>::Var features,
                                 const MaskSet& mask, Tensor<T>* embedding) {
  return tape.replace_rows(features, mask.indices, tape.param(embedding));
}

// The dropped modality's features become all-zero constants, so no gradient
// flows into the dropped stream. The kept stream passes through unchanged.
template <typename T>
std::pair<typename Tape<T>::Var, typename Tape<T>::Var> apply_modality_dropout(
    Tape<T>& tape, typename Tape<T>::Var audio, typename Tape<T>::Var video,
    ModalitySelection sel) {
  const auto& a = tape.val(audio);
  const auto& v = tape.val(video);
  if (a.shape[0] != v.shape[0])
    throw ShapeError("apply_modality_dropout: frame counts " + a.shape_str() +
                     " vs " + v.shape_str());
  switch (sel) {
    case ModalitySelection::kBoth:
      return {audio, video};
    case ModalitySelection::kAudioOnly:
      return {audio, tape.constant(Tensor<T>(v.shape))};
    case ModalitySelection::kVideoOnly:
      return {tape.constant(Tensor<T>(a.shape)), video};
  }
  throw ConfigError("apply_modality_dropout: bad selection");
}

}  // namespace av2vec

#endif  // AV2VEC_CORRUPTION_HPP_
