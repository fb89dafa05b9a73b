// av2vec/features.hpp

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

#ifndef AV2VEC_FEATURES_HPP_
#define AV2VEC_FEATURES_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "av2vec/layers.hpp"
#include "av2vec/synthdata.hpp"

namespace av2vec {

// Channel-wise stacking of consecutive audio frames down to the target
// rate. The source rate must be an integer multiple of the target; a
// trailing partial group is dropped (floor rule).
inline FeatureSequence align_rates(const FeatureSequence& audio,
                                   double target_rate_hz) {
  if (target_rate_hz <= 0) throw ConfigError("align_rates: bad target rate");
  const double ratio_f = audio.frame_rate_hz / target_rate_hz;
  const int ratio = static_cast<int>(std::lround(ratio_f));
  if (ratio < 1 || std::abs(ratio_f - ratio) > 1e-9)
    throw ConfigError("align_rates: rate ratio " + std::to_string(ratio_f) +
                      " is not a positive integer");
  if (ratio == 1) return audio;
  const int t_in = audio.num_frames();
  const int dim = audio.frames.shape[1];
  const int t_out = t_in / ratio;
  FeatureSequence out;
  out.modality = audio.modality;
  out.frame_rate_hz = target_rate_hz;
  out.frames = Tensor<float>({t_out, dim * ratio});
  for (int t = 0; t < t_out; ++t)
    for (int j = 0; j < ratio; ++j)
      for (int d = 0; d < dim; ++d)
        out.frames.at(t, j * dim + d) = audio.frames.at(t * ratio + j, d);
  return out;
}

// Single feed-forward layer mapping stacked audio frames to d_feat.
template <typename T>
struct AudioExtractor {
  Linear<T> proj;

  AudioExtractor() = default;
  AudioExtractor(int in_dim, int d_feat, Rng& rng) : proj(in_dim, d_feat, rng) {}

  typename Tape<T>::Var forward(Tape<T>& tape, typename Tape<T>::Var audio) {
    if (tape.val(audio).shape[1] != proj.in_dim())
      throw ShapeError("extract_audio: input dim " +
                       tape.val(audio).shape_str() + " vs weight " +
                       proj.weight.shape_str());
    return proj.forward(tape, audio);
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    proj.register_params(reg, prefix);
  }
};

// 3-D conv stem + residual blocks + spatial mean pooling + linear output.
// Time is edge-padded so T is preserved; each block's second conv starts at
// zero so fresh extractors are identity-plus-stem.
template <typename T>
struct VideoExtractor {
  struct ResBlock {
    Tensor<T> k1, b1;  // [C,1,3,3,C]
    Tensor<T> k2, b2;
    Tensor<T> n1_gamma, n1_beta, n2_gamma, n2_beta;
  };

  Tensor<T> stem_k, stem_b;  // [C,3,3,3,Ci]
  Tensor<T> stem_gamma, stem_beta;
  std::vector<ResBlock> blocks;
  Linear<T> out;
  T norm_eps = static_cast<T>(1e-5);

  VideoExtractor() = default;
  VideoExtractor(int in_channels, int channels, int num_blocks, int d_feat,
                 Rng& rng) {
    const T stem_std =
        static_cast<T>(std::sqrt(2.0 / (27.0 * in_channels)));
    stem_k = Tensor<T>::randn({channels, 3, 3, 3, in_channels}, rng, stem_std);
    stem_b = Tensor<T>::zeros({channels});
    stem_gamma = Tensor<T>::full({channels}, T(1));
    stem_beta = Tensor<T>::zeros({channels});
    const T conv_std = static_cast<T>(std::sqrt(2.0 / (9.0 * channels)));
    for (int i = 0; i < num_blocks; ++i) {
      ResBlock b;
      b.k1 = Tensor<T>::randn({channels, 1, 3, 3, channels}, rng, conv_std);
      b.b1 = Tensor<T>::zeros({channels});
      b.k2 = Tensor<T>::zeros({channels, 1, 3, 3, channels});
      b.b2 = Tensor<T>::zeros({channels});
      b.n1_gamma = Tensor<T>::full({channels}, T(1));
      b.n1_beta = Tensor<T>::zeros({channels});
      b.n2_gamma = Tensor<T>::full({channels}, T(1));
      b.n2_beta = Tensor<T>::zeros({channels});
      blocks.push_back(std::move(b));
    }
    out = Linear<T>(channels, d_feat, rng);
  }

  typename Tape<T>::Var forward(Tape<T>& tape, typename Tape<T>::Var video) {
    using Var = typename Tape<T>::Var;
    Var x = tape.conv3d(video, tape.param(&stem_k), tape.param(&stem_b));
    x = tape.channel_norm(x, tape.param(&stem_gamma), tape.param(&stem_beta),
                          norm_eps);
    x = tape.relu(x);
    for (auto& b : blocks) {
      Var y = tape.conv3d(x, tape.param(&b.k1), tape.param(&b.b1));
      y = tape.channel_norm(y, tape.param(&b.n1_gamma), tape.param(&b.n1_beta),
                            norm_eps);
      y = tape.relu(y);
      y = tape.conv3d(y, tape.param(&b.k2), tape.param(&b.b2));
      y = tape.channel_norm(y, tape.param(&b.n2_gamma), tape.param(&b.n2_beta),
                            norm_eps);
      x = tape.relu(tape.add(x, y));
    }
    return out.forward(tape, tape.spatial_mean(x));
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.add(prefix + ".stem.K", &stem_k);
    reg.add(prefix + ".stem.b", &stem_b);
    reg.add(prefix + ".stem_norm.gamma", &stem_gamma);
    reg.add(prefix + ".stem_norm.beta", &stem_beta);
    for (size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = prefix + ".block" + std::to_string(i);
      reg.add(p + ".conv1.K", &blocks[i].k1);
      reg.add(p + ".conv1.b", &blocks[i].b1);
      reg.add(p + ".conv2.K", &blocks[i].k2);
      reg.add(p + ".conv2.b", &blocks[i].b2);
      reg.add(p + ".norm1.gamma", &blocks[i].n1_gamma);
      reg.add(p + ".norm1.beta", &blocks[i].n1_beta);
      reg.add(p + ".norm2.gamma", &blocks[i].n2_gamma);
      reg.add(p + ".norm2.beta", &blocks[i].n2_beta);
    }
    out.register_params(reg, prefix + ".out");
  }
};

}  // namespace av2vec

#endif  // AV2VEC_FEATURES_HPP_
