// av2vec/encoder.hpp

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

#ifndef AV2VEC_ENCODER_HPP_
#define AV2VEC_ENCODER_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "av2vec/layers.hpp"

namespace av2vec {

struct EncoderConfig {
  int num_layers = 2;
  int d_model = 128;
  int ffn_dim = 256;
  int num_heads = 4;

  void validate() const {
    if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
    if (d_model < 1 || ffn_dim < 1 || num_heads < 1)
      throw ConfigError("encoder dims must be >= 1");
    if (d_model % num_heads != 0)
      throw ConfigError("d_model must be divisible by num_heads");
  }
};

// Channel-wise concatenation, audio channels first.
template <typename T>
typename Tape<T>::Var fuse(Tape<T>& tape, typename Tape<T>::Var audio,
                           typename Tape<T>::Var video) {
  return tape.concat_cols(audio, video);
}

// Fixed sinusoidal positional table, [T, d_model].
template <typename T>
Tensor<T> sinusoidal_encoding(int t_frames, int d_model) {
  Tensor<T> pe({t_frames, d_model});
  for (int t = 0; t < t_frames; ++t)
    for (int i = 0; i < d_model; ++i) {
      const double angle =
          t / std::pow(10000.0, 2.0 * (i / 2) / static_cast<double>(d_model));
      pe.at(t, i) =
          static_cast<T>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

// Pre-norm block: x + MHA(LN(x)); x + FFN(LN(x)).
template <typename T>
struct TransformerBlock {
  LayerNorm<T> ln1;
  Linear<T> wq, wk, wv, wo;
  LayerNorm<T> ln2;
  Linear<T> ffn1, ffn2;
  int num_heads = 1;

  TransformerBlock() = default;
  TransformerBlock(const EncoderConfig& cfg, Rng& rng)
      : ln1(cfg.d_model),
        wq(cfg.d_model, cfg.d_model, rng),
        wk(cfg.d_model, cfg.d_model, rng),
        wv(cfg.d_model, cfg.d_model, rng),
        wo(cfg.d_model, cfg.d_model, rng),
        ln2(cfg.d_model),
        ffn1(cfg.d_model, cfg.ffn_dim, rng),
        ffn2(cfg.ffn_dim, cfg.d_model, rng),
        num_heads(cfg.num_heads) {}

  typename Tape<T>::Var forward(Tape<T>& tape, typename Tape<T>::Var x) {
    using Var = typename Tape<T>::Var;
    const int d_model = wq.in_dim();
    const int dh = d_model / num_heads;

    Var h = ln1.forward(tape, x);
    Var q = wq.forward(tape, h);
    Var k = wk.forward(tape, h);
    Var v = wv.forward(tape, h);
    Var attn_out;  // heads concatenated back to d_model
    for (int head = 0; head < num_heads; ++head) {
      Var qh = tape.slice_cols(q, head * dh, dh);
      Var kh = tape.slice_cols(k, head * dh, dh);
      Var vh = tape.slice_cols(v, head * dh, dh);
      Var scores = tape.scale(tape.matmul_nt(qh, kh),
                              static_cast<T>(1.0 / std::sqrt(double(dh))));
      Var oh = tape.matmul(tape.softmax_rows(scores), vh);
      attn_out = head == 0 ? oh : tape.concat_cols(attn_out, oh);
    }
    x = tape.add(x, wo.forward(tape, attn_out));

    Var f = ln2.forward(tape, x);
    f = ffn2.forward(tape, tape.gelu(ffn1.forward(tape, f)));
    return tape.add(x, f);
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    ln1.register_params(reg, prefix + ".ln1");
    wq.register_params(reg, prefix + ".wq");
    wk.register_params(reg, prefix + ".wk");
    wv.register_params(reg, prefix + ".wv");
    wo.register_params(reg, prefix + ".wo");
    ln2.register_params(reg, prefix + ".ln2");
    ffn1.register_params(reg, prefix + ".ffn1");
    ffn2.register_params(reg, prefix + ".ffn2");
  }
};

// Projects fused features into the model width, adds the positional table
// and runs the block stack. Returns every block's output; the teacher's
// target construction needs the full list.
template <typename T>
std::vector<typename Tape<T>::Var> encode_blocks(
    Tape<T>& tape, typename Tape<T>::Var fav, Linear<T>& input_proj,
    std::vector<TransformerBlock<T>>& blocks) {
  using Var = typename Tape<T>::Var;
  Var x = input_proj.forward(tape, fav);
  const int t_frames = tape.val(x).shape[0];
  const int d_model = tape.val(x).shape[1];
  x = tape.add(x, tape.constant(sinusoidal_encoding<T>(t_frames, d_model)));
  std::vector<Var> outs;
  outs.reserve(blocks.size());
  for (auto& b : blocks) {
    x = b.forward(tape, x);
    outs.push_back(x);
  }
  return outs;
}

}  // namespace av2vec

#endif  // AV2VEC_ENCODER_HPP_
