// av2vec/layers.hpp

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

#ifndef AV2VEC_LAYERS_HPP_
#define AV2VEC_LAYERS_HPP_

#include <string>
#include <vector>

#include "av2vec/autodiff.hpp"
#include "av2vec/rng.hpp"
#include "av2vec/tensor.hpp"

namespace av2vec {

// Ordered name -> tensor registry. Registration order is the canonical
// order for the optimizer, the checkpoint tensor table and EMA pairing.
template <typename T>
struct ParamRegistry {
  struct Entry {
    std::string name;
    Tensor<T>* tensor;
  };
  std::vector<Entry> entries;

  void add(const std::string& name, Tensor<T>* t) {
    entries.push_back({name, t});
  }
  size_t size() const { return entries.size(); }
};

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  Linear() = default;
  Linear(int in, int out, Rng& rng) {
    const T std = static_cast<T>(std::sqrt(2.0 / (in + out)));
    weight = Tensor<T>::randn({in, out}, rng, std);
    bias = Tensor<T>::zeros({out});
  }

  int in_dim() const { return weight.shape[0]; }
  int out_dim() const { return weight.shape[1]; }

  typename Tape<T>::Var forward(Tape<T>& tape, typename Tape<T>::Var x) {
    return tape.add_rowvec(tape.matmul(x, tape.param(&weight)),
                           tape.param(&bias));
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.add(prefix + ".W", &weight);
    reg.add(prefix + ".b", &bias);
  }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  T eps = static_cast<T>(1e-5);

  LayerNorm() = default;
  explicit LayerNorm(int dim)
      : gamma(Tensor<T>::full({dim}, T(1))), beta(Tensor<T>::zeros({dim})) {}

  typename Tape<T>::Var forward(Tape<T>& tape, typename Tape<T>::Var x) {
    return tape.layer_norm(x, tape.param(&gamma), tape.param(&beta), eps);
  }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.add(prefix + ".gamma", &gamma);
    reg.add(prefix + ".beta", &beta);
  }
};

}  // namespace av2vec

#endif  // AV2VEC_LAYERS_HPP_
