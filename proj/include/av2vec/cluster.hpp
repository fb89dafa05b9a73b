// av2vec/cluster.hpp

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

#ifndef AV2VEC_CLUSTER_HPP_
#define AV2VEC_CLUSTER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "av2vec/model.hpp"
#include "av2vec/synthdata.hpp"

namespace av2vec {

// K-means codebook over one transformer layer's hidden features.
struct ClusterModel {
  Tensor<float> centroids;  // [K, d]
  int feature_layer = 0;    // 1-based transformer layer index
  int num_clusters() const { return centroids.shape.empty() ? 0 : centroids.shape[0]; }
};

struct KmeansResult {
  Tensor<double> centroids;  // [K, d]
  std::vector<int> assignments;
  std::vector<double> objective_history;  // after each assignment pass
  double objective = 0.0;
  int iterations = 0;
};

// Lloyd's algorithm with k-means++ initialization, float64 accumulation.
// Stops when assignments are unchanged or at max_iters. An empty cluster is
// re-seeded at the point farthest from its assigned centroid.
KmeansResult kmeans_fit(const Tensor<double>& features, int k, int max_iters,
                        uint64_t seed);

// Nearest centroid in squared Euclidean distance; ties break to the lowest
// centroid index.
int nearest_centroid(const Tensor<double>& centroids, const double* point);

// Frame features of a whole corpus from one transformer layer (1-based),
// computed on clean, unmasked, both-modality input.
struct FeatureDump {
  Tensor<double> features;              // [total_frames, d_model]
  std::vector<int> utterance_offsets;   // size n_utts + 1
};

template <typename T>
FeatureDump dump_features(StudentModel<T>& model, const Corpus& corpus,
                          int layer) {
  const int num_layers = static_cast<int>(model.blocks.size());
  if (layer < 1 || layer > num_layers)
    throw ConfigError("dump_features: layer " + std::to_string(layer) +
                      " out of [1, " + std::to_string(num_layers) + "]");
  FeatureDump dump;
  int64_t total = 0;
  for (const auto& s : corpus) total += static_cast<int64_t>(s.latent_labels.size());
  dump.features = Tensor<double>({static_cast<int>(total),
                                  model.cfg.encoder.d_model});
  dump.utterance_offsets.push_back(0);
  int row = 0;
  for (const auto& s : corpus) {
    const FeatureSequence aligned =
        align_rates(s.audio_clean, s.video.frame_rate_hz);
    Tape<T> tape(/*grad_enabled=*/false);
    auto repr = model.forward_repr(tape, aligned.frames.template cast<T>(),
                                   s.video.frames.template cast<T>(),
                                   ModalitySelection::kBoth);
    const Tensor<T>& h = tape.val(repr.layer_outs[static_cast<size_t>(layer - 1)]);
    for (int t = 0; t < h.rows(); ++t, ++row)
      for (int c = 0; c < h.cols(); ++c)
        dump.features.at(row, c) = static_cast<double>(h.at(t, c));
    dump.utterance_offsets.push_back(row);
  }
  return dump;
}

// Per-utterance discrete target labels for the MLM task.
using DiscreteTargetSet = std::vector<std::vector<int>>;

template <typename T>
DiscreteTargetSet assign_targets(const ClusterModel& cluster,
                                 StudentModel<T>& model, const Corpus& corpus) {
  FeatureDump dump = dump_features(model, corpus, cluster.feature_layer);
  const Tensor<double> centroids = cluster.centroids.cast<double>();
  DiscreteTargetSet targets(corpus.size());
  for (size_t u = 0; u < corpus.size(); ++u) {
    const int begin = dump.utterance_offsets[u];
    const int end = dump.utterance_offsets[u + 1];
    targets[u].reserve(static_cast<size_t>(end - begin));
    for (int r = begin; r < end; ++r)
      targets[u].push_back(nearest_centroid(
          centroids, &dump.features.data[static_cast<size_t>(r) *
                                         dump.features.cols()]));
  }
  return targets;
}

// --- persistence ---------------------------------------------------------

void write_cluster_model(const std::string& path, const ClusterModel& model);
ClusterModel read_cluster_model(const std::string& path);

// One binary label file per utterance plus a targets.tsv manifest.
void write_targets(const std::string& dir, const Corpus& corpus,
                   const DiscreteTargetSet& targets, int num_clusters);
// Returns labels ordered like the corpus manifest; validates frame counts.
DiscreteTargetSet read_targets(const std::string& dir, const Corpus& corpus,
                               int expected_clusters);

}  // namespace av2vec

#endif  // AV2VEC_CLUSTER_HPP_
