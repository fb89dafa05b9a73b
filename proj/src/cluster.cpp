// cluster.cpp

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

#include "av2vec/cluster.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "av2vec/errors.hpp"
#include "av2vec/rng.hpp"

namespace av2vec {

namespace {

double sq_dist(const double* a, const double* b, int d) {
  double acc = 0;
  for (int i = 0; i < d; ++i) {
    const double dv = a[i] - b[i];
    acc += dv * dv;
  }
  return acc;
}

}  // namespace

int nearest_centroid(const Tensor<double>& centroids, const double* point) {
  const int k = centroids.rows(), d = centroids.cols();
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < k; ++c) {
    const double dist =
        sq_dist(point, &centroids.data[static_cast<size_t>(c) * d], d);
    if (dist < best_d) {  // strict: ties keep the lowest index
      best_d = dist;
      best = c;
    }
  }
  return best;
}

KmeansResult kmeans_fit(const Tensor<double>& features, int k, int max_iters,
                        uint64_t seed) {
  if (features.rank() != 2) throw ShapeError("kmeans_fit: need [N, d]");
  const int n = features.rows(), d = features.cols();
  if (k < 1) throw ConfigError("kmeans_fit: K must be >= 1");
  if (n < k)
    throw ConfigError("kmeans_fit: need at least K points, got " +
                      std::to_string(n) + " < " + std::to_string(k));
  if (max_iters < 1) throw ConfigError("kmeans_fit: max_iters must be >= 1");

  Rng rng = Rng::derive(seed, {0x6b6d});
  const auto point = [&](int i) {
    return &features.data[static_cast<size_t>(i) * d];
  };

  // k-means++ seeding.
  KmeansResult res;
  res.centroids = Tensor<double>({k, d});
  std::vector<double> min_d(static_cast<size_t>(n),
                            std::numeric_limits<double>::infinity());
  {
    const int first = static_cast<int>(rng.uniform_int(n));
    for (int c = 0; c < d; ++c) res.centroids.at(0, c) = point(first)[c];
  }
  for (int chosen = 1; chosen < k; ++chosen) {
    double total = 0;
    for (int i = 0; i < n; ++i) {
      const double dist =
          sq_dist(point(i),
                  &res.centroids.data[static_cast<size_t>(chosen - 1) * d], d);
      min_d[static_cast<size_t>(i)] = std::min(min_d[static_cast<size_t>(i)], dist);
      total += min_d[static_cast<size_t>(i)];
    }
    int pick = n - 1;
    if (total > 0) {
      const double r = rng.uniform() * total;
      double acc = 0;
      for (int i = 0; i < n; ++i) {
        acc += min_d[static_cast<size_t>(i)];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<int>(rng.uniform_int(n));
    }
    for (int c = 0; c < d; ++c)
      res.centroids.at(chosen, c) = point(pick)[c];
  }

  // Lloyd iterations.
  res.assignments.assign(static_cast<size_t>(n), -1);
  std::vector<int> counts(static_cast<size_t>(k), 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    double objective = 0;
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      const int a = nearest_centroid(res.centroids, point(i));
      objective +=
          sq_dist(point(i), &res.centroids.data[static_cast<size_t>(a) * d], d);
      if (a != res.assignments[static_cast<size_t>(i)]) changed = true;
      res.assignments[static_cast<size_t>(i)] = a;
      counts[static_cast<size_t>(a)]++;
    }
    res.objective_history.push_back(objective);
    res.objective = objective;
    res.iterations = iter + 1;
    if (!changed) break;

    Tensor<double> sums({k, d});
    for (int i = 0; i < n; ++i) {
      const int a = res.assignments[static_cast<size_t>(i)];
      for (int c = 0; c < d; ++c) sums.at(a, c) += point(i)[c];
    }
    for (int c0 = 0; c0 < k; ++c0) {
      if (counts[static_cast<size_t>(c0)] > 0) {
        for (int c = 0; c < d; ++c)
          res.centroids.at(c0, c) =
              sums.at(c0, c) / counts[static_cast<size_t>(c0)];
      } else {
        // Re-seed an empty cluster at the point farthest from its assigned
        // centroid; that point gains a zero-distance option, nothing loses.
        int far = 0;
        double far_d = -1;
        for (int i = 0; i < n; ++i) {
          const int a = res.assignments[static_cast<size_t>(i)];
          const double dist = sq_dist(
              point(i), &res.centroids.data[static_cast<size_t>(a) * d], d);
          if (dist > far_d) {
            far_d = dist;
            far = i;
          }
        }
        for (int c = 0; c < d; ++c) res.centroids.at(c0, c) = point(far)[c];
      }
    }
  }
  return res;
}

// --- persistence ---------------------------------------------------------

namespace {

constexpr uint32_t kClusterMagic = 0x4b325641;  // "AV2K"
constexpr uint32_t kClusterVersion = 1;
constexpr uint32_t kTargetMagic = 0x54325641;  // "AV2T"

void put_u32(std::ofstream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t get_u32(std::ifstream& is, const std::string& path) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw CorruptFileError("truncated file: " + path);
  return v;
}

}  // namespace

void write_cluster_model(const std::string& path, const ClusterModel& model) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CorruptFileError("cannot open for write: " + path);
  put_u32(os, kClusterMagic);
  put_u32(os, kClusterVersion);
  put_u32(os, static_cast<uint32_t>(model.centroids.shape[0]));
  put_u32(os, static_cast<uint32_t>(model.centroids.shape[1]));
  put_u32(os, static_cast<uint32_t>(model.feature_layer));
  os.write(reinterpret_cast<const char*>(model.centroids.data.data()),
           static_cast<std::streamsize>(model.centroids.data.size() *
                                        sizeof(float)));
  if (!os) throw CorruptFileError("write failed: " + path);
}

ClusterModel read_cluster_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptFileError("cannot open: " + path);
  if (get_u32(is, path) != kClusterMagic)
    throw CorruptFileError("bad magic in cluster model: " + path);
  if (get_u32(is, path) != kClusterVersion)
    throw CorruptFileError("unsupported cluster model version: " + path);
  const uint32_t k = get_u32(is, path);
  const uint32_t d = get_u32(is, path);
  ClusterModel model;
  model.feature_layer = static_cast<int>(get_u32(is, path));
  model.centroids = Tensor<float>({static_cast<int>(k), static_cast<int>(d)});
  is.read(reinterpret_cast<char*>(model.centroids.data.data()),
          static_cast<std::streamsize>(model.centroids.data.size() *
                                       sizeof(float)));
  if (!is) throw CorruptFileError("truncated cluster model: " + path);
  return model;
}

void write_targets(const std::string& dir, const Corpus& corpus,
                   const DiscreteTargetSet& targets, int num_clusters) {
  namespace fs = std::filesystem;
  if (targets.size() != corpus.size())
    throw ShapeError("write_targets: target/corpus size mismatch");
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "targets.tsv",
                         std::ios::trunc | std::ios::binary);
  for (size_t u = 0; u < corpus.size(); ++u) {
    const std::string rel = corpus[u].utterance_id + ".tgt";
    std::ofstream os(fs::path(dir) / rel, std::ios::binary | std::ios::trunc);
    if (!os) throw CorruptFileError("cannot write target file in " + dir);
    put_u32(os, kTargetMagic);
    put_u32(os, 1u);
    put_u32(os, static_cast<uint32_t>(targets[u].size()));
    put_u32(os, static_cast<uint32_t>(num_clusters));
    for (int lab : targets[u]) put_u32(os, static_cast<uint32_t>(lab));
    manifest << corpus[u].utterance_id << "\t" << rel << "\t"
             << targets[u].size() << "\n";
  }
}

DiscreteTargetSet read_targets(const std::string& dir, const Corpus& corpus,
                               int expected_clusters) {
  namespace fs = std::filesystem;
  DiscreteTargetSet targets(corpus.size());
  for (size_t u = 0; u < corpus.size(); ++u) {
    const std::string path =
        (fs::path(dir) / (corpus[u].utterance_id + ".tgt")).string();
    std::ifstream is(path, std::ios::binary);
    if (!is)
      throw CorruptFileError("missing target file for " +
                             corpus[u].utterance_id + " in " + dir);
    if (get_u32(is, path) != kTargetMagic)
      throw CorruptFileError("bad magic in target file: " + path);
    if (get_u32(is, path) != 1u)
      throw CorruptFileError("unsupported target file version: " + path);
    const uint32_t t_frames = get_u32(is, path);
    const uint32_t k = get_u32(is, path);
    if (t_frames != corpus[u].latent_labels.size())
      throw ConfigError("target frame count mismatch for " +
                        corpus[u].utterance_id);
    if (expected_clusters > 0 &&
        k != static_cast<uint32_t>(expected_clusters))
      throw ConfigError("target cluster count " + std::to_string(k) +
                        " does not match configured num_clusters " +
                        std::to_string(expected_clusters));
    targets[u].resize(t_frames);
    for (uint32_t t = 0; t < t_frames; ++t)
      targets[u][t] = static_cast<int>(get_u32(is, path));
  }
  return targets;
}

}  // namespace av2vec
