// cli.cpp

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

#include "av2vec/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "av2vec/trainkit_io.hpp"

namespace av2vec {

namespace fs = std::filesystem;

namespace {

RunConfig load_config(const CliOptions& opt) {
  if (opt.config_path.empty())
    throw ConfigError("--config is required");
  RunConfig cfg = RunConfig::from_file(opt.config_path);
  if (opt.seed_override) {
    cfg.seed = *opt.seed_override;
    cfg.validate();
  }
  return cfg;
}

void validate_corpus_matches(const RunConfig& cfg, const Corpus& corpus) {
  if (corpus.empty()) throw ConfigError("corpus is empty");
  const auto& s = corpus.front();
  const auto mismatch = [](const std::string& what) {
    throw ConfigError("corpus does not match config: " + what);
  };
  if (s.audio_clean.frames.shape[1] != cfg.data_audio_dim)
    mismatch("data_audio_dim");
  const int ratio = static_cast<int>(std::lround(
      s.audio_clean.frame_rate_hz / s.video.frame_rate_hz));
  if (ratio != cfg.data_audio_rate_ratio) mismatch("data_audio_rate_ratio");
  if (s.video.frames.shape[1] != cfg.data_video_height ||
      s.video.frames.shape[2] != cfg.data_video_width ||
      s.video.frames.shape[3] != cfg.data_video_channels)
    mismatch("video dimensions");
  for (const auto& sample : corpus)
    for (int lab : sample.latent_labels)
      if (lab < 0 || lab >= cfg.data_num_latent_states)
        mismatch("data_num_latent_states");
}

void prepare_run_dir(const CliOptions& opt, const RunConfig& cfg,
                     bool resuming) {
  const fs::path dir(opt.run_dir);
  if (fs::exists(dir / "metrics.jsonl") && !opt.force && !resuming)
    throw ConfigError("run dir '" + opt.run_dir +
                      "' already holds a run; pass --force to overwrite or "
                      "--resume to continue");
  fs::create_directories(dir / "checkpoints");
  fs::create_directories(dir / "reports");
  std::ofstream snap(dir / "config.snapshot", std::ios::trunc);
  snap << cfg.to_json().dump(2) << "\n";
}

uint64_t probe_seed_of(uint64_t seed) {
  uint64_t s = seed ^ 0x70726f6265ull;  // probe-role tag
  return splitmix64(s);
}

template <typename T>
void pretrain_impl(const CliOptions& opt, RunConfig cfg) {
  Corpus corpus = read_corpus(opt.corpus_dir);
  validate_corpus_matches(cfg, corpus);
  Corpus train, test;
  split_corpus(corpus, cfg.data_test_fraction, &train, &test);
  const NoiseBank bank = bank_from(cfg);

  DiscreteTargetSet targets;
  if (cfg.mlm_enabled) {
    const std::string tdir =
        opt.targets_dir.empty() ? opt.run_dir + "/targets" : opt.targets_dir;
    if (!fs::exists(fs::path(tdir) / "targets.tsv"))
      throw ConfigError(
          "mode av2vec-mlm needs discrete targets at '" + tdir +
          "'; run the cluster subcommand on a pretrained checkpoint first");
    targets = read_targets(tdir, train, cfg.num_clusters);
  }

  std::unique_ptr<TrainState<T>> state;
  if (!opt.resume.empty()) {
    auto loaded = load_checkpoint<T>(opt.resume);
    check_checkpoint_compatible(cfg, loaded.state->cfg);
    state = std::move(loaded.state);
    state->cfg = cfg;
  } else {
    state = init_train_state<T>(cfg);
  }
  prepare_run_dir(opt, cfg, !opt.resume.empty());

  std::ofstream metrics(fs::path(opt.run_dir) / "metrics.jsonl",
                        opt.resume.empty() ? std::ios::trunc : std::ios::app);
  const fs::path ckpt_dir = fs::path(opt.run_dir) / "checkpoints";
  const int64_t start = state->update_step;
  pretrain<T>(*state, train, cfg.mlm_enabled ? &targets : nullptr, bank,
              [&](const StepMetrics& m) {
                metrics << metrics_to_json(m).dump() << "\n";
                if (m.step % 100 == 0 || m.step == cfg.total_updates)
                  std::cout << "step " << m.step << " loss_reg " << m.loss_reg
                            << (m.mlm ? " loss_mlm " +
                                            std::to_string(m.loss_mlm)
                                      : "")
                            << " lr " << m.lr << "\n";
                if (cfg.checkpoint_interval > 0 &&
                    m.step % cfg.checkpoint_interval == 0) {
                  char name[32];
                  std::snprintf(name, sizeof(name), "step_%08lld.av2c",
                                static_cast<long long>(m.step));
                  save_checkpoint((ckpt_dir / name).string(), *state);
                }
              });
  save_checkpoint((ckpt_dir / "final.av2c").string(), *state);
  std::cout << "pretrained " << (state->update_step - start) << " steps ("
            << start << " -> " << state->update_step << "), checkpoint "
            << (ckpt_dir / "final.av2c").string() << "\n";
}

template <typename T>
void cluster_impl(const CliOptions& opt, RunConfig cfg) {
  auto loaded = load_checkpoint<T>(opt.checkpoint);
  check_checkpoint_compatible(cfg, loaded.state->cfg);
  Corpus corpus = read_corpus(opt.corpus_dir);
  validate_corpus_matches(cfg, corpus);

  const int k = opt.clusters_override > 0 ? opt.clusters_override
                                          : cfg.num_clusters;
  const int layer = opt.layer_override > 0 ? opt.layer_override
                                           : cfg.resolved_cluster_layer();
  FeatureDump dump = dump_features(loaded.state->model, corpus, layer);
  KmeansResult res =
      kmeans_fit(dump.features, k, cfg.cluster_max_iters, cfg.seed);
  std::cout << "k-means: K=" << k << " layer=" << layer << " iterations="
            << res.iterations << " objective=" << res.objective << "\n";

  ClusterModel model;
  model.feature_layer = layer;
  model.centroids = res.centroids.cast<float>();

  const std::string out =
      opt.out_dir.empty() ? opt.run_dir + "/targets" : opt.out_dir;
  fs::create_directories(out);
  write_cluster_model((fs::path(out) / "cluster.av2k").string(), model);

  DiscreteTargetSet targets = assign_targets(model, loaded.state->model, corpus);
  write_targets(out, corpus, targets, k);
  std::cout << "wrote " << targets.size() << " target files to " << out
            << "\n";
}

template <typename T>
void finetune_impl(const CliOptions& opt, RunConfig cfg) {
  auto loaded = load_checkpoint<T>(opt.checkpoint);
  check_checkpoint_compatible(cfg, loaded.state->cfg);
  Corpus corpus = read_corpus(opt.corpus_dir);
  validate_corpus_matches(cfg, corpus);
  Corpus train, test;
  split_corpus(corpus, cfg.data_test_fraction, &train, &test);
  const NoiseBank bank = bank_from(cfg);
  prepare_run_dir(opt, cfg, /*resuming=*/true);

  const uint64_t probe_seed = probe_seed_of(cfg.seed);
  auto result =
      finetune_probe(loaded.state->model, train, cfg.finetune_config(), cfg,
                     bank, probe_seed, cfg.data_num_latent_states);

  const std::string out =
      (fs::path(opt.run_dir) / "checkpoints" / "probe.av2c").string();
  save_checkpoint(out, *loaded.state, result.probe.get());

  std::map<double, Corpus> clean_set;
  clean_set.emplace(kSnrInf, test);
  const auto rows = evaluate(loaded.state->model, *result.probe, clean_set,
                             {ModalitySelection::kBoth});
  std::cout << "finetuned probe: final loss " << result.final_loss
            << ", clean both-modality test accuracy " << rows[0].frame_accuracy
            << " over " << rows[0].n_frames << " frames\n"
            << "probe checkpoint: " << out << "\n";
}

template <typename T>
void eval_impl(const CliOptions& opt, RunConfig cfg) {
  auto loaded = load_checkpoint<T>(opt.checkpoint);
  check_checkpoint_compatible(cfg, loaded.state->cfg);
  if (!loaded.probe)
    throw ConfigError("checkpoint has no probe head; run finetune first");
  Corpus corpus = read_corpus(opt.corpus_dir);
  validate_corpus_matches(cfg, corpus);
  Corpus train, test;
  split_corpus(corpus, cfg.data_test_fraction, &train, &test);
  if (test.empty()) throw ConfigError("test split is empty");
  const NoiseBank bank = bank_from(cfg);

  const auto sets = build_eval_sets(test, bank, cfg.seed);
  const auto rows = evaluate(loaded.state->model, *loaded.probe, sets,
                             {ModalitySelection::kAudioOnly,
                              ModalitySelection::kVideoOnly,
                              ModalitySelection::kBoth});
  fs::create_directories(fs::path(opt.run_dir) / "reports");
  const std::string csv =
      (fs::path(opt.run_dir) / "reports" / "accuracy.csv").string();
  write_accuracy_csv(csv, rows);
  std::printf("%-12s %8s %10s %10s\n", "condition", "snr_db", "accuracy",
              "frames");
  for (const auto& r : rows)
    std::printf("%-12s %8s %10.4f %10lld\n", r.condition.c_str(),
                std::isinf(r.snr_db) ? "inf" : std::to_string(static_cast<int>(r.snr_db)).c_str(),
                r.frame_accuracy, static_cast<long long>(r.n_frames));
  std::cout << "report: " << csv << "\n";
}

template <typename F>
void dispatch_dtype(const RunConfig& cfg, F&& f) {
  if (cfg.dtype == "f64")
    f(double{});
  else
    f(float{});
}

}  // namespace

void run_gen_data(const CliOptions& opt) {
  const RunConfig cfg = load_config(opt);
  const std::string out = opt.out_dir.empty() ? "corpus" : opt.out_dir;
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!opt.force)
      throw ConfigError("output dir '" + out +
                        "' is not empty; pass --force to regenerate");
    fs::remove_all(out);
  }
  fs::create_directories(out);
  const Corpus corpus = generate_corpus(cfg.corpus_spec());
  write_corpus(out, corpus);
  int64_t frames = 0;
  for (const auto& s : corpus) frames += static_cast<int64_t>(s.latent_labels.size());
  std::cout << "wrote " << corpus.size() << " utterances, " << frames
            << " frames, manifest " << (fs::path(out) / "manifest.tsv").string()
            << "\n";
}

void run_pretrain(const CliOptions& opt) {
  RunConfig cfg = load_config(opt);
  dispatch_dtype(cfg, [&](auto tag) {
    pretrain_impl<decltype(tag)>(opt, cfg);
  });
}

void run_cluster(const CliOptions& opt) {
  RunConfig cfg = load_config(opt);
  dispatch_dtype(cfg, [&](auto tag) {
    cluster_impl<decltype(tag)>(opt, cfg);
  });
}

void run_finetune(const CliOptions& opt) {
  RunConfig cfg = load_config(opt);
  dispatch_dtype(cfg, [&](auto tag) {
    finetune_impl<decltype(tag)>(opt, cfg);
  });
}

void run_eval(const CliOptions& opt) {
  RunConfig cfg = load_config(opt);
  dispatch_dtype(cfg, [&](auto tag) {
    eval_impl<decltype(tag)>(opt, cfg);
  });
}

std::vector<std::string> config_keys_for(const std::string& subcommand) {
  const auto& all = RunConfig::known_keys();
  const auto with_prefixes = [&](std::initializer_list<const char*> prefixes,
                                 std::initializer_list<const char*> extras) {
    std::vector<std::string> keys;
    for (const auto& k : all)
      for (const char* p : prefixes)
        if (k.rfind(p, 0) == 0) {
          keys.push_back(k);
          break;
        }
    for (const char* e : extras)
      if (std::find(keys.begin(), keys.end(), e) == keys.end())
        keys.emplace_back(e);
    std::sort(keys.begin(), keys.end());
    return keys;
  };
  const std::initializer_list<const char*> structural = {
      "d_feat",      "video_channels", "num_res_blocks", "num_layers",
      "d_model",     "ffn_dim",        "num_heads",      "mlm_enabled",
      "num_clusters", "dtype",         "seed",           "mode"};
  if (subcommand == "gen-data")
    return with_prefixes({"data_"}, {"seed"});
  if (subcommand == "pretrain")
    return with_prefixes(
        {"data_", "mask_rate_", "span_len_", "ema_", "adam_"},
        {"seed", "mode", "dtype", "p_noise", "p_m", "p_a", "tied_masks",
         "num_layers", "d_model", "ffn_dim", "num_heads", "mlm_enabled",
         "num_clusters", "d_feat", "video_channels", "num_res_blocks",
         "avg_last_k", "teacher_dropout_mode", "instance_norm_eps", "peak_lr",
         "total_updates", "warmup_frac", "constant_frac", "decay_frac",
         "final_lr_ratio", "batch_size", "checkpoint_interval"});
  if (subcommand == "cluster")
    return with_prefixes({"cluster_", "data_"}, structural);
  if (subcommand == "finetune")
    return with_prefixes(
        {"ft_", "data_", "mask_rate_", "span_len_", "adam_"},
        {"seed", "mode", "dtype", "p_noise", "p_m", "p_a", "tied_masks",
         "num_layers", "d_model", "ffn_dim", "num_heads", "mlm_enabled",
         "num_clusters", "d_feat", "video_channels", "num_res_blocks"});
  if (subcommand == "eval")
    return with_prefixes({"data_"}, structural);
  return all;
}

}  // namespace av2vec
