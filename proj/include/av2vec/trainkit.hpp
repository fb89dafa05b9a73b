// av2vec/trainkit.hpp

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

#ifndef AV2VEC_TRAINKIT_HPP_
#define AV2VEC_TRAINKIT_HPP_

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "av2vec/cluster.hpp"
#include "av2vec/config.hpp"
#include "av2vec/model.hpp"

namespace av2vec {

// Stream-role tags for the counter-derived corruption rngs. Batch layout
// and every per-sample draw are functions of (seed, utterance, role, epoch),
// so training trajectories are resumable from the update step alone.
constexpr uint64_t kTagShuffle = 0x7368;
constexpr uint64_t kTagLoop = 0x6c70;
constexpr uint64_t kTagInit = 0x696e;
constexpr uint64_t kRoleNoise = 0x6e7a;
constexpr uint64_t kRoleMaskAudio = 0x6d61;
constexpr uint64_t kRoleMaskVideo = 0x6d76;
constexpr uint64_t kRoleDropout = 0x6472;

// Training-time SNR grid used when the p_noise draw fires.
inline const std::vector<double>& train_snr_grid() {
  static const std::vector<double> grid = {-10.0, -5.0, 0.0, 5.0, 10.0};
  return grid;
}

// The seeded noise bank a configuration implies.
inline NoiseBank bank_from(const RunConfig& cfg) {
  return make_noise_bank(cfg.seed, cfg.data_noise_bank_size,
                         cfg.data_noise_bank_length, cfg.data_audio_dim);
}

template <typename T>
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;

  struct Slot {
    Tensor<T> m, v;
    int64_t t = 0;
  };
  std::vector<Slot> slots;

  void init(const ParamRegistry<T>& reg) {
    slots.clear();
    slots.reserve(reg.size());
    for (const auto& e : reg.entries)
      slots.push_back({Tensor<T>(e.tensor->shape), Tensor<T>(e.tensor->shape), 0});
  }

  // Updates every registry entry that received a gradient; entries flagged
  // false in `trainable` are skipped (their moments stay untouched).
  void step(const ParamRegistry<T>& reg, Tape<T>& tape, double lr,
            const std::vector<char>* trainable = nullptr) {
    if (slots.size() != reg.size())
      throw TrainingError("Adam state does not match parameter registry");
    for (size_t i = 0; i < reg.size(); ++i) {
      if (trainable && !(*trainable)[i]) continue;
      const Tensor<T>* g = tape.grad_for(reg.entries[i].tensor);
      if (!g) continue;
      Slot& s = slots[i];
      s.t += 1;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(s.t));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(s.t));
      Tensor<T>& p = *reg.entries[i].tensor;
      for (int64_t j = 0; j < p.numel(); ++j) {
        const double gj = (*g)[j];
        const double mj = beta1 * s.m[j] + (1.0 - beta1) * gj;
        const double vj = beta2 * s.v[j] + (1.0 - beta2) * gj * gj;
        s.m[j] = static_cast<T>(mj);
        s.v[j] = static_cast<T>(vj);
        p[j] = static_cast<T>(p[j] -
                              lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
      }
    }
  }
};

// One structured record per training step (JSON-lines in the run dir).
struct StepMetrics {
  int64_t step = 0;  // 1-based, after the step completed
  double loss_reg = 0;  // per-masked-frame mean
  double loss_mlm = 0;
  double loss_total = 0;
  double lr = 0;
  double lambda = 0;
  double target_std = 0;
  int64_t masked_frames = 0;
  double loss_reg_sum = 0;  // raw Eq-style sums
  double loss_mlm_sum = 0;
  bool mlm = false;
};

nlohmann::json metrics_to_json(const StepMetrics& m);

// Full mutable training state. Non-movable: the parameter registry holds
// pointers into the model.
template <typename T>
struct TrainState {
  RunConfig cfg;
  StudentModel<T> model;
  TeacherState<T> teacher;
  ParamRegistry<T> registry;
  Adam<T> opt;
  int64_t update_step = 0;
  Rng loop_rng;

  explicit TrainState(const RunConfig& config) : cfg(config) {
    cfg.validate();
    Rng init_rng = Rng::derive(cfg.seed, {kTagInit});
    model = StudentModel<T>(cfg.model_config(), init_rng);
    teacher = init_teacher(model.blocks);
    model.register_params(registry);
    opt.beta1 = cfg.adam_beta1;
    opt.beta2 = cfg.adam_beta2;
    opt.eps = cfg.adam_eps;
    opt.init(registry);
    loop_rng = Rng::derive(cfg.seed, {kTagLoop});
  }

  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;
};

template <typename T>
std::unique_ptr<TrainState<T>> init_train_state(const RunConfig& cfg) {
  return std::make_unique<TrainState<T>>(cfg);
}

// Deterministic epoch permutation.
inline std::vector<int> epoch_permutation(int n, uint64_t seed, int64_t epoch) {
  std::vector<int> perm(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  Rng rng = Rng::derive(seed, {kTagShuffle, static_cast<uint64_t>(epoch)});
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(i + 1));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  return perm;
}

// Batch member indices for one update step; layout is arithmetic in the
// step so resumed runs reproduce the uninterrupted trajectory.
inline std::vector<int> batch_indices(int64_t step, int n, int batch_size,
                                      uint64_t seed) {
  const int64_t bpe = std::max<int64_t>(1, n / batch_size);
  const int64_t epoch = step / bpe;
  const int64_t bi = step % bpe;
  const std::vector<int> perm = epoch_permutation(n, seed, epoch);
  std::vector<int> out;
  const int64_t begin = bi * batch_size;
  const int64_t end = std::min<int64_t>(begin + batch_size, n);
  for (int64_t i = begin; i < end; ++i)
    out.push_back(perm[static_cast<size_t>(i)]);
  return out;
}

// Per-sample student-side corruption, drawn from counter-derived streams.
struct CorruptionDraw {
  bool noisy = false;
  double snr_db = kSnrInf;
  MaskSet mask_audio;
  MaskSet mask_video;
  ModalitySelection selection = ModalitySelection::kBoth;
};

inline CorruptionDraw draw_corruption(const RunConfig& cfg,
                                      const std::string& utterance_id,
                                      int t_frames, int64_t epoch) {
  const uint64_t uh = hash_str(utterance_id);
  const uint64_t ep = static_cast<uint64_t>(epoch);
  CorruptionDraw draw;
  {
    Rng rng = Rng::derive(cfg.seed, {uh, kRoleNoise, ep});
    draw.noisy = sample_noise_decision(cfg.p_noise, rng);
    if (draw.noisy)
      draw.snr_db = train_snr_grid()[static_cast<size_t>(
          rng.uniform_int(static_cast<int64_t>(train_snr_grid().size())))];
  }
  {
    Rng rng = Rng::derive(cfg.seed, {uh, kRoleMaskAudio, ep});
    draw.mask_audio = sample_span_mask(t_frames, cfg.audio_mask_policy(), rng);
  }
  if (cfg.tied_masks) {
    draw.mask_video = draw.mask_audio;
  } else {
    Rng rng = Rng::derive(cfg.seed, {uh, kRoleMaskVideo, ep});
    draw.mask_video = sample_span_mask(t_frames, cfg.video_mask_policy(), rng);
  }
  {
    Rng rng = Rng::derive(cfg.seed, {uh, kRoleDropout, ep});
    draw.selection = sample_modality_dropout(cfg.p_m, cfg.p_a, rng);
  }
  return draw;
}

// Applies the noise decision of a draw; the mixing rng comes from the same
// noise stream so offsets are reproducible.
inline FeatureSequence corrupted_audio(const RunConfig& cfg,
                                       const SyntheticSample& sample,
                                       const CorruptionDraw& draw,
                                       const NoiseBank& bank, int64_t epoch) {
  if (!draw.noisy) return sample.audio_clean;
  Rng rng = Rng::derive(cfg.seed, {hash_str(sample.utterance_id), kRoleNoise,
                                   static_cast<uint64_t>(epoch), 1});
  const auto& noise = bank.sequences[static_cast<size_t>(
      rng.uniform_int(static_cast<int64_t>(bank.sequences.size())))];
  return mix_noise(sample.audio_clean, noise, draw.snr_db, rng);
}

// One full pretraining update: corrupt -> student forward -> teacher
// targets -> losses -> Adam -> EMA. Returns the step's metric record.
template <typename T>
StepMetrics pretrain_step(TrainState<T>& st, const Corpus& train,
                          const DiscreteTargetSet* mlm_targets,
                          const NoiseBank& bank) {
  using Var = typename Tape<T>::Var;
  const RunConfig& cfg = st.cfg;
  if (train.empty()) throw ConfigError("pretrain: empty training corpus");
  if (cfg.mlm_enabled && mlm_targets == nullptr)
    throw ConfigError(
        "mode av2vec-mlm needs discrete targets; run the cluster command "
        "first");

  const int64_t step = st.update_step;
  const int64_t bpe =
      std::max<int64_t>(1, static_cast<int64_t>(train.size()) / cfg.batch_size);
  const int64_t epoch = step / bpe;
  const std::vector<int> batch = batch_indices(
      step, static_cast<int>(train.size()), cfg.batch_size, cfg.seed);

  Tape<T> tape(/*grad_enabled=*/true);
  Var reg_sum, mlm_sum;
  int64_t masked_total = 0;
  std::vector<Tensor<T>> batch_targets_y;
  batch_targets_y.reserve(batch.size());

  for (const int idx : batch) {
    const SyntheticSample& s = train[static_cast<size_t>(idx)];
    const int t_frames = static_cast<int>(s.latent_labels.size());
    const CorruptionDraw draw = draw_corruption(cfg, s.utterance_id, t_frames, epoch);

    const FeatureSequence audio_in = corrupted_audio(cfg, s, draw, bank, epoch);
    const Tensor<T> audio_student =
        align_rates(audio_in, s.video.frame_rate_hz).frames.template cast<T>();
    const Tensor<T> audio_clean =
        align_rates(s.audio_clean, s.video.frame_rate_hz)
            .frames.template cast<T>();
    const Tensor<T> video = s.video.frames.template cast<T>();

    auto sout = st.model.forward_student(tape, audio_student, video,
                                         draw.mask_audio, draw.mask_video,
                                         draw.selection);

    Tape<T> teacher_tape(/*grad_enabled=*/false);
    const std::vector<Tensor<T>> teacher_outs = st.model.forward_teacher(
        teacher_tape, audio_clean, video, st.teacher, cfg.teacher_mode(),
        draw.selection);
    DistillTargets<T> targets =
        make_targets(teacher_outs, cfg.avg_last_k, cfg.instance_norm_eps,
                     mask_union(draw.mask_audio, draw.mask_video));
    masked_total += static_cast<int64_t>(targets.valid.size());

    Var lreg = loss_reg(tape, sout.x_reg, targets);
    reg_sum = reg_sum.valid() ? tape.add(reg_sum, lreg) : lreg;
    if (cfg.mlm_enabled) {
      Var lmlm = loss_mlm(tape, sout.mlm_logits,
                          (*mlm_targets)[static_cast<size_t>(idx)],
                          targets.valid);
      mlm_sum = mlm_sum.valid() ? tape.add(mlm_sum, lmlm) : lmlm;
    }
    batch_targets_y.push_back(std::move(targets.y));
  }

  const double inv_masked =
      1.0 / static_cast<double>(std::max<int64_t>(1, masked_total));
  Var total = loss_total(tape, reg_sum, mlm_sum, cfg.mlm_enabled);
  Var objective = tape.scale(total, static_cast<T>(inv_masked));

  StepMetrics m;
  m.mlm = cfg.mlm_enabled;
  m.loss_reg_sum = static_cast<double>(tape.val(reg_sum)[0]);
  m.loss_mlm_sum =
      cfg.mlm_enabled ? static_cast<double>(tape.val(mlm_sum)[0]) : 0.0;
  m.loss_reg = m.loss_reg_sum * inv_masked;
  m.loss_mlm = m.loss_mlm_sum * inv_masked;
  m.loss_total = static_cast<double>(tape.val(objective)[0]);
  m.masked_frames = masked_total;
  {
    std::vector<const Tensor<T>*> ys;
    ys.reserve(batch_targets_y.size());
    for (const auto& y : batch_targets_y) ys.push_back(&y);
    m.target_std = target_std(ys);
  }
  if (!std::isfinite(m.loss_total))
    throw TrainingError("non-finite loss at step " + std::to_string(step + 1) +
                        " (loss_reg_sum=" + std::to_string(m.loss_reg_sum) +
                        ", loss_mlm_sum=" + std::to_string(m.loss_mlm_sum) +
                        ")");

  tape.backward(objective);

  const LrSchedule sched = cfg.lr_schedule();
  m.lr = lr_at(std::min(step + 1, sched.total_updates), sched);
  st.opt.step(st.registry, tape, m.lr);

  m.lambda = lambda_at(st.teacher.update_step, cfg.ema_schedule());
  ema_update(st.teacher, st.model.blocks, m.lambda);

  st.update_step += 1;
  m.step = st.update_step;
  return m;
}

// Runs until cfg.total_updates, reporting each step's metrics to the sink.
template <typename T>
void pretrain(TrainState<T>& st, const Corpus& train,
              const DiscreteTargetSet* mlm_targets, const NoiseBank& bank,
              const std::function<void(const StepMetrics&)>& sink) {
  while (st.update_step < st.cfg.total_updates) {
    const StepMetrics m = pretrain_step(st, train, mlm_targets, bank);
    if (sink) sink(m);
  }
}

// --- finetuning and evaluation -------------------------------------------

template <typename T>
struct FinetuneResult {
  std::unique_ptr<ProbeModel<T>> probe;
  double final_loss = 0;
};

// Linear frame-classification probe on the encoder output. The encoder is
// frozen for the first freeze_steps updates, then trained jointly.
template <typename T>
FinetuneResult<T> finetune_probe(StudentModel<T>& model, const Corpus& train,
                                 const FinetuneConfig& fcfg,
                                 const RunConfig& cfg, const NoiseBank& bank,
                                 uint64_t probe_seed, int num_classes) {
  using Var = typename Tape<T>::Var;
  fcfg.validate();
  if (train.empty()) throw ConfigError("finetune: empty training corpus");

  Rng init_rng = Rng::derive(probe_seed, {kTagInit, 0x7072});
  auto probe = std::make_unique<ProbeModel<T>>(model.cfg.encoder.d_model,
                                               num_classes, init_rng);

  ParamRegistry<T> reg;
  model.register_params(reg);
  const size_t encoder_params = reg.size();
  probe->register_params(reg);

  Adam<T> opt;
  opt.beta1 = cfg.adam_beta1;
  opt.beta2 = cfg.adam_beta2;
  opt.eps = cfg.adam_eps;
  opt.init(reg);

  std::vector<char> probe_only(reg.size(), 0);
  for (size_t i = encoder_params; i < reg.size(); ++i) probe_only[i] = 1;

  RunConfig draw_cfg = cfg;  // corruption keys reused with the probe seed
  draw_cfg.seed = probe_seed;

  double last_loss = 0;
  for (int64_t step = 0; step < fcfg.total_updates; ++step) {
    const int64_t bpe = std::max<int64_t>(
        1, static_cast<int64_t>(train.size()) / fcfg.batch_size);
    const int64_t epoch = step / bpe;
    const std::vector<int> batch = batch_indices(
        step, static_cast<int>(train.size()), fcfg.batch_size, probe_seed);

    Tape<T> tape(true);
    Var ce_sum;
    int64_t frames_total = 0;
    for (const int idx : batch) {
      const SyntheticSample& s = train[static_cast<size_t>(idx)];
      const int t_frames = static_cast<int>(s.latent_labels.size());
      const CorruptionDraw draw =
          draw_corruption(draw_cfg, s.utterance_id, t_frames, epoch);

      FeatureSequence audio_in = s.audio_clean;
      if (fcfg.apply_noise)
        audio_in = corrupted_audio(draw_cfg, s, draw, bank, epoch);
      const ModalitySelection sel = fcfg.apply_modality_dropout
                                        ? draw.selection
                                        : ModalitySelection::kBoth;

      const Tensor<T> audio =
          align_rates(audio_in, s.video.frame_rate_hz).frames.template cast<T>();
      const Tensor<T> video = s.video.frames.template cast<T>();
      auto repr = model.forward_repr(tape, audio, video, sel);
      Var logits = probe->forward(tape, repr.final_hidden);

      std::vector<int> all_rows(static_cast<size_t>(t_frames));
      for (int t = 0; t < t_frames; ++t) all_rows[static_cast<size_t>(t)] = t;
      Var ce = tape.masked_cross_entropy(logits, s.latent_labels, all_rows);
      ce_sum = ce_sum.valid() ? tape.add(ce_sum, ce) : ce;
      frames_total += t_frames;
    }
    Var objective = tape.scale(
        ce_sum, static_cast<T>(1.0 / static_cast<double>(
                                   std::max<int64_t>(1, frames_total))));
    last_loss = static_cast<double>(tape.val(objective)[0]);
    if (!std::isfinite(last_loss))
      throw TrainingError("non-finite finetune loss at step " +
                          std::to_string(step + 1));
    tape.backward(objective);
    const bool frozen = step < fcfg.freeze_steps;
    opt.step(reg, tape, fcfg.lr, frozen ? &probe_only : nullptr);
  }

  FinetuneResult<T> result;
  result.probe = std::move(probe);
  result.final_loss = last_loss;
  return result;
}

struct EvalRow {
  std::string condition;
  double snr_db = 0;
  double frame_accuracy = 0;
  int64_t n_frames = 0;
};

std::string condition_name(ModalitySelection sel);
void write_accuracy_csv(const std::string& path,
                        const std::vector<EvalRow>& rows);

// Frame accuracy per (condition x SNR level); rows ordered condition-major,
// SNR ascending with the clean (+inf) set last.
template <typename T>
std::vector<EvalRow> evaluate(StudentModel<T>& model, ProbeModel<T>& probe,
                              const std::map<double, Corpus>& eval_sets,
                              const std::vector<ModalitySelection>& conditions) {
  std::vector<EvalRow> rows;
  for (const ModalitySelection cond : conditions) {
    for (const auto& [snr, corpus] : eval_sets) {
      int64_t correct = 0, total = 0;
      for (const auto& s : corpus) {
        const Tensor<T> audio =
            align_rates(s.audio_clean, s.video.frame_rate_hz)
                .frames.template cast<T>();
        const Tensor<T> video = s.video.frames.template cast<T>();
        Tape<T> tape(/*grad_enabled=*/false);
        auto repr = model.forward_repr(tape, audio, video, cond);
        const Tensor<T>& logits =
            tape.val(probe.forward(tape, repr.final_hidden));
        for (int t = 0; t < logits.rows(); ++t) {
          int best = 0;
          for (int c = 1; c < logits.cols(); ++c)
            if (logits.at(t, c) > logits.at(t, best)) best = c;
          correct += best == s.latent_labels[static_cast<size_t>(t)] ? 1 : 0;
          ++total;
        }
      }
      rows.push_back({condition_name(cond), snr,
                      total ? static_cast<double>(correct) /
                                  static_cast<double>(total)
                            : 0.0,
                      total});
    }
  }
  return rows;
}

}  // namespace av2vec

#endif  // AV2VEC_TRAINKIT_HPP_
