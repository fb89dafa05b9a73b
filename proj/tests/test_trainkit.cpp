#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "av2vec/trainkit.hpp"
#include "av2vec/trainkit_io.hpp"

using namespace av2vec;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_run(bool mlm = false, const std::string& dtype = "f64") {
  RunConfig c;
  c.mode = mlm ? "av2vec-mlm" : "av2vec";
  c.mlm_enabled = mlm;
  c.seed = 77;
  c.data_num_utterances = 10;
  c.data_frames_min = 8;
  c.data_frames_max = 12;
  c.data_num_latent_states = 3;
  c.data_audio_dim = 4;
  c.data_video_height = 4;
  c.data_video_width = 4;
  c.data_video_channels = 1;
  c.data_audio_rate_ratio = 1;
  c.data_noise_bank_size = 2;
  c.data_noise_bank_length = 64;
  c.d_feat = 6;
  c.video_channels = 2;
  c.num_res_blocks = 1;
  c.span_len_audio = 3;
  c.span_len_video = 2;
  c.num_layers = 2;
  c.d_model = 8;
  c.ffn_dim = 16;
  c.num_heads = 2;
  c.num_clusters = 4;
  c.ema_n = 20;
  c.avg_last_k = 2;
  c.peak_lr = 1e-3;
  c.total_updates = 10;
  c.batch_size = 3;
  c.checkpoint_interval = 0;
  c.dtype = dtype;
  c.ft_freeze_steps = 2;
  c.ft_total_updates = 4;
  c.ft_lr = 1e-2;
  c.ft_batch_size = 4;
  c.validate();
  return c;
}

std::vector<Tensor<double>> snapshot(const ParamRegistry<double>& reg) {
  std::vector<Tensor<double>> out;
  for (const auto& e : reg.entries) out.push_back(*e.tensor);
  return out;
}

}  // namespace

TEST_SUITE("trainkit") {

TEST_CASE("lr schedule hits the pinned values") {
  LrSchedule sched;
  sched.peak_lr = 5e-4;
  sched.total_updates = 100000;
  CHECK(lr_at(3000, sched) == doctest::Approx(5e-4).epsilon(1e-15));
  CHECK(lr_at(1500, sched) == doctest::Approx(2.5e-4).epsilon(1e-15));
  CHECK(lr_at(50000, sched) == doctest::Approx(5e-4).epsilon(1e-15));
  CHECK(lr_at(100000, sched) == doctest::Approx(2.5e-5).epsilon(1e-12));
}

TEST_CASE("lr schedule is continuous at both phase boundaries") {
  LrSchedule sched;
  sched.peak_lr = 5e-4;
  sched.total_updates = 100000;
  // Warmup formula at the boundary equals the constant value.
  const double warmup_end = sched.peak_lr * 3000.0 / 3000.0;
  CHECK(std::abs(warmup_end - lr_at(3000, sched)) / sched.peak_lr < 1e-12);
  // Decay formula at its start equals the constant value.
  const double decay_start = sched.peak_lr * std::pow(sched.final_lr_ratio, 0.0);
  CHECK(std::abs(decay_start - lr_at(93000, sched)) / sched.peak_lr < 1e-12);
  // Steps adjacent to each boundary never jump by more than one warmup or
  // decay increment.
  for (int64_t s : {2999, 3000, 92999, 93000, 99999}) {
    const double jump = std::abs(lr_at(s + 1, sched) - lr_at(s, sched));
    CHECK(jump <= sched.peak_lr * 1e-3);
  }
}

TEST_CASE("lr schedule validation") {
  LrSchedule sched;
  sched.warmup_frac = 0.5;  // fractions no longer sum to 1
  CHECK_THROWS_AS(sched.validate(), ConfigError);
  LrSchedule ok;
  CHECK_THROWS_AS(lr_at(-1, ok), ConfigError);
  CHECK_THROWS_AS(lr_at(ok.total_updates + 1, ok), ConfigError);
}

TEST_CASE("one Adam step on a quadratic bowl reduces the loss") {
  Tensor<double> x({1, 1});
  x[0] = 5.0;
  Tensor<double> target({1, 1});
  target[0] = 3.0;
  ParamRegistry<double> reg;
  reg.add("x", &x);
  Adam<double> opt;
  opt.init(reg);

  const auto loss_value = [&]() {
    Tape<double> tape(true);
    return tape.val(tape.masked_sq_error(tape.param(&x), target, {0}))[0];
  };
  const double before = loss_value();
  Tape<double> tape(true);
  auto loss = tape.masked_sq_error(tape.param(&x), target, {0});
  tape.backward(loss);
  opt.step(reg, tape, 0.1);
  CHECK(loss_value() < before);
}

TEST_CASE("pretrain_step produces a deterministic metric stream") {
  const RunConfig cfg = tiny_run();
  const Corpus corpus = generate_corpus(cfg.corpus_spec());
  const NoiseBank bank = bank_from(cfg);

  auto a = init_train_state<double>(cfg);
  auto b = init_train_state<double>(cfg);
  for (int i = 0; i < 3; ++i) {
    const StepMetrics ma = pretrain_step(*a, corpus, nullptr, bank);
    const StepMetrics mb = pretrain_step(*b, corpus, nullptr, bank);
    CHECK(ma.loss_reg == mb.loss_reg);
    CHECK(ma.loss_total == mb.loss_total);
    CHECK(ma.target_std == mb.target_std);
    CHECK(ma.masked_frames == mb.masked_frames);
    CHECK(ma.lr == mb.lr);
    CHECK(ma.lambda == mb.lambda);
    CHECK(std::isfinite(ma.loss_reg));
    CHECK(ma.masked_frames > 0);
  }
}

TEST_CASE("every step applies the exact EMA formula to the teacher") {
  const RunConfig cfg = tiny_run();
  const Corpus corpus = generate_corpus(cfg.corpus_spec());
  const NoiseBank bank = bank_from(cfg);
  auto st = init_train_state<double>(cfg);

  for (int step = 0; step < 4; ++step) {
    ParamRegistry<double> treg;
    st->teacher.register_params(treg, "t");
    const std::vector<Tensor<double>> theta_prev = snapshot(treg);
    const double lam = lambda_at(st->teacher.update_step, cfg.ema_schedule());

    pretrain_step(*st, corpus, nullptr, bank);

    ParamRegistry<double> sreg;
    for (size_t i = 0; i < st->model.blocks.size(); ++i)
      st->model.blocks[i].register_params(sreg, "t.block" + std::to_string(i));
    double max_dev = 0;
    for (size_t i = 0; i < treg.size(); ++i) {
      const Tensor<double>& now = *treg.entries[i].tensor;
      const Tensor<double>& phi = *sreg.entries[i].tensor;
      for (int64_t j = 0; j < now.numel(); ++j) {
        const double expect = lam * theta_prev[i][j] + (1.0 - lam) * phi[j];
        max_dev = std::max(max_dev, std::abs(now[j] - expect));
      }
    }
    CHECK(max_dev < 1e-12);
  }
}

TEST_CASE("metrics JSON omits loss_mlm unless the MLM task is on") {
  StepMetrics m;
  m.step = 3;
  m.loss_reg = 1.0;
  m.mlm = false;
  const auto j = metrics_to_json(m);
  CHECK(!j.contains("loss_mlm"));
  CHECK(j.contains("loss_reg"));
  CHECK(j.contains("lambda"));
  CHECK(j.contains("target_std"));
  CHECK(j.contains("masked_frames"));
  m.mlm = true;
  CHECK(metrics_to_json(m).contains("loss_mlm"));
}

TEST_CASE("MLM-mode steps consume discrete targets") {
  const RunConfig cfg = tiny_run(/*mlm=*/true);
  const Corpus corpus = generate_corpus(cfg.corpus_spec());
  const NoiseBank bank = bank_from(cfg);
  DiscreteTargetSet targets(corpus.size());
  Rng rng(5);
  for (size_t u = 0; u < corpus.size(); ++u)
    for (size_t t = 0; t < corpus[u].latent_labels.size(); ++t)
      targets[u].push_back(static_cast<int>(rng.uniform_int(cfg.num_clusters)));

  auto st = init_train_state<double>(cfg);
  const StepMetrics m = pretrain_step(*st, corpus, &targets, bank);
  CHECK(m.mlm);
  CHECK(std::isfinite(m.loss_mlm));
  CHECK(m.loss_mlm > 0);
  CHECK(m.loss_total ==
        doctest::Approx(m.loss_reg + m.loss_mlm).epsilon(1e-12));

  auto st2 = init_train_state<double>(cfg);
  CHECK_THROWS_AS(pretrain_step(*st2, corpus, nullptr, bank), ConfigError);
}

TEST_CASE("resume reproduces the uninterrupted trajectory bit-exactly") {
  const fs::path dir = fs::temp_directory_path() / "av2vec_test_resume";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunConfig cfg = tiny_run();
  cfg.total_updates = 8;
  const Corpus corpus = generate_corpus(cfg.corpus_spec());
  const NoiseBank bank = bank_from(cfg);

  std::vector<StepMetrics> straight;
  auto a = init_train_state<double>(cfg);
  pretrain<double>(*a, corpus, nullptr, bank,
                   [&](const StepMetrics& m) { straight.push_back(m); });

  auto b = init_train_state<double>(cfg);
  for (int i = 0; i < 4; ++i) pretrain_step(*b, corpus, nullptr, bank);
  const std::string ckpt = (dir / "mid.av2c").string();
  save_checkpoint(ckpt, *b);

  auto loaded = load_checkpoint<double>(ckpt);
  CHECK(loaded.state->update_step == 4);
  std::vector<StepMetrics> resumed;
  pretrain<double>(*loaded.state, corpus, nullptr, bank,
                   [&](const StepMetrics& m) { resumed.push_back(m); });
  REQUIRE(resumed.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(resumed[static_cast<size_t>(i)].step ==
          straight[static_cast<size_t>(i + 4)].step);
    CHECK(resumed[static_cast<size_t>(i)].loss_reg ==
          straight[static_cast<size_t>(i + 4)].loss_reg);
    CHECK(resumed[static_cast<size_t>(i)].loss_total ==
          straight[static_cast<size_t>(i + 4)].loss_total);
  }
  for (size_t i = 0; i < a->registry.size(); ++i)
    CHECK(a->registry.entries[i].tensor->data ==
          loaded.state->registry.entries[i].tensor->data);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint files round-trip byte for byte") {
  const fs::path dir = fs::temp_directory_path() / "av2vec_test_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const RunConfig cfg = tiny_run();
  const Corpus corpus = generate_corpus(cfg.corpus_spec());
  const NoiseBank bank = bank_from(cfg);
  auto st = init_train_state<double>(cfg);
  for (int i = 0; i < 2; ++i) pretrain_step(*st, corpus, nullptr, bank);

  const std::string p1 = (dir / "a.av2c").string();
  const std::string p2 = (dir / "b.av2c").string();
  save_checkpoint(p1, *st);
  auto loaded = load_checkpoint<double>(p1);
  save_checkpoint(p2, *loaded.state);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)),
                       std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)),
                       std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  SUBCASE("truncation is a corrupt-file error") {
    fs::resize_file(p1, fs::file_size(p1) / 3);
    CHECK_THROWS_AS(load_checkpoint<double>(p1), CorruptFileError);
  }
  SUBCASE("dtype mismatch is a configuration error") {
    CHECK_THROWS_AS(load_checkpoint<float>(p2), ConfigError);
  }
  SUBCASE("structural config mismatch is reported by key") {
    RunConfig other = cfg;
    other.d_model = 16;
    try {
      check_checkpoint_compatible(other, st->cfg);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("d_model") != std::string::npos);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("zero total updates leaves the state at initialization") {
  RunConfig cfg = tiny_run();
  cfg.total_updates = 0;
  const Corpus corpus = generate_corpus(cfg.corpus_spec());
  const NoiseBank bank = bank_from(cfg);
  auto st = init_train_state<double>(cfg);
  auto fresh = init_train_state<double>(cfg);
  pretrain<double>(*st, corpus, nullptr, bank, nullptr);
  CHECK(st->update_step == 0);
  for (size_t i = 0; i < st->registry.size(); ++i)
    CHECK(st->registry.entries[i].tensor->data ==
          fresh->registry.entries[i].tensor->data);
}

TEST_CASE("non-finite losses abort with a diagnostic") {
  const RunConfig cfg = tiny_run();
  const Corpus corpus = generate_corpus(cfg.corpus_spec());
  const NoiseBank bank = bank_from(cfg);
  auto st = init_train_state<double>(cfg);
  st->model.input_proj.weight[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(pretrain_step(*st, corpus, nullptr, bank), TrainingError);
}

TEST_CASE("frozen finetuning never touches encoder parameters") {
  RunConfig cfg = tiny_run();
  const Corpus corpus = generate_corpus(cfg.corpus_spec());
  const NoiseBank bank = bank_from(cfg);
  auto st = init_train_state<double>(cfg);

  FinetuneConfig fcfg = cfg.finetune_config();
  fcfg.freeze_steps = fcfg.total_updates;  // fully frozen
  const std::vector<Tensor<double>> before = snapshot(st->registry);
  auto result = finetune_probe(st->model, corpus, fcfg, cfg, bank, 31,
                               cfg.data_num_latent_states);
  for (size_t i = 0; i < st->registry.size(); ++i)
    CHECK(st->registry.entries[i].tensor->data == before[i].data);
  CHECK(std::isfinite(result.final_loss));

  // The probe itself must have moved away from its initialization.
  Rng init_rng = Rng::derive(31, {kTagInit, 0x7072});
  ProbeModel<double> fresh(cfg.d_model, cfg.data_num_latent_states, init_rng);
  CHECK(result.probe->head.weight.data != fresh.head.weight.data);
}

TEST_CASE("joint finetuning updates the encoder after the freeze") {
  RunConfig cfg = tiny_run();
  const Corpus corpus = generate_corpus(cfg.corpus_spec());
  const NoiseBank bank = bank_from(cfg);
  auto st = init_train_state<double>(cfg);
  FinetuneConfig fcfg = cfg.finetune_config();
  fcfg.freeze_steps = 1;
  fcfg.total_updates = 3;
  const std::vector<Tensor<double>> before = snapshot(st->registry);
  finetune_probe(st->model, corpus, fcfg, cfg, bank, 32,
                 cfg.data_num_latent_states);
  bool changed = false;
  for (size_t i = 0; i < st->registry.size(); ++i)
    if (st->registry.entries[i].tensor->data != before[i].data) changed = true;
  CHECK(changed);
}

TEST_CASE("evaluation covers the condition x SNR grid") {
  RunConfig cfg = tiny_run();
  const Corpus corpus = generate_corpus(cfg.corpus_spec());
  const NoiseBank bank = bank_from(cfg);
  auto st = init_train_state<double>(cfg);
  Rng prng(3);
  ProbeModel<double> probe(cfg.d_model, cfg.data_num_latent_states, prng);

  const auto sets = build_eval_sets(corpus, bank, cfg.seed);
  const auto rows = evaluate(st->model, probe, sets,
                             {ModalitySelection::kAudioOnly,
                              ModalitySelection::kVideoOnly,
                              ModalitySelection::kBoth});
  CHECK(rows.size() == 18);

  // Video-only accuracy cannot depend on audio noise.
  double vid_acc = -1;
  for (const auto& r : rows)
    if (r.condition == "video-only") {
      if (vid_acc < 0) vid_acc = r.frame_accuracy;
      CHECK(r.frame_accuracy == vid_acc);
    }

  const auto empty = evaluate(st->model, probe, sets, {});
  CHECK(empty.empty());

  const fs::path csv = fs::temp_directory_path() / "av2vec_eval.csv";
  write_accuracy_csv(csv.string(), rows);
  std::ifstream is(csv);
  std::string header;
  std::getline(is, header);
  CHECK(header == "condition,snr_db,frame_accuracy,n_frames");
  int lines = 0;
  std::string line;
  bool has_inf = false;
  while (std::getline(is, line))
    if (!line.empty()) {
      ++lines;
      if (line.find(",inf,") != std::string::npos) has_inf = true;
    }
  CHECK(lines == 18);
  CHECK(has_inf);
  fs::remove(csv);
}

TEST_CASE("tied masks reuse the audio indices for video") {
  RunConfig cfg = tiny_run();
  cfg.tied_masks = true;
  const CorruptionDraw tied = draw_corruption(cfg, "utt00001", 40, 0);
  CHECK(tied.mask_audio.indices == tied.mask_video.indices);

  cfg.tied_masks = false;
  bool any_diff = false;
  for (int e = 0; e < 5; ++e) {
    const CorruptionDraw d = draw_corruption(cfg, "utt00001", 40, e);
    if (d.mask_audio.indices != d.mask_video.indices) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("batch layout is arithmetic in the step") {
  const auto b0 = batch_indices(0, 10, 3, 9);
  const auto b0_again = batch_indices(0, 10, 3, 9);
  CHECK(b0 == b0_again);
  CHECK(b0.size() == 3);
  // Small corpora fall back to one whole-corpus batch per step.
  const auto small = batch_indices(5, 2, 8, 9);
  CHECK(small.size() == 2);
}

}  // TEST_SUITE
