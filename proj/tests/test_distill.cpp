#include <doctest.h>

#include <cmath>

#include "av2vec/distill.hpp"
#include "av2vec/model.hpp"

using namespace av2vec;

namespace {

ModelConfig tiny_model_cfg() {
  ModelConfig cfg;
  cfg.audio_dim = 4;
  cfg.audio_rate_ratio = 1;
  cfg.d_feat = 6;
  cfg.video_channels_in = 1;
  cfg.video_channels = 2;
  cfg.num_res_blocks = 1;
  cfg.encoder.num_layers = 2;
  cfg.encoder.d_model = 8;
  cfg.encoder.ffn_dim = 16;
  cfg.encoder.num_heads = 2;
  return cfg;
}

}  // namespace

TEST_SUITE("distill") {

TEST_CASE("lambda schedule endpoints and midpoint") {
  const EmaSchedule sched{0.999, 0.9999, 30000};
  CHECK(lambda_at(0, sched) == doctest::Approx(0.999).epsilon(1e-15));
  CHECK(std::abs(lambda_at(30000, sched) - 0.9999) < 1e-12);
  CHECK(std::abs(lambda_at(60000, sched) - 0.9999) < 1e-12);
  CHECK(std::abs(lambda_at(15000, sched) - 0.99945) < 1e-12);
}

TEST_CASE("lambda schedule is non-decreasing and clamped") {
  const EmaSchedule sched{0.999, 0.9999, 1000};
  double prev = 0;
  for (int64_t step = 0; step <= 3000; step += 7) {
    const double lam = lambda_at(step, sched);
    CHECK(lam >= prev);
    CHECK(lam <= 0.9999);
    prev = lam;
  }
  CHECK_THROWS_AS(lambda_at(-1, sched), ConfigError);
  CHECK_THROWS_AS(lambda_at(0, EmaSchedule{0.5, 1.0, 10}), ConfigError);
  CHECK_THROWS_AS(lambda_at(0, EmaSchedule{0.9, 0.5, 10}), ConfigError);
}

TEST_CASE("ema_update implements the momentum formula") {
  Rng rng(1);
  EncoderConfig ecfg;
  ecfg.num_layers = 1;
  ecfg.d_model = 8;
  ecfg.ffn_dim = 12;
  ecfg.num_heads = 2;
  std::vector<TransformerBlock<double>> student;
  student.emplace_back(ecfg, rng);
  TeacherState<double> teacher = init_teacher(student);

  SUBCASE("initialization copies the student") {
    CHECK(teacher.blocks[0].wq.weight.data == student[0].wq.weight.data);
    CHECK(teacher.update_step == 0);
  }
  SUBCASE("lambda = 1 leaves the teacher bit-identical") {
    for (auto& v : student[0].wq.weight.data) v += 0.25;
    const Tensor<double> before = teacher.blocks[0].wq.weight;
    ema_update(teacher, student, 1.0);
    CHECK(teacher.blocks[0].wq.weight.data == before.data);
    CHECK(teacher.update_step == 1);
  }
  SUBCASE("lambda = 0 copies the student") {
    for (auto& v : student[0].wq.weight.data) v += 0.25;
    ema_update(teacher, student, 0.0);
    CHECK(teacher.blocks[0].wq.weight.data == student[0].wq.weight.data);
  }
  SUBCASE("scalar arithmetic case: theta=1, phi=0, lambda=0.999") {
    std::fill(teacher.blocks[0].wq.weight.data.begin(),
              teacher.blocks[0].wq.weight.data.end(), 1.0);
    std::fill(student[0].wq.weight.data.begin(),
              student[0].wq.weight.data.end(), 0.0);
    ema_update(teacher, student, 0.999);
    for (const double v : teacher.blocks[0].wq.weight.data)
      CHECK(v == doctest::Approx(0.999).epsilon(1e-15));
  }
  SUBCASE("shape mismatch is an error") {
    std::vector<TransformerBlock<double>> other;
    EncoderConfig wide = ecfg;
    wide.d_model = 16;
    wide.ffn_dim = 16;
    other.emplace_back(wide, rng);
    CHECK_THROWS_AS(ema_update(teacher, other, 0.9), ShapeError);
  }
}

TEST_CASE("instance_norm statistics") {
  SUBCASE("constant channels collapse to zero") {
    Tensor<double> h = Tensor<double>::full({6, 3}, 2.5);
    const Tensor<double> out = instance_norm(h, 1e-5);
    for (const double v : out.data) CHECK(v == 0.0);
  }
  SUBCASE("a 3-point channel matches the direct computation") {
    Tensor<double> h({3, 1});
    h.data = {1.0, 2.0, 3.0};
    const Tensor<double> out = instance_norm(h, 1e-8);
    CHECK(out[0] == doctest::Approx(-1.2247).epsilon(1e-3));
    CHECK(out[1] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(out[2] == doctest::Approx(1.2247).epsilon(1e-3));
  }
  SUBCASE("random input is normalized to zero mean, unit variance") {
    Rng rng(2);
    Tensor<double> h = Tensor<double>::randn({40, 5}, rng);
    const Tensor<double> out = instance_norm(h, 1e-5);
    for (int c = 0; c < 5; ++c) {
      double mu = 0, var = 0;
      for (int t = 0; t < 40; ++t) mu += out.at(t, c);
      mu /= 40;
      for (int t = 0; t < 40; ++t)
        var += (out.at(t, c) - mu) * (out.at(t, c) - mu);
      var /= 40;
      CHECK(std::abs(mu) < 1e-5);
      CHECK(std::abs(var - 1.0) < 1e-3);
    }
  }
}

TEST_CASE("make_targets averages instance-normalized layers") {
  Rng rng(3);
  std::vector<Tensor<double>> layers;
  for (int l = 0; l < 3; ++l)
    layers.push_back(Tensor<double>::randn({4, 2}, rng));

  SUBCASE("k = 1 is the instance-normalized last layer") {
    const auto t = make_targets(layers, 1, 1e-5, {0, 1});
    const Tensor<double> expect = instance_norm(layers.back(), 1e-5);
    CHECK(t.y.data == expect.data);
    CHECK(t.valid == std::vector<int>{0, 1});
  }
  SUBCASE("identical layers average to the common normalization") {
    std::vector<Tensor<double>> same = {layers[0], layers[0], layers[0]};
    const auto t = make_targets(same, 3, 1e-5, {});
    const Tensor<double> expect = instance_norm(layers[0], 1e-5);
    for (int64_t i = 0; i < t.y.numel(); ++i)
      CHECK(t.y[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
  SUBCASE("k = 2 matches an independent scalar recomputation") {
    std::vector<Tensor<double>> two;
    Tensor<double> a({3, 2}), b({3, 2});
    a.data = {1, -2, 0, 4, -1, 6};
    b.data = {2, 2, 3, 1, 7, 0};
    two.push_back(a);
    two.push_back(b);
    const auto t = make_targets(two, 2, 1e-6, {});
    // Recompute by hand, channel by channel.
    for (int c = 0; c < 2; ++c) {
      double ma = 0, mb = 0;
      for (int r = 0; r < 3; ++r) {
        ma += a.at(r, c);
        mb += b.at(r, c);
      }
      ma /= 3;
      mb /= 3;
      double va = 0, vb = 0;
      for (int r = 0; r < 3; ++r) {
        va += (a.at(r, c) - ma) * (a.at(r, c) - ma);
        vb += (b.at(r, c) - mb) * (b.at(r, c) - mb);
      }
      va /= 3;
      vb /= 3;
      for (int r = 0; r < 3; ++r) {
        const double na = (a.at(r, c) - ma) / std::sqrt(va + 1e-6);
        const double nb = (b.at(r, c) - mb) / std::sqrt(vb + 1e-6);
        CHECK(t.y.at(r, c) == doctest::Approx(0.5 * (na + nb)).epsilon(1e-10));
      }
    }
  }
  SUBCASE("k beyond the layer count is a configuration error") {
    CHECK_THROWS_AS(make_targets(layers, 4, 1e-5, {}), ConfigError);
    CHECK_THROWS_AS(make_targets(layers, 0, 1e-5, {}), ConfigError);
  }
}

TEST_CASE("teacher forward honors the dropout ablation modes") {
  Rng rng(4);
  StudentModel<double> model(tiny_model_cfg(), rng);
  TeacherState<double> teacher = init_teacher(model.blocks);
  // Make the teacher differ from the student so both paths are distinct.
  for (auto& v : teacher.blocks[0].wq.weight.data) v += 0.01;

  Tensor<double> audio = Tensor<double>::randn({5, 4}, rng);
  Tensor<double> video = Tensor<double>::randn({5, 4, 4, 1}, rng);
  Tensor<double> video2 = Tensor<double>::randn({5, 4, 4, 1}, rng);
  Tensor<double> audio2 = Tensor<double>::randn({5, 4}, rng);

  const auto run = [&](const Tensor<double>& a, const Tensor<double>& v,
                       TeacherDropoutMode mode, ModalitySelection sel) {
    Tape<double> tape(false);
    return model.forward_teacher(tape, a, v, teacher, mode, sel);
  };

  SUBCASE("mode none ignores the student's selection entirely") {
    const auto both = run(audio, video, TeacherDropoutMode::kNone,
                          ModalitySelection::kBoth);
    const auto audio_only = run(audio, video, TeacherDropoutMode::kNone,
                                ModalitySelection::kAudioOnly);
    REQUIRE(both.size() == audio_only.size());
    for (size_t l = 0; l < both.size(); ++l)
      CHECK(both[l].data == audio_only[l].data);
  }
  SUBCASE("mode same drops what the student dropped") {
    // Student kept audio only -> teacher video stream is zeroed, so the
    // teacher output cannot depend on the video input.
    const auto a1 = run(audio, video, TeacherDropoutMode::kSame,
                        ModalitySelection::kAudioOnly);
    const auto a2 = run(audio, video2, TeacherDropoutMode::kSame,
                        ModalitySelection::kAudioOnly);
    for (size_t l = 0; l < a1.size(); ++l) CHECK(a1[l].data == a2[l].data);
    // And it does depend on the audio input.
    const auto a3 = run(audio2, video, TeacherDropoutMode::kSame,
                        ModalitySelection::kAudioOnly);
    CHECK(a1.back().data != a3.back().data);
    // With no student dropout the teacher keeps both streams.
    const auto b1 = run(audio, video, TeacherDropoutMode::kSame,
                        ModalitySelection::kBoth);
    const auto b2 = run(audio, video, TeacherDropoutMode::kNone,
                        ModalitySelection::kBoth);
    for (size_t l = 0; l < b1.size(); ++l) CHECK(b1[l].data == b2[l].data);
  }
  SUBCASE("mode opposite drops the other modality") {
    // Student kept audio only -> teacher audio stream is zeroed.
    const auto o1 = run(audio, video, TeacherDropoutMode::kOpposite,
                        ModalitySelection::kAudioOnly);
    const auto o2 = run(audio2, video, TeacherDropoutMode::kOpposite,
                        ModalitySelection::kAudioOnly);
    for (size_t l = 0; l < o1.size(); ++l) CHECK(o1[l].data == o2[l].data);
    const auto o3 = run(audio, video2, TeacherDropoutMode::kOpposite,
                        ModalitySelection::kAudioOnly);
    CHECK(o1.back().data != o3.back().data);
  }
  SUBCASE("teacher path records no gradient machinery") {
    Tape<double> tape(false);
    model.forward_teacher(tape, audio, video, teacher,
                          TeacherDropoutMode::kNone, ModalitySelection::kBoth);
    CHECK(tape.num_backward_closures() == 0);
  }
  SUBCASE("teacher extractor evaluation follows the student's parameters") {
    const auto before = run(audio, video, TeacherDropoutMode::kNone,
                            ModalitySelection::kBoth);
    for (auto& v : model.audio_ext.proj.weight.data) v += 0.5;
    const auto after = run(audio, video, TeacherDropoutMode::kNone,
                           ModalitySelection::kBoth);
    CHECK(before.back().data != after.back().data);
  }
  SUBCASE("a gradient-enabled tape is rejected") {
    Tape<double> tape(true);
    CHECK_THROWS_AS(
        model.forward_teacher(tape, audio, video, teacher,
                              TeacherDropoutMode::kNone,
                              ModalitySelection::kBoth),
        TrainingError);
  }
}

TEST_CASE("loss_reg is masked-only in the Eq-1 sense") {
  Rng rng(5);
  Tensor<double> y = Tensor<double>::randn({6, 3}, rng);
  DistillTargets<double> targets{y, {1, 4}};

  SUBCASE("perfect predictions give zero") {
    Tape<double> tape(true);
    CHECK(tape.val(loss_reg(tape, tape.constant(y), targets))[0] == 0.0);
  }
  SUBCASE("a single masked frame with diff (1,-1) contributes 2") {
    Tensor<double> x = y;
    x.at(1, 0) += 1.0;
    x.at(1, 1) -= 1.0;
    DistillTargets<double> t1{y, {1}};
    Tape<double> tape(true);
    CHECK(tape.val(loss_reg(tape, tape.constant(x), t1))[0] ==
          doctest::Approx(2.0).epsilon(1e-15));
  }
  SUBCASE("unmasked perturbations change nothing, bit for bit") {
    Tensor<double> x = y;
    x.at(1, 0) += 0.7;
    Tape<double> t1(true);
    const double base = t1.val(loss_reg(t1, t1.constant(x), targets))[0];
    Tensor<double> x2 = x;
    x2.at(0, 0) += 123.0;
    x2.at(3, 2) -= 55.0;
    Tape<double> t2(true);
    const double perturbed =
        t2.val(loss_reg(t2, t2.constant(x2), targets))[0];
    CHECK(base == perturbed);
  }
  SUBCASE("empty union gives zero loss") {
    DistillTargets<double> empty{y, {}};
    Tape<double> tape(true);
    CHECK(tape.val(loss_reg(tape, tape.constant(y), empty))[0] == 0.0);
  }
}

TEST_CASE("loss_total is the plain sum of Eq-style terms") {
  Tape<double> tape(true);
  auto reg = tape.constant(Tensor<double>::scalar(1.5));
  auto mlm = tape.constant(Tensor<double>::scalar(2.5));
  CHECK(tape.val(loss_total(tape, reg, mlm, true))[0] == 4.0);
  CHECK(tape.val(loss_total(tape, reg, {}, false))[0] == 1.5);
}

TEST_CASE("total-loss gradients are the sum of parts") {
  Rng rng(6);
  Tensor<double> x = Tensor<double>::randn({4, 3}, rng);
  Tensor<double> y = Tensor<double>::randn({4, 3}, rng);
  const std::vector<int> rows = {0, 2};
  const std::vector<int> labels = {1, 0, 2, 1};

  const auto grad_of = [&](bool use_reg, bool use_mlm) {
    Tape<double> tape(true);
    auto xv = tape.param(&x);
    typename Tape<double>::Var loss;
    if (use_reg && use_mlm) {
      loss = tape.add(tape.masked_sq_error(xv, y, rows),
                      tape.masked_cross_entropy(xv, labels, rows));
    } else if (use_reg) {
      loss = tape.masked_sq_error(xv, y, rows);
    } else {
      loss = tape.masked_cross_entropy(xv, labels, rows);
    }
    tape.backward(loss);
    return *tape.grad_for(&x);
  };
  const Tensor<double> g_reg = grad_of(true, false);
  const Tensor<double> g_mlm = grad_of(false, true);
  const Tensor<double> g_tot = grad_of(true, true);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(g_tot[i] == doctest::Approx(g_reg[i] + g_mlm[i]).epsilon(1e-12));
}

TEST_CASE("target_std detects collapse") {
  Rng rng(7);
  const Tensor<double> healthy = instance_norm(
      Tensor<double>::randn({30, 4}, rng), 1e-5);
  const Tensor<double> collapsed = instance_norm(
      Tensor<double>::full({30, 4}, 3.0), 1e-5);
  std::vector<const Tensor<double>*> hs = {&healthy};
  std::vector<const Tensor<double>*> cs = {&collapsed};
  CHECK(target_std(hs) > 0.5);
  CHECK(target_std(cs) < 1e-6);
}

}  // TEST_SUITE
