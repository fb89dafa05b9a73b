#include <doctest.h>

#include <cmath>

#include "av2vec/features.hpp"
#include "gradcheck.hpp"

using namespace av2vec;
using av2vec_test::collect_grads;
using av2vec_test::finite_diff_check;

namespace {

FeatureSequence audio_seq(int t, int d, double rate, float fill = 0.5f) {
  FeatureSequence seq;
  seq.modality = Modality::kAudio;
  seq.frame_rate_hz = rate;
  seq.frames = Tensor<float>({t, d});
  for (int64_t i = 0; i < seq.frames.numel(); ++i)
    seq.frames[i] = fill + 0.01f * static_cast<float>(i % 7);
  return seq;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("align_rates with ratio 1 is the identity") {
  const FeatureSequence in = audio_seq(5, 3, 25.0);
  const FeatureSequence out = align_rates(in, 25.0);
  CHECK(out.frames.data == in.frames.data);
  CHECK(out.frame_rate_hz == 25.0);
}

TEST_CASE("align_rates stacks frames channel-wise") {
  FeatureSequence in;
  in.modality = Modality::kAudio;
  in.frame_rate_hz = 100.0;
  in.frames = Tensor<float>({8, 4});
  for (int64_t i = 0; i < in.frames.numel(); ++i)
    in.frames[i] = static_cast<float>(i);
  const FeatureSequence out = align_rates(in, 25.0);
  CHECK(out.frames.shape == std::vector<int>{2, 16});
  // First output frame is the concatenation of input frames 0..3.
  for (int j = 0; j < 16; ++j)
    CHECK(out.frames.at(0, j) == in.frames[j]);
  for (int j = 0; j < 16; ++j)
    CHECK(out.frames.at(1, j) == in.frames[16 + j]);
}

TEST_CASE("align_rates drops a trailing partial group") {
  const FeatureSequence in = audio_seq(7, 2, 100.0);
  const FeatureSequence out = align_rates(in, 25.0);
  CHECK(out.frames.shape[0] == 1);
  CHECK(out.frames.shape[1] == 8);
}

TEST_CASE("align_rates rejects non-integer ratios") {
  const FeatureSequence in = audio_seq(10, 2, 60.0);
  CHECK_THROWS_AS(align_rates(in, 25.0), ConfigError);
}

TEST_CASE("audio extractor linear cases") {
  Rng rng(1);
  AudioExtractor<double> ext(4, 4, rng);

  SUBCASE("zero weights and bias give all-zero features") {
    ext.proj.weight = Tensor<double>::zeros({4, 4});
    ext.proj.bias = Tensor<double>::zeros({4});
    Tape<double> tape(true);
    Tensor<double> x = Tensor<double>::randn({3, 4}, rng);
    const auto& out = tape.val(ext.forward(tape, tape.constant(x)));
    for (const double v : out.data) CHECK(v == 0.0);
  }
  SUBCASE("identity weights reproduce the input") {
    ext.proj.weight = Tensor<double>::zeros({4, 4});
    for (int i = 0; i < 4; ++i) ext.proj.weight.at(i, i) = 1.0;
    ext.proj.bias = Tensor<double>::zeros({4});
    Tape<double> tape(true);
    Tensor<double> x = Tensor<double>::randn({3, 4}, rng);
    const auto& out = tape.val(ext.forward(tape, tape.constant(x)));
    CHECK(out.data == x.data);
  }
  SUBCASE("dimension mismatch is a shape error") {
    Tape<double> tape(true);
    Tensor<double> x = Tensor<double>::randn({3, 5}, rng);
    CHECK_THROWS_AS(ext.forward(tape, tape.constant(x)), ShapeError);
  }
}

TEST_CASE("audio extractor gradient matches finite differences") {
  Rng rng(2);
  AudioExtractor<double> ext(3, 5, rng);
  Tensor<double> x = Tensor<double>::randn({3, 3}, rng);
  Tensor<double> target = Tensor<double>::randn({3, 5}, rng);
  ParamRegistry<double> reg;
  ext.register_params(reg, "audio_ext");
  reg.add("input", &x);

  const auto build = [&](Tape<double>& t) {
    auto out = ext.forward(t, t.param(&x));
    std::vector<int> rows = {0, 1, 2};
    return t.masked_sq_error(out, target, rows);
  };
  Tape<double> tape(true);
  auto loss = build(tape);
  tape.backward(loss);
  const auto analytic = collect_grads(tape, reg);
  const auto res = finite_diff_check(reg, analytic, [&]() {
    Tape<double> t(true);
    return t.val(build(t))[0];
  });
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("video extractor preserves the frame count") {
  Rng rng(3);
  VideoExtractor<double> ext(1, 3, 1, 6, rng);
  Tensor<double> video = Tensor<double>::randn({7, 4, 4, 1}, rng);
  Tape<double> tape(true);
  const auto& out = tape.val(ext.forward(tape, tape.constant(video)));
  CHECK(out.shape == std::vector<int>{7, 6});
}

TEST_CASE("video extractor is constant across time on constant input") {
  Rng rng(4);
  VideoExtractor<double> ext(1, 3, 2, 5, rng);  // conv2 zero-init by default
  Tensor<double> video({6, 4, 4, 1});
  for (int t = 0; t < 6; ++t)
    for (int h = 0; h < 4; ++h)
      for (int w = 0; w < 4; ++w) video.at4(t, h, w, 0) = 0.37;
  Tape<double> tape(true);
  const auto& out = tape.val(ext.forward(tape, tape.constant(video)));
  for (int t = 1; t < 6; ++t)
    for (int c = 0; c < 5; ++c)
      CHECK(out.at(t, c) == doctest::Approx(out.at(0, c)).epsilon(1e-12));
}

TEST_CASE("video extractor rejects frames smaller than the kernel") {
  Rng rng(5);
  VideoExtractor<double> ext(1, 2, 1, 4, rng);
  Tensor<double> video = Tensor<double>::randn({3, 2, 2, 1}, rng);
  Tape<double> tape(true);
  CHECK_THROWS_AS(ext.forward(tape, tape.constant(video)), ShapeError);
}

TEST_CASE("video extractor gradient matches finite differences") {
  Rng rng(6);
  VideoExtractor<double> ext(1, 2, 1, 3, rng);
  // Break the zero-init of the residual branch so its gradient path is
  // exercised too.
  for (auto& v : ext.blocks[0].k2.data) v = 0.05 * rng.normal();
  Tensor<double> video = Tensor<double>::randn({3, 4, 4, 1}, rng);
  Tensor<double> target = Tensor<double>::randn({3, 3}, rng);
  ParamRegistry<double> reg;
  ext.register_params(reg, "video_ext");

  const auto build = [&](Tape<double>& t) {
    auto out = ext.forward(t, t.constant(video));
    std::vector<int> rows = {0, 1, 2};
    return t.masked_sq_error(out, target, rows);
  };
  Tape<double> tape(true);
  auto loss = build(tape);
  tape.backward(loss);
  const auto analytic = collect_grads(tape, reg);
  const auto res = finite_diff_check(reg, analytic, [&]() {
    Tape<double> t(true);
    return t.val(build(t))[0];
  });
  INFO("worst: ", res.worst_param);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("frame-count contract holds on generated corpora") {
  CorpusSpec spec;
  spec.num_utterances = 3;
  spec.frames_min = 6;
  spec.frames_max = 9;
  spec.num_latent_states = 2;
  spec.audio_dim = 5;
  spec.video_height = 4;
  spec.video_width = 4;
  spec.video_channels = 1;
  spec.audio_rate_ratio = 4;
  spec.seed = 9;
  for (const auto& s : generate_corpus(spec)) {
    const FeatureSequence aligned =
        align_rates(s.audio_clean, s.video.frame_rate_hz);
    CHECK(aligned.frames.shape[0] == s.video.frames.shape[0]);
    CHECK(aligned.frames.shape[1] == 20);
  }
}

}  // TEST_SUITE
