#include <doctest.h>

#include <cmath>

#include "av2vec/corruption.hpp"
#include "av2vec/rng.hpp"

using namespace av2vec;

TEST_SUITE("corruption") {

TEST_CASE("noise decision honors the endpoints") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) CHECK_FALSE(sample_noise_decision(0.0, rng));
  for (int i = 0; i < 1000; ++i) CHECK(sample_noise_decision(1.0, rng));
}

TEST_CASE("noise decision rate matches p_noise = 0.25") {
  Rng rng(2);
  int hits = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) hits += sample_noise_decision(0.25, rng) ? 1 : 0;
  const double rate = static_cast<double>(hits) / n;
  CHECK(rate > 0.23);
  CHECK(rate < 0.27);
}

TEST_CASE("span mask rate endpoints") {
  Rng rng(3);
  CHECK(sample_span_mask(50, {0.0, 10}, rng).indices.empty());
  const MaskSet all = sample_span_mask(50, {1.0, 1}, rng);
  REQUIRE(all.indices.size() == 50);
  for (int i = 0; i < 50; ++i) CHECK(all.indices[static_cast<size_t>(i)] == i);
}

TEST_CASE("span mask count is exact for every draw") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int t = 1 + static_cast<int>(rng.uniform_int(80));
    const double rate = rng.uniform();
    const int span = 1 + static_cast<int>(rng.uniform_int(12));
    const MaskSet m = sample_span_mask(t, {rate, span}, rng);
    CHECK(static_cast<long>(m.indices.size()) == std::lround(rate * t));
    for (size_t i = 0; i < m.indices.size(); ++i) {
      CHECK(m.indices[i] >= 0);
      CHECK(m.indices[i] < t);
      if (i) CHECK(m.indices[i] > m.indices[i - 1]);
    }
  }
}

TEST_CASE("masked fraction tracks the configured rate over seeds") {
  const int t = 1000;
  double total = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(static_cast<uint64_t>(seed) + 100);
    const MaskSet m = sample_span_mask(t, {0.8, 10}, rng);
    total += static_cast<double>(m.indices.size()) / t;
  }
  CHECK(std::abs(total / 100 - 0.8) < 0.03);
}

TEST_CASE("audio and video masks from separate streams are independent") {
  const int t = 50;
  const int samples = 10000;
  // Pearson correlation of pooled masked-indicator pairs.
  double sa = 0, sv = 0, saa = 0, svv = 0, sav = 0;
  const int64_t n = static_cast<int64_t>(t) * samples;
  for (int s = 0; s < samples; ++s) {
    Rng ra = Rng::derive(77, {static_cast<uint64_t>(s), 1});
    Rng rv = Rng::derive(77, {static_cast<uint64_t>(s), 2});
    const MaskSet ma = sample_span_mask(t, {0.8, 10}, ra);
    const MaskSet mv = sample_span_mask(t, {0.3, 5}, rv);
    std::vector<char> ia(t, 0), iv(t, 0);
    for (int i : ma.indices) ia[static_cast<size_t>(i)] = 1;
    for (int i : mv.indices) iv[static_cast<size_t>(i)] = 1;
    for (int i = 0; i < t; ++i) {
      sa += ia[static_cast<size_t>(i)];
      sv += iv[static_cast<size_t>(i)];
      saa += ia[static_cast<size_t>(i)] * ia[static_cast<size_t>(i)];
      svv += iv[static_cast<size_t>(i)] * iv[static_cast<size_t>(i)];
      sav += ia[static_cast<size_t>(i)] * iv[static_cast<size_t>(i)];
    }
  }
  const double ma_mean = sa / static_cast<double>(n);
  const double mv_mean = sv / static_cast<double>(n);
  const double cov = sav / static_cast<double>(n) - ma_mean * mv_mean;
  const double var_a = saa / static_cast<double>(n) - ma_mean * ma_mean;
  const double var_v = svv / static_cast<double>(n) - mv_mean * mv_mean;
  const double r = cov / std::sqrt(var_a * var_v);
  CHECK(std::abs(r) < 0.05);
}

TEST_CASE("apply_mask replaces exactly the masked rows") {
  Rng rng(5);
  Tensor<double> x = Tensor<double>::randn({5, 3}, rng);
  Tensor<double> e = Tensor<double>::randn({3}, rng);

  SUBCASE("empty mask is the identity, bit for bit") {
    Tape<double> tape(true);
    const auto& out =
        tape.val(apply_mask(tape, tape.constant(x), MaskSet{}, &e));
    CHECK(out.data == x.data);
  }
  SUBCASE("full mask turns every row into the embedding") {
    Tape<double> tape(true);
    MaskSet m;
    m.indices = {0, 1, 2, 3, 4};
    const auto& out = tape.val(apply_mask(tape, tape.constant(x), m, &e));
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 3; ++c) CHECK(out.at(r, c) == e[c]);
  }
  SUBCASE("masking rows 1 and 3 leaves 0, 2, 4 untouched") {
    Tape<double> tape(true);
    MaskSet m;
    m.indices = {1, 3};
    const auto& out = tape.val(apply_mask(tape, tape.constant(x), m, &e));
    for (int c = 0; c < 3; ++c) {
      CHECK(out.at(0, c) == x.at(0, c));
      CHECK(out.at(2, c) == x.at(2, c));
      CHECK(out.at(4, c) == x.at(4, c));
      CHECK(out.at(1, c) == e[c]);
      CHECK(out.at(3, c) == e[c]);
    }
  }
}

TEST_CASE("modality dropout law at the endpoints") {
  Rng rng(6);
  for (int i = 0; i < 500; ++i)
    CHECK(sample_modality_dropout(1.0, 0.5, rng) == ModalitySelection::kBoth);
  for (int i = 0; i < 500; ++i)
    CHECK(sample_modality_dropout(0.0, 1.0, rng) ==
          ModalitySelection::kAudioOnly);
}

TEST_CASE("modality dropout frequencies match the three-way law") {
  Rng rng(7);
  int both = 0, audio = 0, video = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    switch (sample_modality_dropout(0.5, 0.5, rng)) {
      case ModalitySelection::kBoth: ++both; break;
      case ModalitySelection::kAudioOnly: ++audio; break;
      case ModalitySelection::kVideoOnly: ++video; break;
    }
  }
  CHECK(std::abs(static_cast<double>(both) / n - 0.5) < 0.02);
  CHECK(std::abs(static_cast<double>(audio) / n - 0.25) < 0.02);
  CHECK(std::abs(static_cast<double>(video) / n - 0.25) < 0.02);
}

TEST_CASE("apply_modality_dropout zeroes the dropped stream only") {
  Rng rng(8);
  Tensor<double> a = Tensor<double>::randn({4, 3}, rng);
  Tensor<double> v = Tensor<double>::randn({4, 2}, rng);

  SUBCASE("both keeps everything") {
    Tape<double> tape(true);
    auto [oa, ov] = apply_modality_dropout(tape, tape.constant(a),
                                           tape.constant(v),
                                           ModalitySelection::kBoth);
    CHECK(tape.val(oa).data == a.data);
    CHECK(tape.val(ov).data == v.data);
  }
  SUBCASE("audio-only zeroes video and no gradient reaches it") {
    Tape<double> tape(true);
    Tensor<double> vparam = v;
    auto va = tape.constant(a);
    auto vv = tape.param(&vparam);
    auto [oa, ov] =
        apply_modality_dropout(tape, va, vv, ModalitySelection::kAudioOnly);
    for (const double x : tape.val(ov).data) CHECK(x == 0.0);
    CHECK(tape.val(oa).data == a.data);
    // Drive a loss through both streams; the dropped one stays silent.
    auto cat = tape.concat_cols(oa, ov);
    std::vector<int> rows = {0, 1, 2, 3};
    auto loss = tape.masked_sq_error(cat, Tensor<double>({4, 5}), rows);
    tape.backward(loss);
    CHECK(tape.grad_for(&vparam) == nullptr);
  }
  SUBCASE("video-only zeroes audio") {
    Tape<double> tape(true);
    auto [oa, ov] = apply_modality_dropout(tape, tape.constant(a),
                                           tape.constant(v),
                                           ModalitySelection::kVideoOnly);
    for (const double x : tape.val(oa).data) CHECK(x == 0.0);
    CHECK(tape.val(ov).data == v.data);
  }
  SUBCASE("frame-count mismatch is a shape error") {
    Tape<double> tape(true);
    Tensor<double> short_v = Tensor<double>::randn({3, 2}, rng);
    CHECK_THROWS_AS(
        apply_modality_dropout(tape, tape.constant(a), tape.constant(short_v),
                               ModalitySelection::kBoth),
        ShapeError);
  }
}

TEST_CASE("policy validation") {
  Rng rng(9);
  CHECK_THROWS_AS(sample_span_mask(10, {1.5, 3}, rng), ConfigError);
  CHECK_THROWS_AS(sample_span_mask(10, {0.5, 0}, rng), ConfigError);
  CHECK_THROWS_AS(sample_noise_decision(-0.1, rng), ConfigError);
  CHECK_THROWS_AS(sample_modality_dropout(2.0, 0.5, rng), ConfigError);
}

}  // TEST_SUITE
