// synthdata.cpp

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

#include "av2vec/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "av2vec/errors.hpp"

namespace av2vec {

namespace {

// Stream-role tags for derived rngs.
constexpr uint64_t kTagTemplates = 0x7431;
constexpr uint64_t kTagUtterance = 0x7532;
constexpr uint64_t kTagNoiseBank = 0x6e62;
constexpr uint64_t kTagEval = 0x6576;

}  // namespace

void CorpusSpec::validate() const {
  if (num_utterances < 0) throw ConfigError("num_utterances must be >= 0");
  if (frames_min < 1) throw ConfigError("frames_min must be >= 1");
  if (frames_max < frames_min)
    throw ConfigError("frames_max must be >= frames_min");
  if (num_latent_states < 2)
    throw ConfigError("num_latent_states must be >= 2");
  if (audio_dim < 1 || video_height < 1 || video_width < 1 ||
      video_channels < 1)
    throw ConfigError("all feature dimensions must be >= 1");
  if (latent_dwell < 1.0) throw ConfigError("latent_dwell must be >= 1");
  if (video_rate_hz < 1) throw ConfigError("video_rate_hz must be >= 1");
  if (audio_rate_ratio < 1) throw ConfigError("audio_rate_ratio must be >= 1");
  if (audio_jitter < 0 || video_jitter < 0)
    throw ConfigError("jitter must be >= 0");
  if (video_smooth <= 0 || video_smooth > 1.0)
    throw ConfigError("video_smooth must be in (0, 1]");
}

Corpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  const int s = spec.num_latent_states;

  Rng trng = Rng::derive(spec.seed, {kTagTemplates});
  Tensor<float> audio_tmpl({s, spec.audio_dim});
  for (auto& v : audio_tmpl.data) v = static_cast<float>(trng.normal());
  Tensor<float> video_tmpl(
      {s, spec.video_height, spec.video_width, spec.video_channels});
  for (auto& v : video_tmpl.data) v = static_cast<float>(trng.normal());

  Corpus corpus;
  corpus.reserve(static_cast<size_t>(spec.num_utterances));
  const int64_t vpix = static_cast<int64_t>(spec.video_height) *
                       spec.video_width * spec.video_channels;

  for (int u = 0; u < spec.num_utterances; ++u) {
    Rng rng = Rng::derive(spec.seed, {kTagUtterance, static_cast<uint64_t>(u)});
    SyntheticSample sample;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "utt%05d", u);
    sample.utterance_id = idbuf;

    const int t_frames =
        spec.frames_min +
        static_cast<int>(rng.uniform_int(spec.frames_max - spec.frames_min + 1));

    // Piecewise-constant latent path; geometric dwell with the configured
    // mean, next state uniform over the other states.
    sample.latent_labels.resize(static_cast<size_t>(t_frames));
    int state = static_cast<int>(rng.uniform_int(s));
    const double p_switch = 1.0 / spec.latent_dwell;
    for (int t = 0; t < t_frames; ++t) {
      if (t > 0 && rng.uniform() < p_switch) {
        const int j = static_cast<int>(rng.uniform_int(s - 1));
        state = j >= state ? j + 1 : j;
      }
      sample.latent_labels[static_cast<size_t>(t)] = state;
    }

    const int audio_frames = t_frames * spec.audio_rate_ratio;
    sample.audio_clean.modality = Modality::kAudio;
    sample.audio_clean.frame_rate_hz =
        static_cast<double>(spec.video_rate_hz) * spec.audio_rate_ratio;
    sample.audio_clean.frames = Tensor<float>({audio_frames, spec.audio_dim});
    for (int t = 0; t < audio_frames; ++t) {
      const int st = sample.latent_labels[static_cast<size_t>(
          t / spec.audio_rate_ratio)];
      for (int d = 0; d < spec.audio_dim; ++d) {
        sample.audio_clean.frames.at(t, d) =
            audio_tmpl.at(st, d) +
            static_cast<float>(spec.audio_jitter * rng.normal());
      }
    }

    sample.video.modality = Modality::kVideo;
    sample.video.frame_rate_hz = static_cast<double>(spec.video_rate_hz);
    sample.video.frames = Tensor<float>(
        {t_frames, spec.video_height, spec.video_width, spec.video_channels});
    const float beta = static_cast<float>(spec.video_smooth);
    std::vector<float> prev(static_cast<size_t>(vpix));
    for (int t = 0; t < t_frames; ++t) {
      const int st = sample.latent_labels[static_cast<size_t>(t)];
      const float* tmpl = &video_tmpl.data[static_cast<size_t>(st) * vpix];
      float* out = &sample.video.frames.data[static_cast<size_t>(t) * vpix];
      for (int64_t p = 0; p < vpix; ++p) {
        const float target =
            tmpl[p] + static_cast<float>(spec.video_jitter * rng.normal());
        out[p] = t == 0 ? target : (1.0f - beta) * prev[p] + beta * target;
        prev[static_cast<size_t>(p)] = out[p];
      }
    }
    corpus.push_back(std::move(sample));
  }
  return corpus;
}

NoiseBank make_noise_bank(uint64_t seed, int count, int length, int dim) {
  if (count < 1 || length < 1 || dim < 1)
    throw ConfigError("noise bank needs count, length, dim >= 1");
  NoiseBank bank;
  bank.sequences.reserve(static_cast<size_t>(count));
  for (int b = 0; b < count; ++b) {
    Rng rng = Rng::derive(seed, {kTagNoiseBank, static_cast<uint64_t>(b)});
    const double rho = 0.9 * rng.uniform();  // per-bank temporal color
    std::vector<double> gain(static_cast<size_t>(dim));
    for (auto& g : gain) g = 0.5 + rng.uniform();  // per-channel shaping
    Tensor<float> seq({length, dim});
    std::vector<double> prev(static_cast<size_t>(dim), 0.0);
    const double w = std::sqrt(1.0 - rho * rho);
    for (int t = 0; t < length; ++t) {
      for (int d = 0; d < dim; ++d) {
        const double x = rho * prev[static_cast<size_t>(d)] + w * rng.normal();
        prev[static_cast<size_t>(d)] = x;
        seq.at(t, d) = static_cast<float>(x * gain[static_cast<size_t>(d)]);
      }
    }
    bank.sequences.push_back(std::move(seq));
  }
  return bank;
}

const std::vector<double>& eval_snr_levels() {
  static const std::vector<double> levels = {-10.0, -5.0, 0.0,
                                             5.0,   10.0, kSnrInf};
  return levels;
}

FeatureSequence mix_noise(const FeatureSequence& clean,
                          const Tensor<float>& noise, double snr_db,
                          Rng& rng) {
  if (std::isinf(snr_db) && snr_db > 0) return clean;
  const int t_clean = clean.num_frames();
  const int dim = clean.frames.shape[1];
  if (noise.rank() != 2 || noise.shape[1] != dim)
    throw ShapeError("mix_noise: noise dim " + noise.shape_str() +
                     " vs clean " + clean.frames.shape_str());
  if (noise.shape[0] < t_clean)
    throw ShapeError("mix_noise: noise shorter than clean signal");

  const int offset =
      static_cast<int>(rng.uniform_int(noise.shape[0] - t_clean + 1));

  double e_clean = 0.0;
  for (const float v : clean.frames.data)
    e_clean += static_cast<double>(v) * v;
  if (e_clean == 0.0)
    throw DegenerateInputError(
        "mix_noise: all-zero clean signal with finite SNR");

  double e_noise = 0.0;
  for (int t = 0; t < t_clean; ++t)
    for (int d = 0; d < dim; ++d) {
      const double v = noise.at(offset + t, d);
      e_noise += v * v;
    }
  if (e_noise == 0.0)
    throw DegenerateInputError("mix_noise: zero-energy noise crop");

  const double g =
      std::sqrt(e_clean / (e_noise * std::pow(10.0, snr_db / 10.0)));

  FeatureSequence out = clean;
  for (int t = 0; t < t_clean; ++t)
    for (int d = 0; d < dim; ++d)
      out.frames.at(t, d) = static_cast<float>(
          static_cast<double>(clean.frames.at(t, d)) +
          g * noise.at(offset + t, d));
  return out;
}

double measure_snr(const FeatureSequence& clean, const FeatureSequence& noisy) {
  if (!clean.frames.same_shape(noisy.frames))
    throw ShapeError("measure_snr: shape mismatch");
  double e_clean = 0.0, e_diff = 0.0;
  for (int64_t i = 0; i < clean.frames.numel(); ++i) {
    const double c = clean.frames[i];
    const double d = static_cast<double>(noisy.frames[i]) - c;
    e_clean += c * c;
    e_diff += d * d;
  }
  if (e_diff == 0.0) return kSnrInf;
  return 10.0 * std::log10(e_clean / e_diff);
}

std::map<double, Corpus> build_eval_sets(const Corpus& corpus,
                                         const NoiseBank& bank,
                                         uint64_t seed) {
  if (corpus.empty()) throw ConfigError("build_eval_sets: empty corpus");
  if (bank.sequences.empty())
    throw ConfigError("build_eval_sets: empty noise bank");
  std::map<double, Corpus> sets;
  const auto& levels = eval_snr_levels();
  for (size_t li = 0; li < levels.size(); ++li) {
    const double level = levels[li];
    Corpus noisy;
    noisy.reserve(corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
      SyntheticSample s = corpus[i];
      if (!(std::isinf(level) && level > 0)) {
        Rng rng = Rng::derive(
            seed, {kTagEval, static_cast<uint64_t>(li), static_cast<uint64_t>(i)});
        const auto& noise = bank.sequences[static_cast<size_t>(
            rng.uniform_int(static_cast<int64_t>(bank.sequences.size())))];
        s.audio_clean = mix_noise(corpus[i].audio_clean, noise, level, rng);
      }
      noisy.push_back(std::move(s));
    }
    sets.emplace(level, std::move(noisy));
  }
  return sets;
}

void split_corpus(const Corpus& corpus, double test_fraction, Corpus* train,
                  Corpus* test) {
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw ConfigError("test_fraction must be in [0, 1)");
  const size_t n_test = static_cast<size_t>(
      std::ceil(test_fraction * static_cast<double>(corpus.size())));
  const size_t n_train = corpus.size() - n_test;
  train->assign(corpus.begin(), corpus.begin() + static_cast<long>(n_train));
  test->assign(corpus.begin() + static_cast<long>(n_train), corpus.end());
}

// --- persistence ---------------------------------------------------------

namespace {

constexpr uint32_t kRecordMagic = 0x56325641;  // "AV2V" little-endian
constexpr uint32_t kRecordVersion = 1;

void write_u32(std::ofstream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::ifstream& is, const std::string& path) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw CorruptFileError("truncated record: " + path);
  return v;
}

void write_f32(std::ofstream& os, const float* p, size_t n) {
  os.write(reinterpret_cast<const char*>(p),
           static_cast<std::streamsize>(n * sizeof(float)));
}

void read_f32(std::ifstream& is, float* p, size_t n, const std::string& path) {
  is.read(reinterpret_cast<char*>(p),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!is) throw CorruptFileError("truncated record: " + path);
}

}  // namespace

void write_record(const std::string& path, const SyntheticSample& sample) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CorruptFileError("cannot open for write: " + path);
  const auto& a = sample.audio_clean.frames;
  const auto& v = sample.video.frames;
  write_u32(os, kRecordMagic);
  write_u32(os, kRecordVersion);
  write_u32(os, static_cast<uint32_t>(sample.latent_labels.size()));
  write_u32(os, static_cast<uint32_t>(a.shape[0]));
  write_u32(os, static_cast<uint32_t>(a.shape[1]));
  write_u32(os, static_cast<uint32_t>(v.shape[1]));
  write_u32(os, static_cast<uint32_t>(v.shape[2]));
  write_u32(os, static_cast<uint32_t>(v.shape[3]));
  write_u32(os, static_cast<uint32_t>(sample.video.frame_rate_hz));
  write_u32(os, static_cast<uint32_t>(sample.audio_clean.frame_rate_hz));
  std::vector<float> labels(sample.latent_labels.begin(),
                            sample.latent_labels.end());
  write_f32(os, labels.data(), labels.size());
  write_f32(os, a.data.data(), a.data.size());
  write_f32(os, v.data.data(), v.data.size());
  if (!os) throw CorruptFileError("write failed: " + path);
}

SyntheticSample read_record(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptFileError("cannot open: " + path);
  if (read_u32(is, path) != kRecordMagic)
    throw CorruptFileError("bad magic in record: " + path);
  if (read_u32(is, path) != kRecordVersion)
    throw CorruptFileError("unsupported record version: " + path);
  const uint32_t t_frames = read_u32(is, path);
  const uint32_t audio_frames = read_u32(is, path);
  const uint32_t audio_dim = read_u32(is, path);
  const uint32_t vh = read_u32(is, path);
  const uint32_t vw = read_u32(is, path);
  const uint32_t vc = read_u32(is, path);
  const uint32_t video_rate = read_u32(is, path);
  const uint32_t audio_rate = read_u32(is, path);

  SyntheticSample s;
  std::vector<float> labels(t_frames);
  read_f32(is, labels.data(), labels.size(), path);
  s.latent_labels.resize(t_frames);
  for (size_t i = 0; i < labels.size(); ++i)
    s.latent_labels[i] = static_cast<int>(labels[i]);

  s.audio_clean.modality = Modality::kAudio;
  s.audio_clean.frame_rate_hz = audio_rate;
  s.audio_clean.frames =
      Tensor<float>({static_cast<int>(audio_frames), static_cast<int>(audio_dim)});
  read_f32(is, s.audio_clean.frames.data.data(),
           s.audio_clean.frames.data.size(), path);

  s.video.modality = Modality::kVideo;
  s.video.frame_rate_hz = video_rate;
  s.video.frames = Tensor<float>({static_cast<int>(t_frames),
                                  static_cast<int>(vh), static_cast<int>(vw),
                                  static_cast<int>(vc)});
  read_f32(is, s.video.frames.data.data(), s.video.frames.data.size(), path);
  return s;
}

void write_corpus(const std::string& dir, const Corpus& corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "records");
  std::ofstream manifest(fs::path(dir) / "manifest.tsv",
                         std::ios::trunc | std::ios::binary);
  if (!manifest) throw CorruptFileError("cannot write manifest in " + dir);
  for (const auto& s : corpus) {
    const std::string rel = "records/" + s.utterance_id + ".av2v";
    write_record((fs::path(dir) / rel).string(), s);
    manifest << s.utterance_id << "\t" << rel << "\t"
             << s.latent_labels.size() << "\n";
  }
}

Corpus read_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream manifest(fs::path(dir) / "manifest.tsv", std::ios::binary);
  if (!manifest)
    throw CorruptFileError("cannot open manifest in " + dir);
  Corpus corpus;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, rel, t_str;
    if (!std::getline(ss, id, '\t') || !std::getline(ss, rel, '\t') ||
        !std::getline(ss, t_str, '\t'))
      throw CorruptFileError("malformed manifest line: " + line);
    SyntheticSample s = read_record((fs::path(dir) / rel).string());
    s.utterance_id = id;
    if (s.latent_labels.size() != static_cast<size_t>(std::stol(t_str)))
      throw CorruptFileError("manifest frame count mismatch for " + id);
    corpus.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace av2vec
