// Copyright 2026 The Casein Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "casein/checkpoint.h"
#include "casein/corpus.h"
#include "oracles.h"

using namespace casein;
using namespace casein::corpus;

namespace {

PhonemeSequence make_phonemes(std::vector<int> ids, std::vector<int> durations) {
  PhonemeSequence p;
  p.ids = std::move(ids);
  p.durations = std::move(durations);
  return p;
}

// Independent band-energy measurement: per channel, the variance of the
// frame series within the phoneme, averaged over the band's channels.
double band_energy(const Mel& mel, const nn::Segment& seg, int ch_begin, int ch_end) {
  double total = 0;
  for (int ch = ch_begin; ch < ch_end; ++ch) {
    double mean = 0;
    for (int f = seg.begin; f < seg.end; ++f) mean += mel.row(f)[ch];
    mean /= seg.length();
    double var = 0;
    for (int f = seg.begin; f < seg.end; ++f) {
      const double d = mel.row(f)[ch] - mean;
      var += d * d;
    }
    total += var / seg.length();
  }
  return total / (ch_end - ch_begin);
}

double utterance_band_energy(const Mel& mel, const PhonemeSequence& ph, int ch_begin, int ch_end) {
  double total = 0;
  for (const auto& seg : ph.boundaries()) total += band_energy(mel, seg, ch_begin, ch_end);
  return total / ph.size();
}

}  // namespace

TEST_CASE("render_neutral is deterministic for identical seeds") {
  CorpusConfig config;
  Generator gen(config);
  PhonemeSequence ph = make_phonemes({0, 5, 12, 19}, {6, 8, 4, 10});
  Rng r1(99), r2(99);
  Mel a = gen.render_neutral(ph, 2, r1);
  Mel b = gen.render_neutral(ph, 2, r2);
  CHECK(a.v == b.v);
  CHECK(a.rows() == 28);
  CHECK(a.cols() == 80);
  for (float x : a.v) {
    CHECK(x >= 0.0f);
    CHECK(x <= 1.0f);
  }
}

TEST_CASE("two speakers differ by exactly a channel-axis ramp when noise is off") {
  CorpusConfig config;
  config.noise_sigma = 0.0f;
  Generator gen(config);
  PhonemeSequence ph = make_phonemes({3, 7, 1}, {5, 5, 5});
  Rng rng(1);
  Mel a = gen.render_neutral(ph, 0, rng);
  Mel b = gen.render_neutral(ph, 3, rng);

  const float slope_diff = gen.speaker_slope(0) - gen.speaker_slope(3);
  for (int f = 0; f < a.rows(); ++f) {
    for (int ch = 0; ch < a.cols(); ++ch) {
      const float expected = slope_diff * (static_cast<float>(ch) / (a.cols() - 1) - 0.5f);
      CHECK(a.row(f)[ch] - b.row(f)[ch] == doctest::Approx(expected).epsilon(1e-5));
    }
  }
}

TEST_CASE("per-phoneme envelope argmax sits on the designated bump center") {
  CorpusConfig config;
  Generator gen(config);
  for (int id = 0; id < config.vocab; ++id) {
    const std::vector<float> env = gen.envelope(id);
    int argmax = 0;
    for (int ch = 1; ch < config.channels; ++ch) {
      if (env[ch] > env[argmax]) argmax = ch;
    }
    CHECK(argmax == gen.bump_center(id));
  }
}

TEST_CASE("apply_emotion with zero intensity is the identity") {
  CorpusConfig config;
  Generator gen(config);
  PhonemeSequence ph = make_phonemes({1, 2, 3, 4, 5, 6}, {5, 6, 7, 5, 6, 7});
  Rng rng(5);
  Mel base = gen.render_neutral(ph, 1, rng);
  Mel modulated = base;
  gen.apply_emotion(modulated, kHappy, std::vector<float>(6, 0.0f), ph);
  CHECK(modulated.v == base.v);
}

TEST_CASE("band energy is strictly increasing in a phoneme's intensity") {
  CorpusConfig config;
  config.noise_sigma = 0.0f;
  Generator gen(config);
  PhonemeSequence ph = make_phonemes({4, 9, 14}, {10, 12, 10});
  Rng rng(6);
  Mel base = gen.render_neutral(ph, 0, rng);
  const EmotionBand band = gen.band(kAngry);

  double prev = -1.0;
  for (float level : {0.0f, 0.25f, 0.5f, 0.75f, 1.0f}) {
    Mel m = base;
    gen.apply_emotion(m, kAngry, {0.0f, level, 0.0f}, ph);
    const double energy = band_energy(m, ph.boundaries()[1], band.begin, band.end);
    CHECK(energy > prev);
    prev = energy;
  }
}

TEST_CASE("two emotions applied additively scale their band energies by the weights") {
  CorpusConfig config;
  config.noise_sigma = 0.0f;
  Generator gen(config);
  PhonemeSequence ph = make_phonemes({2, 8, 13, 17, 6, 11, 3, 15}, {10, 11, 12, 10, 11, 12, 10, 11});
  Rng rng(7);
  Mel base = gen.render_neutral(ph, 2, rng);
  const int t = ph.size();

  const EmotionBand happy = gen.band(kHappy);
  const EmotionBand surprised = gen.band(kSurprised);

  Mel full_happy = base;
  gen.apply_emotion(full_happy, kHappy, std::vector<float>(t, 1.0f), ph);
  Mel full_surprised = base;
  gen.apply_emotion(full_surprised, kSurprised, std::vector<float>(t, 1.0f), ph);
  const double ref_happy = utterance_band_energy(full_happy, ph, happy.begin, happy.end);
  const double ref_surprised =
      utterance_band_energy(full_surprised, ph, surprised.begin, surprised.end);

  Mel mixed = base;
  gen.apply_emotion(mixed, kHappy, std::vector<float>(t, 0.9f), ph);
  gen.apply_emotion(mixed, kSurprised, std::vector<float>(t, 0.45f), ph);
  const double mixed_happy = utterance_band_energy(mixed, ph, happy.begin, happy.end);
  const double mixed_surprised =
      utterance_band_energy(mixed, ph, surprised.begin, surprised.end);

  CHECK(mixed_happy == doctest::Approx(0.9 * ref_happy).epsilon(0.05));
  CHECK(mixed_surprised == doctest::Approx(0.45 * ref_surprised).epsilon(0.05));
}

TEST_CASE("generated corpus satisfies counts and pair invariants") {
  CorpusConfig config;
  config.n_train = 24;
  config.n_val = 6;
  config.n_test = 8;
  config.seed = 123;
  const std::string dir = (std::filesystem::temp_directory_path() / "casein_corpus_t1").string();
  generate_corpus(config, dir);
  Corpus corpus = load_corpus(dir);

  CHECK(corpus.train.utterances.size() == 24);
  CHECK(corpus.val.utterances.size() == 6);
  CHECK(corpus.test.utterances.size() == 8);

  Generator gen(config);
  for (const Dataset* ds : {&corpus.train, &corpus.val, &corpus.test}) {
    for (const UtterancePair& u : ds->utterances) {
      u.validate(config.vocab, config.speakers, config.emotions, config.channels);
      CHECK(u.mel_neutral.rows() == u.mel_emotional.rows());
      CHECK(u.phonemes.boundaries().back().end == u.phonemes.total_frames());
      for (int d : u.phonemes.durations) {
        CHECK(d >= config.min_duration);
        CHECK(d <= config.max_duration);
      }
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("regenerating with the same seed reproduces byte-identical files") {
  CorpusConfig config;
  config.n_train = 10;
  config.n_val = 3;
  config.n_test = 3;
  config.seed = 77;
  namespace fs = std::filesystem;
  const std::string d1 = (fs::temp_directory_path() / "casein_corpus_a").string();
  const std::string d2 = (fs::temp_directory_path() / "casein_corpus_b").string();
  generate_corpus(config, d1);
  generate_corpus(config, d2);
  for (const char* split : {"train.ds", "val.ds", "test.ds"}) {
    const std::string b1 = read_file((fs::path(d1) / split).string());
    const std::string b2 = read_file((fs::path(d2) / split).string());
    CHECK(fnv1a64(b1.data(), b1.size()) == fnv1a64(b2.data(), b2.size()));
    CHECK(b1 == b2);
  }

  // A different seed must actually change the data.
  CorpusConfig other = config;
  other.seed = 78;
  generate_corpus(other, d2);
  CHECK(read_file((fs::path(d1) / "train.ds").string()) !=
        read_file((fs::path(d2) / "train.ds").string()));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("band separability: the labeled emotion owns the maximal band energy") {
  CorpusConfig config;
  config.n_train = 40;
  config.n_val = 0;
  config.n_test = 0;
  config.seed = 5;
  const std::string dir = (std::filesystem::temp_directory_path() / "casein_corpus_sep").string();
  generate_corpus(config, dir);
  Corpus corpus = load_corpus(dir);
  Generator gen(config);

  // Neutral noise floor: highest per-utterance band energy seen on neutral
  // utterances, used as the detection threshold.
  double noise_ceiling = 0.0;
  for (const UtterancePair& u : corpus.train.utterances) {
    if (u.emotion_id != kNeutral) continue;
    for (int k = 1; k < config.emotions; ++k) {
      const EmotionBand b = gen.band(k);
      noise_ceiling = std::max(
          noise_ceiling, utterance_band_energy(u.mel_emotional, u.phonemes, b.begin, b.end));
    }
  }

  int emotional = 0;
  for (const UtterancePair& u : corpus.train.utterances) {
    if (u.emotion_id == kNeutral) continue;
    ++emotional;
    int best_k = 0;
    double best_e = -1.0;
    for (int k = 1; k < config.emotions; ++k) {
      const EmotionBand b = gen.band(k);
      const double e = utterance_band_energy(u.mel_emotional, u.phonemes, b.begin, b.end);
      if (e > best_e) {
        best_e = e;
        best_k = k;
      }
    }
    CHECK(best_k == u.emotion_id);
    CHECK(best_e > 4.0 * noise_ceiling);
  }
  CHECK(emotional > 10);
  std::filesystem::remove_all(dir);
}

TEST_CASE("intensity recoverability: band-energy proxy correlates with alpha") {
  CorpusConfig config;
  config.n_train = 60;
  config.n_val = 0;
  config.n_test = 0;
  config.seed = 11;
  const std::string dir = (std::filesystem::temp_directory_path() / "casein_corpus_rec").string();
  generate_corpus(config, dir);
  Corpus corpus = load_corpus(dir);
  Generator gen(config);

  std::vector<double> proxy, truth;
  for (const UtterancePair& u : corpus.train.utterances) {
    if (u.emotion_id == kNeutral) continue;
    const EmotionBand b = gen.band(u.emotion_id);
    const auto segs = u.phonemes.boundaries();
    for (int p = 0; p < u.phonemes.size(); ++p) {
      // Self-normalize against the analytic full-intensity energy over the
      // same frames so duration/phase effects cancel.
      double ref = 0;
      {
        double mean = 0;
        std::vector<double> s(segs[p].length());
        for (int f = segs[p].begin; f < segs[p].end; ++f) {
          s[f - segs[p].begin] = config.mod_amplitude *
                                 std::sin(2.0 * 3.14159265358979324 * b.frequency * f);
          mean += s[f - segs[p].begin];
        }
        mean /= segs[p].length();
        for (double x : s) ref += (x - mean) * (x - mean);
        ref /= segs[p].length();
      }
      if (ref < 1e-6) continue;
      proxy.push_back(band_energy(u.mel_emotional, segs[p], b.begin, b.end) / ref);
      truth.push_back(u.intensity[p]);
    }
  }
  REQUIRE(proxy.size() > 100);
  CHECK(oracle::pearson(proxy, truth) > 0.95);
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset rejects out-of-range inputs") {
  CorpusConfig config;
  Generator gen(config);
  Rng rng(1);
  PhonemeSequence bad_id = make_phonemes({25}, {6});
  CHECK_THROWS_AS(gen.render_neutral(bad_id, 0, rng), ConfigError);
  PhonemeSequence ph = make_phonemes({1, 2}, {6, 6});
  CHECK_THROWS_AS(gen.render_neutral(ph, 9, rng), ConfigError);
  Mel mel = gen.render_neutral(ph, 0, rng);
  CHECK_THROWS_AS(gen.apply_emotion(mel, kHappy, {1.0f}, ph), ConfigError);
  CHECK_THROWS_AS(gen.apply_emotion(mel, 0, {0.1f, 0.1f}, ph), ConfigError);
  CHECK_THROWS_AS(gen.apply_emotion(mel, kHappy, {0.5f, 1.5f}, ph), ConfigError);
}

TEST_CASE("emotion names round-trip") {
  CHECK(emotion_id_from_name("Happy") == kHappy);
  CHECK(emotion_id_from_name("surprise") == kSurprised);
  CHECK(emotion_id_from_name("surprised") == kSurprised);
  CHECK(std::string(emotion_name(kSad)) == "sad");
  CHECK_THROWS_AS(emotion_id_from_name("bored"), ConfigError);
}
