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

#ifndef CASEIN_CORPUS_H_
#define CASEIN_CORPUS_H_

#include <string>
#include <vector>

#include "casein/config.h"
#include "casein/ops.h"
#include "casein/tensor.h"

namespace casein {
namespace corpus {

// Frame-major mel spectrogram [frames x channels], values in [0, 1].
using Mel = nn::Tensor<float>;

// Emotion class ids. Index 0 is the neutral class; emotional classes own
// disjoint spectral bands so synthesized intensity stays measurable.
enum EmotionId { kNeutral = 0, kHappy = 1, kSad = 2, kAngry = 3, kSurprised = 4 };

const char* emotion_name(int id);
int emotion_id_from_name(const std::string& name);  // accepts e.g. "surprise"/"surprised"

struct PhonemeSequence {
  std::vector<int> ids;
  std::vector<int> durations;  // frames per phoneme, >= 1

  int size() const { return static_cast<int>(ids.size()); }
  int total_frames() const;
  std::vector<nn::Segment> boundaries() const { return nn::segments_from_durations(durations); }
  void validate(int vocab) const;
};

struct UtterancePair {
  std::string id;
  PhonemeSequence phonemes;
  int speaker_id = 0;
  int emotion_id = kNeutral;
  std::vector<float> intensity;  // per phoneme, in [0, 1]; zeros when neutral
  Mel mel_neutral;
  Mel mel_emotional;

  void validate(int vocab, int speakers, int emotions, int channels) const;
};

struct EmotionBand {
  int begin = 0;  // channel range [begin, end)
  int end = 0;
  float frequency = 0.0f;  // temporal cycles per frame
};

// Generation parameters for the synthetic corpus; serialized with every
// dataset so downstream band measurements never drift from the generator.
struct CorpusConfig {
  int n_train = 200, n_val = 20, n_test = 30;
  int vocab = 20;
  int speakers = 4;
  int emotions = 5;  // including neutral
  int channels = 80;
  int min_phonemes = 6, max_phonemes = 12;
  int min_duration = 4, max_duration = 16;
  float noise_sigma = 0.01f;
  float mod_amplitude = 0.3f;
  int band_start = 40;
  int band_width = 8;
  std::vector<float> frequencies = {0.23f, 0.31f, 0.17f, 0.41f};  // one per emotional class
  uint64_t seed = 0;

  void validate() const;
  cfg::KV to_kv() const;
  static CorpusConfig from_kv(const cfg::KV& kv);
};

// Deterministic renderer: phoneme identity fixes the spectral envelope,
// speaker identity fixes a channel-axis tilt, emotions modulate disjoint
// channel bands with per-emotion temporal sinusoids.
class Generator {
 public:
  explicit Generator(const CorpusConfig& config);

  const CorpusConfig& config() const { return config_; }

  // Channel envelope of one phoneme (no tilt, no noise).
  std::vector<float> envelope(int phoneme_id) const;
  int bump_center(int phoneme_id) const;
  float speaker_slope(int speaker_id) const;
  EmotionBand band(int emotion_id) const;  // emotion_id >= 1

  // Smooth spectral envelopes + speaker tilt + seeded noise, clamped to [0,1].
  Mel render_neutral(const PhonemeSequence& phonemes, int speaker_id, Rng& rng) const;

  // Adds the emotion's band modulation in place, scaled so band energy grows
  // linearly with the per-phoneme intensity; intensities are interpolated
  // between phoneme centers so the modulation is continuous at boundaries.
  void apply_emotion(Mel& mel, int emotion_id, const std::vector<float>& intensity,
                     const PhonemeSequence& phonemes) const;

  // Piecewise-linear frame-level intensity through phoneme center frames.
  static std::vector<float> frame_intensity(const std::vector<float>& alpha,
                                            const PhonemeSequence& phonemes);

 private:
  CorpusConfig config_;
  std::vector<int> centers1_, centers2_;
  std::vector<float> widths1_;
};

// One split held in memory plus the generator config that produced it.
struct Dataset {
  CorpusConfig config;
  std::vector<UtterancePair> utterances;

  void save(const std::string& path) const;
  static Dataset load(const std::string& path);
};

struct Corpus {
  Dataset train, val, test;
};

// Writes train.ds / val.ds / test.ds under out_dir. Byte-identical for a
// given config (no timestamps, seeded sampling).
void generate_corpus(const CorpusConfig& config, const std::string& out_dir);

Corpus load_corpus(const std::string& dir);

// Looks up an utterance by id ("train-0012", "test-0003", ...) across splits.
const UtterancePair& find_utterance(const Corpus& corpus, const std::string& id);

}  // namespace corpus
}  // namespace casein

#endif  // CASEIN_CORPUS_H_
