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

#include "casein/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "casein/checkpoint.h"

namespace casein {
namespace corpus {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr float kEnvelopeFloor = 0.45f;
constexpr float kBumpAmp1 = 0.35f;
constexpr float kBumpAmp2 = 0.12f;
constexpr float kBumpWidth2 = 2.5f;
constexpr float kTiltSpan = 0.16f;  // slope range across speakers

const char* kEmotionNames[] = {"neutral", "happy", "sad", "angry", "surprised"};

}  // namespace

const char* emotion_name(int id) {
  if (id < 0 || id > 4) throw ConfigError("emotion id out of range: " + std::to_string(id));
  return kEmotionNames[id];
}

int emotion_id_from_name(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
  for (int i = 0; i <= 4; ++i) {
    if (n == kEmotionNames[i]) return i;
  }
  if (n == "surprise") return kSurprised;
  throw ConfigError("unknown emotion name: " + name);
}

int PhonemeSequence::total_frames() const {
  int total = 0;
  for (int d : durations) total += d;
  return total;
}

void PhonemeSequence::validate(int vocab) const {
  if (ids.size() != durations.size()) {
    throw ConfigError("phoneme ids and durations differ in length");
  }
  if (ids.empty()) throw ConfigError("empty phoneme sequence");
  for (int id : ids) {
    if (id < 0 || id >= vocab) throw ConfigError("phoneme id out of range: " + std::to_string(id));
  }
  for (int d : durations) {
    if (d < 1) throw ConfigError("phoneme duration must be >= 1");
  }
}

void UtterancePair::validate(int vocab, int speakers, int emotions, int channels) const {
  phonemes.validate(vocab);
  if (speaker_id < 0 || speaker_id >= speakers) throw ConfigError(id + ": speaker out of range");
  if (emotion_id < 0 || emotion_id >= emotions) throw ConfigError(id + ": emotion out of range");
  if (static_cast<int>(intensity.size()) != phonemes.size()) {
    throw ConfigError(id + ": intensity length does not match phoneme count");
  }
  for (float a : intensity) {
    if (!(a >= 0.0f && a <= 1.0f)) throw ConfigError(id + ": intensity outside [0,1]");
  }
  const int frames = phonemes.total_frames();
  if (mel_neutral.shape != std::vector<int>{frames, channels} ||
      mel_emotional.shape != std::vector<int>{frames, channels}) {
    throw ConfigError(id + ": mel shape does not match durations");
  }
  if (emotion_id == kNeutral) {
    for (float a : intensity) {
      if (a != 0.0f) throw ConfigError(id + ": neutral utterance with nonzero intensity");
    }
    if (mel_neutral.v != mel_emotional.v) {
      throw ConfigError(id + ": neutral pair members differ");
    }
  }
}

void CorpusConfig::validate() const {
  if (n_train < 0 || n_val < 0 || n_test < 0) throw ConfigError("corpus: negative split size");
  if (vocab < 2) throw ConfigError("corpus: vocab must be >= 2");
  if (speakers < 1) throw ConfigError("corpus: speakers must be >= 1");
  if (emotions < 2) throw ConfigError("corpus: need neutral plus at least one emotion");
  if (static_cast<int>(frequencies.size()) != emotions - 1) {
    throw ConfigError("corpus: need one modulation frequency per emotional class");
  }
  if (min_phonemes < 1 || max_phonemes < min_phonemes) throw ConfigError("corpus: bad phoneme range");
  if (min_duration < 1 || max_duration < min_duration) throw ConfigError("corpus: bad duration range");
  if (band_start + band_width * (emotions - 1) > channels) {
    throw ConfigError("corpus: emotion bands exceed channel count");
  }
  if (band_width < 1) throw ConfigError("corpus: band width must be >= 1");
  if (channels < 8) throw ConfigError("corpus: too few channels");
  if (noise_sigma < 0.0f) throw ConfigError("corpus: negative noise sigma");
}

cfg::KV CorpusConfig::to_kv() const {
  cfg::KV kv;
  kv["n_train"] = std::to_string(n_train);
  kv["n_val"] = std::to_string(n_val);
  kv["n_test"] = std::to_string(n_test);
  kv["vocab"] = std::to_string(vocab);
  kv["speakers"] = std::to_string(speakers);
  kv["emotions"] = std::to_string(emotions);
  kv["channels"] = std::to_string(channels);
  kv["min_phonemes"] = std::to_string(min_phonemes);
  kv["max_phonemes"] = std::to_string(max_phonemes);
  kv["min_duration"] = std::to_string(min_duration);
  kv["max_duration"] = std::to_string(max_duration);
  kv["noise_sigma"] = cfg::format_float(noise_sigma);
  kv["mod_amplitude"] = cfg::format_float(mod_amplitude);
  kv["band_start"] = std::to_string(band_start);
  kv["band_width"] = std::to_string(band_width);
  kv["frequencies"] = cfg::format_float_list(frequencies);
  kv["seed"] = std::to_string(seed);
  return kv;
}

CorpusConfig CorpusConfig::from_kv(const cfg::KV& kv) {
  CorpusConfig c;
  c.n_train = cfg::get_int(kv, "n_train", c.n_train);
  c.n_val = cfg::get_int(kv, "n_val", c.n_val);
  c.n_test = cfg::get_int(kv, "n_test", c.n_test);
  c.vocab = cfg::get_int(kv, "vocab", c.vocab);
  c.speakers = cfg::get_int(kv, "speakers", c.speakers);
  c.emotions = cfg::get_int(kv, "emotions", c.emotions);
  c.channels = cfg::get_int(kv, "channels", c.channels);
  c.min_phonemes = cfg::get_int(kv, "min_phonemes", c.min_phonemes);
  c.max_phonemes = cfg::get_int(kv, "max_phonemes", c.max_phonemes);
  c.min_duration = cfg::get_int(kv, "min_duration", c.min_duration);
  c.max_duration = cfg::get_int(kv, "max_duration", c.max_duration);
  c.noise_sigma = static_cast<float>(cfg::get_double(kv, "noise_sigma", c.noise_sigma));
  c.mod_amplitude = static_cast<float>(cfg::get_double(kv, "mod_amplitude", c.mod_amplitude));
  c.band_start = cfg::get_int(kv, "band_start", c.band_start);
  c.band_width = cfg::get_int(kv, "band_width", c.band_width);
  if (kv.count("frequencies")) c.frequencies = cfg::parse_float_list(kv.at("frequencies"));
  c.seed = static_cast<uint64_t>(cfg::get_double(kv, "seed", 0));
  c.validate();
  return c;
}

Generator::Generator(const CorpusConfig& config) : config_(config) {
  config_.validate();
  const int v = config_.vocab;
  centers1_.resize(v);
  centers2_.resize(v);
  widths1_.resize(v);
  // Bump centers live below the emotion bands. The secondary bump sits half
  // a span away (mod wrap) and the primary width shrinks on narrow spans so
  // the primary peak always owns the channel argmax.
  const int span = std::min(28, config_.band_start - 8);
  if (span < 2) throw ConfigError("corpus: band_start leaves no room for phoneme envelopes");
  const int offset = (span + 1) / 2;
  const float max_width = std::max(1.2f, static_cast<float>(span) / 3.0f);
  for (int id = 0; id < v; ++id) {
    const int x = static_cast<int>(std::lround(static_cast<double>(span) * id / (v - 1)));
    centers1_[id] = 4 + x;
    centers2_[id] = 4 + (x + offset) % (span + 1);
    widths1_[id] = std::min(1.6f + 0.4f * static_cast<float>(id % 4), max_width);
  }
  for (int id = 0; id < v; ++id) {
    const std::vector<float> env = envelope(id);
    const int argmax =
        static_cast<int>(std::max_element(env.begin(), env.end()) - env.begin());
    if (argmax != centers1_[id]) {
      throw ConfigError("corpus generator: envelope argmax drifted from bump center");
    }
  }
}

std::vector<float> Generator::envelope(int phoneme_id) const {
  if (phoneme_id < 0 || phoneme_id >= config_.vocab) {
    throw ConfigError("envelope: phoneme id out of range");
  }
  std::vector<float> env(config_.channels);
  const double c1 = centers1_[phoneme_id];
  const double c2 = centers2_[phoneme_id];
  const double w1 = widths1_[phoneme_id];
  for (int ch = 0; ch < config_.channels; ++ch) {
    const double d1 = (ch - c1) / w1;
    const double d2 = (ch - c2) / kBumpWidth2;
    env[ch] = kEnvelopeFloor +
              kBumpAmp1 * static_cast<float>(std::exp(-0.5 * d1 * d1)) +
              kBumpAmp2 * static_cast<float>(std::exp(-0.5 * d2 * d2));
  }
  return env;
}

int Generator::bump_center(int phoneme_id) const {
  if (phoneme_id < 0 || phoneme_id >= config_.vocab) {
    throw ConfigError("bump_center: phoneme id out of range");
  }
  return centers1_[phoneme_id];
}

float Generator::speaker_slope(int speaker_id) const {
  if (speaker_id < 0 || speaker_id >= config_.speakers) {
    throw ConfigError("speaker_slope: speaker id out of range");
  }
  if (config_.speakers == 1) return 0.0f;
  return kTiltSpan * (static_cast<float>(speaker_id) / (config_.speakers - 1) - 0.5f);
}

EmotionBand Generator::band(int emotion_id) const {
  if (emotion_id < 1 || emotion_id >= config_.emotions) {
    throw ConfigError("band: emotion id out of range: " + std::to_string(emotion_id));
  }
  EmotionBand b;
  b.begin = config_.band_start + config_.band_width * (emotion_id - 1);
  b.end = b.begin + config_.band_width;
  b.frequency = config_.frequencies[emotion_id - 1];
  return b;
}

Mel Generator::render_neutral(const PhonemeSequence& phonemes, int speaker_id,
                              Rng& rng) const {
  phonemes.validate(config_.vocab);
  for (int d : phonemes.durations) {
    if (d < config_.min_duration || d > config_.max_duration) {
      throw ConfigError("render_neutral: duration outside configured range");
    }
  }
  const float slope = speaker_slope(speaker_id);
  const int C = config_.channels;
  Mel mel({phonemes.total_frames(), C});

  std::vector<float> tilt(C);
  for (int ch = 0; ch < C; ++ch) {
    tilt[ch] = slope * (static_cast<float>(ch) / (C - 1) - 0.5f);
  }

  const std::vector<nn::Segment> segs = phonemes.boundaries();
  for (int p = 0; p < phonemes.size(); ++p) {
    const std::vector<float> env = envelope(phonemes.ids[p]);
    for (int f = segs[p].begin; f < segs[p].end; ++f) {
      float* row = mel.row(f);
      for (int ch = 0; ch < C; ++ch) row[ch] = env[ch] + tilt[ch];
    }
  }
  if (config_.noise_sigma > 0.0f) {
    for (float& x : mel.v) {
      x += config_.noise_sigma * static_cast<float>(rng.normal());
    }
  }
  for (float& x : mel.v) x = std::clamp(x, 0.0f, 1.0f);
  return mel;
}

std::vector<float> Generator::frame_intensity(const std::vector<float>& alpha,
                                              const PhonemeSequence& phonemes) {
  if (alpha.size() != phonemes.ids.size()) {
    throw ConfigError("frame_intensity: intensity length does not match phoneme count");
  }
  const std::vector<nn::Segment> segs = phonemes.boundaries();
  const int t = phonemes.size();
  const int frames = phonemes.total_frames();
  std::vector<double> centers(t);
  for (int p = 0; p < t; ++p) centers[p] = 0.5 * (segs[p].begin + segs[p].end - 1);

  std::vector<float> out(frames);
  int p = 0;
  for (int f = 0; f < frames; ++f) {
    if (f <= centers[0]) {
      out[f] = alpha[0];
      continue;
    }
    if (f >= centers[t - 1]) {
      out[f] = alpha[t - 1];
      continue;
    }
    while (centers[p + 1] < f) ++p;
    const double u = (f - centers[p]) / (centers[p + 1] - centers[p]);
    out[f] = static_cast<float>((1.0 - u) * alpha[p] + u * alpha[p + 1]);
  }
  return out;
}

void Generator::apply_emotion(Mel& mel, int emotion_id, const std::vector<float>& intensity,
                              const PhonemeSequence& phonemes) const {
  const EmotionBand b = band(emotion_id);
  if (static_cast<int>(intensity.size()) != phonemes.size()) {
    throw ConfigError("apply_emotion: intensity length does not match phoneme count");
  }
  for (float a : intensity) {
    if (!(a >= 0.0f && a <= 1.0f)) throw ConfigError("apply_emotion: intensity outside [0,1]");
  }
  if (mel.rows() != phonemes.total_frames() || mel.cols() != config_.channels) {
    throw ConfigError("apply_emotion: mel shape does not match phonemes");
  }
  const std::vector<float> curve = frame_intensity(intensity, phonemes);
  for (int f = 0; f < mel.rows(); ++f) {
    if (curve[f] <= 0.0f) continue;
    // sqrt keeps band *energy* proportional to the commanded intensity.
    const float amp = config_.mod_amplitude * std::sqrt(curve[f]) *
                      static_cast<float>(std::sin(kTwoPi * b.frequency * f));
    float* row = mel.row(f);
    for (int ch = b.begin; ch < b.end; ++ch) {
      row[ch] = std::clamp(row[ch] + amp, 0.0f, 1.0f);
    }
  }
}

namespace {

std::vector<float> sample_intensity(int t, Rng& rng) {
  std::vector<float> alpha(t);
  const int pattern = rng.range_int(0, 4);
  auto pos = [&](int i) { return t == 1 ? 0.0 : static_cast<double>(i) / (t - 1); };
  switch (pattern) {
    case 0: {  // constant
      const float level = static_cast<float>(rng.uniform(0.3, 1.0));
      std::fill(alpha.begin(), alpha.end(), level);
      break;
    }
    case 1:  // ramp up
      for (int i = 0; i < t; ++i) alpha[i] = static_cast<float>(pos(i));
      if (t == 1) alpha[0] = 1.0f;
      break;
    case 2:  // ramp down
      for (int i = 0; i < t; ++i) alpha[i] = static_cast<float>(1.0 - pos(i));
      break;
    default: {  // random piecewise over three anchors
      const double mid_pos = rng.uniform(0.3, 0.7);
      const double l0 = rng.uniform(0.15, 1.0);
      const double l1 = rng.uniform(0.15, 1.0);
      const double l2 = rng.uniform(0.15, 1.0);
      for (int i = 0; i < t; ++i) {
        const double x = pos(i);
        alpha[i] = static_cast<float>(
            x <= mid_pos ? l0 + (l1 - l0) * (mid_pos > 0 ? x / mid_pos : 0.0)
                         : l1 + (l2 - l1) * (x - mid_pos) / (1.0 - mid_pos));
      }
      break;
    }
  }
  return alpha;
}

UtterancePair make_utterance(const Generator& gen, const std::string& id, Rng rng) {
  const CorpusConfig& c = gen.config();
  UtterancePair u;
  u.id = id;
  const int t = rng.range_int(c.min_phonemes, c.max_phonemes + 1);
  for (int i = 0; i < t; ++i) {
    u.phonemes.ids.push_back(rng.range_int(0, c.vocab));
    u.phonemes.durations.push_back(rng.range_int(c.min_duration, c.max_duration + 1));
  }
  u.speaker_id = rng.range_int(0, c.speakers);
  u.emotion_id = rng.range_int(0, c.emotions);

  Rng noise = rng.fork(17);
  u.mel_neutral = gen.render_neutral(u.phonemes, u.speaker_id, noise);
  if (u.emotion_id == kNeutral) {
    u.intensity.assign(t, 0.0f);
    u.mel_emotional = u.mel_neutral;
  } else {
    u.intensity = sample_intensity(t, rng);
    u.mel_emotional = u.mel_neutral;
    gen.apply_emotion(u.mel_emotional, u.emotion_id, u.intensity, u.phonemes);
  }
  return u;
}

}  // namespace

void Dataset::save(const std::string& path) const {
  std::ostringstream header;
  header << "CASEIN-DATA v1\n";
  for (const auto& [k, v] : config.to_kv()) header << "config " << k << "=" << v << "\n";

  size_t offset = 0;
  const size_t mel_stride = sizeof(float);
  std::string payload;
  for (const UtterancePair& u : utterances) {
    header << "utterance " << u.id << " " << u.speaker_id << " " << u.emotion_id << "\n";
    header << "phonemes";
    for (int id : u.phonemes.ids) header << " " << id;
    header << "\ndurations";
    for (int d : u.phonemes.durations) header << " " << d;
    header << "\nintensity";
    for (float a : u.intensity) header << " " << cfg::format_float(a);
    header << "\nneutral " << offset << "\n";
    offset += u.mel_neutral.numel() * mel_stride;
    header << "emotional " << offset << "\n";
    offset += u.mel_emotional.numel() * mel_stride;
    header << "end\n";
  }
  header << "data " << offset << "\n";

  std::string out = header.str();
  const size_t text_len = out.size();
  out.resize(text_len + offset);
  char* dst = out.data() + text_len;
  for (const UtterancePair& u : utterances) {
    std::memcpy(dst, u.mel_neutral.v.data(), u.mel_neutral.numel() * sizeof(float));
    dst += u.mel_neutral.numel() * sizeof(float);
    std::memcpy(dst, u.mel_emotional.v.data(), u.mel_emotional.numel() * sizeof(float));
    dst += u.mel_emotional.numel() * sizeof(float);
  }
  write_file_atomic(path, out);
}

Dataset Dataset::load(const std::string& path) {
  const std::string bytes = read_file(path);
  Dataset ds;
  size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw DataError("dataset: truncated header in " + path);
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  if (next_line() != "CASEIN-DATA v1") throw DataError("dataset: bad magic in " + path);

  cfg::KV config_kv;
  struct Entry {
    UtterancePair u;
    size_t neutral_offset = 0, emotional_offset = 0;
  };
  std::vector<Entry> entries;
  size_t data_len = 0;

  for (;;) {
    std::string line = next_line();
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "config") {
      const std::string rest = line.substr(7);
      const size_t eq = rest.find('=');
      if (eq == std::string::npos) throw DataError("dataset: bad config line in " + path);
      config_kv[rest.substr(0, eq)] = rest.substr(eq + 1);
    } else if (tag == "utterance") {
      Entry e;
      if (!(ls >> e.u.id >> e.u.speaker_id >> e.u.emotion_id)) {
        throw DataError("dataset: bad utterance line in " + path);
      }
      for (;;) {
        std::string fl = next_line();
        if (fl == "end") break;
        std::istringstream fs(fl);
        std::string field;
        fs >> field;
        if (field == "phonemes") {
          int x;
          while (fs >> x) e.u.phonemes.ids.push_back(x);
        } else if (field == "durations") {
          int x;
          while (fs >> x) e.u.phonemes.durations.push_back(x);
        } else if (field == "intensity") {
          float x;
          while (fs >> x) e.u.intensity.push_back(x);
        } else if (field == "neutral") {
          fs >> e.neutral_offset;
        } else if (field == "emotional") {
          fs >> e.emotional_offset;
        } else {
          throw DataError("dataset: unknown utterance field '" + field + "' in " + path);
        }
      }
      entries.push_back(std::move(e));
    } else if (tag == "data") {
      if (!(ls >> data_len)) throw DataError("dataset: bad data line in " + path);
      break;
    } else {
      throw DataError("dataset: unknown header line '" + line + "' in " + path);
    }
  }

  ds.config = CorpusConfig::from_kv(config_kv);
  if (bytes.size() - pos != data_len) throw DataError("dataset: payload size mismatch in " + path);

  for (Entry& e : entries) {
    const int frames = e.u.phonemes.total_frames();
    const size_t nbytes = static_cast<size_t>(frames) * ds.config.channels * sizeof(float);
    if (e.neutral_offset + nbytes > data_len || e.emotional_offset + nbytes > data_len) {
      throw DataError("dataset: mel payload out of range in " + path);
    }
    e.u.mel_neutral = Mel({frames, ds.config.channels});
    e.u.mel_emotional = Mel({frames, ds.config.channels});
    std::memcpy(e.u.mel_neutral.v.data(), bytes.data() + pos + e.neutral_offset, nbytes);
    std::memcpy(e.u.mel_emotional.v.data(), bytes.data() + pos + e.emotional_offset, nbytes);
    e.u.validate(ds.config.vocab, ds.config.speakers, ds.config.emotions, ds.config.channels);
    ds.utterances.push_back(std::move(e.u));
  }
  return ds;
}

void generate_corpus(const CorpusConfig& config, const std::string& out_dir) {
  config.validate();
  const Generator gen(config);
  Rng base(config.seed);

  uint64_t counter = 0;
  auto make_split = [&](const char* name, int count) {
    Dataset ds;
    ds.config = config;
    for (int i = 0; i < count; ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "%s-%04d", name, i);
      ds.utterances.push_back(make_utterance(gen, id, base.fork(counter++)));
    }
    return ds;
  };

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  make_split("train", config.n_train).save((fs::path(out_dir) / "train.ds").string());
  make_split("val", config.n_val).save((fs::path(out_dir) / "val.ds").string());
  make_split("test", config.n_test).save((fs::path(out_dir) / "test.ds").string());
}

Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  Corpus c;
  c.train = Dataset::load((fs::path(dir) / "train.ds").string());
  c.val = Dataset::load((fs::path(dir) / "val.ds").string());
  c.test = Dataset::load((fs::path(dir) / "test.ds").string());
  return c;
}

const UtterancePair& find_utterance(const Corpus& corpus, const std::string& id) {
  for (const Dataset* ds : {&corpus.train, &corpus.val, &corpus.test}) {
    for (const UtterancePair& u : ds->utterances) {
      if (u.id == id) return u;
    }
  }
  throw MissingArtifact("utterance not found: " + id);
}

}  // namespace corpus
}  // namespace casein
