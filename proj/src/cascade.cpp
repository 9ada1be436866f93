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

#include "casein/cascade.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "casein/optim.h"

namespace casein {
namespace cascade {

CurveSpec CurveSpec::parse(const std::string& text) {
  CurveSpec spec;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const size_t colon = line.find(':', first);
    if (colon == std::string::npos) {
      throw ConfigError("curve line " + std::to_string(lineno) + " has no ':' separator");
    }
    std::string name = line.substr(first, colon - first);
    while (!name.empty() && (name.back() == ' ' || name.back() == '\t')) name.pop_back();
    const int emotion = corpus::emotion_id_from_name(name);
    if (spec.curves.count(emotion)) {
      throw ConfigError("curve line " + std::to_string(lineno) + ": duplicate emotion " + name);
    }

    std::vector<CurvePoint> pts;
    std::string rest = line.substr(colon + 1);
    std::istringstream items(rest);
    std::string item;
    while (std::getline(items, item, ',')) {
      const size_t a = item.find_first_not_of(" \t");
      if (a == std::string::npos) continue;
      size_t b = item.find_last_not_of(" \t");
      item = item.substr(a, b - a + 1);
      CurvePoint p;
      const size_t eq = item.find('=');
      try {
        if (eq == std::string::npos) {
          p.position = 0.0;  // bare value: constant curve
          p.intensity = std::stod(item);
        } else {
          p.position = std::stod(item.substr(0, eq));
          p.intensity = std::stod(item.substr(eq + 1));
        }
      } catch (const std::exception&) {
        throw ConfigError("curve line " + std::to_string(lineno) + ": bad anchor '" + item + "'");
      }
      pts.push_back(p);
    }
    if (pts.empty()) {
      throw ConfigError("curve line " + std::to_string(lineno) + ": no anchors for " + name);
    }
    spec.curves[emotion] = std::move(pts);
  }
  spec.validate();
  return spec;
}

void CurveSpec::validate() const {
  for (const auto& [emotion, pts] : curves) {
    if (pts.empty()) throw ConfigError("curve for emotion " + std::to_string(emotion) + " is empty");
    for (size_t i = 0; i < pts.size(); ++i) {
      if (pts[i].intensity < 0.0 || pts[i].intensity > 1.0) {
        throw ConfigError("curve intensity outside [0,1]");
      }
      if (i > 0 && pts[i].position <= pts[i - 1].position) {
        throw ConfigError("curve positions must be strictly increasing");
      }
    }
  }
}

namespace {

double eval_curve(const std::vector<CurvePoint>& pts, double x) {
  if (x <= pts.front().position) return pts.front().intensity;
  if (x >= pts.back().position) return pts.back().intensity;
  for (size_t i = 1; i < pts.size(); ++i) {
    if (x <= pts[i].position) {
      const double u = (x - pts[i - 1].position) / (pts[i].position - pts[i - 1].position);
      return (1.0 - u) * pts[i - 1].intensity + u * pts[i].intensity;
    }
  }
  return pts.back().intensity;
}

}  // namespace

swer::EmotionDistribution CurveSpec::evaluate(int t, int classes) const {
  validate();
  if (t < 1) throw ConfigError("curve evaluation needs at least one phoneme");
  swer::EmotionDistribution dist({t, classes});
  for (const auto& [emotion, pts] : curves) {
    if (emotion < 0 || emotion >= classes) {
      throw ConfigError("curve emotion id out of range: " + std::to_string(emotion));
    }
    for (int i = 0; i < t; ++i) {
      const double x = t == 1 ? 0.0 : static_cast<double>(i) / (t - 1);
      dist.row(i)[emotion] = static_cast<float>(eval_curve(pts, x));
    }
  }
  if (!curves.count(corpus::kNeutral)) {
    for (int i = 0; i < t; ++i) {
      float peak = 0.0f;
      for (int k = 1; k < classes; ++k) peak = std::max(peak, dist.row(i)[k]);
      dist.row(i)[corpus::kNeutral] = std::max(0.0f, 1.0f - peak);
    }
  }
  return dist;
}

GeneratedLatents gen_manifold(CascadeModel<float>& model, const swer::EmotionDistribution& dist) {
  if (model.explicit_only) {
    throw ConfigError("gen_manifold: explicit-only model has no generator route");
  }
  nn::Tape<float> tape;
  nn::Var pre = model.generator.forward(tape, tape.constant(dist));
  GeneratedLatents out;
  out.pre_gen = tape.value(pre);
  out.indices = nn::nearest_rows(out.pre_gen, model.frozen_codebook.value);
  out.quantized = nn::Tensor<float>({out.pre_gen.rows(), out.pre_gen.cols()});
  for (int i = 0; i < out.pre_gen.rows(); ++i) {
    std::copy(model.frozen_codebook.value.row(out.indices[i]),
              model.frozen_codebook.value.row(out.indices[i]) + model.dims.codebook_dim,
              out.quantized.row(i));
  }
  return out;
}

nn::Tensor<float> adapter_input(CascadeModel<float>& model, const swer::EmotionDistribution& dist) {
  if (model.explicit_only) {
    nn::Tape<float> tape;
    nn::Var proj = model.direct_proj.forward(tape, tape.constant(dist));
    return tape.value(proj);
  }
  return gen_manifold(model, dist).quantized;
}

corpus::Mel synthesize(CascadeModel<float>& model, const corpus::PhonemeSequence& phonemes,
                       int speaker_id, const nn::Tensor<float>& adapter_in) {
  phonemes.validate(model.dims.vocab);
  if (speaker_id < 0 || speaker_id >= model.dims.speakers) {
    throw ConfigError("synthesize: speaker id out of range");
  }
  if (adapter_in.rows() != phonemes.size() || adapter_in.cols() != model.dims.codebook_dim) {
    throw ConfigError("synthesize: latent shape does not match phoneme count");
  }
  nn::Tape<float> tape;
  nn::Tensor<float> row({1, model.dims.hidden});
  std::copy(model.frozen_speaker.value.row(speaker_id),
            model.frozen_speaker.value.row(speaker_id) + model.dims.hidden, row.v.data());
  nn::Var ada_out = model.adapter.forward(tape, tape.constant(adapter_in));
  nn::Var out = model.synth.forward(tape, phonemes.ids, ada_out, tape.constant(row),
                                    phonemes.durations);
  return tape.value(out);
}

corpus::Mel infer_from_curves(CascadeModel<float>& model, const corpus::PhonemeSequence& phonemes,
                              int speaker_id, const CurveSpec& curves) {
  const swer::EmotionDistribution dist = curves.evaluate(phonemes.size(), model.dims.classes);
  return synthesize(model, phonemes, speaker_id, adapter_input(model, dist));
}

corpus::Mel restore(CascadeModel<float>& model, const corpus::UtterancePair& utterance) {
  const swer::EmotionDistribution dist = swer::predict_distribution(
      model.frozen_classifier, utterance.mel_emotional, utterance.phonemes,
      model.dims.window_radius);
  return synthesize(model, utterance.phonemes, utterance.speaker_id,
                    adapter_input(model, dist));
}

void save_model(CascadeModel<float>& model, Checkpoint& ckpt) {
  ckpt.set_meta("dims.vocab", std::to_string(model.dims.vocab));
  ckpt.set_meta("dims.channels", std::to_string(model.dims.channels));
  ckpt.set_meta("dims.hidden", std::to_string(model.dims.hidden));
  ckpt.set_meta("dims.codebook_size", std::to_string(model.dims.codebook_size));
  ckpt.set_meta("dims.codebook_dim", std::to_string(model.dims.codebook_dim));
  ckpt.set_meta("dims.classes", std::to_string(model.dims.classes));
  ckpt.set_meta("dims.kernel", std::to_string(model.dims.kernel));
  ckpt.set_meta("dims.speakers", std::to_string(model.dims.speakers));
  ckpt.set_meta("dims.window_radius", std::to_string(model.dims.window_radius));
  ckpt.set_meta("mode", model.explicit_only ? "explicit-only" : "full");
  ckpt.set_meta("lambda", cfg::format_double(model.lambda_implicit));
  ckpt.set_meta("detach_generator", model.detach_generator ? "1" : "0");
  nn::ParamList<float> all;
  model.generator.collect(all);
  model.direct_proj.collect(all);
  model.adapter.collect(all);
  model.synth.collect(all);
  for (auto* p : model.frozen()) all.push_back(p);
  ckpt.add_params(all);
}

CascadeModel<float> load_model(const Checkpoint& ckpt) {
  CascadeDims d;
  d.vocab = std::stoi(ckpt.require_meta("dims.vocab"));
  d.channels = std::stoi(ckpt.require_meta("dims.channels"));
  d.hidden = std::stoi(ckpt.require_meta("dims.hidden"));
  d.codebook_size = std::stoi(ckpt.require_meta("dims.codebook_size"));
  d.codebook_dim = std::stoi(ckpt.require_meta("dims.codebook_dim"));
  d.classes = std::stoi(ckpt.require_meta("dims.classes"));
  d.kernel = std::stoi(ckpt.require_meta("dims.kernel"));
  d.speakers = std::stoi(ckpt.require_meta("dims.speakers"));
  d.window_radius = std::stoi(ckpt.require_meta("dims.window_radius"));
  Rng init_rng(0);
  CascadeModel<float> model =
      make_cascade_model<float>(d, init_rng, ckpt.require_meta("mode") == "explicit-only");
  model.lambda_implicit = std::stod(ckpt.require_meta("lambda"));
  model.detach_generator = ckpt.require_meta("detach_generator") == "1";
  nn::ParamList<float> all;
  model.generator.collect(all);
  model.direct_proj.collect(all);
  model.adapter.collect(all);
  model.synth.collect(all);
  for (auto* p : model.frozen()) all.push_back(p);
  ckpt.load_params(all);
  return model;
}

namespace {

struct CachedPair {
  const corpus::UtterancePair* utterance = nullptr;
  swer::EmotionDistribution distribution;
  nn::Tensor<float> target_latents;  // quantized rows from the frozen encoder
};

std::vector<CachedPair> build_cache(CascadeModel<float>& model, const corpus::Dataset& ds,
                                    bool need_latents) {
  std::vector<CachedPair> out;
  out.reserve(ds.utterances.size());
  for (const auto& u : ds.utterances) {
    CachedPair c;
    c.utterance = &u;
    c.distribution = swer::predict_distribution(model.frozen_classifier, u.mel_emotional,
                                                u.phonemes, model.dims.window_radius);
    if (need_latents) {
      nn::Tape<float> tape;
      manifold::ForwardOptions<float> opts;
      nn::Var pre = model.frozen_encoder.forward(tape, tape.constant(u.mel_emotional),
                                                 u.phonemes.boundaries(), opts);
      const auto lat = manifold::quantize(tape.value(pre), model.frozen_codebook.value);
      c.target_latents = lat.quantized;
    }
    out.push_back(std::move(c));
  }
  return out;
}

// Literal quantized form of the implicit objective on the training split:
// mean over phonemes of || quantize(generator(D)) - z_d ||_2.
double quantized_latent_distance(CascadeModel<float>& model, const std::vector<CachedPair>& cache) {
  double total = 0.0;
  long count = 0;
  for (const CachedPair& c : cache) {
    const GeneratedLatents gen = gen_manifold(model, c.distribution);
    for (int i = 0; i < gen.quantized.rows(); ++i) {
      double s = 0.0;
      for (int j = 0; j < gen.quantized.cols(); ++j) {
        const double d = static_cast<double>(gen.quantized.row(i)[j]) -
                         static_cast<double>(c.target_latents.row(i)[j]);
        s += d * d;
      }
      total += std::sqrt(s);
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / count;
}

uint64_t param_hash(const nn::Parameter<float>& p) {
  return fnv1a64(p.value.v.data(), p.value.numel() * sizeof(float));
}

}  // namespace

TrainResult train_cascade(const corpus::Corpus& corpus, const std::string& manifold_ckpt_path,
                          const std::string& swer_ckpt_path, const TrainConfig& config,
                          bool explicit_only, const std::string& out_path, std::ostream& log) {
  const Checkpoint manifold_ckpt = Checkpoint::load(manifold_ckpt_path);
  const Checkpoint swer_ckpt = Checkpoint::load(swer_ckpt_path);
  manifold::ManifoldModel<float> mani = manifold::load_model(manifold_ckpt);
  swer::EmotionClassifier<float> classifier = swer::load_model(swer_ckpt);

  const corpus::CorpusConfig& data_cfg = corpus.train.config;
  if (mani.dims.channels != data_cfg.channels || classifier.dims.channels != data_cfg.channels) {
    throw ConfigError("train_cascade: channel count differs between checkpoints and data");
  }

  CascadeDims dims;
  dims.vocab = data_cfg.vocab;
  dims.channels = data_cfg.channels;
  dims.hidden = mani.dims.hidden;
  dims.codebook_size = mani.dims.codebook_size;
  dims.codebook_dim = mani.dims.codebook_dim;
  dims.classes = classifier.dims.classes;
  dims.kernel = mani.dims.kernel;
  dims.speakers = mani.dims.speakers;
  dims.window_radius = swer::checkpoint_radius(swer_ckpt);

  Rng rng(config.seed);
  Rng init_rng = rng.fork(1);
  Rng shuffle_rng = rng.fork(2);

  CascadeModel<float> model = make_cascade_model<float>(dims, init_rng, explicit_only);
  model.lambda_implicit = config.lambda_implicit;

  // Install frozen components from the upstream checkpoints.
  model.frozen_encoder.conv1.weight.value = mani.encoder.conv1.weight.value;
  model.frozen_encoder.conv1.bias.value = mani.encoder.conv1.bias.value;
  model.frozen_encoder.conv2.weight.value = mani.encoder.conv2.weight.value;
  model.frozen_encoder.conv2.bias.value = mani.encoder.conv2.bias.value;
  model.frozen_codebook.value = mani.codebook.value;
  model.frozen_speaker.value = mani.speaker_table.table.value;
  model.frozen_classifier.conv1.weight.value = classifier.conv1.weight.value;
  model.frozen_classifier.conv1.bias.value = classifier.conv1.bias.value;
  model.frozen_classifier.conv2.weight.value = classifier.conv2.weight.value;
  model.frozen_classifier.conv2.bias.value = classifier.conv2.bias.value;
  model.frozen_classifier.head.weight.value = classifier.head.weight.value;
  model.frozen_classifier.head.bias.value = classifier.head.bias.value;

  std::vector<uint64_t> freeze_hashes;
  for (auto* p : model.frozen()) freeze_hashes.push_back(param_hash(*p));

  log << "cascade: caching frozen distributions and latents\n";
  std::vector<CachedPair> train_cache = build_cache(model, corpus.train, !explicit_only);
  std::vector<CachedPair> val_cache = build_cache(model, corpus.val, !explicit_only);

  TrainResult result;
  if (!explicit_only) {
    result.quantized_latent_distance_initial = quantized_latent_distance(model, train_cache);
    log << "cascade: initial quantized latent distance "
        << result.quantized_latent_distance_initial << "\n";
  }

  nn::AdamOptimizer<float> adam(model.trainable(), config.beta1, config.beta2);
  std::vector<int> order(train_cache.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  float best_val = std::numeric_limits<float>::max();
  std::vector<nn::Tensor<float>> best_params;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = nn::lr_linear_decay(epoch, config.epochs, config.lr);
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.range_int(0, static_cast<int>(i))]);
    }
    double epoch_syn = 0.0, epoch_total = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t end = std::min(order.size(), start + config.batch_size);
      nn::Tape<float> tape;
      nn::Var batch_loss{-1};
      double batch_syn = 0.0;
      for (size_t bi = start; bi < end; ++bi) {
        const CachedPair& c = train_cache[order[bi]];
        auto parts = cascade_loss<float>(tape, model, c.distribution, c.target_latents,
                                         c.utterance->mel_emotional, c.utterance->phonemes.ids,
                                         c.utterance->speaker_id, c.utterance->phonemes.durations);
        batch_syn += tape.value(parts.synthesis).v[0];
        batch_loss = batch_loss.valid() ? nn::add(tape, batch_loss, parts.total) : parts.total;
      }
      batch_loss = nn::scale(tape, batch_loss, 1.0f / static_cast<float>(end - start));
      const float loss_value = tape.value(batch_loss).v[0];
      if (!std::isfinite(loss_value)) {
        throw NumericError("train_cascade: loss diverged at epoch " + std::to_string(epoch));
      }
      adam.zero_grad();
      tape.backward(batch_loss);
      adam.step(lr);
      epoch_syn += batch_syn / static_cast<double>(end - start);
      epoch_total += loss_value;
      ++batches;
    }
    epoch_syn /= batches;
    epoch_total /= batches;

    double val_syn = 0.0;
    for (const CachedPair& c : val_cache) {
      nn::Tape<float> tape;
      auto parts = cascade_loss<float>(tape, model, c.distribution, c.target_latents,
                                       c.utterance->mel_emotional, c.utterance->phonemes.ids,
                                       c.utterance->speaker_id, c.utterance->phonemes.durations);
      val_syn += tape.value(parts.synthesis).v[0];
    }
    val_syn = val_cache.empty() ? 0.0 : val_syn / val_cache.size();

    const bool improved = static_cast<float>(val_syn) < best_val;
    if (improved) {
      best_val = static_cast<float>(val_syn);
      result.best_val_syn_loss = best_val;
      result.best_epoch = epoch;
      best_params.clear();
      for (auto* p : model.trainable()) best_params.push_back(p->value);
    }
    if (!explicit_only && epoch + 1 == config.epochs) {
      result.quantized_latent_distance_final = quantized_latent_distance(model, train_cache);
    }
    log << "cascade epoch " << epoch << " lr " << lr << " train " << epoch_total << " syn "
        << epoch_syn << " val_syn " << val_syn << (improved ? " *" : "") << "\n";
  }

  // Freeze contract: frozen parameter bytes are identical before and after.
  {
    size_t i = 0;
    for (auto* p : model.frozen()) {
      if (param_hash(*p) != freeze_hashes[i++]) {
        throw NumericError("train_cascade: frozen parameter " + p->name + " changed");
      }
    }
  }

  // Persist the best-validation weights with the completed metrics.
  {
    auto trainable = model.trainable();
    for (size_t i = 0; i < trainable.size(); ++i) trainable[i]->value = best_params[i];
    Checkpoint ckpt;
    config.echo_into(ckpt);
    for (const auto& [k, v] : data_cfg.to_kv()) ckpt.set_meta("data." + k, v);
    ckpt.set_meta("val_syn_loss", cfg::format_float(best_val));
    ckpt.set_meta("epoch", std::to_string(result.best_epoch));
    ckpt.set_meta("imp_quantized_initial",
                  cfg::format_double(result.quantized_latent_distance_initial));
    ckpt.set_meta("imp_quantized_final",
                  cfg::format_double(result.quantized_latent_distance_final));
    std::string hashes;
    for (size_t i = 0; i < freeze_hashes.size(); ++i) {
      char buf[20];
      std::snprintf(buf, sizeof(buf), "%016llx",
                    static_cast<unsigned long long>(freeze_hashes[i]));
      if (i) hashes += ",";
      hashes += buf;
    }
    ckpt.set_meta("freeze_hashes", hashes);
    save_model(model, ckpt);
    ckpt.save(out_path);
  }

  if (!explicit_only) {
    log << "cascade: final quantized latent distance "
        << result.quantized_latent_distance_final << "\n";
  }
  log << "cascade done: best val synthesis loss " << result.best_val_syn_loss << " at epoch "
      << result.best_epoch << "\n";
  return result;
}

}  // namespace cascade
}  // namespace casein
