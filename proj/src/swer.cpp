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

#include "casein/swer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "casein/optim.h"

namespace casein {
namespace swer {

std::vector<WindowSlice> slice_windows(const corpus::PhonemeSequence& phonemes, int radius) {
  if (radius < 0) throw ConfigError("slice_windows: radius must be >= 0");
  const int t = phonemes.size();
  const std::vector<nn::Segment> segs = phonemes.boundaries();
  std::vector<WindowSlice> out;
  out.reserve(t);
  for (int i = 0; i < t; ++i) {
    WindowSlice w;
    w.center = i;
    w.ph_begin = std::max(0, i - radius);
    w.ph_end = std::min(t - 1, i + radius);
    w.frames = {segs[w.ph_begin].begin, segs[w.ph_end].end};
    out.push_back(w);
  }
  return out;
}

corpus::Mel window_frames(const corpus::Mel& mel, const WindowSlice& w) {
  const int cols = mel.cols();
  corpus::Mel out({w.frames.length(), cols});
  for (int f = w.frames.begin; f < w.frames.end; ++f) {
    std::copy(mel.row(f), mel.row(f) + cols, out.row(f - w.frames.begin));
  }
  return out;
}

corpus::Mel classifier_input(const corpus::Mel& mel, const WindowSlice& w) {
  corpus::Mel out = window_frames(mel, w);
  const int rows = out.rows(), cols = out.cols();
  // Per-channel mean subtraction over the window. Mean pooling after nearly
  // linear convolutions cannot see modulation energy riding on a large DC
  // envelope; centering makes the activation rectify it at first order.
  std::vector<double> mean(cols, 0.0);
  for (int f = 0; f < rows; ++f) {
    const float* r = out.row(f);
    for (int c = 0; c < cols; ++c) mean[c] += r[c];
  }
  for (int c = 0; c < cols; ++c) mean[c] /= rows;
  for (int f = 0; f < rows; ++f) {
    float* r = out.row(f);
    for (int c = 0; c < cols; ++c) r[c] = static_cast<float>(r[c] - mean[c]);
  }
  return out;
}

ClassifierDims classifier_dims_from(const TrainConfig& train, const corpus::CorpusConfig& data) {
  ClassifierDims d;
  d.channels = data.channels;
  d.hidden = train.hidden;
  d.classes = data.emotions;
  d.kernel = train.kernel;
  d.dropout = train.dropout;
  return d;
}

EmotionDistribution predict_distribution(EmotionClassifier<float>& model,
                                         const corpus::Mel& mel_emotional,
                                         const corpus::PhonemeSequence& phonemes, int radius) {
  const std::vector<WindowSlice> windows = slice_windows(phonemes, radius);
  EmotionDistribution dist({phonemes.size(), model.dims.classes});
  nn::Tape<float> tape;
  for (const WindowSlice& w : windows) {
    nn::Var logits = model.forward_logits(tape, tape.constant(classifier_input(mel_emotional, w)));
    nn::Var probs = nn::sigmoid(tape, logits);
    const auto& pv = tape.value(probs);
    std::copy(pv.v.begin(), pv.v.end(), dist.row(w.center));
  }
  return dist;
}

namespace {

nn::Tensor<float> one_hot(int emotion_id, int classes) {
  nn::Tensor<float> label({1, classes});
  label.v[emotion_id] = 1.0f;
  return label;
}

}  // namespace

float window_accuracy(EmotionClassifier<float>& model, const corpus::Dataset& ds, int radius) {
  int correct = 0, total = 0;
  for (const auto& u : ds.utterances) {
    for (const WindowSlice& w : slice_windows(u.phonemes, radius)) {
      nn::Tape<float> tape;
      nn::Var logits = model.forward_logits(tape, tape.constant(classifier_input(u.mel_emotional, w)));
      const auto& lv = tape.value(logits);
      const int pred = static_cast<int>(std::max_element(lv.v.begin(), lv.v.end()) - lv.v.begin());
      correct += (pred == u.emotion_id);
      ++total;
    }
  }
  return total == 0 ? 0.0f : static_cast<float>(correct) / static_cast<float>(total);
}

void save_model(EmotionClassifier<float>& model, int radius, Checkpoint& ckpt) {
  ckpt.set_meta("dims.channels", std::to_string(model.dims.channels));
  ckpt.set_meta("dims.hidden", std::to_string(model.dims.hidden));
  ckpt.set_meta("dims.classes", std::to_string(model.dims.classes));
  ckpt.set_meta("dims.kernel", std::to_string(model.dims.kernel));
  ckpt.set_meta("dims.dropout", cfg::format_double(model.dims.dropout));
  ckpt.set_meta("radius", std::to_string(radius));
  ckpt.add_params(model.params());
}

EmotionClassifier<float> load_model(const Checkpoint& ckpt) {
  ClassifierDims d;
  d.channels = std::stoi(ckpt.require_meta("dims.channels"));
  d.hidden = std::stoi(ckpt.require_meta("dims.hidden"));
  d.classes = std::stoi(ckpt.require_meta("dims.classes"));
  d.kernel = std::stoi(ckpt.require_meta("dims.kernel"));
  d.dropout = std::stod(ckpt.require_meta("dims.dropout"));
  Rng init_rng(0);
  EmotionClassifier<float> model(d, init_rng);
  ckpt.load_params(model.params());
  return model;
}

int checkpoint_radius(const Checkpoint& ckpt) {
  return std::stoi(ckpt.require_meta("radius"));
}

TrainResult train_swer(const corpus::Corpus& corpus, const TrainConfig& config,
                       const std::string& out_path, std::ostream& log) {
  const ClassifierDims dims = classifier_dims_from(config, corpus.train.config);
  Rng rng(config.seed);
  Rng init_rng = rng.fork(1);
  Rng shuffle_rng = rng.fork(2);
  Rng dropout_rng = rng.fork(3);

  EmotionClassifier<float> model(dims, init_rng);
  nn::AdamOptimizer<float> adam(model.params(), config.beta1, config.beta2);

  // Every window of every training utterance is an individual sample
  // labeled with the utterance's emotion class.
  struct Sample {
    const corpus::UtterancePair* utterance;
    WindowSlice window;
  };
  std::vector<Sample> samples;
  for (const auto& u : corpus.train.utterances) {
    for (const WindowSlice& w : slice_windows(u.phonemes, config.window_radius)) {
      samples.push_back({&u, w});
    }
  }
  if (samples.empty()) throw ConfigError("train_swer: empty training split");

  std::vector<int> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  TrainResult result;
  float best_acc = -1.0f;
  bool first_batch = true;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = nn::lr_linear_decay(epoch, config.epochs, config.lr);
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.range_int(0, static_cast<int>(i))]);
    }
    double epoch_loss = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t end = std::min(order.size(), start + config.batch_size);
      nn::Tape<float> tape;
      nn::Var batch_loss{-1};
      for (size_t bi = start; bi < end; ++bi) {
        const Sample& s = samples[order[bi]];
        nn::Var logits = model.forward_logits(
            tape, tape.constant(classifier_input(s.utterance->mel_emotional, s.window)),
            /*training=*/true, &dropout_rng);
        nn::Var loss = nn::bce_logits(tape, logits, one_hot(s.utterance->emotion_id, dims.classes));
        batch_loss = batch_loss.valid() ? nn::add(tape, batch_loss, loss) : loss;
      }
      batch_loss = nn::scale(tape, batch_loss, 1.0f / static_cast<float>(end - start));
      const float loss_value = tape.value(batch_loss).v[0];
      if (first_batch) {
        result.initial_loss = loss_value;
        first_batch = false;
      }
      if (!std::isfinite(loss_value)) {
        throw NumericError("train_swer: loss diverged at epoch " + std::to_string(epoch));
      }
      adam.zero_grad();
      tape.backward(batch_loss);
      adam.step(lr);
      epoch_loss += loss_value;
      ++batches;
    }
    epoch_loss /= batches;

    const float acc = window_accuracy(model, corpus.val, config.window_radius);
    const bool improved = acc > best_acc;
    if (improved) {
      best_acc = acc;
      result.best_val_accuracy = acc;
      result.best_epoch = epoch;
      Checkpoint ckpt;
      config.echo_into(ckpt);
      for (const auto& [k, v] : corpus.train.config.to_kv()) ckpt.set_meta("data." + k, v);
      ckpt.set_meta("val_accuracy", cfg::format_float(acc));
      ckpt.set_meta("epoch", std::to_string(epoch));
      save_model(model, config.window_radius, ckpt);
      ckpt.save(out_path);
    }
    log << "swer epoch " << epoch << " lr " << lr << " loss " << epoch_loss << " val_acc "
        << acc << (improved ? " *" : "") << "\n";
  }
  log << "swer done: best val accuracy " << result.best_val_accuracy << " at epoch "
      << result.best_epoch << "\n";
  return result;
}

}  // namespace swer
}  // namespace casein
