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

#ifndef CASEIN_SWER_H_
#define CASEIN_SWER_H_

#include <iosfwd>
#include <string>
#include <vector>

#include "casein/checkpoint.h"
#include "casein/config.h"
#include "casein/corpus.h"
#include "casein/layers.h"

namespace casein {
namespace swer {

// One sliding window: the frame span of phonemes center-radius ... center+radius,
// clamped at the sequence edges.
struct WindowSlice {
  int center = 0;
  int ph_begin = 0;  // covered phoneme range [ph_begin, ph_end]
  int ph_end = 0;
  nn::Segment frames;
};

// Exactly one window per phoneme.
std::vector<WindowSlice> slice_windows(const corpus::PhonemeSequence& phonemes, int radius);

corpus::Mel window_frames(const corpus::Mel& mel, const WindowSlice& w);

// Classifier input: the window's frames with the per-channel time mean
// removed, so pooled features respond to modulation rather than the static
// envelope.
corpus::Mel classifier_input(const corpus::Mel& mel, const WindowSlice& w);

struct ClassifierDims {
  int channels = 80;
  int hidden = 256;
  int classes = 5;
  int kernel = 9;
  double dropout = 0.2;
};

ClassifierDims classifier_dims_from(const TrainConfig& train, const corpus::CorpusConfig& data);

// Per-window emotion classifier: two convolutions, global average pooling
// over time, then a zero-initialized linear head (probabilities start at 0.5
// under the element-wise sigmoid).
template <typename R>
struct EmotionClassifier {
  ClassifierDims dims;
  nn::Conv1dLayer<R> conv1, conv2;
  nn::LinearLayer<R> head;

  EmotionClassifier() = default;
  EmotionClassifier(const ClassifierDims& d, Rng& rng)
      : dims(d),
        conv1("classifier.conv1", d.channels, d.hidden, d.kernel, rng),
        conv2("classifier.conv2", d.hidden, d.hidden, d.kernel, rng),
        head("classifier.head", d.hidden, d.classes, rng, /*zero_init=*/true) {}

  nn::Var forward_logits(nn::Tape<R>& tape, nn::Var window, bool training = false,
                         Rng* dropout_rng = nullptr) {
    nn::Var h = conv1.forward(tape, window);
    h = nn::leaky_relu(tape, h, R(nn::kLeakySlope));
    if (training && dims.dropout > 0.0) {
      h = nn::dropout(tape, h, static_cast<R>(dims.dropout), *dropout_rng);
    }
    h = conv2.forward(tape, h);
    h = nn::global_avg_pool(tape, h);
    return head.forward(tape, h);  // [1 x classes]
  }

  nn::ParamList<R> params() {
    nn::ParamList<R> out;
    conv1.collect(out);
    conv2.collect(out);
    head.collect(out);
    return out;
  }
};

// Per-phoneme emotion probabilities, rows NOT constrained to sum to one
// (element-wise sigmoid; mixtures stay representable).
using EmotionDistribution = nn::Tensor<float>;  // [t x classes]

EmotionDistribution predict_distribution(EmotionClassifier<float>& model,
                                         const corpus::Mel& mel_emotional,
                                         const corpus::PhonemeSequence& phonemes, int radius);

struct TrainResult {
  float best_val_accuracy = 0.0f;
  int best_epoch = -1;
  float initial_loss = 0.0f;  // first batch, before any optimizer step
};

TrainResult train_swer(const corpus::Corpus& corpus, const TrainConfig& config,
                       const std::string& out_path, std::ostream& log);

// Fraction of windows whose argmax logit matches the utterance label.
float window_accuracy(EmotionClassifier<float>& model, const corpus::Dataset& ds, int radius);

void save_model(EmotionClassifier<float>& model, int radius, Checkpoint& ckpt);
EmotionClassifier<float> load_model(const Checkpoint& ckpt);
int checkpoint_radius(const Checkpoint& ckpt);

}  // namespace swer
}  // namespace casein

#endif  // CASEIN_SWER_H_
