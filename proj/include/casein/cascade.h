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

#ifndef CASEIN_CASCADE_H_
#define CASEIN_CASCADE_H_

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "casein/manifold.h"
#include "casein/swer.h"

namespace casein {
namespace cascade {

// Declarative per-emotion intensity curves: anchors of (phoneme-position
// fraction, intensity), linearly interpolated, constant beyond the ends.
struct CurvePoint {
  double position = 0.0;
  double intensity = 0.0;
};

struct CurveSpec {
  std::map<int, std::vector<CurvePoint>> curves;  // emotion id -> anchors

  // Text form: one line per emotion, "happy: 0.0=0.0, 1.0=1.0"; a bare
  // number is a constant curve.
  static CurveSpec parse(const std::string& text);

  void validate() const;

  // Evaluates every listed curve at t positions i/(t-1). Unlisted emotional
  // classes get zero; the neutral column defaults to
  // max(0, 1 - max emotional intensity) unless given explicitly.
  swer::EmotionDistribution evaluate(int t, int classes) const;
};

struct CascadeDims {
  int vocab = 20;
  int channels = 80;
  int hidden = 256;
  int codebook_size = 256;
  int codebook_dim = 512;
  int classes = 5;
  int kernel = 9;
  int speakers = 4;
  int window_radius = 2;
};

// Distribution-to-manifold generator: two convolutions along the phoneme
// axis, emitting one codebook-dimension row per phoneme.
template <typename R>
struct LatentGenerator {
  nn::Conv1dLayer<R> conv1, conv2;

  LatentGenerator() = default;
  LatentGenerator(const CascadeDims& d, Rng& rng)
      : conv1("generator.conv1", d.classes, d.hidden, d.kernel, rng),
        conv2("generator.conv2", d.hidden, d.codebook_dim, d.kernel, rng) {}

  nn::Var forward(nn::Tape<R>& tape, nn::Var distribution) {
    nn::Var h = conv1.forward(tape, distribution);
    h = nn::leaky_relu(tape, h, R(nn::kLeakySlope));
    return conv2.forward(tape, h);
  }

  void collect(nn::ParamList<R>& out) {
    conv1.collect(out);
    conv2.collect(out);
  }
};

// Manifold-to-synthesizer adapter.
template <typename R>
struct EmotionAdapter {
  nn::Conv1dLayer<R> conv1, conv2;

  EmotionAdapter() = default;
  EmotionAdapter(const CascadeDims& d, Rng& rng)
      : conv1("adapter.conv1", d.codebook_dim, d.hidden, d.kernel, rng),
        conv2("adapter.conv2", d.hidden, d.hidden, d.kernel, rng) {}

  nn::Var forward(nn::Tape<R>& tape, nn::Var latents) {
    nn::Var h = conv1.forward(tape, latents);
    h = nn::leaky_relu(tape, h, R(nn::kLeakySlope));
    return conv2.forward(tape, h);
  }

  void collect(nn::ParamList<R>& out) {
    conv1.collect(out);
    conv2.collect(out);
  }
};

// Synthesis backbone: phoneme embedding with additive adapter and speaker
// conditioning, duration expansion, then a residual conv stack.
template <typename R>
struct Synthesizer {
  nn::EmbeddingTable<R> phoneme_embedding;
  std::vector<nn::ResidualConvBlock<R>> blocks;
  nn::LinearLayer<R> out_proj;

  Synthesizer() = default;
  Synthesizer(const CascadeDims& d, Rng& rng)
      : phoneme_embedding("synth.embedding", d.vocab, d.hidden, rng),
        out_proj("synth.out", d.hidden, d.channels, rng) {
    for (int i = 0; i < 4; ++i) {
      blocks.emplace_back("synth.block" + std::to_string(i), d.hidden, d.kernel, rng);
    }
  }

  nn::Var forward(nn::Tape<R>& tape, const std::vector<int>& phoneme_ids, nn::Var adapter_out,
                  nn::Var speaker_row, const std::vector<int>& durations) {
    nn::Var x = phoneme_embedding.forward(tape, phoneme_ids);
    x = nn::add(tape, x, adapter_out);
    x = nn::add_row(tape, x, speaker_row);
    x = nn::expand_segments(tape, x, durations);
    for (auto& b : blocks) x = b.forward(tape, x);
    return out_proj.forward(tape, x);
  }

  void collect(nn::ParamList<R>& out) {
    phoneme_embedding.collect(out);
    for (auto& b : blocks) b.collect(out);
    out_proj.collect(out);
  }
};

// Trainable synthesis stack plus frozen upstream components. The
// explicit-only flavor routes the distribution through a linear projection
// straight into the adapter, bypassing the generator and codebook.
template <typename R>
struct CascadeModel {
  CascadeDims dims;
  bool explicit_only = false;
  double lambda_implicit = 0.1;
  bool detach_generator = false;  // cut the synthesis gradient into the generator

  LatentGenerator<R> generator;
  nn::LinearLayer<R> direct_proj;  // classes -> codebook_dim (ablation route)
  EmotionAdapter<R> adapter;
  Synthesizer<R> synth;

  // Frozen references; never registered with the optimizer.
  manifold::MelEncoder<R> frozen_encoder;
  nn::Parameter<R> frozen_codebook;
  nn::Parameter<R> frozen_speaker;
  swer::EmotionClassifier<R> frozen_classifier;

  nn::ParamList<R> trainable() {
    nn::ParamList<R> out;
    if (explicit_only) {
      direct_proj.collect(out);
    } else {
      generator.collect(out);
    }
    adapter.collect(out);
    synth.collect(out);
    return out;
  }

  nn::ParamList<R> frozen() {
    nn::ParamList<R> out;
    frozen_encoder.collect(out);
    out.push_back(&frozen_codebook);
    out.push_back(&frozen_speaker);
    frozen_classifier.collect(out);
    return out;
  }
};

// Fresh trainable parts; frozen components are installed from checkpoints.
template <typename R>
CascadeModel<R> make_cascade_model(const CascadeDims& dims, Rng& rng, bool explicit_only) {
  CascadeModel<R> m;
  m.dims = dims;
  m.explicit_only = explicit_only;
  m.generator = LatentGenerator<R>(dims, rng);
  m.direct_proj = nn::LinearLayer<R>("direct_proj", dims.classes, dims.codebook_dim, rng);
  m.adapter = EmotionAdapter<R>(dims, rng);
  m.synth = Synthesizer<R>(dims, rng);
  manifold::ModelDims enc_dims;
  enc_dims.channels = dims.channels;
  enc_dims.hidden = dims.hidden;
  enc_dims.codebook_dim = dims.codebook_dim;
  enc_dims.codebook_size = dims.codebook_size;
  enc_dims.kernel = dims.kernel;
  enc_dims.dropout = 0.0;
  m.frozen_encoder = manifold::MelEncoder<R>("encoder", enc_dims, rng);
  m.frozen_codebook = nn::Parameter<R>("codebook", nn::Tensor<R>({dims.codebook_size, dims.codebook_dim}));
  m.frozen_speaker = nn::Parameter<R>("speaker.table", nn::Tensor<R>({dims.speakers, dims.hidden}));
  swer::ClassifierDims cd;
  cd.channels = dims.channels;
  cd.hidden = dims.hidden;
  cd.classes = dims.classes;
  cd.kernel = dims.kernel;
  cd.dropout = 0.0;
  m.frozen_classifier = swer::EmotionClassifier<R>(cd, rng);
  return m;
}

// Explicit distribution -> continuous rows -> nearest codebook rows.
struct GeneratedLatents {
  nn::Tensor<float> pre_gen;
  std::vector<int> indices;
  nn::Tensor<float> quantized;
};

GeneratedLatents gen_manifold(CascadeModel<float>& model, const swer::EmotionDistribution& dist);

// Adapter input for inference: quantized latents (full) or the direct
// projection of the distribution (explicit-only).
nn::Tensor<float> adapter_input(CascadeModel<float>& model, const swer::EmotionDistribution& dist);

corpus::Mel synthesize(CascadeModel<float>& model, const corpus::PhonemeSequence& phonemes,
                       int speaker_id, const nn::Tensor<float>& adapter_in);

corpus::Mel infer_from_curves(CascadeModel<float>& model, const corpus::PhonemeSequence& phonemes,
                              int speaker_id, const CurveSpec& curves);

// Restoration task: re-synthesize an utterance from its text, speaker, and
// the distribution the frozen classifier reads off the target mel.
corpus::Mel restore(CascadeModel<float>& model, const corpus::UtterancePair& utterance);

// Training-time loss graph for one pair. `capture` freezes the quantization
// for finite-difference checks, as in the manifold objective.
template <typename R>
struct CascadeLossParts {
  nn::Var total;
  nn::Var synthesis;
  nn::Var implicit;  // invalid when explicit_only
  std::vector<int> indices;
};

template <typename R>
CascadeLossParts<R> cascade_loss(nn::Tape<R>& tape, CascadeModel<R>& model,
                                 const nn::Tensor<R>& distribution,
                                 const nn::Tensor<R>& target_latents,
                                 const nn::Tensor<R>& mel_target,
                                 const std::vector<int>& phoneme_ids, int speaker_id,
                                 const std::vector<int>& durations,
                                 const manifold::VqCapture<R>* capture = nullptr) {
  nn::Var dist = tape.constant(distribution);
  nn::Var speaker_row = tape.constant([&] {
    nn::Tensor<R> row({1, model.dims.hidden});
    std::copy(model.frozen_speaker.value.row(speaker_id),
              model.frozen_speaker.value.row(speaker_id) + model.dims.hidden, row.v.data());
    return row;
  }());

  CascadeLossParts<R> parts;
  nn::Var ada_in;
  nn::Var pre_gen;
  if (model.explicit_only) {
    ada_in = model.direct_proj.forward(tape, dist);
  } else {
    pre_gen = model.generator.forward(tape, dist);
    parts.indices = capture ? capture->indices
                            : nn::nearest_rows(tape.value(pre_gen), model.frozen_codebook.value);
    nn::Var zq = nn::gather_rows(tape, tape.constant(model.frozen_codebook.value), parts.indices);
    if (capture) {
      nn::Tensor<R> offset = capture->zq0;
      for (size_t i = 0; i < offset.v.size(); ++i) offset.v[i] -= capture->pre0.v[i];
      ada_in = nn::add(tape, pre_gen, tape.constant(offset));
    } else if (model.detach_generator) {
      ada_in = zq;  // constant leaf path: no synthesis gradient into the generator
    } else {
      ada_in = nn::straight_through(tape, pre_gen, zq);
    }
  }

  nn::Var ada_out = model.adapter.forward(tape, ada_in);
  nn::Var mel_out = model.synth.forward(tape, phoneme_ids, ada_out, speaker_row, durations);
  parts.synthesis = nn::mean_row_distance(tape, mel_out, tape.constant(mel_target));

  if (model.explicit_only) {
    parts.total = parts.synthesis;
  } else {
    parts.implicit = nn::mean_row_distance(tape, pre_gen, tape.constant(target_latents));
    parts.total = nn::add(tape, parts.synthesis,
                          nn::scale(tape, parts.implicit, static_cast<R>(model.lambda_implicit)));
  }
  return parts;
}

struct TrainResult {
  float best_val_syn_loss = 0.0f;
  int best_epoch = -1;
  // Literal quantized latent distance (mean over phonemes of the Euclidean
  // distance between generated and target codebook rows) on the training
  // split, at initialization and after the final epoch.
  double quantized_latent_distance_initial = 0.0;
  double quantized_latent_distance_final = 0.0;
};

TrainResult train_cascade(const corpus::Corpus& corpus, const std::string& manifold_ckpt_path,
                          const std::string& swer_ckpt_path, const TrainConfig& config,
                          bool explicit_only, const std::string& out_path, std::ostream& log);

void save_model(CascadeModel<float>& model, Checkpoint& ckpt);
CascadeModel<float> load_model(const Checkpoint& ckpt);

}  // namespace cascade
}  // namespace casein

#endif  // CASEIN_CASCADE_H_
