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

#ifndef CASEIN_MANIFOLD_H_
#define CASEIN_MANIFOLD_H_

#include <iosfwd>
#include <string>
#include <vector>

#include "casein/checkpoint.h"
#include "casein/config.h"
#include "casein/corpus.h"
#include "casein/layers.h"

namespace casein {
namespace manifold {

struct ModelDims {
  int channels = 80;
  int hidden = 256;
  int codebook_size = 256;
  int codebook_dim = 512;
  int kernel = 9;
  int speakers = 4;
  double dropout = 0.2;
};

ModelDims dims_from(const TrainConfig& train, const corpus::CorpusConfig& data);

template <typename R>
struct ForwardOptions {
  bool training = false;  // enables dropout
  Rng* rng = nullptr;     // dropout mask stream; required when training
};

// Emotional-mel encoder: two convolutions, then duration pooling down to one
// row per phoneme whose width equals the codebook dimension.
template <typename R>
struct MelEncoder {
  nn::Conv1dLayer<R> conv1, conv2;
  double dropout = 0.2;

  MelEncoder() = default;
  MelEncoder(const std::string& name, const ModelDims& d, Rng& rng)
      : conv1(name + ".conv1", d.channels, d.hidden, d.kernel, rng),
        conv2(name + ".conv2", d.hidden, d.codebook_dim, d.kernel, rng),
        dropout(d.dropout) {}

  nn::Var forward(nn::Tape<R>& tape, nn::Var mel, const std::vector<nn::Segment>& segs,
                  const ForwardOptions<R>& opts) {
    nn::Var h = conv1.forward(tape, mel);
    h = nn::leaky_relu(tape, h, R(nn::kLeakySlope));
    if (opts.training && dropout > 0.0) {
      h = nn::dropout(tape, h, static_cast<R>(dropout), *opts.rng);
    }
    h = conv2.forward(tape, h);
    return nn::avg_pool_segments(tape, h, segs);
  }

  void collect(nn::ParamList<R>& out) {
    conv1.collect(out);
    conv2.collect(out);
  }
};

// Linguistic-condition extractor over the paired neutral mel; per-phoneme
// average pooling keeps pronunciation content and discards frame detail.
template <typename R>
struct LinguisticExtractor {
  nn::Conv1dLayer<R> conv1, conv2;

  LinguisticExtractor() = default;
  LinguisticExtractor(const std::string& name, const ModelDims& d, Rng& rng)
      : conv1(name + ".conv1", d.channels, d.hidden, d.kernel, rng),
        conv2(name + ".conv2", d.hidden, d.hidden, d.kernel, rng) {}

  nn::Var forward(nn::Tape<R>& tape, nn::Var mel, const std::vector<nn::Segment>& segs) {
    nn::Var h = conv1.forward(tape, mel);
    h = nn::leaky_relu(tape, h, R(nn::kLeakySlope));
    h = conv2.forward(tape, h);
    return nn::avg_pool_segments(tape, h, segs);
  }

  void collect(nn::ParamList<R>& out) {
    conv1.collect(out);
    conv2.collect(out);
  }
};

// Reconstruction decoder: fuse [latent | linguistic | speaker] per phoneme,
// project down, expand rows by durations, then a residual conv stack.
template <typename R>
struct SpectrogramDecoder {
  nn::LinearLayer<R> input_proj;
  std::vector<nn::ResidualConvBlock<R>> blocks;
  nn::LinearLayer<R> output_proj;

  SpectrogramDecoder() = default;
  SpectrogramDecoder(const std::string& name, const ModelDims& d, Rng& rng)
      : input_proj(name + ".input_proj", d.codebook_dim + 2 * d.hidden, d.hidden, rng),
        output_proj(name + ".output_proj", d.hidden, d.channels, rng) {
    for (int i = 0; i < 4; ++i) {
      blocks.emplace_back(name + ".block" + std::to_string(i), d.hidden, d.kernel, rng);
    }
  }

  nn::Var forward(nn::Tape<R>& tape, nn::Var latents, nn::Var linguistic, nn::Var speaker_row,
                  const std::vector<int>& durations) {
    const int t = tape.value(latents).rows();
    nn::Var cond = nn::concat_cols(
        tape, {latents, linguistic, nn::repeat_row(tape, speaker_row, t)});
    nn::Var h = input_proj.forward(tape, cond);
    h = nn::expand_segments(tape, h, durations);
    for (auto& b : blocks) h = b.forward(tape, h);
    return output_proj.forward(tape, h);
  }

  void collect(nn::ParamList<R>& out) {
    input_proj.collect(out);
    for (auto& b : blocks) b.collect(out);
    output_proj.collect(out);
  }
};

template <typename R>
struct ManifoldModel {
  ModelDims dims;
  MelEncoder<R> encoder;
  LinguisticExtractor<R> extractor;
  nn::EmbeddingTable<R> speaker_table;
  SpectrogramDecoder<R> decoder;
  nn::Parameter<R> codebook;  // [codebook_size x codebook_dim]

  nn::ParamList<R> params() {
    nn::ParamList<R> out;
    encoder.collect(out);
    extractor.collect(out);
    speaker_table.collect(out);
    decoder.collect(out);
    out.push_back(&codebook);
    return out;
  }
};

// Codebook rows start uniform in [-1/sqrt(dim), 1/sqrt(dim)].
template <typename R>
ManifoldModel<R> make_model(const ModelDims& dims, Rng& rng) {
  ManifoldModel<R> m;
  m.dims = dims;
  m.encoder = MelEncoder<R>("encoder", dims, rng);
  m.extractor = LinguisticExtractor<R>("extractor", dims, rng);
  m.speaker_table = nn::EmbeddingTable<R>("speaker", dims.speakers, dims.hidden, rng);
  m.decoder = SpectrogramDecoder<R>("decoder", dims, rng);
  m.codebook = nn::Parameter<R>("codebook", nn::Tensor<R>({dims.codebook_size, dims.codebook_dim}));
  nn::init_uniform_fanin(m.codebook.value, dims.codebook_dim, rng);
  return m;
}

// Nearest-neighbour clustering of per-phoneme rows onto the codebook.
// quantized rows are bit-exact copies of the selected codebook rows.
struct ManifoldLatents {
  nn::Tensor<float> pre_quant;
  std::vector<int> indices;
  nn::Tensor<float> quantized;
};

ManifoldLatents quantize(const nn::Tensor<float>& pre_quant,
                         const nn::Tensor<float>& codebook);

// Fixed quantities for the finite-difference surrogate of the VQ losses:
// indices and both sides of the stop-gradients are captured at the base
// point so the probed function's true gradient equals the straight-through
// gradient of the real graph.
template <typename R>
struct VqCapture {
  std::vector<int> indices;
  nn::Tensor<R> pre0;
  nn::Tensor<R> zq0;
};

template <typename R>
struct ReconLossParts {
  nn::Var total;
  nn::Var reconstruction;
  nn::Var pre_quant;
  std::vector<int> indices;
};

// Full VQ reconstruction objective for one utterance pair:
//   mean-frame-distance(decoded, mel_e)
//   + mean_sq(stopgrad(pre) - z_q)           (codebook term)
//   + beta * mean_sq(pre - stopgrad(z_q))    (commitment term)
// with the decoder consuming the straight-through latents.
template <typename R>
ReconLossParts<R> reconstruction_loss(nn::Tape<R>& tape, ManifoldModel<R>& model,
                                      const nn::Tensor<R>& mel_emotional,
                                      const nn::Tensor<R>& mel_neutral, int speaker_id,
                                      const std::vector<int>& durations, R commit_beta,
                                      const ForwardOptions<R>& opts,
                                      const VqCapture<R>* capture = nullptr) {
  const std::vector<nn::Segment> segs = nn::segments_from_durations(durations);
  if (segs.back().end != mel_emotional.rows() || segs.back().end != mel_neutral.rows()) {
    throw ConfigError("reconstruction_loss: durations do not match mel frames");
  }
  nn::Var mel_e = tape.constant(mel_emotional);
  nn::Var mel_n = tape.constant(mel_neutral);

  nn::Var pre = model.encoder.forward(tape, mel_e, segs, opts);
  std::vector<int> indices =
      capture ? capture->indices : nn::nearest_rows(tape.value(pre), model.codebook.value);
  nn::Var zq = nn::gather_rows(tape, tape.param(model.codebook), indices);

  nn::Var decoder_in;
  if (capture) {
    // Surrogate: decoder sees pre + (zq0 - pre0), an affine offset frozen at
    // the base point, making the straight-through path differentiable.
    nn::Tensor<R> offset = capture->zq0;
    for (size_t i = 0; i < offset.v.size(); ++i) offset.v[i] -= capture->pre0.v[i];
    decoder_in = nn::add(tape, pre, tape.constant(offset));
  } else {
    decoder_in = nn::straight_through(tape, pre, zq);
  }

  nn::Var ling = model.extractor.forward(tape, mel_n, segs);
  nn::Var spk = model.speaker_table.forward(tape, {speaker_id});
  nn::Var decoded = model.decoder.forward(tape, decoder_in, ling, spk, durations);

  ReconLossParts<R> parts;
  parts.indices = indices;
  parts.pre_quant = pre;
  parts.reconstruction = nn::mean_row_distance(tape, decoded, mel_e);
  nn::Var pre_sg = capture ? tape.constant(capture->pre0) : nn::detach(tape, pre);
  nn::Var zq_sg = capture ? tape.constant(capture->zq0) : nn::detach(tape, zq);
  nn::Var codebook_term = nn::mean_sq_diff(tape, pre_sg, zq);
  nn::Var commit_term = nn::mean_sq_diff(tape, pre, zq_sg);
  parts.total = nn::add(tape, parts.reconstruction,
                        nn::add(tape, codebook_term, nn::scale(tape, commit_term, commit_beta)));
  return parts;
}

// Inference-mode latents for one emotional mel.
ManifoldLatents encode_utterance(ManifoldModel<float>& model, const corpus::Mel& mel_emotional,
                                 const std::vector<int>& durations);

// Inference-mode decode from explicit latents and conditions.
corpus::Mel decode_latents(ManifoldModel<float>& model, const nn::Tensor<float>& latents,
                           const corpus::Mel& mel_neutral_for_condition, int speaker_id,
                           const std::vector<int>& durations);

struct TrainResult {
  float best_val_loss = 0.0f;
  int best_epoch = -1;
  int codes_used = 0;  // distinct codebook rows hit on the training set
  float first_epoch_rec_loss = 0.0f;
  float last_epoch_rec_loss = 0.0f;
};

// Trains the manifold on emotional pairs, keeps the best-validation
// checkpoint at out_path. The checkpoint carries the effective config and
// the corpus config of the data it was trained on.
TrainResult train_manifold(const corpus::Corpus& corpus, const TrainConfig& config,
                           const std::string& out_path, std::ostream& log);

void save_model(const ManifoldModel<float>& model, Checkpoint& ckpt);
ManifoldModel<float> load_model(const Checkpoint& ckpt);

// Validation objective used for the best-checkpoint rule (eval mode).
float validation_loss(ManifoldModel<float>& model, const corpus::Dataset& val,
                      double commit_beta);

}  // namespace manifold
}  // namespace casein

#endif  // CASEIN_MANIFOLD_H_
