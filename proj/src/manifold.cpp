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

#include "casein/manifold.h"

#include <algorithm>
#include <limits>
#include <ostream>

#include "casein/optim.h"

namespace casein {
namespace manifold {

ModelDims dims_from(const TrainConfig& train, const corpus::CorpusConfig& data) {
  ModelDims d;
  d.channels = data.channels;
  d.hidden = train.hidden;
  d.codebook_size = train.codebook_size;
  d.codebook_dim = train.codebook_dim;
  d.kernel = train.kernel;
  d.speakers = data.speakers;
  d.dropout = train.dropout;
  return d;
}

ManifoldLatents quantize(const nn::Tensor<float>& pre_quant,
                         const nn::Tensor<float>& codebook) {
  ManifoldLatents out;
  out.pre_quant = pre_quant;
  out.indices = nn::nearest_rows(pre_quant, codebook);
  out.quantized = nn::Tensor<float>({pre_quant.rows(), pre_quant.cols()});
  for (int i = 0; i < pre_quant.rows(); ++i) {
    std::copy(codebook.row(out.indices[i]), codebook.row(out.indices[i]) + codebook.cols(),
              out.quantized.row(i));
  }
  return out;
}

ManifoldLatents encode_utterance(ManifoldModel<float>& model, const corpus::Mel& mel_emotional,
                                 const std::vector<int>& durations) {
  nn::Tape<float> tape;
  const std::vector<nn::Segment> segs = nn::segments_from_durations(durations);
  ForwardOptions<float> opts;
  nn::Var pre = model.encoder.forward(tape, tape.constant(mel_emotional), segs, opts);
  return quantize(tape.value(pre), model.codebook.value);
}

corpus::Mel decode_latents(ManifoldModel<float>& model, const nn::Tensor<float>& latents,
                           const corpus::Mel& mel_neutral_for_condition, int speaker_id,
                           const std::vector<int>& durations) {
  nn::Tape<float> tape;
  const std::vector<nn::Segment> segs = nn::segments_from_durations(durations);
  nn::Var ling =
      model.extractor.forward(tape, tape.constant(mel_neutral_for_condition), segs);
  nn::Var spk = model.speaker_table.forward(tape, {speaker_id});
  nn::Var out =
      model.decoder.forward(tape, tape.constant(latents), ling, spk, durations);
  return tape.value(out);
}

void save_model(ManifoldModel<float>& model, Checkpoint& ckpt) {
  ckpt.set_meta("dims.channels", std::to_string(model.dims.channels));
  ckpt.set_meta("dims.hidden", std::to_string(model.dims.hidden));
  ckpt.set_meta("dims.codebook_size", std::to_string(model.dims.codebook_size));
  ckpt.set_meta("dims.codebook_dim", std::to_string(model.dims.codebook_dim));
  ckpt.set_meta("dims.kernel", std::to_string(model.dims.kernel));
  ckpt.set_meta("dims.speakers", std::to_string(model.dims.speakers));
  ckpt.set_meta("dims.dropout", cfg::format_double(model.dims.dropout));
  ckpt.add_params(model.params());
}

ManifoldModel<float> load_model(const Checkpoint& ckpt) {
  ModelDims d;
  d.channels = std::stoi(ckpt.require_meta("dims.channels"));
  d.hidden = std::stoi(ckpt.require_meta("dims.hidden"));
  d.codebook_size = std::stoi(ckpt.require_meta("dims.codebook_size"));
  d.codebook_dim = std::stoi(ckpt.require_meta("dims.codebook_dim"));
  d.kernel = std::stoi(ckpt.require_meta("dims.kernel"));
  d.speakers = std::stoi(ckpt.require_meta("dims.speakers"));
  d.dropout = std::stod(ckpt.require_meta("dims.dropout"));
  Rng init_rng(0);
  ManifoldModel<float> model = make_model<float>(d, init_rng);
  ckpt.load_params(model.params());
  return model;
}

namespace {

std::vector<const corpus::UtterancePair*> emotional_pairs(const corpus::Dataset& ds) {
  std::vector<const corpus::UtterancePair*> out;
  for (const auto& u : ds.utterances) {
    if (u.emotion_id != corpus::kNeutral) out.push_back(&u);
  }
  return out;
}

}  // namespace

float validation_loss(ManifoldModel<float>& model, const corpus::Dataset& val,
                      double commit_beta) {
  const auto pairs = emotional_pairs(val);
  if (pairs.empty()) return 0.0f;
  double total = 0.0;
  for (const auto* u : pairs) {
    nn::Tape<float> tape;
    ForwardOptions<float> opts;
    auto parts = reconstruction_loss<float>(tape, model, u->mel_emotional, u->mel_neutral,
                                            u->speaker_id, u->phonemes.durations,
                                            static_cast<float>(commit_beta), opts);
    total += tape.value(parts.total).v[0];
  }
  return static_cast<float>(total / pairs.size());
}

TrainResult train_manifold(const corpus::Corpus& corpus, const TrainConfig& config,
                           const std::string& out_path, std::ostream& log) {
  const ModelDims dims = dims_from(config, corpus.train.config);
  Rng rng(config.seed);
  Rng init_rng = rng.fork(1);
  Rng shuffle_rng = rng.fork(2);
  Rng dropout_rng = rng.fork(3);
  Rng reseed_rng = rng.fork(4);

  ManifoldModel<float> model = make_model<float>(dims, init_rng);
  nn::AdamOptimizer<float> adam(model.params(), config.beta1, config.beta2);

  const auto train_pairs = emotional_pairs(corpus.train);
  if (train_pairs.empty()) throw ConfigError("train_manifold: no emotional pairs in training split");

  TrainResult result;
  float best_val = std::numeric_limits<float>::max();

  std::vector<int> order(train_pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  const float beta = static_cast<float>(config.commitment_beta);
  std::vector<int> usage(dims.codebook_size, 0);
  std::vector<nn::Tensor<float>> reservoir;
  constexpr size_t kReservoirCap = 256;
  size_t reservoir_seen = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = nn::lr_linear_decay(epoch, config.epochs, config.lr);
    // Deterministic Fisher-Yates shuffle from the run's seeded stream.
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.range_int(0, static_cast<int>(i))]);
    }
    std::fill(usage.begin(), usage.end(), 0);
    double epoch_rec = 0.0, epoch_total = 0.0;
    int batches = 0;

    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t end = std::min(order.size(), start + config.batch_size);
      nn::Tape<float> tape;
      ForwardOptions<float> opts;
      opts.training = true;
      opts.rng = &dropout_rng;
      nn::Var batch_loss{-1};
      double batch_rec = 0.0;
      for (size_t bi = start; bi < end; ++bi) {
        const corpus::UtterancePair& u = *train_pairs[order[bi]];
        auto parts = reconstruction_loss<float>(tape, model, u.mel_emotional, u.mel_neutral,
                                                u.speaker_id, u.phonemes.durations, beta, opts);
        batch_rec += tape.value(parts.reconstruction).v[0];
        for (int idx : parts.indices) ++usage[idx];
        // Reservoir-sample encoder rows for dead-code reseeding.
        const nn::Tensor<float>& pv = tape.value(parts.pre_quant);
        for (int r = 0; r < pv.rows(); ++r) {
          ++reservoir_seen;
          if (reservoir.size() < kReservoirCap) {
            nn::Tensor<float> row({1, pv.cols()});
            std::copy(pv.row(r), pv.row(r) + pv.cols(), row.v.data());
            reservoir.push_back(std::move(row));
          } else {
            const size_t slot = static_cast<size_t>(reseed_rng.next_u64() % reservoir_seen);
            if (slot < kReservoirCap) {
              std::copy(pv.row(r), pv.row(r) + pv.cols(), reservoir[slot].v.data());
            }
          }
        }
        batch_loss = batch_loss.valid() ? nn::add(tape, batch_loss, parts.total) : parts.total;
      }
      batch_loss = nn::scale(tape, batch_loss, 1.0f / static_cast<float>(end - start));
      const float loss_value = tape.value(batch_loss).v[0];
      if (!std::isfinite(loss_value)) {
        throw NumericError("train_manifold: loss diverged at epoch " + std::to_string(epoch));
      }
      adam.zero_grad();
      tape.backward(batch_loss);
      adam.step(lr);
      epoch_rec += batch_rec / static_cast<double>(end - start);
      epoch_total += loss_value;
      ++batches;
    }
    epoch_rec /= batches;
    epoch_total /= batches;
    if (epoch == 0) result.first_epoch_rec_loss = static_cast<float>(epoch_rec);
    result.last_epoch_rec_loss = static_cast<float>(epoch_rec);

    // Reseed codes that went unused this epoch to random encoder outputs.
    int reseeded = 0;
    if (epoch + 1 < config.epochs && !reservoir.empty()) {
      for (int code = 0; code < dims.codebook_size; ++code) {
        if (usage[code] != 0) continue;
        const auto& row = reservoir[reseed_rng.next_u64() % reservoir.size()];
        std::copy(row.v.begin(), row.v.end(), model.codebook.value.row(code));
        adam.reset_moments_row(&model.codebook, code);
        ++reseeded;
      }
    }

    const float val = validation_loss(model, corpus.val, config.commitment_beta);
    const bool improved = val < best_val;
    if (improved) {
      best_val = val;
      result.best_val_loss = val;
      result.best_epoch = epoch;
      Checkpoint ckpt;
      config.echo_into(ckpt);
      for (const auto& [k, v] : corpus.train.config.to_kv()) ckpt.set_meta("data." + k, v);
      ckpt.set_meta("val_loss", cfg::format_float(val));
      ckpt.set_meta("epoch", std::to_string(epoch));
      save_model(model, ckpt);
      ckpt.save(out_path);
    }
    log << "manifold epoch " << epoch << " lr " << lr << " train " << epoch_total
        << " rec " << epoch_rec << " val " << val << (improved ? " *" : "")
        << " reseeded " << reseeded << "\n";
  }

  // Usage histogram of the final model over the training split (eval mode).
  {
    std::fill(usage.begin(), usage.end(), 0);
    for (const auto* u : train_pairs) {
      ManifoldLatents lat = encode_utterance(model, u->mel_emotional, u->phonemes.durations);
      for (int idx : lat.indices) ++usage[idx];
    }
    for (int c : usage) result.codes_used += (c != 0);
  }
  log << "manifold done: best val " << result.best_val_loss << " at epoch "
      << result.best_epoch << ", codes used " << result.codes_used << "\n";
  return result;
}

}  // namespace manifold
}  // namespace casein
