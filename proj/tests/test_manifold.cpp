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

#include <filesystem>
#include <sstream>

#include "casein/gradcheck.h"
#include "casein/manifold.h"
#include "oracles.h"

using namespace casein;
using namespace casein::nn;
using namespace casein::manifold;

namespace {

ModelDims toy_dims() {
  ModelDims d;
  d.channels = 6;
  d.hidden = 8;
  d.codebook_size = 8;
  d.codebook_dim = 10;
  d.kernel = 3;
  d.speakers = 2;
  d.dropout = 0.0;
  return d;
}

template <typename R>
Tensor<R> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<R> t(std::move(shape));
  for (auto& x : t.v) x = static_cast<R>(rng.uniform(lo, hi));
  return t;
}

corpus::CorpusConfig micro_corpus_config() {
  corpus::CorpusConfig c;
  c.n_train = 10;
  c.n_val = 4;
  c.n_test = 2;
  c.channels = 32;
  c.band_start = 12;
  c.band_width = 4;
  c.min_phonemes = 4;
  c.max_phonemes = 6;
  c.min_duration = 4;
  c.max_duration = 8;
  c.seed = 31;
  return c;
}

TrainConfig micro_train_config() {
  TrainConfig t;
  t.seed = 5;
  t.epochs = 200;  // 10-utterance corpus in one batch -> one step per epoch
  t.batch_size = 16;
  t.hidden = 32;
  t.codebook_size = 16;
  t.codebook_dim = 24;
  t.kernel = 5;
  return t;
}

}  // namespace

TEST_CASE("quantize returns exact codebook rows and brute-force indices") {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    Tensor<float> pre = random_tensor<float>({rng.range_int(1, 9), 7}, rng);
    Tensor<float> cb = random_tensor<float>({rng.range_int(2, 14), 7}, rng);
    ManifoldLatents lat = quantize(pre, cb);
    CHECK(lat.indices == oracle::nearest_rows(pre, cb));
    for (int i = 0; i < pre.rows(); ++i) {
      for (int j = 0; j < 7; ++j) {
        CHECK(lat.quantized.row(i)[j] == cb.row(lat.indices[i])[j]);
      }
    }
  }

  SUBCASE("row equal to a codebook vector maps to it with distance zero") {
    Rng r2(4);
    Tensor<float> cb = random_tensor<float>({6, 5}, r2);
    Tensor<float> pre({1, 5});
    std::copy(cb.row(4), cb.row(4) + 5, pre.v.data());
    ManifoldLatents lat = quantize(pre, cb);
    CHECK(lat.indices == std::vector<int>{4});
    CHECK(lat.quantized.v == std::vector<float>(cb.row(4), cb.row(4) + 5));
  }
}

TEST_CASE("encoder emits one row per phoneme and respects duration pooling of constants") {
  Rng rng(5);
  ModelDims d = toy_dims();
  ManifoldModel<float> model = make_model<float>(d, rng);

  // Row-count contract for assorted durations.
  for (auto durations : {std::vector<int>{4, 5}, std::vector<int>{6, 4, 8, 5}}) {
    int frames = 0;
    for (int x : durations) frames += x;
    Tensor<float> mel = random_tensor<float>({frames, d.channels}, rng, 0, 1);
    Tape<float> tape;
    ForwardOptions<float> opts;
    Var pre = model.encoder.forward(tape, tape.constant(mel),
                                    segments_from_durations(durations), opts);
    CHECK(tape.value(pre).rows() == static_cast<int>(durations.size()));
    CHECK(tape.value(pre).cols() == d.codebook_dim);
  }

  // A time-constant input pooled over interior phonemes is invariant to
  // doubling every duration; edge phonemes see the zero padding and are
  // excluded (conv context changes there).
  Tensor<float> frame({1, d.channels});
  for (int c = 0; c < d.channels; ++c) frame.v[c] = 0.2f + 0.1f * c;
  std::vector<int> dur1 = {4, 5, 4, 6, 4};
  std::vector<int> dur2 = {8, 10, 8, 12, 8};
  auto constant_mel = [&](const std::vector<int>& durations) {
    int frames = 0;
    for (int x : durations) frames += x;
    Tensor<float> mel({frames, d.channels});
    for (int f = 0; f < frames; ++f) std::copy(frame.v.begin(), frame.v.end(), mel.row(f));
    return mel;
  };
  Tape<float> tape;
  ForwardOptions<float> opts;
  Var p1 = model.encoder.forward(tape, tape.constant(constant_mel(dur1)),
                                 segments_from_durations(dur1), opts);
  Var p2 = model.encoder.forward(tape, tape.constant(constant_mel(dur2)),
                                 segments_from_durations(dur2), opts);
  const auto& a = tape.value(p1);
  const auto& b = tape.value(p2);
  for (int p = 1; p + 1 < static_cast<int>(dur1.size()); ++p) {
    for (int j = 0; j < d.codebook_dim; ++j) {
      CHECK(a.row(p)[j] == doctest::Approx(b.row(p)[j]).epsilon(1e-5));
    }
  }
}

TEST_CASE("decoder output frame count equals the duration sum and zero propagates") {
  Rng rng(6);
  ModelDims d = toy_dims();
  ManifoldModel<float> model = make_model<float>(d, rng);
  std::fill(model.decoder.output_proj.weight.value.v.begin(),
            model.decoder.output_proj.weight.value.v.end(), 0.0f);

  const std::vector<int> durations = {3, 4, 2};
  Tensor<float> latents({3, d.codebook_dim});
  Tensor<float> mel_n({9, d.channels});
  corpus::Mel out = decode_latents(model, latents, mel_n, 1, durations);
  CHECK(out.rows() == 9);
  CHECK(out.cols() == d.channels);
  for (float x : out.v) CHECK(x == 0.0f);
}

TEST_CASE("gradient checks: encoder, extractor, decoder, and full VQ objective") {
  Rng seed_rng(7);
  ModelDims d = toy_dims();
  const std::vector<int> durations = {3, 4, 3};
  const int frames = 10;

  ManifoldModel<double> model = make_model<double>(d, seed_rng);
  Tensor<double> mel_e, mel_n;

  auto params = model.params();
  auto make_instance = [&](Rng& rng) {
    ManifoldModel<double> fresh = make_model<double>(d, rng);
    // Move fresh values into the persistent model so param pointers stay valid.
    auto fresh_params = fresh.params();
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = fresh_params[i]->value;
    mel_e = random_tensor<double>({frames, d.channels}, rng, 0, 1);
    mel_n = random_tensor<double>({frames, d.channels}, rng, 0, 1);

    // Capture the quantization at the base point so finite differences probe
    // the straight-through surrogate.
    VqCapture<double> cap;
    {
      Tape<double> tape;
      ForwardOptions<double> opts;
      Var pre = model.encoder.forward(tape, tape.constant(mel_e),
                                      segments_from_durations(durations), opts);
      cap.pre0 = tape.value(pre);
      cap.indices = nearest_rows(cap.pre0, model.codebook.value);
      cap.zq0 = Tensor<double>({3, d.codebook_dim});
      for (int i = 0; i < 3; ++i) {
        std::copy(model.codebook.value.row(cap.indices[i]),
                  model.codebook.value.row(cap.indices[i]) + d.codebook_dim,
                  cap.zq0.row(i));
      }
    }
    return [&, cap](Tape<double>& tape) {
      ForwardOptions<double> opts;
      auto parts = reconstruction_loss<double>(tape, model, mel_e, mel_n, 1, durations, 0.25,
                                               opts, &cap);
      return parts.total;
    };
  };

  GradCheckResult r = check_gradients_resampled(make_instance, params, seed_rng, 6);
  CHECK(r.coords > 100);
  CHECK(r.max_rel_err < 1e-3);
}

TEST_CASE("micro-corpus training halves the reconstruction loss and is bit-deterministic") {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "casein_manifold_micro").string();
  corpus::generate_corpus(micro_corpus_config(), dir);
  corpus::Corpus corpus = corpus::load_corpus(dir);

  TrainConfig tc = micro_train_config();
  const std::string ckpt1 = (fs::temp_directory_path() / "casein_manifold_1.ckpt").string();
  const std::string ckpt2 = (fs::temp_directory_path() / "casein_manifold_2.ckpt").string();

  std::ostringstream log1, log2;
  TrainResult r1 = train_manifold(corpus, tc, ckpt1, log1);
  CHECK(r1.last_epoch_rec_loss * 2.0f <= r1.first_epoch_rec_loss);
  CHECK(r1.best_epoch >= 0);

  TrainResult r2 = train_manifold(corpus, tc, ckpt2, log2);
  CHECK(r1.best_val_loss == r2.best_val_loss);
  CHECK(read_file(ckpt1) == read_file(ckpt2));

  SUBCASE("checkpoint round-trip reproduces the validation loss to the bit") {
    Checkpoint ckpt = Checkpoint::load(ckpt1);
    ManifoldModel<float> model = load_model(ckpt);
    const float stored = std::stof(ckpt.require_meta("val_loss"));
    const float recomputed = validation_loss(model, corpus.val, 0.25);
    CHECK(stored == recomputed);
  }

  fs::remove_all(dir);
  fs::remove(ckpt1);
  fs::remove(ckpt2);
}
