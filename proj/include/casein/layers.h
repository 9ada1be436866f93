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

#ifndef CASEIN_LAYERS_H_
#define CASEIN_LAYERS_H_

#include <cmath>
#include <string>
#include <vector>

#include "casein/ops.h"

namespace casein {
namespace nn {

constexpr float kLeakySlope = 0.1f;

template <typename R>
using ParamList = std::vector<Parameter<R>*>;

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases alike;
// spread biases keep a share of units near the activation kink, which the
// pooled energy-detection paths need.
template <typename R>
void init_uniform_fanin(Tensor<R>& w, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (R& x : w.v) x = static_cast<R>(rng.uniform(-bound, bound));
}

template <typename R>
struct Conv1dLayer {
  Parameter<R> weight;  // [Cout x Cin x k]
  Parameter<R> bias;    // [Cout]

  Conv1dLayer() = default;
  Conv1dLayer(const std::string& name, int cin, int cout, int kernel, Rng& rng)
      : weight(name + ".weight", Tensor<R>({cout, cin, kernel})),
        bias(name + ".bias", Tensor<R>({cout})) {
    init_uniform_fanin(weight.value, cin * kernel, rng);
    init_uniform_fanin(bias.value, cin * kernel, rng);
  }

  Var forward(Tape<R>& tape, Var x) {
    return conv1d(tape, x, tape.param(weight), tape.param(bias));
  }

  void collect(ParamList<R>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <typename R>
struct LinearLayer {
  Parameter<R> weight;  // [In x Out]
  Parameter<R> bias;    // [Out]

  LinearLayer() = default;
  LinearLayer(const std::string& name, int in, int out, Rng& rng, bool zero_init = false)
      : weight(name + ".weight", Tensor<R>({in, out})),
        bias(name + ".bias", Tensor<R>({out})) {
    if (!zero_init) {
      init_uniform_fanin(weight.value, in, rng);
      init_uniform_fanin(bias.value, in, rng);
    }
  }

  Var forward(Tape<R>& tape, Var x) {
    return linear(tape, x, tape.param(weight), tape.param(bias));
  }

  void collect(ParamList<R>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <typename R>
struct EmbeddingTable {
  Parameter<R> table;  // [V x H]

  EmbeddingTable() = default;
  EmbeddingTable(const std::string& name, int count, int width, Rng& rng)
      : table(name + ".table", Tensor<R>({count, width})) {
    init_uniform_fanin(table.value, width, rng);
  }

  Var forward(Tape<R>& tape, const std::vector<int>& ids) {
    return gather_rows(tape, tape.param(table), ids);
  }

  void collect(ParamList<R>& out) { out.push_back(&table); }
};

// y = x + conv(leaky_relu(x)); width-preserving.
template <typename R>
struct ResidualConvBlock {
  Conv1dLayer<R> conv;

  ResidualConvBlock() = default;
  ResidualConvBlock(const std::string& name, int channels, int kernel, Rng& rng)
      : conv(name + ".conv", channels, channels, kernel, rng) {}

  Var forward(Tape<R>& tape, Var x) {
    Var h = leaky_relu(tape, x, R(kLeakySlope));
    h = conv.forward(tape, h);
    return add(tape, x, h);
  }

  void collect(ParamList<R>& out) { conv.collect(out); }
};

}  // namespace nn
}  // namespace casein

#endif  // CASEIN_LAYERS_H_
