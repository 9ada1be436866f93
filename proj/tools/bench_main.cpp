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

// Micro-benchmark for the matmul and conv kernels that dominate training
// time. Not part of the test suite; used to size training budgets.

#include <chrono>
#include <cstdio>

#include "casein/layers.h"
#include "casein/ops.h"
#include "casein/parallel.h"

using namespace casein;
using namespace casein::nn;

namespace {

double now_sec() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void bench_gemm(int m, int k, int n, int reps) {
  Rng rng(1);
  Tensor<float> a({m, k}), b({k, n}), c({m, n});
  for (auto& x : a.v) x = static_cast<float>(rng.uniform(-1, 1));
  for (auto& x : b.v) x = static_cast<float>(rng.uniform(-1, 1));
  gemm_accum(m, k, n, a.v.data(), k, b.v.data(), n, c.v.data(), n);  // warm up
  const double t0 = now_sec();
  for (int r = 0; r < reps; ++r) {
    gemm_accum(m, k, n, a.v.data(), k, b.v.data(), n, c.v.data(), n);
  }
  const double dt = now_sec() - t0;
  const double gflops = 2.0 * m * k * n * reps / dt / 1e9;
  std::printf("gemm %4dx%4dx%4d: %7.2f GFLOP/s (%.3f s, sink %.3g)\n", m, k, n,
              gflops, dt, static_cast<double>(c.v[0]));
}

// One tape per batch of 16, as the trainers run it.
void bench_conv_train(int frames, int cin, int cout, int k, int reps) {
  Rng rng(2);
  const int batch = 16;
  Conv1dLayer<float> layer("bench", cin, cout, k, rng);
  Tensor<float> input({frames, cin});
  for (auto& x : input.v) x = static_cast<float>(rng.uniform(-1, 1));
  Tensor<float> target({frames, cout});

  const double t0 = now_sec();
  double sink = 0;
  for (int r = 0; r < reps; ++r) {
    Tape<float> tape;
    Var loss{-1};
    for (int u = 0; u < batch; ++u) {
      Var x = tape.leaf(input, false);
      Var y = layer.forward(tape, x);
      Var l = mean_sq_diff(tape, y, tape.constant(target));
      loss = u == 0 ? l : add(tape, loss, l);
    }
    layer.weight.zero_grad();
    layer.bias.zero_grad();
    tape.backward(loss);
    sink += layer.weight.grad.v[0];
  }
  const double dt = now_sec() - t0;
  const double macs = 3.0 * static_cast<double>(frames) * cin * cout * k * reps * batch;
  std::printf("conv fwd+bwd T=%d %dx%d k=%d (batch %d): %7.2f GFLOP/s (%.3f s, sink %.3g)\n",
              frames, cin, cout, k, batch, 2.0 * macs / dt / 1e9, dt, sink);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", num_threads());
  bench_gemm(90, 80, 256, 2000);
  bench_gemm(90, 256, 512, 800);
  bench_gemm(256, 256, 256, 800);
  bench_conv_train(90, 80, 256, 9, 30);
  bench_conv_train(90, 256, 512, 9, 12);
  bench_conv_train(90, 256, 256, 9, 20);
  return 0;
}
