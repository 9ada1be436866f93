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

#ifndef CASEIN_GRADCHECK_H_
#define CASEIN_GRADCHECK_H_

#include <functional>
#include <vector>

#include "casein/tape.h"

namespace casein {
namespace nn {

// Central finite-difference comparison against reverse-mode gradients, run
// on the 64-bit shadow instantiation of the graph. The builder must be a
// deterministic function of the parameter values (fix any dropout masks).
struct GradCheckResult {
  double max_rel_err = 0.0;
  int coords = 0;
  // True when a kinked op saw a pre-activation within the guard band of the
  // probe step; the instance should be regenerated rather than judged.
  bool kink_rejected = false;
};

inline GradCheckResult check_gradients(
    const std::vector<Parameter<double>*>& params,
    const std::function<Var(Tape<double>&)>& build, Rng& rng,
    int max_coords_per_param = 12, double h = 1e-3, double kink_guard = 2e-3) {
  GradCheckResult result;

  std::vector<std::vector<double>> autodiff_grads;
  {
    Tape<double> tape;
    Var loss = build(tape);
    if (tape.value(loss).numel() != 1) throw ConfigError("check_gradients: loss must be scalar");
    if (tape.kink_margin() < kink_guard) {
      result.kink_rejected = true;
      return result;
    }
    for (Parameter<double>* p : params) p->zero_grad();
    tape.backward(loss);
    for (Parameter<double>* p : params) autodiff_grads.push_back(p->grad.v);
  }

  auto eval_loss = [&]() {
    Tape<double> tape;
    Var loss = build(tape);
    return tape.value(loss).v[0];
  };

  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<double>& p = *params[pi];
    const int n = static_cast<int>(p.value.numel());
    std::vector<int> coords;
    if (n <= max_coords_per_param) {
      for (int i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < max_coords_per_param; ++i) coords.push_back(rng.range_int(0, n));
    }
    for (int c : coords) {
      const double saved = p.value.v[c];
      p.value.v[c] = saved + h;
      const double up = eval_loss();
      p.value.v[c] = saved - h;
      const double down = eval_loss();
      p.value.v[c] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double ad = autodiff_grads[pi][c];
      const double denom = std::max({std::abs(ad), std::abs(fd), 1e-6});
      const double rel = std::abs(ad - fd) / denom;
      if (rel > result.max_rel_err) result.max_rel_err = rel;
      ++result.coords;
    }
  }
  for (Parameter<double>* p : params) p->zero_grad();
  return result;
}

// Retries instance generation until the kink guard accepts one, then checks.
// `make_instance` must (re)initialize the parameters and inputs from the rng
// it is handed and return the loss builder.
inline GradCheckResult check_gradients_resampled(
    const std::function<std::function<Var(Tape<double>&)>(Rng&)>& make_instance,
    const std::vector<Parameter<double>*>& params, Rng& rng,
    int max_coords_per_param = 12, double h = 1e-3, int max_tries = 64) {
  GradCheckResult result;
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    Rng instance_rng = rng.fork(1000 + attempt);
    auto build = make_instance(instance_rng);
    result = check_gradients(params, build, instance_rng, max_coords_per_param, h);
    if (!result.kink_rejected) return result;
  }
  throw NumericError("check_gradients_resampled: could not find a kink-free instance");
}

}  // namespace nn
}  // namespace casein

#endif  // CASEIN_GRADCHECK_H_
