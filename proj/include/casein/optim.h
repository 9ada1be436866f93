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

#ifndef CASEIN_OPTIM_H_
#define CASEIN_OPTIM_H_

#include <cmath>
#include <vector>

#include "casein/tape.h"

namespace casein {
namespace nn {

// lr_max * (1 - epoch / max_epochs), clamped at zero past the end.
inline double lr_linear_decay(int epoch, int max_epochs, double lr_max) {
  if (epoch < 0) throw ConfigError("lr_linear_decay: negative epoch");
  if (max_epochs <= 0) throw ConfigError("lr_linear_decay: max_epochs must be positive");
  if (epoch >= max_epochs) return 0.0;
  return lr_max * (1.0 - static_cast<double>(epoch) / static_cast<double>(max_epochs));
}

// Adam with standard bias correction. The step aborts (throws NumericError)
// on non-finite gradients, leaving parameters and moments untouched.
template <typename R>
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Parameter<R>*> params, double beta1 = 0.9,
                double beta2 = 0.98, double epsilon = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
    for (Parameter<R>* p : params_) {
      m_.push_back(Tensor<R>::zeros(p->value.shape));
      v_.push_back(Tensor<R>::zeros(p->value.shape));
    }
  }

  int step_count() const { return step_; }

  void zero_grad() {
    for (Parameter<R>* p : params_) p->zero_grad();
  }

  void step(double lr) {
    for (Parameter<R>* p : params_) {
      if (!p->grad.all_finite()) {
        throw NumericError("adam: non-finite gradient for " + p->name + "; step aborted");
      }
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, step_);
    const double bc2 = 1.0 - std::pow(beta2_, step_);
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      Parameter<R>& p = *params_[pi];
      R* m = m_[pi].v.data();
      R* v = v_[pi].v.data();
      const R* g = p.grad.v.data();
      R* x = p.value.v.data();
      const size_t n = p.value.numel();
      for (size_t i = 0; i < n; ++i) {
        m[i] = static_cast<R>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
        v[i] = static_cast<R>(beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i]);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        x[i] -= static_cast<R>(lr * mhat / (std::sqrt(vhat) + epsilon_));
      }
    }
  }

  // Direct access for codebook reseeding: clears the moments of one
  // parameter's row after its values were replaced out-of-band.
  void reset_moments_row(Parameter<R>* p, int row) {
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      if (params_[pi] != p) continue;
      const int cols = p->value.cols();
      for (int j = 0; j < cols; ++j) {
        m_[pi].row(row)[j] = R(0);
        v_[pi].row(row)[j] = R(0);
      }
      return;
    }
    throw ConfigError("adam: unknown parameter in reset_moments_row");
  }

 private:
  std::vector<Parameter<R>*> params_;
  std::vector<Tensor<R>> m_;
  std::vector<Tensor<R>> v_;
  double beta1_, beta2_, epsilon_;
  int step_ = 0;
};

}  // namespace nn
}  // namespace casein

#endif  // CASEIN_OPTIM_H_
