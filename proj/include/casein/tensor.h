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

#ifndef CASEIN_TENSOR_H_
#define CASEIN_TENSOR_H_

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "casein/common.h"

namespace casein {
namespace nn {

// Dense row-major tensor. Training uses float; the 64-bit instantiation
// exists for finite-difference gradient checks only.
template <typename R>
struct Tensor {
  std::vector<int> shape;
  std::vector<R> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(numel_of(shape), R(0));
  }

  static size_t numel_of(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
      if (d < 0) throw ConfigError("Tensor: negative dimension");
      n *= static_cast<size_t>(d);
    }
    return s.empty() ? 0 : n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor scalar(R x) {
    Tensor t({1});
    t.v[0] = x;
    return t;
  }

  size_t numel() const { return v.size(); }

  int rows() const {
    if (shape.size() != 2) throw ConfigError("Tensor: rows() needs a 2-D tensor");
    return shape[0];
  }
  int cols() const {
    if (shape.size() != 2) throw ConfigError("Tensor: cols() needs a 2-D tensor");
    return shape[1];
  }

  R* row(int i) { return v.data() + static_cast<size_t>(i) * cols(); }
  const R* row(int i) const { return v.data() + static_cast<size_t>(i) * cols(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (R x : v) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<T>(v[i]);
    return out;
  }
};

template <typename R>
std::string shape_str(const Tensor<R>& t) {
  std::string s = "[";
  for (size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(t.shape[i]);
  }
  return s + "]";
}

template <typename R>
void check_finite(const Tensor<R>& t, const std::string& context) {
  if (!t.all_finite()) {
    throw NumericError("non-finite values in " + context);
  }
}

}  // namespace nn
}  // namespace casein

#endif  // CASEIN_TENSOR_H_
