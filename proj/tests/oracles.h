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

// Independent reference implementations used as test oracles. These are
// written as straight-line loops against the operation definitions and must
// stay independent of the library code paths they check.

#ifndef CASEIN_TESTS_ORACLES_H_
#define CASEIN_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "casein/tensor.h"

namespace oracle {

// Same-padded 1-D convolution via nested loops, accumulated in double.
inline casein::nn::Tensor<float> conv1d(const casein::nn::Tensor<float>& x,
                                        const casein::nn::Tensor<float>& w,
                                        const casein::nn::Tensor<float>& b) {
  const int T = x.shape[0], cin = x.shape[1];
  const int cout = w.shape[0], k = w.shape[2];
  const int pad = (k - 1) / 2;
  casein::nn::Tensor<float> out({T, cout});
  for (int t = 0; t < T; ++t) {
    for (int co = 0; co < cout; ++co) {
      double acc = b.v[co];
      for (int ci = 0; ci < cin; ++ci) {
        for (int dk = 0; dk < k; ++dk) {
          const int src = t + dk - pad;
          if (src < 0 || src >= T) continue;
          acc += static_cast<double>(x.v[static_cast<size_t>(src) * cin + ci]) *
                 static_cast<double>(w.v[(static_cast<size_t>(co) * cin + ci) * k + dk]);
        }
      }
      out.v[static_cast<size_t>(t) * cout + co] = static_cast<float>(acc);
    }
  }
  return out;
}

// Per-segment arithmetic mean via a direct loop.
inline casein::nn::Tensor<float> avg_pool(const casein::nn::Tensor<float>& x,
                                          const std::vector<std::pair<int, int>>& bounds) {
  const int cols = x.shape[1];
  casein::nn::Tensor<float> out({static_cast<int>(bounds.size()), cols});
  for (size_t s = 0; s < bounds.size(); ++s) {
    for (int j = 0; j < cols; ++j) {
      double acc = 0;
      for (int i = bounds[s].first; i < bounds[s].second; ++i) {
        acc += x.v[static_cast<size_t>(i) * cols + j];
      }
      out.v[s * cols + j] = static_cast<float>(acc / (bounds[s].second - bounds[s].first));
    }
  }
  return out;
}

// Mean over rows of the per-row Euclidean distance, in double.
inline double mean_row_distance(const casein::nn::Tensor<float>& a,
                                const casein::nn::Tensor<float>& b) {
  const int rows = a.shape[0], cols = a.shape[1];
  double total = 0;
  for (int i = 0; i < rows; ++i) {
    double s = 0;
    for (int j = 0; j < cols; ++j) {
      const double d = static_cast<double>(a.v[static_cast<size_t>(i) * cols + j]) -
                       static_cast<double>(b.v[static_cast<size_t>(i) * cols + j]);
      s += d * d;
    }
    total += std::sqrt(s);
  }
  return total / rows;
}

// Element-wise binary cross-entropy from the direct formula, in double.
inline double bce(const std::vector<double>& logits, const std::vector<double>& labels) {
  double total = 0;
  for (size_t i = 0; i < logits.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits[i]));
    total += -(labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
  }
  return total / static_cast<double>(logits.size());
}

// Exhaustive nearest-neighbour row assignment (squared Euclidean, first
// minimum wins).
inline std::vector<int> nearest_rows(const casein::nn::Tensor<float>& x,
                                     const casein::nn::Tensor<float>& cb) {
  const int n = x.shape[0], b = cb.shape[0], d = x.shape[1];
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) {
    float best = 0;
    int bj = 0;
    for (int j = 0; j < b; ++j) {
      float dist = 0;
      for (int e = 0; e < d; ++e) {
        const float diff = x.v[static_cast<size_t>(i) * d + e] - cb.v[static_cast<size_t>(j) * d + e];
        dist += diff * diff;
      }
      if (j == 0 || dist < best) {
        best = dist;
        bj = j;
      }
    }
    out[i] = bj;
  }
  return out;
}

// Sliding-window phoneme span by scanning every phoneme for membership.
inline std::pair<int, int> window_phoneme_span(int t, int w, int center) {
  int lo = t, hi = -1;
  for (int j = 0; j < t; ++j) {
    if (std::abs(j - center) <= w) {
      lo = std::min(lo, j);
      hi = std::max(hi, j);
    }
  }
  return {lo, hi};
}

// Cyclic Jacobi eigendecomposition for small symmetric matrices (double).
// Returns eigenvalues descending and matching eigenvectors as rows.
inline void jacobi_eigen(std::vector<std::vector<double>> a,
                         std::vector<double>& eigenvalues,
                         std::vector<std::vector<double>>& eigenvectors) {
  const int n = static_cast<int>(a.size());
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    }
    if (off < 1e-26) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-30) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < n; ++i) {
          const double aip = a[i][p], aiq = a[i][q];
          a[i][p] = c * aip - s * aiq;
          a[i][q] = s * aip + c * aiq;
        }
        for (int i = 0; i < n; ++i) {
          const double api = a[p][i], aqi = a[q][i];
          a[p][i] = c * api - s * aqi;
          a[q][i] = s * api + c * aqi;
        }
        for (int i = 0; i < n; ++i) {
          const double vip = v[i][p], viq = v[i][q];
          v[i][p] = c * vip - s * viq;
          v[i][q] = s * vip + c * viq;
        }
      }
    }
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a[i][i] > a[j][j]; });
  eigenvalues.clear();
  eigenvectors.assign(n, std::vector<double>(n));
  for (int r = 0; r < n; ++r) {
    eigenvalues.push_back(a[order[r]][order[r]]);
    for (int i = 0; i < n; ++i) eigenvectors[r][i] = v[i][order[r]];
  }
}

// Pearson/Spearman with average ranks for ties, in double.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const int n = static_cast<int>(a.size());
  double ma = 0, mb = 0;
  for (int i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline std::vector<double> average_ranks(const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return x[i] < x[j]; });
  std::vector<double> ranks(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * (i + j) + 1.0;
    for (int k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(average_ranks(a), average_ranks(b));
}

}  // namespace oracle

#endif  // CASEIN_TESTS_ORACLES_H_
