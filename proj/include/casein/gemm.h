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

#ifndef CASEIN_GEMM_H_
#define CASEIN_GEMM_H_

#include <cstring>

#include "casein/parallel.h"

namespace casein {
namespace nn {

// C[m x n] += A[m x k] * B[k x n], row-major with leading dimensions.
//
// Register-blocked kernel: MR x NR accumulator tiles held in registers, one
// B-row load shared across the MR rows per k step. Every C element is
// accumulated in ascending-k order by exactly one code path chosen from
// (m, n) alone, and threads are handed whole row blocks, so the result is
// bit-identical for any worker count.

namespace gemm_detail {

constexpr int kMR = 8;
constexpr int kNR = 32;

template <typename R>
inline void tail_rows(int rows, int k, int n, const R* A, int lda, const R* B,
                      int ldb, R* C, int ldc) {
  for (int r = 0; r < rows; ++r) {
    const R* a = A + static_cast<size_t>(r) * lda;
    R* c = C + static_cast<size_t>(r) * ldc;
    for (int kk = 0; kk < k; ++kk) {
      const R av = a[kk];
      const R* b = B + static_cast<size_t>(kk) * ldb;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

template <typename R>
inline void block_rows(int k, int n, const R* A, int lda, const R* B, int ldb,
                       R* C, int ldc) {
  int j = 0;
  for (; j + kNR <= n; j += kNR) {
    R acc[kMR][kNR];
    for (int r = 0; r < kMR; ++r) {
      std::memcpy(acc[r], C + static_cast<size_t>(r) * ldc + j, kNR * sizeof(R));
    }
    for (int kk = 0; kk < k; ++kk) {
      const R* brow = B + static_cast<size_t>(kk) * ldb + j;
      for (int r = 0; r < kMR; ++r) {
        const R av = A[static_cast<size_t>(r) * lda + kk];
        for (int jj = 0; jj < kNR; ++jj) acc[r][jj] += av * brow[jj];
      }
    }
    for (int r = 0; r < kMR; ++r) {
      std::memcpy(C + static_cast<size_t>(r) * ldc + j, acc[r], kNR * sizeof(R));
    }
  }
  if (j < n) tail_rows(kMR, k, n - j, A, lda, B + j, ldb, C + j, ldc);
}

}  // namespace gemm_detail

template <typename R>
void gemm_accum(int m, int k, int n, const R* A, int lda, const R* B, int ldb,
                R* C, int ldc) {
  using namespace gemm_detail;
  if (m <= 0 || n <= 0 || k <= 0) return;
  const int full_blocks = m / kMR;
  const long work = static_cast<long>(m) * k * n;
  parallel_for(0, full_blocks, work, [&](int lo, int hi) {
    for (int blk = lo; blk < hi; ++blk) {
      const int i = blk * kMR;
      block_rows(k, n, A + static_cast<size_t>(i) * lda, lda, B, ldb,
                 C + static_cast<size_t>(i) * ldc, ldc);
    }
  });
  const int rest = full_blocks * kMR;
  if (rest < m) {
    tail_rows(m - rest, k, n, A + static_cast<size_t>(rest) * lda, lda, B, ldb,
              C + static_cast<size_t>(rest) * ldc, ldc);
  }
}

}  // namespace nn
}  // namespace casein

#endif  // CASEIN_GEMM_H_
