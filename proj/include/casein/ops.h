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

#ifndef CASEIN_OPS_H_
#define CASEIN_OPS_H_

#include <algorithm>
#include <cmath>
#include <vector>

#include "casein/common.h"
#include "casein/gemm.h"
#include "casein/tape.h"

namespace casein {
namespace nn {

// Half-open frame range [begin, end) of one segment (phoneme).
struct Segment {
  int begin = 0;
  int end = 0;
  int length() const { return end - begin; }
};

inline std::vector<Segment> segments_from_durations(const std::vector<int>& durations) {
  std::vector<Segment> segs;
  segs.reserve(durations.size());
  int pos = 0;
  for (int d : durations) {
    if (d < 1) throw ConfigError("segments_from_durations: duration < 1");
    segs.push_back({pos, pos + d});
    pos += d;
  }
  return segs;
}

inline void validate_segments(const std::vector<Segment>& segs, int total_frames,
                              const char* context) {
  int pos = 0;
  for (const Segment& s : segs) {
    if (s.end <= s.begin) throw ConfigError(std::string(context) + ": empty segment");
    if (s.begin != pos) throw ConfigError(std::string(context) + ": segments overlap or leave a gap");
    pos = s.end;
  }
  if (pos != total_frames) {
    throw ConfigError(std::string(context) + ": segments do not tile the frame range");
  }
}

namespace detail {

template <typename R>
void require_2d(const Tensor<R>& t, const char* context) {
  if (t.shape.size() != 2) throw ConfigError(std::string(context) + ": expected a 2-D tensor");
}

// Packs conv weight [Cout x Cin x k] as [(dk*Cin + ci) x Cout] for the
// forward im2col product.
template <typename R>
void pack_weight_taps_cin_cout(const Tensor<R>& w, std::vector<R>& out) {
  const int cout = w.shape[0], cin = w.shape[1], k = w.shape[2];
  out.resize(static_cast<size_t>(k) * cin * cout);
  for (int co = 0; co < cout; ++co) {
    for (int ci = 0; ci < cin; ++ci) {
      const R* src = &w.v[(static_cast<size_t>(co) * cin + ci) * k];
      for (int dk = 0; dk < k; ++dk) {
        out[(static_cast<size_t>(dk) * cin + ci) * cout + co] = src[dk];
      }
    }
  }
}

// Packs tap-reversed weight as [(e*Cout + co) x Cin]; the input-gradient
// product is then the same im2col shape applied to the output gradient.
template <typename R>
void pack_weight_taps_reversed(const Tensor<R>& w, std::vector<R>& out) {
  const int cout = w.shape[0], cin = w.shape[1], k = w.shape[2];
  out.resize(static_cast<size_t>(k) * cin * cout);
  for (int co = 0; co < cout; ++co) {
    for (int ci = 0; ci < cin; ++ci) {
      const R* src = &w.v[(static_cast<size_t>(co) * cin + ci) * k];
      for (int dk = 0; dk < k; ++dk) {
        out[(static_cast<size_t>(k - 1 - dk) * cout + co) * cin + ci] = src[dk];
      }
    }
  }
}

// Zero-padded im2col: rows t, columns (dk*C + c) = m[t + dk - pad][c].
template <typename R>
void im2col(const Tensor<R>& m, int k, std::vector<R>& out) {
  const int T = m.rows(), c = m.cols();
  const int pad = (k - 1) / 2;
  out.assign(static_cast<size_t>(T) * k * c, R(0));
  for (int t = 0; t < T; ++t) {
    R* row = out.data() + static_cast<size_t>(t) * k * c;
    for (int dk = 0; dk < k; ++dk) {
      const int src = t + dk - pad;
      if (src < 0 || src >= T) continue;
      std::copy(m.row(src), m.row(src) + c, row + static_cast<size_t>(dk) * c);
    }
  }
}

template <typename R>
void transpose_into(const Tensor<R>& m, std::vector<R>& out) {
  const int r = m.rows(), c = m.cols();
  out.resize(static_cast<size_t>(r) * c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) {
      out[static_cast<size_t>(j) * r + i] = m.v[static_cast<size_t>(i) * c + j];
    }
  }
}

}  // namespace detail

// --- elementwise and structural ops ---------------------------------------

template <typename R>
Var add(Tape<R>& tape, Var a, Var b) {
  const Tensor<R>& av = tape.value(a);
  const Tensor<R>& bv = tape.value(b);
  if (!av.same_shape(bv)) {
    throw ConfigError("add: shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
  }
  Tensor<R> out = av;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += bv.v[i];
  return tape.push(std::move(out), false, {a, b}, [a, b](Tape<R>& t, Var self) {
    const Tensor<R>& g = t.grad(self);
    if (t.needs_grad(a)) {
      Tensor<R>& ga = t.grad(a);
      for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
    }
    if (t.needs_grad(b)) {
      Tensor<R>& gb = t.grad(b);
      for (size_t i = 0; i < g.v.size(); ++i) gb.v[i] += g.v[i];
    }
  });
}

template <typename R>
Var sub(Tape<R>& tape, Var a, Var b) {
  const Tensor<R>& av = tape.value(a);
  const Tensor<R>& bv = tape.value(b);
  if (!av.same_shape(bv)) {
    throw ConfigError("sub: shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
  }
  Tensor<R> out = av;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= bv.v[i];
  return tape.push(std::move(out), false, {a, b}, [a, b](Tape<R>& t, Var self) {
    const Tensor<R>& g = t.grad(self);
    if (t.needs_grad(a)) {
      Tensor<R>& ga = t.grad(a);
      for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
    }
    if (t.needs_grad(b)) {
      Tensor<R>& gb = t.grad(b);
      for (size_t i = 0; i < g.v.size(); ++i) gb.v[i] -= g.v[i];
    }
  });
}

template <typename R>
Var scale(Tape<R>& tape, Var a, R s) {
  Tensor<R> out = tape.value(a);
  for (R& x : out.v) x *= s;
  return tape.push(std::move(out), false, {a}, [a, s](Tape<R>& t, Var self) {
    const Tensor<R>& g = t.grad(self);
    if (!t.needs_grad(a)) return;
    Tensor<R>& ga = t.grad(a);
    for (size_t i = 0; i < g.v.size(); ++i) ga.v[i] += s * g.v[i];
  });
}

// Forward copy with the gradient path cut.
template <typename R>
Var detach(Tape<R>& tape, Var a) {
  return tape.constant(tape.value(a));
}

// x[T x C] + row[1 x C] broadcast over every frame.
template <typename R>
Var add_row(Tape<R>& tape, Var x, Var row) {
  const Tensor<R>& xv = tape.value(x);
  const Tensor<R>& rv = tape.value(row);
  detail::require_2d(xv, "add_row");
  detail::require_2d(rv, "add_row");
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw ConfigError("add_row: row shape " + shape_str(rv) + " does not match " + shape_str(xv));
  }
  Tensor<R> out = xv;
  const int rows = xv.rows(), cols = xv.cols();
  for (int i = 0; i < rows; ++i) {
    R* o = out.row(i);
    for (int j = 0; j < cols; ++j) o[j] += rv.v[j];
  }
  return tape.push(std::move(out), false, {x, row}, [x, row, rows, cols](Tape<R>& t, Var self) {
    const Tensor<R>& g = t.grad(self);
    if (t.needs_grad(x)) {
      Tensor<R>& gx = t.grad(x);
      for (size_t i = 0; i < g.v.size(); ++i) gx.v[i] += g.v[i];
    }
    if (t.needs_grad(row)) {
      Tensor<R>& gr = t.grad(row);
      for (int i = 0; i < rows; ++i) {
        const R* gi = g.row(i);
        for (int j = 0; j < cols; ++j) gr.v[j] += gi[j];
      }
    }
  });
}

// row[1 x C] -> [t x C].
template <typename R>
Var repeat_row(Tape<R>& tape, Var row, int t_rows) {
  const Tensor<R>& rv = tape.value(row);
  detail::require_2d(rv, "repeat_row");
  if (rv.rows() != 1) throw ConfigError("repeat_row: input must have one row");
  if (t_rows < 1) throw ConfigError("repeat_row: need at least one output row");
  const int cols = rv.cols();
  Tensor<R> out({t_rows, cols});
  for (int i = 0; i < t_rows; ++i) {
    std::copy(rv.v.begin(), rv.v.end(), out.row(i));
  }
  return tape.push(std::move(out), false, {row}, [row, t_rows, cols](Tape<R>& t, Var self) {
    if (!t.needs_grad(row)) return;
    const Tensor<R>& g = t.grad(self);
    Tensor<R>& gr = t.grad(row);
    for (int i = 0; i < t_rows; ++i) {
      const R* gi = g.row(i);
      for (int j = 0; j < cols; ++j) gr.v[j] += gi[j];
    }
  });
}

template <typename R>
Var concat_cols(Tape<R>& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  const int rows = tape.value(parts[0]).rows();
  int total = 0;
  std::vector<int> widths;
  for (Var p : parts) {
    const Tensor<R>& pv = tape.value(p);
    detail::require_2d(pv, "concat_cols");
    if (pv.rows() != rows) throw ConfigError("concat_cols: row count mismatch");
    widths.push_back(pv.cols());
    total += pv.cols();
  }
  Tensor<R> out({rows, total});
  int off = 0;
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    const Tensor<R>& pv = tape.value(parts[pi]);
    for (int i = 0; i < rows; ++i) {
      std::copy(pv.row(i), pv.row(i) + widths[pi], out.row(i) + off);
    }
    off += widths[pi];
  }
  std::vector<Var> inputs = parts;
  return tape.push(std::move(out), false, inputs,
                   [inputs, widths, rows](Tape<R>& t, Var self) {
                     const Tensor<R>& g = t.grad(self);
                     int off = 0;
                     for (size_t pi = 0; pi < inputs.size(); ++pi) {
                       if (t.needs_grad(inputs[pi])) {
                         Tensor<R>& gp = t.grad(inputs[pi]);
                         for (int i = 0; i < rows; ++i) {
                           const R* gi = g.row(i) + off;
                           R* dst = gp.row(i);
                           for (int j = 0; j < widths[pi]; ++j) dst[j] += gi[j];
                         }
                       }
                       off += widths[pi];
                     }
                   });
}

// --- activations -----------------------------------------------------------

template <typename R>
Var leaky_relu(Tape<R>& tape, Var x, R slope = R(0.1)) {
  const Tensor<R>& xv = tape.value(x);
  Tensor<R> out = xv;
  R margin = R(1e30);
  for (R& e : out.v) {
    const R a = e < 0 ? -e : e;
    if (a < margin) margin = a;
    if (e < R(0)) e *= slope;
  }
  tape.note_kink_margin(margin);
  return tape.push(std::move(out), false, {x}, [x, slope](Tape<R>& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Tensor<R>& g = t.grad(self);
    const Tensor<R>& xv = t.value(x);
    Tensor<R>& gx = t.grad(x);
    for (size_t i = 0; i < g.v.size(); ++i) {
      gx.v[i] += (xv.v[i] >= R(0) ? g.v[i] : slope * g.v[i]);
    }
  });
}

template <typename R>
Var sigmoid(Tape<R>& tape, Var x) {
  const Tensor<R>& xv = tape.value(x);
  Tensor<R> out = xv;
  for (R& e : out.v) {
    if (e >= R(0)) {
      e = R(1) / (R(1) + std::exp(-e));
    } else {
      const R z = std::exp(e);
      e = z / (R(1) + z);
    }
  }
  return tape.push(std::move(out), false, {x}, [x](Tape<R>& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Tensor<R>& g = t.grad(self);
    const Tensor<R>& y = t.value(self);
    Tensor<R>& gx = t.grad(x);
    for (size_t i = 0; i < g.v.size(); ++i) {
      gx.v[i] += g.v[i] * y.v[i] * (R(1) - y.v[i]);
    }
  });
}

template <typename R>
Var softmax_rows(Tape<R>& tape, Var x) {
  const Tensor<R>& xv = tape.value(x);
  detail::require_2d(xv, "softmax_rows");
  Tensor<R> out = xv;
  const int rows = xv.rows(), cols = xv.cols();
  for (int i = 0; i < rows; ++i) {
    R* o = out.row(i);
    R mx = o[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, o[j]);
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      o[j] = std::exp(o[j] - mx);
      sum += static_cast<double>(o[j]);
    }
    const R inv = static_cast<R>(1.0 / sum);
    for (int j = 0; j < cols; ++j) o[j] *= inv;
  }
  return tape.push(std::move(out), false, {x}, [x, rows, cols](Tape<R>& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Tensor<R>& g = t.grad(self);
    const Tensor<R>& y = t.value(self);
    Tensor<R>& gx = t.grad(x);
    for (int i = 0; i < rows; ++i) {
      const R* gi = g.row(i);
      const R* yi = y.row(i);
      R* gxi = gx.row(i);
      R dot = R(0);
      for (int j = 0; j < cols; ++j) dot += gi[j] * yi[j];
      for (int j = 0; j < cols; ++j) gxi[j] += yi[j] * (gi[j] - dot);
    }
  });
}

// Inverted dropout with a mask drawn from the caller's seeded stream.
// Training-mode only: callers bypass this op at inference.
template <typename R>
Var dropout(Tape<R>& tape, Var x, R rate, Rng& rng) {
  if (rate < R(0) || rate >= R(1)) throw ConfigError("dropout: rate must be in [0,1)");
  if (rate == R(0)) return x;
  const Tensor<R>& xv = tape.value(x);
  const R keep_scale = R(1) / (R(1) - rate);
  std::vector<R> mask(xv.v.size());
  for (size_t i = 0; i < mask.size(); ++i) {
    mask[i] = (rng.uniform() >= static_cast<double>(rate)) ? keep_scale : R(0);
  }
  Tensor<R> out = xv;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= mask[i];
  return tape.push(std::move(out), false, {x}, [x, mask](Tape<R>& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Tensor<R>& g = t.grad(self);
    Tensor<R>& gx = t.grad(x);
    for (size_t i = 0; i < g.v.size(); ++i) gx.v[i] += g.v[i] * mask[i];
  });
}

// --- linear algebra layers -------------------------------------------------

// x[T x In] * w[In x Out] + b[Out].
template <typename R>
Var linear(Tape<R>& tape, Var x, Var w, Var b) {
  const Tensor<R>& xv = tape.value(x);
  const Tensor<R>& wv = tape.value(w);
  const Tensor<R>& bv = tape.value(b);
  detail::require_2d(xv, "linear");
  detail::require_2d(wv, "linear");
  if (xv.cols() != wv.rows()) {
    throw ConfigError("linear: input width " + shape_str(xv) + " does not match weight " + shape_str(wv));
  }
  if (bv.shape != std::vector<int>{wv.cols()}) {
    throw ConfigError("linear: bias shape " + shape_str(bv) + " does not match weight " + shape_str(wv));
  }
  const int rows = xv.rows(), in = xv.cols(), out_w = wv.cols();
  Tensor<R> out({rows, out_w});
  for (int i = 0; i < rows; ++i) {
    std::copy(bv.v.begin(), bv.v.end(), out.row(i));
  }
  gemm_accum(rows, in, out_w, xv.v.data(), in, wv.v.data(), out_w, out.v.data(), out_w);
  return tape.push(std::move(out), false, {x, w, b},
                   [x, w, b, rows, in, out_w](Tape<R>& t, Var self) {
    const Tensor<R>& g = t.grad(self);
    if (t.needs_grad(b)) {
      Tensor<R>& gb = t.grad(b);
      for (int i = 0; i < rows; ++i) {
        const R* gi = g.row(i);
        for (int j = 0; j < out_w; ++j) gb.v[j] += gi[j];
      }
    }
    if (t.needs_grad(x)) {
      std::vector<R> wt;
      detail::transpose_into(t.value(w), wt);  // [Out x In]
      gemm_accum(rows, out_w, in, g.v.data(), out_w, wt.data(), in,
                 t.grad(x).v.data(), in);
    }
    if (t.needs_grad(w)) {
      std::vector<R> xt;
      detail::transpose_into(t.value(x), xt);  // [In x T]
      gemm_accum(in, rows, out_w, xt.data(), rows, g.v.data(), out_w,
                 t.grad(w).v.data(), out_w);
    }
  });
}

// Same-padded 1-D convolution over rows (time). x[T x Cin], w[Cout x Cin x k]
// with odd k, b[Cout] -> [T x Cout]. Implemented as one gemm per tap over the
// valid row range.
template <typename R>
Var conv1d(Tape<R>& tape, Var x, Var w, Var b) {
  const Tensor<R>& xv = tape.value(x);
  const Tensor<R>& wv = tape.value(w);
  const Tensor<R>& bv = tape.value(b);
  detail::require_2d(xv, "conv1d");
  if (wv.shape.size() != 3) throw ConfigError("conv1d: weight must be [Cout x Cin x k]");
  const int T = xv.rows(), cin = xv.cols();
  const int cout = wv.shape[0], k = wv.shape[2];
  if (wv.shape[1] != cin) {
    throw ConfigError("conv1d: weight " + shape_str(wv) + " does not match input " + shape_str(xv));
  }
  if (k % 2 == 0) throw ConfigError("conv1d: kernel size must be odd");
  if (bv.shape != std::vector<int>{cout}) {
    throw ConfigError("conv1d: bias shape " + shape_str(bv) + " does not match weight");
  }
  std::vector<R> xcols;
  detail::im2col(xv, k, xcols);  // [T x k*Cin]
  std::vector<R>& wpack = tape.scratch(2L * w.id);  // [k*Cin x Cout]
  if (wpack.empty()) detail::pack_weight_taps_cin_cout(wv, wpack);
  Tensor<R> out({T, cout});
  for (int i = 0; i < T; ++i) std::copy(bv.v.begin(), bv.v.end(), out.row(i));
  gemm_accum(T, k * cin, cout, xcols.data(), k * cin, wpack.data(), cout,
             out.v.data(), cout);

  return tape.push(std::move(out), false, {x, w, b},
                   [x, w, b, T, cin, cout, k](Tape<R>& t, Var self) {
    const Tensor<R>& g = t.grad(self);
    if (t.needs_grad(b)) {
      Tensor<R>& gb = t.grad(b);
      for (int i = 0; i < T; ++i) {
        const R* gi = g.row(i);
        for (int j = 0; j < cout; ++j) gb.v[j] += gi[j];
      }
    }
    if (t.needs_grad(x)) {
      // dX = im2col(g) * reversed-tap weight: the adjoint of a same-padded
      // convolution is a same-padded convolution with flipped taps.
      std::vector<R> gcols;
      detail::im2col(g, k, gcols);  // [T x k*Cout]
      std::vector<R>& wrev = t.scratch(2L * w.id + 1);  // [k*Cout x Cin]
      if (wrev.empty()) detail::pack_weight_taps_reversed(t.value(w), wrev);
      gemm_accum(T, k * cout, cin, gcols.data(), k * cout, wrev.data(), cin,
                 t.grad(x).v.data(), cin);
    }
    if (t.needs_grad(w)) {
      std::vector<R> xcols;
      detail::im2col(t.value(x), k, xcols);  // [T x k*Cin]
      std::vector<R> xcols_t(xcols.size());
      for (int i = 0; i < T; ++i) {
        for (int j = 0; j < k * cin; ++j) {
          xcols_t[static_cast<size_t>(j) * T + i] = xcols[static_cast<size_t>(i) * k * cin + j];
        }
      }
      std::vector<R> dwpack(static_cast<size_t>(k) * cin * cout, R(0));
      gemm_accum(k * cin, T, cout, xcols_t.data(), T, g.v.data(), cout,
                 dwpack.data(), cout);
      Tensor<R>& gw = t.grad(w);
      for (int co = 0; co < cout; ++co) {
        for (int ci = 0; ci < cin; ++ci) {
          R* dst = &gw.v[(static_cast<size_t>(co) * cin + ci) * k];
          for (int dk = 0; dk < k; ++dk) {
            dst[dk] += dwpack[(static_cast<size_t>(dk) * cin + ci) * cout + co];
          }
        }
      }
    }
  });
}

// Row gather: out[i] = table[ids[i]]. Backward scatter-adds into the table,
// which makes this both the embedding lookup and the codebook gather.
template <typename R>
Var gather_rows(Tape<R>& tape, Var table, std::vector<int> ids) {
  const Tensor<R>& tv = tape.value(table);
  detail::require_2d(tv, "gather_rows");
  const int n = static_cast<int>(ids.size());
  const int cols = tv.cols();
  for (int id : ids) {
    if (id < 0 || id >= tv.rows()) throw ConfigError("gather_rows: id out of range");
  }
  Tensor<R> out({n, cols});
  for (int i = 0; i < n; ++i) {
    std::copy(tv.row(ids[i]), tv.row(ids[i]) + cols, out.row(i));
  }
  return tape.push(std::move(out), false, {table},
                   [table, ids = std::move(ids), cols](Tape<R>& t, Var self) {
    if (!t.needs_grad(table)) return;
    const Tensor<R>& g = t.grad(self);
    Tensor<R>& gt = t.grad(table);
    for (size_t i = 0; i < ids.size(); ++i) {
      const R* gi = g.row(static_cast<int>(i));
      R* dst = gt.row(ids[i]);
      for (int j = 0; j < cols; ++j) dst[j] += gi[j];
    }
  });
}

// --- pooling and duration expansion ----------------------------------------

// Mean over each segment's frames: [T x C] -> [segments x C]. Sums are
// accumulated in double so pooling a constant run reproduces the constant
// exactly.
template <typename R>
Var avg_pool_segments(Tape<R>& tape, Var x, std::vector<Segment> segs) {
  const Tensor<R>& xv = tape.value(x);
  detail::require_2d(xv, "avg_pool_segments");
  validate_segments(segs, xv.rows(), "avg_pool_segments");
  const int cols = xv.cols();
  const int n = static_cast<int>(segs.size());
  Tensor<R> out({n, cols});
  std::vector<double> acc(cols);
  for (int s = 0; s < n; ++s) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int i = segs[s].begin; i < segs[s].end; ++i) {
      const R* xi = xv.row(i);
      for (int j = 0; j < cols; ++j) acc[j] += static_cast<double>(xi[j]);
    }
    R* o = out.row(s);
    const double inv = 1.0 / segs[s].length();
    for (int j = 0; j < cols; ++j) o[j] = static_cast<R>(acc[j] * inv);
  }
  return tape.push(std::move(out), false, {x},
                   [x, segs = std::move(segs), cols](Tape<R>& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Tensor<R>& g = t.grad(self);
    Tensor<R>& gx = t.grad(x);
    for (size_t s = 0; s < segs.size(); ++s) {
      const R inv = R(1) / static_cast<R>(segs[s].length());
      const R* gs = g.row(static_cast<int>(s));
      for (int i = segs[s].begin; i < segs[s].end; ++i) {
        R* gi = gx.row(i);
        for (int j = 0; j < cols; ++j) gi[j] += gs[j] * inv;
      }
    }
  });
}

// Repeats row i of x durations[i] times: [t x C] -> [sum(durations) x C].
template <typename R>
Var expand_segments(Tape<R>& tape, Var x, const std::vector<int>& durations) {
  const Tensor<R>& xv = tape.value(x);
  detail::require_2d(xv, "expand_segments");
  if (static_cast<int>(durations.size()) != xv.rows()) {
    throw ConfigError("expand_segments: durations length does not match row count");
  }
  std::vector<Segment> segs = segments_from_durations(durations);
  const int cols = xv.cols();
  Tensor<R> out({segs.back().end, cols});
  for (int s = 0; s < xv.rows(); ++s) {
    for (int i = segs[s].begin; i < segs[s].end; ++i) {
      std::copy(xv.row(s), xv.row(s) + cols, out.row(i));
    }
  }
  return tape.push(std::move(out), false, {x},
                   [x, segs = std::move(segs), cols](Tape<R>& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Tensor<R>& g = t.grad(self);
    Tensor<R>& gx = t.grad(x);
    for (size_t s = 0; s < segs.size(); ++s) {
      R* gs = gx.row(static_cast<int>(s));
      for (int i = segs[s].begin; i < segs[s].end; ++i) {
        const R* gi = g.row(i);
        for (int j = 0; j < cols; ++j) gs[j] += gi[j];
      }
    }
  });
}

// Mean over all rows: [T x C] -> [1 x C].
template <typename R>
Var global_avg_pool(Tape<R>& tape, Var x) {
  const Tensor<R>& xv = tape.value(x);
  detail::require_2d(xv, "global_avg_pool");
  return avg_pool_segments(tape, x, {Segment{0, xv.rows()}});
}

// --- losses ----------------------------------------------------------------

// Mean over rows of the Euclidean distance between corresponding rows:
// (1/T) * sum_i ||a_i - b_i||_2. This is the spectrogram reconstruction /
// latent regression loss shape used across the pipeline.
template <typename R>
Var mean_row_distance(Tape<R>& tape, Var a, Var b) {
  const Tensor<R>& av = tape.value(a);
  const Tensor<R>& bv = tape.value(b);
  detail::require_2d(av, "mean_row_distance");
  if (!av.same_shape(bv)) {
    throw ConfigError("mean_row_distance: shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
  }
  const int rows = av.rows(), cols = av.cols();
  std::vector<R> norms(rows);
  double total = 0.0;
  for (int i = 0; i < rows; ++i) {
    const R* ai = av.row(i);
    const R* bi = bv.row(i);
    double s = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double d = static_cast<double>(ai[j]) - static_cast<double>(bi[j]);
      s += d * d;
    }
    norms[i] = static_cast<R>(std::sqrt(s));
    total += std::sqrt(s);
  }
  Tensor<R> out = Tensor<R>::scalar(static_cast<R>(total / rows));
  return tape.push(std::move(out), false, {a, b},
                   [a, b, norms = std::move(norms), rows, cols](Tape<R>& t, Var self) {
    const R g = t.grad(self).v[0];
    const Tensor<R>& av = t.value(a);
    const Tensor<R>& bv = t.value(b);
    const R inv_rows = R(1) / static_cast<R>(rows);
    const bool na = t.needs_grad(a), nb = t.needs_grad(b);
    if (!na && !nb) return;
    for (int i = 0; i < rows; ++i) {
      if (norms[i] < R(1e-12)) continue;  // subgradient 0 at coincident rows
      const R c = g * inv_rows / norms[i];
      const R* ai = av.row(i);
      const R* bi = bv.row(i);
      if (na) {
        R* gi = t.grad(a).row(i);
        for (int j = 0; j < cols; ++j) gi[j] += c * (ai[j] - bi[j]);
      }
      if (nb) {
        R* gi = t.grad(b).row(i);
        for (int j = 0; j < cols; ++j) gi[j] -= c * (ai[j] - bi[j]);
      }
    }
  });
}

// Mean over all elements of (a - b)^2; the codebook / commitment loss shape.
template <typename R>
Var mean_sq_diff(Tape<R>& tape, Var a, Var b) {
  const Tensor<R>& av = tape.value(a);
  const Tensor<R>& bv = tape.value(b);
  if (!av.same_shape(bv)) {
    throw ConfigError("mean_sq_diff: shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
  }
  const size_t n = av.v.size();
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(av.v[i]) - static_cast<double>(bv.v[i]);
    total += d * d;
  }
  Tensor<R> out = Tensor<R>::scalar(static_cast<R>(total / static_cast<double>(n)));
  return tape.push(std::move(out), false, {a, b}, [a, b, n](Tape<R>& t, Var self) {
    const R g = t.grad(self).v[0];
    const Tensor<R>& av = t.value(a);
    const Tensor<R>& bv = t.value(b);
    const R c = R(2) * g / static_cast<R>(n);
    if (t.needs_grad(a)) {
      Tensor<R>& ga = t.grad(a);
      for (size_t i = 0; i < n; ++i) ga.v[i] += c * (av.v[i] - bv.v[i]);
    }
    if (t.needs_grad(b)) {
      Tensor<R>& gb = t.grad(b);
      for (size_t i = 0; i < n; ++i) gb.v[i] -= c * (av.v[i] - bv.v[i]);
    }
  });
}

// Element-wise binary cross-entropy on logits against {0,1} labels, averaged
// over elements. Stable for |logit| well past 50.
template <typename R>
Var bce_logits(Tape<R>& tape, Var logits, const Tensor<R>& labels) {
  const Tensor<R>& xv = tape.value(logits);
  if (xv.shape != labels.shape) {
    throw ConfigError("bce_logits: label shape " + shape_str(labels) + " does not match logits");
  }
  const size_t n = xv.v.size();
  for (R y : labels.v) {
    if (y != R(0) && y != R(1)) throw ConfigError("bce_logits: labels must be 0 or 1");
  }
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(xv.v[i]);
    const double y = static_cast<double>(labels.v[i]);
    total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  Tensor<R> out = Tensor<R>::scalar(static_cast<R>(total / static_cast<double>(n)));
  return tape.push(std::move(out), false, {logits},
                   [logits, labels, n](Tape<R>& t, Var self) {
    if (!t.needs_grad(logits)) return;
    const R g = t.grad(self).v[0];
    const Tensor<R>& xv = t.value(logits);
    Tensor<R>& gx = t.grad(logits);
    const R c = g / static_cast<R>(n);
    for (size_t i = 0; i < n; ++i) {
      const double x = static_cast<double>(xv.v[i]);
      const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      gx.v[i] += c * static_cast<R>(s - static_cast<double>(labels.v[i]));
    }
  });
}

// --- vector quantization helpers -------------------------------------------

// Exhaustive nearest row of `codebook` for each row of `x` under Euclidean
// distance; ties resolve to the smallest index.
template <typename R>
std::vector<int> nearest_rows(const Tensor<R>& x, const Tensor<R>& codebook) {
  detail::require_2d(x, "nearest_rows");
  detail::require_2d(codebook, "nearest_rows");
  if (x.cols() != codebook.cols()) {
    throw ConfigError("nearest_rows: dimension mismatch " + shape_str(x) + " vs " + shape_str(codebook));
  }
  const int n = x.rows(), b = codebook.rows(), d = x.cols();
  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) {
    const R* xi = x.row(i);
    R best = R(0);
    int best_j = 0;
    for (int j = 0; j < b; ++j) {
      const R* cj = codebook.row(j);
      R dist = R(0);
      for (int e = 0; e < d; ++e) {
        const R diff = xi[e] - cj[e];
        dist += diff * diff;
      }
      if (j == 0 || dist < best) {
        best = dist;
        best_j = j;
      }
    }
    ids[i] = best_j;
  }
  return ids;
}

// Straight-through estimator: the forward value is a bit-exact copy of
// `quantized`; the gradient passes unchanged into `pre_quant` and never into
// `quantized` (the codebook learns through its own loss term instead).
template <typename R>
Var straight_through(Tape<R>& tape, Var pre_quant, Var quantized) {
  const Tensor<R>& qv = tape.value(quantized);
  const Tensor<R>& pv = tape.value(pre_quant);
  if (!qv.same_shape(pv)) {
    throw ConfigError("straight_through: shape mismatch " + shape_str(pv) + " vs " + shape_str(qv));
  }
  Tensor<R> out = qv;
  return tape.push(std::move(out), false, {pre_quant}, [pre_quant](Tape<R>& t, Var self) {
    if (!t.needs_grad(pre_quant)) return;
    const Tensor<R>& g = t.grad(self);
    Tensor<R>& gp = t.grad(pre_quant);
    for (size_t i = 0; i < g.v.size(); ++i) gp.v[i] += g.v[i];
  });
}

}  // namespace nn
}  // namespace casein

#endif  // CASEIN_OPS_H_
