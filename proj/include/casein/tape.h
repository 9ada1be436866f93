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

#ifndef CASEIN_TAPE_H_
#define CASEIN_TAPE_H_

#include <deque>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "casein/tensor.h"

namespace casein {
namespace nn {

// Named trainable tensor that persists across training steps.
template <typename R>
struct Parameter {
  std::string name;
  Tensor<R> value;
  Tensor<R> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<R> val) : name(std::move(n)), value(std::move(val)) {
    grad = Tensor<R>::zeros(value.shape);
  }

  void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), R(0)); }
};

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape with eager forward evaluation. Ops append nodes whose
// inputs were created earlier, so the node list is topologically ordered and
// the backward pass is a single reverse sweep that visits each node once.
// Not shareable across threads.
template <typename R>
class Tape {
 public:
  // Called as back(tape, self) during the reverse sweep; reads grad(self)
  // and accumulates into the gradients of its inputs.
  using BackFn = std::function<void(Tape&, Var)>;

  Var leaf(Tensor<R> value, bool needs_grad = false) {
    return push(std::move(value), needs_grad, {}, nullptr);
  }

  Var constant(Tensor<R> value) { return leaf(std::move(value), false); }

  // Registers a parameter leaf; repeated calls with the same parameter on
  // this tape return the same node. Gradients land in p.grad after backward.
  Var param(Parameter<R>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var{it->second};
    Var v = leaf(p.value, true);
    param_nodes_.emplace(&p, v.id);
    param_order_.push_back({v.id, &p});
    return v;
  }

  // Appends an op node. `inputs` is used for the topological-order invariant
  // and the needs-grad decision; `back` may be null for constants.
  Var push(Tensor<R> value, bool needs_grad, const std::vector<Var>& inputs,
           BackFn back) {
    bool needs = needs_grad;
    for (Var in : inputs) {
      if (in.id < 0 || in.id >= static_cast<int>(nodes_.size())) {
        throw ConfigError("Tape: op input does not precede the node");
      }
      needs = needs || nodes_[in.id].needs;
    }
    nodes_.push_back(Node{std::move(value), Tensor<R>(), needs ? std::move(back) : nullptr, needs});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<R>& value(Var v) const { return nodes_.at(v.id).value; }

  bool needs_grad(Var v) const { return nodes_.at(v.id).needs; }

  // Gradient buffer, allocated as zeros on first use.
  Tensor<R>& grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.grad.v.empty()) n.grad = Tensor<R>::zeros(n.value.shape);
    return n.grad;
  }

  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.v.empty(); }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse creation
  // order, then accumulates leaf gradients into registered parameters.
  void backward(Var loss) {
    if (nodes_.at(loss.id).value.numel() != 1) {
      throw ConfigError("Tape::backward: loss must be scalar");
    }
    grad(loss).v[0] += R(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs || !n.back || n.grad.v.empty()) continue;
      n.back(*this, Var{i});
    }
    for (auto& [id, p] : param_order_) {
      const Node& n = nodes_[id];
      if (n.grad.v.empty()) continue;
      for (size_t j = 0; j < n.grad.v.size(); ++j) p->grad.v[j] += n.grad.v[j];
    }
  }

  // Per-tape scratch cache for derived read-only buffers (packed conv
  // weights). Keyed by node id and variant; a node's value never changes
  // once pushed, so entries stay valid for the tape's lifetime.
  std::vector<R>& scratch(long key) { return scratch_[key]; }

  // Smallest |pre-activation| seen by kinked ops on this tape. Gradient
  // checks use it to reject instances where a finite-difference probe would
  // straddle a non-smooth point.
  R kink_margin() const { return kink_margin_; }
  void note_kink_margin(R m) {
    if (m < kink_margin_) kink_margin_ = m;
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<R> value;
    Tensor<R> grad;
    BackFn back;
    bool needs = false;
  };

  // Deque keeps node references stable while later ops are appended;
  // builders may hold value references across pushes.
  std::deque<Node> nodes_;
  std::unordered_map<Parameter<R>*, int> param_nodes_;
  std::vector<std::pair<int, Parameter<R>*>> param_order_;
  std::unordered_map<long, std::vector<R>> scratch_;
  R kink_margin_ = R(1e30);
};

}  // namespace nn
}  // namespace casein

#endif  // CASEIN_TAPE_H_
