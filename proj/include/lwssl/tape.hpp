// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lwssl/nd_array.hpp"

namespace lwssl {

// A trainable (or frozen) tensor. Frozen params never receive a grad buffer
// and their value is left bit-identical by the optimizer.
template <class T>
struct ParamT {
  ArrayT<T> value;
  ArrayT<T> grad;  // defined only between backward() and Tape::release()
  bool trainable = true;
  std::string name;

  std::int64_t bytes() const { return value.bytes(); }
};

using Param = ParamT<float>;

// Handle to a node's output. Cheap to copy; holding one keeps the output
// payload alive (the tape itself only keeps weak references to outputs that
// are not needed for backward).
template <class T>
struct ValueT {
  int id = -1;
  ArrayT<T> arr;
  bool requires_grad = false;

  const std::vector<std::size_t>& shape() const { return arr.shape(); }
  std::size_t numel() const { return arr.numel(); }
};

// Reverse-mode autodiff tape over dense arrays, with exact byte accounting of
// everything retained for the backward pass:
//   - activations are saved only for nodes on a path to a trainable param;
//   - saved bytes count each distinct buffer once, and only buffers that were
//     allocated on this tape (inputs and param values are alive regardless of
//     the tape, so retaining them costs nothing extra);
//   - gradient buffers are allocated lazily in backward and kept until
//     release(), one per reachable grad-requiring node.
template <class T>
class TapeT {
 public:
  using Arr = ArrayT<T>;
  using Value = ValueT<T>;
  using BackwardFn = std::function<void(TapeT&, int)>;

  struct Node {
    const char* op = "";
    std::vector<int> inputs;
    std::vector<Arr> saved;
    std::weak_ptr<BufferT<T>> out_buf;
    std::vector<std::size_t> out_shape;
    BackwardFn backward;
    ParamT<T>* param = nullptr;
    bool requires_grad = false;
  };

  TapeT() = default;
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  MemScope& scope() { return scope_; }

  Arr alloc(std::vector<std::size_t> shape) {
    return Arr(std::move(shape), &scope_, MemClass::activation);
  }
  Arr alloc_grad(std::vector<std::size_t> shape) {
    return Arr(std::move(shape), &scope_, MemClass::grad);
  }

  // Resets peak tracking for a fresh step. Call before building the graph.
  void begin_step() {
    scope_.peak_live = scope_.live_activation + scope_.live_grad;
    scope_.peak_transient = 0;
  }

  bool empty() const { return nodes_.empty(); }
  std::size_t num_nodes() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  Value constant(Arr a) { return make_node("const", std::move(a), {}, false, nullptr); }

  // Leaf for a param; the same ParamT yields the same node within one graph,
  // so repeated use accumulates into one grad buffer.
  Value leaf(ParamT<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Value{it->second, p.value, p.trainable};
    Value v = make_node("param", p.value, {}, p.trainable, nullptr);
    nodes_.back().param = &p;
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  Value make_node(const char* op, Arr out, std::vector<int> inputs, bool requires_grad,
                  BackwardFn backward) {
#ifndef NDEBUG
    for (std::size_t i = 0; i < out.numel(); ++i) {
      T v = out.data()[i];
      if (v != v) throw ValueError(cat(op, ": NaN in output"));
    }
#endif
    Node n;
    n.op = op;
    n.inputs = std::move(inputs);
    n.out_buf = out.buffer();
    n.out_shape = out.shape();
    n.backward = std::move(backward);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    grads_.emplace_back();
    int id = static_cast<int>(nodes_.size()) - 1;
    return Value{id, std::move(out), requires_grad};
  }

  // Retain a tensor for the backward pass of node `id`. Only tape-allocated
  // activation buffers enter the byte ledger; each distinct buffer once.
  void save(int id, const Arr& a) {
    nodes_[static_cast<std::size_t>(id)].saved.push_back(a);
    if (a.mem_class() == MemClass::activation && a.buffer()->scope == &scope_) {
      if (saved_set_.insert(a.buffer().get()).second) scope_.saved_bytes += a.bytes();
    }
  }
  const Arr& saved(int id, std::size_t i) const {
    return nodes_[static_cast<std::size_t>(id)].saved[i];
  }

  const Arr* grad(int id) const {
    const auto& g = grads_[static_cast<std::size_t>(id)];
    return g.defined() ? &g : nullptr;
  }

  // Grad buffer for a node, zero-initialized on first touch.
  Arr& grad_buf(int id) {
    auto& g = grads_[static_cast<std::size_t>(id)];
    if (!g.defined()) g = alloc_grad(nodes_[static_cast<std::size_t>(id)].out_shape);
    return g;
  }

  void backward(const Value& loss) {
    if (loss.arr.numel() != 1)
      throw ShapeError(cat("backward: loss must be scalar, got ", shape_str(loss.arr.shape())));
    if (backward_done_) throw ValueError("backward: called twice without release()");
    backward_done_ = true;
    if (!loss.requires_grad) return;  // nothing trainable reachable
    grad_buf(loss.id).fill(T(1));
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.requires_grad || !grads_[static_cast<std::size_t>(id)].defined()) continue;
      if (n.backward) {
        // every grad-requiring input gets its buffer up front, so retained
        // bytes depend on the graph shape, never on gradient values
        for (int in : n.inputs)
          if (nodes_[static_cast<std::size_t>(in)].requires_grad) grad_buf(in);
        n.backward(*this, id);
      }
      if (n.param) n.param->grad = grads_[static_cast<std::size_t>(id)];
    }
  }

  // Drops the graph: nodes, saved activations, gradient buffers, and the
  // grads of params touched by this graph. Byte counters return to the
  // pre-forward baseline.
  void release() {
    for (auto& [p, id] : param_nodes_) p->grad = Arr();
    nodes_.clear();
    grads_.clear();
    param_nodes_.clear();
    saved_set_.clear();
    scope_.saved_bytes = 0;
    backward_done_ = false;
  }

  std::int64_t saved_activation_bytes() const { return scope_.saved_bytes; }
  std::int64_t grad_bytes() const { return scope_.live_grad; }
  std::int64_t retained_bytes() const { return scope_.saved_bytes + scope_.live_grad; }
  std::int64_t peak_bytes() const { return scope_.peak_live; }
  std::int64_t transient_peak_bytes() const { return scope_.peak_transient; }

 private:
  MemScope scope_;
  std::vector<Node> nodes_;
  std::vector<Arr> grads_;
  std::unordered_map<ParamT<T>*, int> param_nodes_;
  std::unordered_set<const void*> saved_set_;
  bool backward_done_ = false;
};

using Tape = TapeT<float>;
using Value = ValueT<float>;

}  // namespace lwssl
