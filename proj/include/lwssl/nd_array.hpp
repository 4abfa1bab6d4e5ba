// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <vector>

#include "lwssl/common.hpp"
#include "lwssl/rng.hpp"

namespace lwssl {

// What a buffer's bytes count as in the training-memory ledger. Only the
// f32/f64 payload is accounted; shapes and node metadata are not.
enum class MemClass : std::uint8_t { untracked = 0, activation, grad };

// Live byte counters for one training graph. A Tape owns one of these; every
// array allocated through it reports its payload on construction/destruction.
struct MemScope {
  std::int64_t live_activation = 0;
  std::int64_t live_grad = 0;
  std::int64_t peak_live = 0;       // peak of live_activation + live_grad
  std::int64_t saved_bytes = 0;     // distinct buffers retained for backward
  std::int64_t peak_transient = 0;  // peak of live_activation - saved_bytes

  void on_alloc(MemClass cls, std::int64_t bytes) {
    if (cls == MemClass::activation) live_activation += bytes;
    if (cls == MemClass::grad) live_grad += bytes;
    peak_live = std::max(peak_live, live_activation + live_grad);
    peak_transient = std::max(peak_transient, live_activation - saved_bytes);
  }
  void on_free(MemClass cls, std::int64_t bytes) {
    if (cls == MemClass::activation) live_activation -= bytes;
    if (cls == MemClass::grad) live_grad -= bytes;
  }
};

template <class T>
struct BufferT {
  std::vector<T> data;
  MemScope* scope = nullptr;
  MemClass cls = MemClass::untracked;

  BufferT(std::size_t n, MemScope* s, MemClass c) : data(n, T(0)), scope(s), cls(c) {
    if (scope) scope->on_alloc(cls, static_cast<std::int64_t>(n * sizeof(T)));
  }
  ~BufferT() {
    if (scope) scope->on_free(cls, static_cast<std::int64_t>(data.size() * sizeof(T)));
  }
  BufferT(const BufferT&) = delete;
  BufferT& operator=(const BufferT&) = delete;
};

// Dense row-major array. Copying is shallow (shared buffer); use clone() for
// a deep copy. The scalar type is float in training mode and double in the
// gradient-check mode.
template <class T>
class ArrayT {
 public:
  using Buffer = BufferT<T>;

  ArrayT() = default;
  explicit ArrayT(std::vector<std::size_t> shape, MemScope* scope = nullptr,
                  MemClass cls = MemClass::untracked)
      : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (std::size_t d : shape_) {
      if (d == 0) throw ShapeError("ArrayT: zero-sized dimension in " + shape_str(shape_));
      n *= d;
    }
    buf_ = std::make_shared<Buffer>(n, scope, cls);
  }

  static ArrayT zeros(std::vector<std::size_t> shape, MemScope* scope = nullptr,
                      MemClass cls = MemClass::untracked) {
    return ArrayT(std::move(shape), scope, cls);
  }

  static ArrayT full(std::vector<std::size_t> shape, T v) {
    ArrayT a(std::move(shape));
    std::fill(a.data(), a.data() + a.numel(), v);
    return a;
  }

  static ArrayT randn(std::vector<std::size_t> shape, Rng& rng, T sigma = T(1)) {
    ArrayT a(std::move(shape));
    for (std::size_t i = 0; i < a.numel(); ++i) a.data()[i] = static_cast<T>(rng.normal(0.0, sigma));
    return a;
  }

  static ArrayT uniform(std::vector<std::size_t> shape, Rng& rng, T lo, T hi) {
    ArrayT a(std::move(shape));
    for (std::size_t i = 0; i < a.numel(); ++i) a.data()[i] = static_cast<T>(rng.uniform(lo, hi));
    return a;
  }

  bool defined() const { return static_cast<bool>(buf_); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return buf_ ? buf_->data.size() : 0; }
  std::int64_t bytes() const { return static_cast<std::int64_t>(numel() * sizeof(T)); }

  T* data() { return buf_->data.data(); }
  const T* data() const { return buf_->data.data(); }
  T& at(std::size_t i) { return buf_->data[i]; }
  T at(std::size_t i) const { return buf_->data[i]; }

  const std::shared_ptr<Buffer>& buffer() const { return buf_; }
  MemClass mem_class() const { return buf_ ? buf_->cls : MemClass::untracked; }

  // Same buffer, different shape. numel must match.
  ArrayT reshaped(std::vector<std::size_t> shape) const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    if (n != numel())
      throw ShapeError(cat("reshape: cannot view ", shape_str(shape_), " as ", shape_str(shape)));
    ArrayT out;
    out.shape_ = std::move(shape);
    out.buf_ = buf_;
    return out;
  }

  ArrayT clone(MemScope* scope = nullptr, MemClass cls = MemClass::untracked) const {
    ArrayT out(shape_, scope, cls);
    std::copy(data(), data() + numel(), out.data());
    return out;
  }

  template <class U>
  ArrayT<U> cast() const {
    ArrayT<U> out(shape_);
    for (std::size_t i = 0; i < numel(); ++i) out.data()[i] = static_cast<U>(data()[i]);
    return out;
  }

  void fill(T v) { std::fill(data(), data() + numel(), v); }

  bool same_shape(const ArrayT& o) const { return shape_ == o.shape_; }

  bool bit_equal(const ArrayT& o) const {
    if (!same_shape(o)) return false;
    return std::equal(data(), data() + numel(), o.data());
  }

 private:
  std::vector<std::size_t> shape_;
  std::shared_ptr<Buffer> buf_;
};

using Arr = ArrayT<float>;
using Arr64 = ArrayT<double>;

}  // namespace lwssl
