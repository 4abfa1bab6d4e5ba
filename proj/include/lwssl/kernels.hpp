// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

namespace lwssl::kernels {

// Flat arithmetic kernels behind the autodiff ops. Each entry has a scalar
// reference implementation; the float table may be swapped for a SIMD variant
// at startup based on runtime CPU detection. The scalar and SIMD variants are
// equivalence-tested against each other (reductions may differ by rounding,
// never by more than a small relative tolerance).
template <class T>
struct KernelTable {
  void (*add)(T* dst, const T* a, const T* b, std::size_t n);
  void (*sub)(T* dst, const T* a, const T* b, std::size_t n);
  void (*mul)(T* dst, const T* a, const T* b, std::size_t n);
  void (*axpy)(T* dst, T alpha, const T* x, std::size_t n);  // dst += alpha * x
  void (*scale)(T* dst, const T* a, T alpha, std::size_t n);
  void (*mul_acc)(T* dst, const T* a, const T* b, std::size_t n);  // dst += a * b
  T (*dot)(const T* a, const T* b, std::size_t n);
  T (*sum)(const T* a, std::size_t n);
  // C[m x n] (+)= A[m x k] . B[k x n]
  void (*mm_nn)(T* c, const T* a, const T* b, std::size_t m, std::size_t k, std::size_t n,
                bool accumulate);
  // C[m x n] (+)= A[m x k] . B[n x k]^T
  void (*mm_nt)(T* c, const T* a, const T* b, std::size_t m, std::size_t k, std::size_t n,
                bool accumulate);
  // C[k x n] (+)= A[m x k]^T . B[m x n]
  void (*mm_tn)(T* c, const T* a, const T* b, std::size_t m, std::size_t k, std::size_t n,
                bool accumulate);
};

// Active table for the scalar type. Double always resolves to the scalar
// reference kernels (the gradient-check path values exactness over speed).
template <class T>
const KernelTable<T>& table();

// Scalar reference table, regardless of dispatch. Used by equivalence tests.
template <class T>
const KernelTable<T>& scalar_table();

// Force the float table to the scalar reference (tests, reproducibility
// experiments across machines). Also honored via LWSSL_FORCE_SCALAR=1.
void set_force_scalar(bool force);

// "avx2" or "scalar": what the float table currently dispatches to.
std::string active_backend();

}  // namespace lwssl::kernels
