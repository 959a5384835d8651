#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "ticl/error.hpp"

namespace ticl {

/// Dense row-major tensor. The production element type is float; the whole
/// numeric stack is templated so verification runs can execute at double
/// precision (the switchable 64-bit accumulation mode). Reductions follow a
/// fixed left-to-right order in either mode, so results are reproducible run
/// to run; short statistical reductions (softmax denominators, norm stats,
/// losses) accumulate in double even in float mode.
template <typename T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }
  Tensor(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    check_dims(static_cast<int64_t>(data.size()) == numel_of(shape),
               "tensor data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t e : s) {
      check_dims(e >= 1, "tensor extents must be >= 1");
      n *= e;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int64_t> s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t extent(int i) const { return shape[static_cast<size_t>(i)]; }
  int64_t rows() const { return shape[0]; }
  int64_t cols() const { return shape[1]; }

  T& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  T at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  T& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  T at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
  T& at(int64_t i, int64_t j, int64_t l) {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + l)];
  }
  T at(int64_t i, int64_t j, int64_t l) const {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + l)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace kernels {

// C[m x n] (+)= A[m x p] * B[p x n].  The reduction over p runs in ascending
// order per output element (rank-1 row updates), so the summation order is
// fixed while the inner loop vectorizes across n. Accumulation happens in T:
// float in production mode, double in the 64-bit verification mode.
template <typename T>
void matmul_nn(const T* a, const T* b, T* __restrict c, int64_t m, int64_t p, int64_t n,
               bool accumulate) {
  std::vector<T> acc(static_cast<size_t>(n));
  for (int64_t i = 0; i < m; ++i) {
    if (accumulate) {
      for (int64_t j = 0; j < n; ++j) acc[static_cast<size_t>(j)] = c[i * n + j];
    } else {
      std::fill(acc.begin(), acc.end(), T(0));
    }
    T* __restrict ar = acc.data();
    for (int64_t k = 0; k < p; ++k) {
      const T av = a[i * p + k];
      const T* __restrict brow = b + k * n;
      for (int64_t j = 0; j < n; ++j) ar[j] += av * brow[j];
    }
    for (int64_t j = 0; j < n; ++j) c[i * n + j] = ar[j];
  }
}

// C[m x n] (+)= A[m x p] * B^T where B is [n x p]. B is transposed into a
// scratch buffer first; per-element summation order over p is unchanged.
template <typename T>
void matmul_nt(const T* a, const T* b, T* __restrict c, int64_t m, int64_t p, int64_t n,
               bool accumulate) {
  std::vector<T> bt(static_cast<size_t>(p * n));
  for (int64_t j = 0; j < n; ++j)
    for (int64_t k = 0; k < p; ++k) bt[static_cast<size_t>(k * n + j)] = b[j * p + k];
  matmul_nn(a, bt.data(), c, m, p, n, accumulate);
}

// C[m x n] (+)= A^T * B where A is [p x m], B is [p x n].
template <typename T>
void matmul_tn(const T* a, const T* b, T* __restrict c, int64_t m, int64_t p, int64_t n,
               bool accumulate) {
  std::vector<T> acc(static_cast<size_t>(n));
  for (int64_t i = 0; i < m; ++i) {
    if (accumulate) {
      for (int64_t j = 0; j < n; ++j) acc[static_cast<size_t>(j)] = c[i * n + j];
    } else {
      std::fill(acc.begin(), acc.end(), T(0));
    }
    T* __restrict ar = acc.data();
    for (int64_t k = 0; k < p; ++k) {
      const T av = a[k * m + i];
      const T* __restrict brow = b + k * n;
      for (int64_t j = 0; j < n; ++j) ar[j] += av * brow[j];
    }
    for (int64_t j = 0; j < n; ++j) c[i * n + j] = ar[j];
  }
}

}  // namespace kernels

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check_dims(a.rank() == 2 && b.rank() == 2, "matmul expects matrices");
  check_dims(a.cols() == b.rows(), "matmul: inner extents differ (" +
                                       std::to_string(a.cols()) + " vs " +
                                       std::to_string(b.rows()) + ")");
  Tensor<T> c({a.rows(), b.cols()});
  kernels::matmul_nn(a.data.data(), b.data.data(), c.data.data(), a.rows(), a.cols(),
                     b.cols(), false);
  return c;
}

/// Numerically stable softmax along the last axis of a vector or matrix.
template <typename T>
Tensor<T> softmax(const Tensor<T>& v) {
  check(v.all_finite(), "softmax: input contains NaN/Inf");
  Tensor<T> out = v;
  int64_t n = v.rank() == 1 ? v.extent(0) : v.cols();
  int64_t rows = v.numel() / n;
  for (int64_t i = 0; i < rows; ++i) {
    T* row = out.data.data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    for (int64_t j = 0; j < n; ++j)
      row[j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - mx) / sum);
  }
  return out;
}

/// Scaled dot-product multi-head attention over already-projected Q/K/V,
/// with an explicit boolean mask (mask[i][t] true = query i may attend to
/// key t) and a final head-mixing matrix. Scale is 1/sqrt(k/heads).
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k,
                               const Tensor<T>& v, const Tensor<T>& mix,
                               int heads, const std::vector<std::vector<bool>>& mask) {
  check_dims(q.rank() == 2 && k.rank() == 2 && v.rank() == 2, "attention expects matrices");
  const int64_t nq = q.rows(), nk = k.rows(), width = q.cols();
  check_dims(k.cols() == width && v.cols() == width, "attention: Q/K/V widths differ");
  check_dims(mix.rows() == width && mix.cols() == width, "attention: mix matrix must be k x k");
  check(heads >= 1 && width % heads == 0, "attention: width must be divisible by heads");
  check(static_cast<int64_t>(mask.size()) == nq, "attention: mask rows != queries");
  const int64_t dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor<T> concat({nq, width});
  std::vector<double> scores(static_cast<size_t>(nk));
  for (int64_t i = 0; i < nq; ++i) {
    check(static_cast<int64_t>(mask[static_cast<size_t>(i)].size()) == nk,
          "attention: mask cols != keys");
    bool any = false;
    for (bool b : mask[static_cast<size_t>(i)]) any = any || b;
    check(any, "attention: query row " + std::to_string(i) + " is fully masked");
    for (int h = 0; h < heads; ++h) {
      const int64_t off = h * dh;
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t t = 0; t < nk; ++t) {
        if (!mask[static_cast<size_t>(i)][static_cast<size_t>(t)]) continue;
        double s = 0.0;
        for (int64_t l = 0; l < dh; ++l)
          s += static_cast<double>(q.at(i, off + l)) * static_cast<double>(k.at(t, off + l));
        s *= scale;
        scores[static_cast<size_t>(t)] = s;
        mx = std::max(mx, s);
      }
      double denom = 0.0;
      for (int64_t t = 0; t < nk; ++t)
        if (mask[static_cast<size_t>(i)][static_cast<size_t>(t)])
          denom += std::exp(scores[static_cast<size_t>(t)] - mx);
      for (int64_t l = 0; l < dh; ++l) {
        double acc = 0.0;
        for (int64_t t = 0; t < nk; ++t) {
          if (!mask[static_cast<size_t>(i)][static_cast<size_t>(t)]) continue;
          double p = std::exp(scores[static_cast<size_t>(t)] - mx) / denom;
          acc += p * static_cast<double>(v.at(t, off + l));
        }
        concat.at(i, off + l) = static_cast<T>(acc);
      }
    }
  }
  return matmul(concat, mix);
}

}  // namespace ticl
