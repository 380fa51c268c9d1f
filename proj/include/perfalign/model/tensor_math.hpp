#pragma once

// Numerically stable scalar and row-wise helpers shared by every loss.

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace perfalign {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// log(1 + exp(x)) without overflow.
template <typename T>
T softplus(T x) {
  if (x > T(0)) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// -log(sigmoid(x)) == softplus(-x).
template <typename T>
T neg_log_sigmoid(T x) {
  return softplus(-x);
}

template <typename Derived>
typename Derived::Scalar logsumexp(const Eigen::MatrixBase<Derived>& row) {
  using T = typename Derived::Scalar;
  const T m = row.maxCoeff();
  if (m == -std::numeric_limits<T>::infinity()) return m;
  return m + std::log((row.array() - m).exp().sum());
}

/// Row-wise log-softmax of a dense matrix.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> log_softmax_rows(
    const Eigen::MatrixBase<Derived>& x) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = x.row(r).array() - logsumexp(x.row(r));
  return out;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> softmax_rows(
    const Eigen::MatrixBase<Derived>& x) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& x) {
  return x.allFinite();
}

}  // namespace perfalign
