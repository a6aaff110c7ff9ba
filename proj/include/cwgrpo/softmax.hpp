#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace cwgrpo {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Log-softmax restricted to entries where `mask` is true. Masked-out entries
/// get -infinity. At least one entry must be legal.
template <typename Derived>
VectorX<typename Derived::Scalar> masked_log_softmax(const Eigen::MatrixBase<Derived>& logits, const Mask& mask) {
  using Scalar = typename Derived::Scalar;
  const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
  Scalar max = neg_inf;
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (mask(i) && logits(i) > max) max = logits(i);
  Scalar sum = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i)
    if (mask(i)) sum += std::exp(logits(i) - max);
  const Scalar log_z = max + std::log(sum);
  VectorX<Scalar> out(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) out(i) = mask(i) ? logits(i) - log_z : neg_inf;
  return out;
}

template <typename Derived>
VectorX<typename Derived::Scalar> log_softmax(const Eigen::MatrixBase<Derived>& logits) {
  return masked_log_softmax(logits, Mask::Constant(logits.size(), true));
}

/// exp of a log-probability vector; -infinity maps to exactly 0.
template <typename Derived>
VectorX<typename Derived::Scalar> probabilities(const Eigen::MatrixBase<Derived>& log_probs) {
  // the vectorized exp clamps its argument, so exp(-inf) would come out denormal
  return log_probs.unaryExpr([](typename Derived::Scalar x) { return std::exp(x); });
}

template <typename Derived>
VectorX<typename Derived::Scalar> masked_softmax(const Eigen::MatrixBase<Derived>& logits, const Mask& mask) {
  return probabilities(masked_log_softmax(logits, mask));
}

}  // namespace cwgrpo
