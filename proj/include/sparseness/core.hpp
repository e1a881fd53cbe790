#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace sparseness {

using Index = Eigen::Index;

template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

/// Argument outside the operator's domain (zero vector, bad ranges, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A support became too small to carry the target norms (rho_I < 0).
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gradient requested at a point where the map is not differentiable.
class NotDifferentiableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Normalized sparseness of a nonzero vector, in [0, 1]. Scale-invariant;
/// 1 for a single nonzero entry, 0 when all entries are equal.
template <class Derived>
typename Derived::Scalar sigma(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Index n = x.size();
  if (n < 2) throw DomainError("sigma: vector dimension must be at least 2");
  const Scalar l2 = x.norm();
  if (l2 == Scalar(0)) throw DomainError("sigma: undefined for the zero vector");
  const Scalar l1 = x.template lpNorm<1>();
  const Scalar sqrt_n = std::sqrt(Scalar(n));
  return (sqrt_n - l1 / l2) / (sqrt_n - Scalar(1));
}

/// Target norms (lambda1, lambda2) and dimension n. Defines the constraint
/// sets: every point with L1 norm lambda1 and L2 norm lambda2 in R^n has the
/// same sparseness. Requires lambda2 <= lambda1 <= sqrt(n)*lambda2.
template <class Scalar>
class SparseTarget {
 public:
  SparseTarget(Index n, Scalar lambda1, Scalar lambda2)
      : n_(n), lambda1_(lambda1), lambda2_(lambda2) {
    if (n < 2) throw DomainError("SparseTarget: n must be at least 2");
    if (!(lambda1 > Scalar(0)) || !(lambda2 > Scalar(0)))
      throw DomainError("SparseTarget: target norms must be positive");
    if (lambda1 < lambda2 || lambda1 > std::sqrt(Scalar(n)) * lambda2)
      throw DomainError(
          "SparseTarget: requires lambda2 <= lambda1 <= sqrt(n)*lambda2");
  }

  /// Target with sparseness sigma_star and unit L2 norm:
  /// lambda1 = sqrt(n) - sigma_star*(sqrt(n) - 1), lambda2 = 1.
  static SparseTarget for_sigma(Index n, Scalar sigma_star) {
    if (n < 2) throw DomainError("SparseTarget: n must be at least 2");
    if (!(sigma_star > Scalar(0)) || !(sigma_star < Scalar(1)))
      throw DomainError("SparseTarget: sigma_star must lie in (0, 1)");
    const Scalar sqrt_n = std::sqrt(Scalar(n));
    return SparseTarget(n, sqrt_n - sigma_star * (sqrt_n - Scalar(1)),
                        Scalar(1));
  }

  Index dim() const { return n_; }
  Scalar lambda1() const { return lambda1_; }
  Scalar lambda2() const { return lambda2_; }

  /// Common barycenter entry value of the simplex face / hypercircle with
  /// support size d: lambda1 / d.
  Scalar barycenter(Index d) const { return lambda1_ / Scalar(d); }

  /// Squared radius of the hypercircle restricted to a support of size d:
  /// rho_I = lambda2^2 - lambda1^2 / d. Negative means the support cannot
  /// carry the target norms.
  Scalar radius_sq(Index d) const {
    return lambda2_ * lambda2_ - lambda1_ * lambda1_ / Scalar(d);
  }

 private:
  Index n_;
  Scalar lambda1_;
  Scalar lambda2_;
};

template <class Scalar>
SparseTarget<Scalar> target_for_sigma(Index n, Scalar sigma_star) {
  return SparseTarget<Scalar>::for_sigma(n, sigma_star);
}

using SparseTargetd = SparseTarget<double>;

}  // namespace sparseness
