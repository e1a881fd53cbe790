#pragma once

#include <cmath>
#include <vector>

#include "sparseness/projection.hpp"

namespace sparseness {

/// Almost-everywhere derivative of the sparseness projection, reconstructed
/// from a ProjectionTrace. The sorted-space derivative is the block diagonal
/// matrix diag(A, 0) with A = A_h ... A_1, where each N x N factor is
///   A_i = delta_i E - delta_i/d_i J - alpha_i s_i s_i^T
///         + alpha_i/d_i s_i s_i^T J,
/// s_i the leading N entries of the centered iteration vector and
/// alpha_i = delta_i / ||r_i||^2 = delta_i^3 / rho_i. Conjugation by the sort
/// permutation (and the sign flips of the unrestricted variant) recovers the
/// derivative at the original input.
template <class Scalar>
class GradientOperator {
 public:
  explicit GradientOperator(const ProjectionTrace<Scalar>& trace)
      : n_(trace.target.dim()),
        support_(trace.final_support),
        permutation_(trace.permutation),
        signs_(trace.signs) {
    if (!trace.differentiable())
      throw NotDifferentiableError(
          trace.degenerate
              ? "projection hit a barycenter; derivative undefined"
              : "simplex separator collision; derivative undefined");
    factors_.reserve(trace.iterations.size());
    for (const IterationRecord<Scalar>& it : trace.iterations) {
      const Scalar rho = trace.target.radius_sq(it.d);
      Factor f;
      f.d = it.d;
      f.delta = it.delta;
      f.alpha = rho > Scalar(0)
                    ? it.delta * it.delta * it.delta / rho
                    : Scalar(0);
      f.head = it.r_head;
      f.head_sum = it.r_head.sum();
      factors_.push_back(std::move(f));
    }
  }

  Index dim() const { return n_; }
  Index support() const { return support_; }

  /// Jacobian-vector product G*y without materializing any matrix.
  template <class Derived>
  Vector<Scalar> apply(const Eigen::MatrixBase<Derived>& y) const {
    Vector<Scalar> z = gather(y);
    for (const Factor& f : factors_) {
      const Scalar zsum = z.sum();
      const Scalar sz = f.head.dot(z);
      z = (f.delta * (z.array() - zsum / Scalar(f.d)) +
           f.alpha * (f.head_sum * zsum / Scalar(f.d) - sz) *
               f.head.array())
              .matrix();
    }
    return scatter(z);
  }

  /// Transpose product G^T * y; this is the reverse-mode factor needed when
  /// the projection sits inside a scalar objective.
  template <class Derived>
  Vector<Scalar> apply_adjoint(const Eigen::MatrixBase<Derived>& y) const {
    Vector<Scalar> z = gather(y);
    for (auto it = factors_.rbegin(); it != factors_.rend(); ++it) {
      const Factor& f = *it;
      const Scalar zsum = z.sum();
      const Scalar sz = f.head.dot(z);
      z = (f.delta * (z.array() - zsum / Scalar(f.d)) -
           f.alpha * sz * f.head.array() +
           f.alpha / Scalar(f.d) * f.head_sum * sz)
              .matrix();
    }
    return scatter(z);
  }

  /// Dense n x n derivative at the original (unsorted, signed) input.
  Matrix<Scalar> matrix() const {
    const Index N = support_;
    Matrix<Scalar> a = Matrix<Scalar>::Identity(N, N);
    for (const Factor& f : factors_) {
      Matrix<Scalar> ai =
          Matrix<Scalar>::Constant(N, N, -f.delta / Scalar(f.d));
      ai.diagonal().array() += f.delta;
      ai.noalias() -= f.alpha * f.head * f.head.transpose();
      ai.noalias() +=
          (f.alpha / Scalar(f.d) * f.head_sum) * f.head *
          Vector<Scalar>::Ones(N).transpose();
      a = ai * a;
    }
    Matrix<Scalar> g = Matrix<Scalar>::Zero(n_, n_);
    for (Index i = 0; i < N; ++i)
      for (Index j = 0; j < N; ++j)
        g(permutation_[i], permutation_[j]) =
            signs_(permutation_[i]) * signs_(permutation_[j]) * a(i, j);
    return g;
  }

 private:
  struct Factor {
    Index d;
    Scalar delta;
    Scalar alpha;
    Vector<Scalar> head;
    Scalar head_sum;
  };

  template <class Derived>
  Vector<Scalar> gather(const Eigen::MatrixBase<Derived>& y) const {
    if (y.size() != n_) throw DomainError("GradientOperator: size mismatch");
    Vector<Scalar> z(support_);
    for (Index i = 0; i < support_; ++i)
      z(i) = signs_(permutation_[i]) * y(permutation_[i]);
    return z;
  }

  Vector<Scalar> scatter(const Vector<Scalar>& z) const {
    Vector<Scalar> out = Vector<Scalar>::Zero(n_);
    for (Index i = 0; i < support_; ++i)
      out(permutation_[i]) = signs_(permutation_[i]) * z(i);
    return out;
  }

  Index n_;
  Index support_;
  std::vector<Index> permutation_;
  Vector<Scalar> signs_;
  std::vector<Factor> factors_;
};

template <class Scalar>
Matrix<Scalar> grad_full(const ProjectionTrace<Scalar>& trace) {
  return GradientOperator<Scalar>(trace).matrix();
}

template <class Scalar, class Derived>
Vector<Scalar> grad_vjp(const ProjectionTrace<Scalar>& trace,
                        const Eigen::MatrixBase<Derived>& y) {
  return GradientOperator<Scalar>(trace).apply(y);
}

/// Derivative of the L0 projection: 0/1 diagonal keeping the kappa entries
/// largest in absolute value. Errors out on a tie at the threshold, where the
/// projection is not differentiable.
template <class Derived, class Scalar = typename Derived::Scalar>
Vector<Scalar> grad_l0(const Eigen::MatrixBase<Derived>& x, Index kappa) {
  const Index n = x.size();
  if (kappa < 1 || kappa > n)
    throw DomainError("grad_l0: kappa must lie in [1, n]");
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index(0));
  std::sort(idx.begin(), idx.end(), [&x](Index a, Index b) {
    const Scalar va = std::abs(x(a)), vb = std::abs(x(b));
    return va > vb || (va == vb && a < b);
  });
  if (kappa < n &&
      std::abs(x(idx[kappa - 1])) == std::abs(x(idx[kappa])))
    throw NotDifferentiableError(
        "grad_l0: tie at the threshold magnitude");
  Vector<Scalar> mask = Vector<Scalar>::Zero(n);
  for (Index k = 0; k < kappa; ++k) mask(idx[k]) = Scalar(1);
  return mask;
}

/// Max entrywise relative deviation between a central-difference Jacobian of
/// f at x and the supplied analytic Jacobian, with denominator
/// max(1, |analytic entry|).
template <class Scalar, class F>
Scalar check_gradient(F&& f, const Matrix<Scalar>& analytic,
                      const Vector<Scalar>& x, Scalar step) {
  const Index n = x.size();
  Vector<Scalar> probe = x;
  probe(0) += step;
  const Index m = f(probe).size();
  if (analytic.rows() != m || analytic.cols() != n)
    throw DomainError("check_gradient: analytic Jacobian has wrong shape");
  Scalar worst = Scalar(0);
  for (Index j = 0; j < n; ++j) {
    Vector<Scalar> xp = x, xm = x;
    xp(j) += step;
    xm(j) -= step;
    const Vector<Scalar> col = (f(xp) - f(xm)) / (Scalar(2) * step);
    for (Index i = 0; i < m; ++i) {
      const Scalar denom =
          std::max(Scalar(1), std::abs(analytic(i, j)));
      worst = std::max(worst, std::abs(col(i) - analytic(i, j)) / denom);
    }
  }
  return worst;
}

}  // namespace sparseness
