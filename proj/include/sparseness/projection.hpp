#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "sparseness/core.hpp"

namespace sparseness {

// Tolerances of the projection pipeline, expressed relative to lambda2.
// An entry counts as negative only below -kNegativeTol*lambda2; simplex
// separator collisions within kCollisionTol*lambda2 mark the trace as
// non-differentiable.
inline constexpr double kNegativeTol = 1e-12;
inline constexpr double kCollisionTol = 1e-10;

/// Bookkeeping of one alternating-projection iteration: the working
/// dimensionality d, the hypercircle scaling factor delta = sqrt(rho/phi),
/// and the leading entries of the centered vector r = y - m_I (trimmed to the
/// final support size once the projection finishes). delta is 0 on a record
/// written by the degenerate barycenter branch.
template <class Scalar>
struct IterationRecord {
  Index d = 0;
  Scalar delta = Scalar(0);
  Vector<Scalar> r_head;
};

/// Everything the projection did: sort permutation, recorded signs, the
/// per-iteration records needed to evaluate the gradient, and
/// differentiability flags.
template <class Scalar>
struct ProjectionTrace {
  explicit ProjectionTrace(const SparseTarget<Scalar>& t) : target(t) {}

  SparseTarget<Scalar> target;
  std::vector<Index> permutation;  // sorted[i] = input[permutation[i]]
  Vector<Scalar> signs;            // +-1 per input coordinate
  std::vector<IterationRecord<Scalar>> iterations;
  Index final_support = 0;
  bool degenerate = false;          // a barycenter branch fired
  bool separator_collision = false; // some |y_i - t_hat| <= tol

  bool differentiable() const { return !degenerate && !separator_collision; }
};

template <class Scalar>
struct ProjectionResult {
  Vector<Scalar> point;
  ProjectionTrace<Scalar> trace;
  bool unique = true;
};

using ProjectionResultd = ProjectionResult<double>;
using ProjectionTraced = ProjectionTrace<double>;

/// Nearest point on the hyperplane {a : sum(a) = lambda1}.
template <class Derived, class Scalar = typename Derived::Scalar>
Vector<Scalar> proj_hyperplane(const Eigen::MatrixBase<Derived>& x,
                               const SparseTarget<Scalar>& t) {
  if (x.size() != t.dim())
    throw DomainError("proj_hyperplane: dimension mismatch");
  Vector<Scalar> r = x;
  r.array() += (t.lambda1() - r.sum()) / Scalar(x.size());
  return r;
}

template <class Scalar>
struct HypercircleResult {
  Vector<Scalar> point;
  Scalar delta = Scalar(0);
  bool degenerate = false;
};

namespace detail {

// In-place projection of y (support size d = y.size(), entries summing to
// lambda1) onto the restricted hypercircle. Returns (delta, degenerate).
// When y equals the barycenter, writes the sorted representative with the
// first d-1 entries raised and the last lowered. The deviation is centered
// on the actual mean of y, not lambda1/d: near the barycenter delta grows
// without bound and would amplify any rounding drift in the sum otherwise.
template <class Scalar>
std::pair<Scalar, bool> hypercircle_inplace(Eigen::Ref<Vector<Scalar>> y,
                                            const SparseTarget<Scalar>& t) {
  const Index d = y.size();
  const Scalar rho = t.radius_sq(d);
  if (rho < Scalar(0))
    throw InfeasibleError(
        "hypercircle projection: support too small for target norms");
  const Scalar m = t.barycenter(d);
  const Scalar mu = y.mean();
  const Scalar phi = (y.array() - mu).square().sum();
  if (y.maxCoeff() == y.minCoeff() ||
      phi <= std::numeric_limits<Scalar>::min()) {
    const Scalar sqrt_rho = std::sqrt(rho);
    const Scalar alpha = m + sqrt_rho / std::sqrt(Scalar(d) * Scalar(d - 1));
    const Scalar beta = m - sqrt_rho * std::sqrt(Scalar(d - 1) / Scalar(d));
    y.setConstant(alpha);
    y(d - 1) = beta;
    return {Scalar(0), true};
  }
  const Scalar delta = std::sqrt(rho / phi);
  y = (y.array() - mu) * delta + m;
  return {delta, false};
}

template <class Derived>
std::vector<Index> argsort_descending(const Eigen::MatrixBase<Derived>& x) {
  std::vector<Index> idx(static_cast<std::size_t>(x.size()));
  std::iota(idx.begin(), idx.end(), Index(0));
  std::stable_sort(idx.begin(), idx.end(),
                   [&x](Index a, Index b) { return x(a) > x(b); });
  return idx;
}

}  // namespace detail

/// Projection of a point on the (restricted) hyperplane onto the hypercircle
/// of the same support. y holds the d in-support entries and must sum to
/// lambda1. Flags `degenerate` when y is the barycenter, in which case the
/// sorted representative is returned.
template <class Derived, class Scalar = typename Derived::Scalar>
HypercircleResult<Scalar> proj_hypercircle(const Eigen::MatrixBase<Derived>& y,
                                           const SparseTarget<Scalar>& t) {
  const Index d = y.size();
  if (d < 2) throw DomainError("proj_hypercircle: support size must be >= 2");
  const Scalar slack =
      Scalar(1e-7) * (std::abs(t.lambda1()) + y.template lpNorm<1>() + Scalar(1));
  if (std::abs(y.sum() - t.lambda1()) > slack)
    throw DomainError("proj_hypercircle: input must sum to lambda1");
  HypercircleResult<Scalar> res;
  res.point = y;
  auto [delta, degenerate] =
      detail::hypercircle_inplace<Scalar>(res.point, t);
  res.delta = delta;
  res.degenerate = degenerate;
  return res;
}

template <class Scalar>
struct SeparatorResult {
  Scalar t_hat = Scalar(0);
  Index d = 0;
};

/// Separator of the simplex projection for a descending-sorted input:
/// proj_C(y) = max(y - t_hat, 0) and d is the number of surviving entries.
template <class Derived, class Scalar = typename Derived::Scalar>
SeparatorResult<Scalar> simplex_separator(const Eigen::MatrixBase<Derived>& y,
                                          Scalar lambda1) {
  const Index n = y.size();
  if (n == 0) throw DomainError("simplex_separator: empty input");
  for (Index i = 0; i + 1 < n; ++i)
    if (y(i) < y(i + 1))
      throw DomainError("simplex_separator: input must be sorted descending");
  Scalar running = Scalar(0);
  for (Index i = 0; i + 1 < n; ++i) {
    running += y(i);
    const Scalar t = (running - lambda1) / Scalar(i + 1);
    if (t >= y(i + 1)) return {t, i + 1};
  }
  running += y(n - 1);
  return {(running - lambda1) / Scalar(n), n};
}

/// Exact Euclidean projection onto the non-negative constraint set
/// {s >= 0 : ||s||_1 = lambda1, ||s||_2 = lambda2}. Sorts once, then
/// alternates simplex and hypercircle projections on the shrinking prefix.
template <class Derived, class Scalar = typename Derived::Scalar>
ProjectionResult<Scalar> project_nonneg(const Eigen::MatrixBase<Derived>& x,
                                        const SparseTarget<Scalar>& t) {
  const Index n = t.dim();
  if (x.size() != n) throw DomainError("project_nonneg: dimension mismatch");

  ProjectionResult<Scalar> res{Vector<Scalar>::Zero(n), ProjectionTrace<Scalar>(t), true};
  ProjectionTrace<Scalar>& trace = res.trace;
  trace.permutation = detail::argsort_descending(x);
  trace.signs = Vector<Scalar>::Ones(n);

  Vector<Scalar> y(n);
  for (Index i = 0; i < n; ++i) y(i) = x(trace.permutation[i]);

  // Hyperplane, then hypercircle over the full dimension.
  y.array() += (t.lambda1() - y.sum()) / Scalar(n);
  Index d = n;
  std::vector<Vector<Scalar>> centered;  // full r(i) vectors, trimmed later
  auto record_circle = [&](Index dd) {
    centered.emplace_back(y.head(dd).array() - y.head(dd).mean());
    auto [delta, degenerate] =
        detail::hypercircle_inplace<Scalar>(y.head(dd), t);
    trace.iterations.push_back({dd, delta, Vector<Scalar>()});
    if (degenerate) trace.degenerate = true;
  };
  record_circle(d);

  const Scalar neg_tol = Scalar(kNegativeTol) * t.lambda2();
  const Scalar coll_tol = Scalar(kCollisionTol) * t.lambda2();
  while (y.head(d).minCoeff() < -neg_tol) {
    const SeparatorResult<Scalar> sep =
        simplex_separator(y.head(d), t.lambda1());
    if ((y.head(d).array() - sep.t_hat).abs().minCoeff() <= coll_tol)
      trace.separator_collision = true;
    d = sep.d;
    y.head(d).array() -= sep.t_hat;
    record_circle(d);
  }

  trace.final_support = d;
  res.unique = !trace.degenerate;
  for (std::size_t i = 0; i < trace.iterations.size(); ++i)
    trace.iterations[i].r_head = centered[i].head(d);
  for (Index i = 0; i < d; ++i)
    res.point(trace.permutation[i]) = std::max(y(i), Scalar(0));
  return res;
}

/// Unrestricted projection onto {s : ||s||_1 = lambda1, ||s||_2 = lambda2}:
/// record the signs, project |x| onto the non-negative set, restore signs.
template <class Derived, class Scalar = typename Derived::Scalar>
ProjectionResult<Scalar> project_unrestricted(
    const Eigen::MatrixBase<Derived>& x, const SparseTarget<Scalar>& t) {
  const Index n = t.dim();
  if (x.size() != n)
    throw DomainError("project_unrestricted: dimension mismatch");
  Vector<Scalar> signs(n);
  for (Index i = 0; i < n; ++i)
    signs(i) = x(i) >= Scalar(0) ? Scalar(1) : Scalar(-1);
  ProjectionResult<Scalar> res =
      project_nonneg(x.cwiseAbs().eval(), t);
  res.point.array() *= signs.array();
  res.trace.signs = std::move(signs);
  return res;
}

/// Nearest vector of sparseness sigma(target) at free scale: project onto the
/// target set and rescale by alpha = <x, p> / ||p||^2.
template <class Derived, class Scalar = typename Derived::Scalar>
Vector<Scalar> project_scale_free(const Eigen::MatrixBase<Derived>& x,
                                  const SparseTarget<Scalar>& t) {
  if (x.derived().isZero(Scalar(0)))
    throw DomainError("project_scale_free: undefined for the zero vector");
  Vector<Scalar> p = project_unrestricted(x, t).point;
  const Scalar alpha = x.derived().dot(p) / p.squaredNorm();
  return alpha * p;
}

/// Keep the kappa entries greatest in absolute value, zero the rest.
/// Ties are broken in favor of the lower index.
template <class Derived, class Scalar = typename Derived::Scalar>
Vector<Scalar> project_l0(const Eigen::MatrixBase<Derived>& x, Index kappa) {
  const Index n = x.size();
  if (kappa < 1 || kappa > n)
    throw DomainError("project_l0: kappa must lie in [1, n]");
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index(0));
  std::nth_element(idx.begin(), idx.begin() + (kappa - 1), idx.end(),
                   [&x](Index a, Index b) {
                     const Scalar va = std::abs(x(a)), vb = std::abs(x(b));
                     return va > vb || (va == vb && a < b);
                   });
  Vector<Scalar> out = Vector<Scalar>::Zero(n);
  for (Index k = 0; k < kappa; ++k) out(idx[k]) = x(idx[k]);
  return out;
}

template <class Scalar>
struct FaceProjection {
  Vector<Scalar> point;                   // projection onto the face
  std::vector<Vector<Scalar>> path;       // s^(0) = q, ..., s^(h) = point
};

/// Projection of a simplex point q onto the face where the coordinates
/// outside `support` vanish, built by zeroing the complement coordinates in
/// ascending entry order and spreading their mass over the rest.
template <class Derived, class Scalar = typename Derived::Scalar>
FaceProjection<Scalar> face_projection_sequence(
    const Eigen::MatrixBase<Derived>& q, const std::vector<Index>& support,
    Scalar lambda1) {
  const Index n = q.size();
  if (support.empty())
    throw DomainError("face_projection_sequence: empty support");
  const Scalar slack = Scalar(1e-9) * (std::abs(lambda1) + Scalar(1));
  if (q.minCoeff() < -slack || std::abs(q.sum() - lambda1) > slack)
    throw DomainError("face_projection_sequence: point is not on the simplex");
  std::vector<bool> in_support(static_cast<std::size_t>(n), false);
  for (Index i : support) {
    if (i < 0 || i >= n)
      throw DomainError("face_projection_sequence: support index out of range");
    in_support[static_cast<std::size_t>(i)] = true;
  }
  std::vector<Index> complement;
  for (Index i = 0; i < n; ++i)
    if (!in_support[static_cast<std::size_t>(i)]) complement.push_back(i);
  std::stable_sort(complement.begin(), complement.end(),
                   [&q](Index a, Index b) { return q(a) < q(b); });

  FaceProjection<Scalar> res;
  res.path.emplace_back(q);
  Vector<Scalar> s = q;
  for (std::size_t k = 0; k < complement.size(); ++k) {
    const Index j = complement[k];
    const Scalar mass = s(j);
    s(j) = Scalar(0);
    const Scalar share = mass / Scalar(n - Index(k) - 1);
    for (Index i = 0; i < n; ++i) s(i) += share;
    for (std::size_t l = 0; l <= k; ++l) s(complement[l]) = Scalar(0);
    res.path.emplace_back(s);
  }
  res.point = std::move(s);
  return res;
}

}  // namespace sparseness
