#pragma once

#include <cmath>
#include <vector>

#include "sparseness/core.hpp"
#include "sparseness/projection.hpp"

namespace sparseness {

/// Per-iteration bookkeeping of the original alternating projection:
/// iteration count and the nonzero count of the working vector after each
/// iteration (the first entry is the full dimension, recorded after the
/// initial hyperplane/hypercircle step).
struct BaselineTrace {
  Index iterations = 0;
  std::vector<Index> support_per_iteration;
};

template <class Scalar>
struct BaselineResult {
  Vector<Scalar> point;
  BaselineTrace trace;
};

/// Hoyer's original algorithm: alternate hyperplane, hypercircle and
/// non-negative orthant projections in the full coordinate space. The orthant
/// clamp max(., 0) replaces the simplex projection of the improved method;
/// zeroed coordinates stay fixed, the L1 deficit is spread equally over the
/// remaining support, and the restricted hypercircle projection follows.
template <class Derived, class Scalar = typename Derived::Scalar>
BaselineResult<Scalar> hoyer_project(const Eigen::MatrixBase<Derived>& x,
                                     const SparseTarget<Scalar>& t) {
  const Index n = t.dim();
  if (x.size() != n) throw DomainError("hoyer_project: dimension mismatch");

  Vector<Scalar> s = x;
  std::vector<bool> active(static_cast<std::size_t>(n), true);
  Index d = n;

  auto circle_restricted = [&]() {
    const Scalar rho = t.radius_sq(d);
    if (rho < Scalar(0))
      throw InfeasibleError("hoyer_project: support too small for targets");
    const Scalar m = t.barycenter(d);
    Scalar mu = Scalar(0);
    Scalar lo_v = std::numeric_limits<Scalar>::max(), hi_v = -lo_v;
    for (Index i = 0; i < n; ++i)
      if (active[static_cast<std::size_t>(i)]) {
        mu += s(i);
        lo_v = std::min(lo_v, s(i));
        hi_v = std::max(hi_v, s(i));
      }
    mu /= Scalar(d);
    Scalar phi = Scalar(0);
    for (Index i = 0; i < n; ++i)
      if (active[static_cast<std::size_t>(i)])
        phi += (s(i) - mu) * (s(i) - mu);
    if (hi_v == lo_v || phi <= std::numeric_limits<Scalar>::min()) {
      // Barycenter hit: deterministic representative with the last active
      // slot lowered, all other active slots raised.
      const Scalar sqrt_rho = std::sqrt(rho);
      const Scalar hi = m + sqrt_rho / std::sqrt(Scalar(d) * Scalar(d - 1));
      const Scalar lo = m - sqrt_rho * std::sqrt(Scalar(d - 1) / Scalar(d));
      Index last = -1;
      for (Index i = 0; i < n; ++i)
        if (active[static_cast<std::size_t>(i)]) {
          s(i) = hi;
          last = i;
        }
      s(last) = lo;
      return;
    }
    const Scalar delta = std::sqrt(rho / phi);
    for (Index i = 0; i < n; ++i)
      if (active[static_cast<std::size_t>(i)]) s(i) = m + delta * (s(i) - mu);
  };

  s.array() += (t.lambda1() - s.sum()) / Scalar(n);
  circle_restricted();
  BaselineTrace trace;
  trace.iterations = 1;
  trace.support_per_iteration.push_back(n);

  const Scalar neg_tol = Scalar(kNegativeTol) * t.lambda2();
  auto has_negative = [&]() {
    for (Index i = 0; i < n; ++i)
      if (active[static_cast<std::size_t>(i)] && s(i) < -neg_tol) return true;
    return false;
  };

  while (has_negative()) {
    ++trace.iterations;
    Index remaining = 0;
    for (Index i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      if (s(i) <= Scalar(0)) {
        s(i) = Scalar(0);
        active[static_cast<std::size_t>(i)] = false;
      } else {
        ++remaining;
      }
    }
    d = remaining;
    Scalar sum = Scalar(0);
    for (Index i = 0; i < n; ++i)
      if (active[static_cast<std::size_t>(i)]) sum += s(i);
    const Scalar shift = (t.lambda1() - sum) / Scalar(d);
    for (Index i = 0; i < n; ++i)
      if (active[static_cast<std::size_t>(i)]) s(i) += shift;
    circle_restricted();
    trace.support_per_iteration.push_back(d);
  }

  for (Index i = 0; i < n; ++i)
    if (!active[static_cast<std::size_t>(i)] || s(i) < Scalar(0))
      s(i) = Scalar(0);
  return {std::move(s), std::move(trace)};
}

}  // namespace sparseness
