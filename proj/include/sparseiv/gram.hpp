#pragma once

#include "sparseiv/core.hpp"
#include "sparseiv/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>

namespace sparseiv {

enum class SparseEigenMode { Exact, Greedy };

/// Sparse / restricted eigenvalue diagnostics of a Gram matrix.
///
/// phi_min / phi_max are the minimal and maximal m-sparse eigenvalues when
/// `exact`; otherwise they are the greedy values, which bound the truth from
/// the inside. [phi_min_lower, phi_min] and [phi_max, phi_max_upper] always
/// bracket the true values.
template <typename Scalar>
struct GramDiagnostics {
  Index m = 0;
  Scalar phi_min = 0;
  Scalar phi_max = 0;
  Scalar phi_min_lower = 0;
  Scalar phi_max_upper = 0;
  bool exact = false;
  std::optional<Scalar> kappa_sq_hat;  // sampled minimum of s d'Md / |d_T|_1^2 over the cone (an upper estimate)
  std::optional<Scalar> kappa_hat;     // sqrt of the above
  Scalar kappa_C = 0;
  Index samples = 0;
};

using GramDiagnosticsd = GramDiagnostics<double>;

inline constexpr double kMaxEnumeratedSubsets = 1e6;

/// Binomial coefficient as a double (saturates to +inf on overflow).
inline double binomial(Index p, Index m) {
  if (m < 0 || m > p) return 0;
  m = std::min(m, p - m);
  double out = 1;
  for (Index k = 1; k <= m; ++k) out = out * static_cast<double>(p - m + k) / static_cast<double>(k);
  return std::round(out);
}

namespace detail {

template <typename Scalar>
std::pair<Scalar, Scalar> extreme_eigenvalues(const Matrix<Scalar>& sub) {
  if (sub.rows() == 1) return {sub(0, 0), sub(0, 0)};
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(sub, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "eigenvalue solver failed");
  return {es.eigenvalues()(0), es.eigenvalues()(sub.rows() - 1)};
}

template <typename Derived>
Matrix<typename Derived::Scalar> principal(const Eigen::MatrixBase<Derived>& M, const IndexSet& idx) {
  const auto k = static_cast<Index>(idx.size());
  Matrix<typename Derived::Scalar> out(k, k);
  for (Index a = 0; a < k; ++a)
    for (Index b = 0; b < k; ++b) out(a, b) = M(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
  return out;
}

/// Greedy forward selection of an m-subset optimizing `better` on the
/// extreme eigenvalue picked by `which` (0 = min, 1 = max).
template <typename Derived>
typename Derived::Scalar greedy_extreme(const Eigen::MatrixBase<Derived>& M, Index m, const IndexSet& starts,
                                        bool want_min) {
  using Scalar = typename Derived::Scalar;
  const Index p = M.rows();
  Scalar best_overall = want_min ? std::numeric_limits<Scalar>::infinity() : -std::numeric_limits<Scalar>::infinity();
  std::vector<char> used(static_cast<std::size_t>(p));
  for (Index start : starts) {
    std::fill(used.begin(), used.end(), 0);
    IndexSet set{start};
    used[static_cast<std::size_t>(start)] = 1;
    Scalar value = M(start, start);
    while (static_cast<Index>(set.size()) < m) {
      Index pick = -1;
      Scalar pick_value = 0;
      for (Index j = 0; j < p; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        set.push_back(j);
        const auto ext = extreme_eigenvalues(principal(M, set));
        set.pop_back();
        const Scalar v = want_min ? ext.first : ext.second;
        if (pick < 0 || (want_min ? v < pick_value : v > pick_value)) {
          pick = j;
          pick_value = v;
        }
      }
      set.push_back(pick);
      used[static_cast<std::size_t>(pick)] = 1;
      value = pick_value;
    }
    best_overall = want_min ? std::min(best_overall, value) : std::max(best_overall, value);
  }
  return best_overall;
}

template <typename Scalar>
void project_simplex(Vector<Scalar>& v, Scalar radius) {
  // Euclidean projection onto {x >= 0, sum x = radius}.
  Vector<Scalar> u = v;
  std::sort(u.data(), u.data() + u.size(), std::greater<Scalar>());
  Scalar cumulative = 0;
  Scalar theta = 0;
  for (Index k = 0; k < u.size(); ++k) {
    cumulative += u(k);
    const Scalar t = (cumulative - radius) / static_cast<Scalar>(k + 1);
    if (u(k) - t > 0) theta = t;
  }
  v = (v.array() - theta).cwiseMax(Scalar(0)).matrix();
}

template <typename Scalar>
void project_l1_ball(Vector<Scalar>& v, Scalar radius) {
  if (v.template lpNorm<1>() <= radius) return;
  Vector<Scalar> mag = v.cwiseAbs();
  project_simplex(mag, radius);
  v = (mag.array() * v.array().sign()).matrix();
}

}  // namespace detail

/// Minimal and maximal m-sparse eigenvalues of a symmetric PSD matrix.
/// Exact mode enumerates every m-column principal submatrix (at most 1e6 of
/// them); Greedy mode runs forward selection and reports the bracket.
template <typename Derived>
GramDiagnostics<typename Derived::Scalar> sparse_eigenvalues(const Eigen::MatrixBase<Derived>& M_in, Index m,
                                                             SparseEigenMode mode) {
  using Scalar = typename Derived::Scalar;
  const Matrix<Scalar> M = M_in;
  const Index p = M.rows();
  if (M.cols() != p) throw Error(ErrorCode::DimensionMismatch, "Gram matrix must be square");
  if (m < 1 || m > p) throw Error(ErrorCode::InvalidArgument, "m must lie in [1, p]");
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-10) * std::max<Scalar>(Scalar(1), M.cwiseAbs().maxCoeff()))
    throw Error(ErrorCode::InvalidArgument, "Gram matrix is not symmetric");

  GramDiagnostics<Scalar> out;
  out.m = m;
  if (mode == SparseEigenMode::Exact) {
    if (binomial(p, m) > kMaxEnumeratedSubsets)
      throw Error(ErrorCode::TooLarge, "C(" + std::to_string(p) + "," + std::to_string(m) + ") exceeds the enumeration cap");
    out.phi_min = std::numeric_limits<Scalar>::infinity();
    out.phi_max = -std::numeric_limits<Scalar>::infinity();
    IndexSet idx(static_cast<std::size_t>(m));
    for (Index k = 0; k < m; ++k) idx[static_cast<std::size_t>(k)] = k;
    for (;;) {
      const auto ext = detail::extreme_eigenvalues(detail::principal(M, idx));
      out.phi_min = std::min(out.phi_min, ext.first);
      out.phi_max = std::max(out.phi_max, ext.second);
      // next combination in lexicographic order
      Index k = m - 1;
      while (k >= 0 && idx[static_cast<std::size_t>(k)] == p - m + k) --k;
      if (k < 0) break;
      ++idx[static_cast<std::size_t>(k)];
      for (Index r = k + 1; r < m; ++r) idx[static_cast<std::size_t>(r)] = idx[static_cast<std::size_t>(r - 1)] + 1;
    }
    out.phi_min_lower = out.phi_min;
    out.phi_max_upper = out.phi_max;
    out.exact = true;
    return out;
  }

  // Starting points: every index when affordable, otherwise the indices with
  // the heaviest off-diagonal rows.
  IndexSet starts;
  if (static_cast<double>(p) * static_cast<double>(p) * static_cast<double>(m) <= 4e6) {
    for (Index j = 0; j < p; ++j) starts.push_back(j);
  } else {
    Vector<Scalar> weight = M.cwiseAbs().rowwise().sum() - M.diagonal().cwiseAbs();
    IndexSet order(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) order[static_cast<std::size_t>(j)] = j;
    std::partial_sort(order.begin(), order.begin() + std::min<Index>(16, p), order.end(),
                      [&](Index a, Index b) { return weight(a) > weight(b); });
    starts.assign(order.begin(), order.begin() + std::min<Index>(16, p));
  }
  out.phi_min = detail::greedy_extreme(M, m, starts, true);
  out.phi_max = detail::greedy_extreme(M, m, starts, false);

  // Certified outer bounds: global extremes and a Gershgorin bound using
  // the m-1 largest off-diagonal magnitudes of each row.
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(M, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "eigenvalue solver failed");
  Scalar gersh_low = std::numeric_limits<Scalar>::infinity();
  Scalar gersh_high = -std::numeric_limits<Scalar>::infinity();
  std::vector<Scalar> row;
  for (Index i = 0; i < p; ++i) {
    row.clear();
    for (Index j = 0; j < p; ++j)
      if (j != i) row.push_back(std::abs(M(i, j)));
    const auto take = static_cast<std::ptrdiff_t>(m - 1);
    std::partial_sort(row.begin(), row.begin() + take, row.end(), std::greater<Scalar>());
    Scalar radius = 0;
    for (std::ptrdiff_t k = 0; k < take; ++k) radius += row[static_cast<std::size_t>(k)];
    gersh_low = std::min(gersh_low, M(i, i) - radius);
    gersh_high = std::max(gersh_high, M(i, i) + radius);
  }
  out.phi_min_lower = std::max({Scalar(0), es.eigenvalues()(0), gersh_low});
  out.phi_max_upper = std::min(es.eigenvalues()(p - 1), gersh_high);
  out.exact = false;
  return out;
}

/// Sampled estimate of the restricted eigenvalue
///   kappa_C^2 = min { s d'Md / |d_T|_1^2 : |d_{T^c}|_1 <= C |d_T|_1 }.
///
/// Fixing the signs of d_T and |d_T|_1 = 1 turns the problem into a convex
/// quadratic program over (signed simplex) x (l1 ball of radius C). Each
/// sample picks a sign pattern and a random feasible start, then runs
/// accelerated projected gradient. When there are at most n_samples sign
/// patterns (up to global sign), every pattern is visited. The result is
/// the objective at a feasible point, hence an estimate from above.
template <typename Derived>
GramDiagnostics<typename Derived::Scalar> restricted_eigenvalue_estimate(const Eigen::MatrixBase<Derived>& M_in,
                                                                         const IndexSet& T,
                                                                         typename Derived::Scalar C,
                                                                         Index n_samples, std::uint64_t rng_seed,
                                                                         int max_iter = 2000) {
  using Scalar = typename Derived::Scalar;
  const Matrix<Scalar> M = M_in;
  const Index p = M.rows();
  if (M.cols() != p) throw Error(ErrorCode::DimensionMismatch, "Gram matrix must be square");
  if (T.empty()) throw Error(ErrorCode::InvalidArgument, "support set T must be non-empty");
  if (!(C > 0)) throw Error(ErrorCode::InvalidArgument, "C must be positive");
  if (n_samples < 1) throw Error(ErrorCode::InvalidArgument, "n_samples must be positive");
  std::vector<char> in_T(static_cast<std::size_t>(p), 0);
  for (Index j : T) {
    if (j < 0 || j >= p) throw Error(ErrorCode::InvalidArgument, "support index out of range");
    in_T[static_cast<std::size_t>(j)] = 1;
  }
  IndexSet Tc;
  for (Index j = 0; j < p; ++j)
    if (!in_T[static_cast<std::size_t>(j)]) Tc.push_back(j);
  const auto s = static_cast<Index>(T.size());
  const auto sc = static_cast<Index>(Tc.size());

  // Lipschitz constant of the gradient 2Md.
  const Scalar lipschitz = 2 * std::max<Scalar>(M.cwiseAbs().rowwise().sum().maxCoeff(), Scalar(1e-300));
  const bool enumerate = s - 1 < 62 && (Index{1} << (s - 1)) <= n_samples;

  auto engine = rng::substream(rng_seed, {0x7265});
  std::normal_distribution<Scalar> normal;
  std::uniform_real_distribution<Scalar> uniform;
  Scalar best = std::numeric_limits<Scalar>::infinity();

  Vector<Scalar> sign(s), x(s), y(sc), delta(p);
  auto assemble = [&](const Vector<Scalar>& xs, const Vector<Scalar>& ys) {
    for (Index k = 0; k < s; ++k) delta(T[static_cast<std::size_t>(k)]) = sign(k) * xs(k);
    for (Index k = 0; k < sc; ++k) delta(Tc[static_cast<std::size_t>(k)]) = ys(k);
  };

  for (Index sample = 0; sample < n_samples; ++sample) {
    sign(0) = 1;
    for (Index k = 1; k < s; ++k) {
      if (enumerate)
        sign(k) = ((static_cast<std::uint64_t>(sample) >> (k - 1)) & 1u) ? Scalar(-1) : Scalar(1);
      else
        sign(k) = uniform(engine) < Scalar(0.5) ? Scalar(-1) : Scalar(1);
    }
    for (Index k = 0; k < s; ++k) x(k) = -std::log(std::max(uniform(engine), Scalar(1e-300)));
    x /= x.sum();
    if (sc > 0) {
      for (Index k = 0; k < sc; ++k) y(k) = normal(engine);
      const Scalar l1 = y.template lpNorm<1>();
      if (l1 > 0) y *= uniform(engine) * C / l1;
    }

    // FISTA on f(d) = d'Md over the product set.
    Vector<Scalar> x_prev = x, y_prev = y, xm = x, ym = y;
    Scalar t = 1;
    assemble(x, y);
    Scalar value = delta.dot(M * delta);
    Scalar local_best = value;
    for (int it = 0; it < max_iter; ++it) {
      assemble(xm, ym);
      const Vector<Scalar> grad = 2 * (M * delta);
      Vector<Scalar> gx(s), gy(sc);
      for (Index k = 0; k < s; ++k) gx(k) = sign(k) * grad(T[static_cast<std::size_t>(k)]);
      for (Index k = 0; k < sc; ++k) gy(k) = grad(Tc[static_cast<std::size_t>(k)]);
      x = xm - gx / lipschitz;
      detail::project_simplex(x, Scalar(1));
      y = ym - gy / lipschitz;
      if (sc > 0) detail::project_l1_ball(y, C);
      const Scalar t_next = (1 + std::sqrt(1 + 4 * t * t)) / 2;
      xm = x + ((t - 1) / t_next) * (x - x_prev);
      ym = y + ((t - 1) / t_next) * (y - y_prev);
      const Scalar step = (x - x_prev).squaredNorm() + (y - y_prev).squaredNorm();
      x_prev = x;
      y_prev = y;
      t = t_next;
      assemble(x, y);
      value = delta.dot(M * delta);
      local_best = std::min(local_best, value);
      if (step < Scalar(1e-28)) break;
    }
    best = std::min(best, static_cast<Scalar>(s) * local_best);
  }

  GramDiagnostics<Scalar> out;
  out.kappa_C = C;
  out.samples = n_samples;
  out.kappa_sq_hat = std::max(best, Scalar(0));
  out.kappa_hat = std::sqrt(*out.kappa_sq_hat);
  return out;
}

}  // namespace sparseiv
