#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sparseiv/gram.hpp"
#include "sparseiv/model.hpp"
#include "sparseiv/rng.hpp"

#include <cmath>

using namespace sparseiv;

namespace {

Eigen::MatrixXd toeplitz(Index p, double rho) {
  Eigen::MatrixXd M(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) M(i, j) = std::pow(rho, std::abs(double(i - j)));
  return M;
}

}  // namespace

TEST_CASE("sparse eigenvalues of the identity") {
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(7, 7);
  for (Index m = 1; m <= 7; ++m) {
    const auto d = sparse_eigenvalues(I, m, SparseEigenMode::Exact);
    CHECK(d.exact);
    CHECK(d.phi_min == doctest::Approx(1.0));
    CHECK(d.phi_max == doctest::Approx(1.0));
    const auto g = sparse_eigenvalues(I, m, SparseEigenMode::Greedy);
    CHECK_FALSE(g.exact);
    CHECK(g.phi_min == doctest::Approx(1.0));
    CHECK(g.phi_max == doctest::Approx(1.0));
  }
}

TEST_CASE("p = 2 equicorrelated: 1 - rho and 1 + rho") {
  const Eigen::MatrixXd M = toeplitz(2, 0.5);
  const auto d = sparse_eigenvalues(M, 2, SparseEigenMode::Exact);
  CHECK(d.phi_min == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(d.phi_max == doctest::Approx(1.5).epsilon(1e-14));
  const auto one = sparse_eigenvalues(M, 1, SparseEigenMode::Exact);
  CHECK(one.phi_min == doctest::Approx(1.0));
  CHECK(one.phi_max == doctest::Approx(1.0));
}

TEST_CASE("Toeplitz p = 10, m = 3: enumeration oracle and greedy bracket") {
  // Extremes over all 120 principal 3x3 submatrices, rho = 0.5.
  const double lo = 0.40692966918274626, hi = 1.8430703308172536;
  const Eigen::MatrixXd M = toeplitz(10, 0.5);
  const auto d = sparse_eigenvalues(M, 3, SparseEigenMode::Exact);
  CHECK(d.phi_min == doctest::Approx(lo).epsilon(1e-12));
  CHECK(d.phi_max == doctest::Approx(hi).epsilon(1e-12));
  CHECK(d.phi_min_lower == d.phi_min);
  CHECK(d.phi_max_upper == d.phi_max);

  const auto g = sparse_eigenvalues(M, 3, SparseEigenMode::Greedy);
  CHECK(g.phi_min_lower <= lo + 1e-12);
  CHECK(g.phi_min >= lo - 1e-12);
  CHECK(g.phi_max <= hi + 1e-12);
  CHECK(g.phi_max_upper >= hi - 1e-12);
  CHECK(g.phi_min_lower >= 0.0);
}

TEST_CASE("greedy bracket on a random Gram matrix") {
  auto engine = rng::substream(17, {});
  Eigen::MatrixXd X(40, 12);
  rng::fill_normal(engine, X);
  const Eigen::MatrixXd F = normalize_columns(X).F;
  const Eigen::MatrixXd M = F.transpose() * F / 40.0;
  for (Index m : {2, 4, 6}) {
    const auto e = sparse_eigenvalues(M, m, SparseEigenMode::Exact);
    const auto g = sparse_eigenvalues(M, m, SparseEigenMode::Greedy);
    CHECK(g.phi_min_lower <= e.phi_min + 1e-12);
    CHECK(g.phi_min >= e.phi_min - 1e-12);
    CHECK(g.phi_max <= e.phi_max + 1e-12);
    CHECK(g.phi_max_upper >= e.phi_max - 1e-12);
  }
}

TEST_CASE("sparse eigenvalues are monotone in m") {
  auto engine = rng::substream(23, {});
  Eigen::MatrixXd X(30, 9);
  rng::fill_normal(engine, X);
  const Eigen::MatrixXd F = normalize_columns(X).F;
  const Eigen::MatrixXd M = F.transpose() * F / 30.0;
  double prev_min = INFINITY, prev_max = -INFINITY;
  for (Index m = 1; m <= 9; ++m) {
    const auto d = sparse_eigenvalues(M, m, SparseEigenMode::Exact);
    CHECK(d.phi_min <= prev_min + 1e-12);
    CHECK(d.phi_max >= prev_max - 1e-12);
    prev_min = d.phi_min;
    prev_max = d.phi_max;
    if (m == 1) {
      // Normalized columns: every diagonal entry is one.
      CHECK(d.phi_min == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(d.phi_max == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("sparse eigenvalues: argument checks") {
  const Eigen::MatrixXd M = toeplitz(100, 0.5);
  CHECK_THROWS_AS(sparse_eigenvalues(M, 10, SparseEigenMode::Exact), Error);
  try {
    sparse_eigenvalues(M, 10, SparseEigenMode::Exact);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooLarge);
  }
  CHECK_NOTHROW(sparse_eigenvalues(M, 10, SparseEigenMode::Greedy));
  CHECK_THROWS_AS(sparse_eigenvalues(M, 0, SparseEigenMode::Greedy), Error);
  CHECK_THROWS_AS(sparse_eigenvalues(M, 101, SparseEigenMode::Greedy), Error);
  Eigen::MatrixXd A = toeplitz(4, 0.3);
  A(0, 1) += 0.1;
  CHECK_THROWS_AS(sparse_eigenvalues(A, 2, SparseEigenMode::Exact), Error);
  CHECK_THROWS_AS(sparse_eigenvalues(Eigen::MatrixXd::Identity(3, 4), 2, SparseEigenMode::Exact), Error);
}

TEST_CASE("restricted eigenvalue of the identity is one") {
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(8, 8);
  for (const IndexSet& T : {IndexSet{0}, IndexSet{1, 4}, IndexSet{0, 2, 5}}) {
    const auto d = restricted_eigenvalue_estimate(I, T, 3.0, 16, 1);
    REQUIRE(d.kappa_sq_hat.has_value());
    CHECK(*d.kappa_sq_hat == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(*d.kappa_hat == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(d.kappa_C == 3.0);
  }
}

TEST_CASE("restricted eigenvalue against a grid oracle") {
  // p = 4, T = {0, 1}: d_T = (x, +-(1 - x)) and d_{T^c} in the l1 ball of radius C.
  const Eigen::MatrixXd M = toeplitz(4, 0.6);
  const double C = 1.5;
  const int g = 160;
  double best = INFINITY;
  Eigen::Vector4d d;
  for (int sgn : {1, -1})
    for (int a = 0; a <= g; ++a)
      for (int b = -g; b <= g; ++b)
        for (int c = -g; c <= g; ++c) {
          const double u = C * b / g, v = C * c / g;
          if (std::abs(u) + std::abs(v) > C) continue;
          const double x = double(a) / g;
          d << x, sgn * (1 - x), u, v;
          best = std::min(best, 2.0 * d.dot(M * d));
        }
  const auto est = restricted_eigenvalue_estimate(M, {0, 1}, C, 8, 3);
  CHECK(*est.kappa_sq_hat == doctest::Approx(best).epsilon(0.01));
  // An estimate at a feasible point cannot fall below the true minimum.
  CHECK(*est.kappa_sq_hat >= best - 0.01 * best);
}

TEST_CASE("restricted eigenvalue is non-increasing in C") {
  const Eigen::MatrixXd M = toeplitz(10, 0.5);
  const IndexSet T = {0, 1, 2};
  double prev = INFINITY;
  for (double C : {0.5, 1.0, 3.0, 10.0}) {
    const double k = *restricted_eigenvalue_estimate(M, T, C, 16, 5).kappa_sq_hat;
    CHECK(k <= prev + 1e-6);
    prev = k;
  }
  // With C -> 0 only the support block matters: s min d'Md / |d|_1^2 >= s phi_min(s) / s.
  const auto tiny = restricted_eigenvalue_estimate(M, T, 1e-9, 16, 5);
  const auto phi = sparse_eigenvalues(M, 3, SparseEigenMode::Exact);
  CHECK(*tiny.kappa_sq_hat >= phi.phi_min - 1e-6);
}

TEST_CASE("restricted eigenvalue: argument checks") {
  const Eigen::MatrixXd M = toeplitz(5, 0.3);
  CHECK_THROWS_AS(restricted_eigenvalue_estimate(M, {}, 3.0, 8, 1), Error);
  CHECK_THROWS_AS(restricted_eigenvalue_estimate(M, {0}, 0.0, 8, 1), Error);
  CHECK_THROWS_AS(restricted_eigenvalue_estimate(M, {0}, 3.0, 0, 1), Error);
  CHECK_THROWS_AS(restricted_eigenvalue_estimate(M, {7}, 3.0, 8, 1), Error);
  CHECK_THROWS_AS(restricted_eigenvalue_estimate(Eigen::MatrixXd::Identity(3, 4), {0}, 3.0, 8, 1), Error);
}

TEST_CASE("float instantiation") {
  const Eigen::MatrixXf M = toeplitz(6, 0.5).cast<float>();
  const auto d = sparse_eigenvalues(M, 2, SparseEigenMode::Exact);
  CHECK(d.phi_min == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(d.phi_max == doctest::Approx(1.5).epsilon(1e-5));
  const auto r = restricted_eigenvalue_estimate(Eigen::MatrixXf(Eigen::MatrixXf::Identity(4, 4)), {0}, 1.0f, 4, 1);
  CHECK(*r.kappa_sq_hat == doctest::Approx(1.0f).epsilon(1e-4));
}
