#include <random>

#include <gtest/gtest.h>

#include "pauli/eig.hpp"

using namespace pauli;

namespace {

Eigen::MatrixXcd random_hermitian(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> G;
  Eigen::MatrixXcd A(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) A(i, j) = cplx(G(rng), G(rng));
  return 0.5 * (A + A.adjoint());
}

SpMat to_sparse(const Eigen::MatrixXcd& A) { return A.sparseView(); }

}  // namespace

TEST(CountBelow, DirichletLaplacian) {
  auto op = assemble_schrodinger(Domain::unit_square(), zero_potential(), 0.0, 128);
  EXPECT_EQ(count_below(op, 50.0).count, 3);
}

TEST(CountBelow, NegativeShiftOnPositiveOperator) {
  auto op = assemble_schrodinger(Domain::unit_square(), symmetric_gauge(2.0), 3.0, 32);
  EXPECT_EQ(count_below(op, -1.0).count, 0);
}

TEST(CountBelow, MatchesDenseDiagonalization) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXcd A = random_hermitian(200, rng);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(A);
    Eigen::VectorXd ev = es.eigenvalues();
    std::uniform_real_distribution<double> U(ev[0] - 1, ev[199] + 1);
    SpMat S = to_sparse(A);
    for (int s = 0; s < 20; ++s) {
      double lam = U(rng);
      long long expect = (ev.array() < lam).count();
      EXPECT_EQ(count_below(S, lam).count, expect);
      EXPECT_EQ(count_below_dense(A, lam).count, expect);
    }
  }
}

TEST(CountBelow, SparsePathMatchesDense) {
  auto op = assemble_pauli(Domain::unit_square(), symmetric_gauge(4.0, {0.5, 0.5}), constant_field(4.0), 6.0, 24);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es{Eigen::MatrixXcd(op.M)};
  CountOptions sparse;
  sparse.dense_max = 0;
  for (double lam : {1.0, 15.0, 40.0, 120.0, 400.0}) {
    long long expect = (es.eigenvalues().array() < lam).count();
    EXPECT_EQ(count_below(op, lam).count, expect);
    EXPECT_EQ(count_below(op.M, lam, sparse).count, expect);
  }
}

TEST(CountBelow, MonotoneAndFullAboveGershgorin) {
  auto op = assemble_pauli(Domain::unit_square(), symmetric_gauge(2.0, {0.5, 0.5}), constant_field(2.0), 5.0, 16);
  long long prev = 0;
  for (double lam = -10; lam < 2000; lam += 37.3) {
    long long c = count_below(op, lam).count;
    EXPECT_GE(c, prev);
    prev = c;
  }
  EXPECT_EQ(count_below(op, gershgorin(op.M).second + 1.0).count, op.dimension);
}

TEST(CountBelow, ShiftOnEigenvalueIsPerturbed) {
  Eigen::MatrixXcd D = Eigen::MatrixXcd::Zero(4, 4);
  D.diagonal() << 1.0, 2.0, 2.0, 3.0;
  auto r = count_below_dense(D, 2.0);
  EXPECT_TRUE(r.shift_perturbed);
  EXPECT_TRUE(r.count == 1 || r.count == 3);
  auto s = count_below(to_sparse(D), 2.0);
  EXPECT_TRUE(s.shift_perturbed);
}

TEST(Lowest, DirichletLaplacian) {
  auto op = assemble_schrodinger(Domain::unit_square(), zero_potential(), 0.0, 64);
  auto ev = lowest_eigenpairs(op, 3);
  const double p2 = pi * pi;
  EXPECT_NEAR(ev[0].value, 2 * p2, 0.01 * 2 * p2);
  EXPECT_NEAR(ev[1].value, 5 * p2, 0.01 * 5 * p2);
  EXPECT_NEAR(ev[2].value, 5 * p2, 0.01 * 5 * p2);
  double nrm = norm1(op.M);
  for (const auto& e : ev) EXPECT_LE(e.residual, 1e-10 * nrm);
}

TEST(Lowest, DiagonalTestMatrix) {
  Eigen::MatrixXcd D = Eigen::MatrixXcd::Zero(3, 3);
  D.diagonal() << 1.0, 2.0, 3.0;
  auto ev = lowest_eigenpairs(to_sparse(D), 1);
  EXPECT_NEAR(ev[0].value, 1.0, 1e-14);
  EXPECT_NEAR(std::abs(ev[0].vector[0]), 1.0, 1e-14);
}

TEST(Lowest, ConsistentWithCounts) {
  auto op = assemble_pauli(Domain::unit_square(), symmetric_gauge(3.0, {0.5, 0.5}), constant_field(3.0), 8.0, 48);
  ASSERT_GT(op.dimension, 1500);  // exercises the iterative path
  auto ev = lowest_eigenpairs(op, 6);
  for (int k = 1; k < 6; ++k) {
    double gap = ev[k].value - ev[k - 1].value;
    if (gap < 1e-6) continue;
    EXPECT_EQ(count_below(op, ev[k - 1].value + gap / 2).count, k);
  }
  double nrm = norm1(op.M);
  for (const auto& e : ev) {
    double r = (op.M * e.vector - e.value * e.vector).norm() / e.vector.norm();
    EXPECT_LE(r, 1e-10 * nrm * 1.01);
  }
}
