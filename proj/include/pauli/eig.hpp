#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <lapacke.h>

#include "pauli/discretize.hpp"

namespace pauli {

struct CountResult {
  double lambda = 0.0;  // requested shift
  long long count = 0;  // eigenvalues below the (possibly perturbed) shift
  bool shift_perturbed = false;
  double applied_shift = 0.0;
};

struct CountOptions {
  double pivot_tol = 1e-13;  // relative to |M|_1
  int retries = 4;
  int dense_max = 2000;  // dimensions up to this use pivoted dense LDL^H
};

namespace detail {

/// Inertia of a dense Hermitian matrix via LAPACK zhetrf. Returns -1 on breakdown.
inline long long dense_negatives(Eigen::MatrixXcd A, double tol) {
  const lapack_int n = static_cast<lapack_int>(A.rows());
  std::vector<lapack_int> ipiv(n);
  lapack_int info = LAPACKE_zhetrf(LAPACK_COL_MAJOR, 'L', n, reinterpret_cast<lapack_complex_double*>(A.data()),
                                   n, ipiv.data());
  if (info < 0) throw std::runtime_error("zhetrf argument error");
  if (info > 0) return -1;
  long long neg = 0;
  for (lapack_int k = 0; k < n;) {
    if (ipiv[k] > 0) {
      double d = A(k, k).real();
      if (std::abs(d) <= tol) return -1;
      if (d < 0) ++neg;
      k += 1;
    } else {
      double a = A(k, k).real(), c = A(k + 1, k + 1).real();
      double b2 = std::norm(A(k + 1, k));
      double det = a * c - b2, tr = a + c;
      double disc = std::sqrt(std::max(0.0, 0.25 * (a - c) * (a - c) + b2));
      double e1 = 0.5 * tr - disc, e2 = 0.5 * tr + disc;
      if (std::min(std::abs(e1), std::abs(e2)) <= tol) return -1;
      if (det < 0) neg += 1;
      else if (tr < 0) neg += 2;
      k += 2;
    }
  }
  return neg;
}

/// Inertia of a sparse Hermitian matrix via unpivoted sparse LDL^H (AMD ordering).
inline long long sparse_negatives(const SpMat& A, double tol) {
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt(A);
  if (ldlt.info() != Eigen::Success) return -1;
  auto D = ldlt.vectorD();
  long long neg = 0;
  for (int i = 0; i < D.size(); ++i) {
    double d = D[i].real();
    if (!std::isfinite(d) || std::abs(d) <= tol) return -1;
    if (d < 0) ++neg;
  }
  return neg;
}

inline SpMat shifted(const SpMat& M, double lambda) {
  SpMat I(M.rows(), M.cols());
  I.setIdentity();
  return M - cplx(lambda) * I;
}

}  // namespace detail

/// Number of eigenvalues below lambda by Sylvester inertia of M - lambda I.
inline CountResult count_below(const SpMat& M, double lambda, CountOptions opt = {}) {
  const double nrm = norm1(M);
  const double tol = opt.pivot_tol * std::max(nrm, 1e-300);
  CountResult res;
  res.lambda = lambda;
  double shift = lambda;
  double eps = 1e-12;
  for (int attempt = 0; attempt <= opt.retries; ++attempt) {
    long long neg;
    if (M.rows() <= opt.dense_max) {
      Eigen::MatrixXcd A = Eigen::MatrixXcd(M);
      A.diagonal().array() -= shift;
      neg = detail::dense_negatives(std::move(A), tol);
    } else {
      neg = detail::sparse_negatives(detail::shifted(M, shift), tol);
    }
    if (neg >= 0) {
      res.count = neg;
      res.applied_shift = shift;
      res.shift_perturbed = attempt > 0;
      return res;
    }
    // breakdown: lambda sits on an eigenvalue to working precision
    shift = lambda * (1 + eps) + 1e-300;
    if (attempt > 0) shift += eps * std::max(std::abs(lambda), tol);
    eps *= 100.0;
  }
  std::ostringstream os;
  os << "inertia factorization failed at lambda=" << lambda << " after " << opt.retries << " perturbations";
  throw std::runtime_error(os.str());
}

inline CountResult count_below(const SparseHermitianOperator& op, double lambda, CountOptions opt = {}) {
  return count_below(op.M, lambda, opt);
}

inline CountResult count_below_dense(const Eigen::MatrixXcd& A, double lambda, CountOptions opt = {}) {
  double nrm = A.cwiseAbs().colwise().sum().maxCoeff();
  double tol = opt.pivot_tol * std::max(nrm, 1e-300);
  CountResult res;
  res.lambda = lambda;
  double shift = lambda, eps = 1e-12;
  for (int attempt = 0; attempt <= opt.retries; ++attempt) {
    Eigen::MatrixXcd C = A;
    C.diagonal().array() -= shift;
    long long neg = detail::dense_negatives(std::move(C), tol);
    if (neg >= 0) {
      res.count = neg;
      res.applied_shift = shift;
      res.shift_perturbed = attempt > 0;
      return res;
    }
    shift = lambda * (1 + eps) + 1e-300;
    if (attempt > 0) shift += eps * std::max(std::abs(lambda), tol);
    eps *= 100.0;
  }
  throw std::runtime_error("inertia factorization failed after perturbation retries");
}

// ---------------------------------------------------------------------------

struct Eigenpair {
  double value;
  Eigen::VectorXcd vector;
  double residual;  // |M v - value v| / |v|
};

class EigenNonConvergence : public std::runtime_error {
 public:
  EigenNonConvergence(const std::string& msg, std::vector<double> r) : std::runtime_error(msg), residuals(std::move(r)) {}
  std::vector<double> residuals;
};

struct EigOptions {
  int dense_max = 1500;
  int max_restarts = 200;
  int krylov_steps = 6;
  int extra_block = 8;
  std::uint64_t seed = 2024;
};

namespace detail {

/// Orthonormalise the columns of W against V and each other; drops dependent columns.
inline Eigen::MatrixXcd orthonormal_append(const Eigen::MatrixXcd& V, Eigen::MatrixXcd W) {
  Eigen::VectorXd n0 = W.colwise().norm().transpose();
  // block classical Gram-Schmidt, twice
  if (V.cols() > 0)
    for (int pass = 0; pass < 2; ++pass) W.noalias() -= V * (V.adjoint() * W);
  std::vector<int> kept;
  for (int c = 0; c < W.cols(); ++c) {
    if (n0[c] == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass)
      for (int k : kept) W.col(c) -= W.col(k) * W.col(k).dot(W.col(c));
    double n1 = W.col(c).norm();
    if (n1 <= 1e-10 * n0[c]) continue;
    W.col(c) /= n1;
    kept.push_back(c);
  }
  Eigen::MatrixXcd out(V.rows(), V.cols() + static_cast<int>(kept.size()));
  if (V.cols() > 0) out.leftCols(V.cols()) = V;
  for (std::size_t k = 0; k < kept.size(); ++k) out.col(V.cols() + k) = W.col(kept[k]);
  return out;
}

}  // namespace detail

/// k smallest eigenpairs, residual <= tol * |M|_1 for each.
inline std::vector<Eigenpair> lowest_eigenpairs(const SpMat& M, int k, double tol = 1e-10, EigOptions opt = {}) {
  const int n = static_cast<int>(M.rows());
  if (k < 1 || k >= n) throw std::invalid_argument("need 1 <= k < dimension");
  const double nrm = norm1(M);
  std::vector<Eigenpair> out;
  if (n <= opt.dense_max) {
    Eigen::MatrixXcd A(M);
    Eigen::VectorXd w(n);
    Eigen::MatrixXcd Z(n, k);
    std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(k));
    lapack_int found = 0;
    lapack_int info = LAPACKE_zheevr(LAPACK_COL_MAJOR, 'V', 'I', 'L', n, reinterpret_cast<lapack_complex_double*>(A.data()),
                                     n, 0.0, 0.0, 1, k, 0.0, &found, w.data(),
                                     reinterpret_cast<lapack_complex_double*>(Z.data()), n, isuppz.data());
    if (info != 0 || found != k) throw std::runtime_error("zheevr failed");
    for (int i = 0; i < k; ++i) {
      Eigen::VectorXcd v = Z.col(i);
      double r = (M * v - w[i] * v).norm();
      out.push_back({w[i], v, r});
    }
    return out;
  }

  // Shift just below the lowest eigenvalue, located by inertia bisection.
  auto [glo, ghi] = gershgorin(M);
  double dmin = 1e300;
  for (int i = 0; i < n; ++i) dmin = std::min(dmin, M.coeff(i, i).real());
  double lo = glo - 1e-3 * std::max(1.0, std::abs(glo)), hi = dmin + 1e-12 * std::max(1.0, std::abs(dmin));
  // up: a point with at least k eigenvalues below; the shift only needs to sit close to the bottom
  // relative to the distance to the k-th eigenvalue
  double up = count_below(M, hi).count >= k ? hi : ghi + 1e-3 * std::max(1.0, std::abs(ghi));
  for (int it = 0; it < 60; ++it) {
    if (hi - lo <= 0.05 * (up - lo) || hi - lo <= 1e-9 * nrm) break;
    double mid = 0.5 * (lo + hi);
    long long c = count_below(M, mid).count;
    if (c == 0) {
      lo = mid;
    } else {
      hi = mid;
      if (c >= k) up = mid;
    }
  }
  const double sigma = lo;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> solver(detail::shifted(M, sigma));
  if (solver.info() != Eigen::Success) throw std::runtime_error("shift-invert factorization failed");

  const int p = std::min(n, k + opt.extra_block);
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> G;
  Eigen::MatrixXcd X(n, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < n; ++i) X(i, j) = cplx(G(rng), G(rng));
  X = detail::orthonormal_append(Eigen::MatrixXcd(n, 0), X);

  std::vector<double> res(k, 1e300);
  for (int restart = 0; restart < opt.max_restarts; ++restart) {
    Eigen::MatrixXcd V = X, last = X;
    for (int s = 0; s < opt.krylov_steps && V.cols() < n; ++s) {
      Eigen::MatrixXcd W(n, last.cols());
      for (int c = 0; c < last.cols(); ++c) W.col(c) = solver.solve(Eigen::VectorXcd(last.col(c)));
      int before = static_cast<int>(V.cols());
      V = detail::orthonormal_append(V, W);
      if (V.cols() == before) break;
      last = V.rightCols(V.cols() - before);
    }
    Eigen::MatrixXcd MV = M * V;
    Eigen::MatrixXcd H = V.adjoint() * MV;
    H = 0.5 * (H + H.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
    const int q = std::min<int>(p, static_cast<int>(V.cols()));
    Eigen::MatrixXcd U = V * es.eigenvectors().leftCols(q);
    Eigen::MatrixXcd MU = MV * es.eigenvectors().leftCols(q);
    bool ok = true;
    for (int i = 0; i < k; ++i) {
      res[i] = (MU.col(i) - es.eigenvalues()[i] * U.col(i)).norm() / U.col(i).norm();
      if (res[i] > tol * nrm) ok = false;
    }
    if (ok) {
      for (int i = 0; i < k; ++i) out.push_back({es.eigenvalues()[i], U.col(i), res[i]});
      return out;
    }
    X = U;
  }
  throw EigenNonConvergence("lowest_eigenpairs did not converge", res);
}

inline std::vector<Eigenpair> lowest_eigenpairs(const SparseHermitianOperator& op, int k, double tol = 1e-10,
                                                EigOptions opt = {}) {
  return lowest_eigenpairs(op.M, k, tol, opt);
}

}  // namespace pauli
