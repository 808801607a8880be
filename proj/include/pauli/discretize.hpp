#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "pauli/common.hpp"
#include "pauli/field.hpp"
#include "pauli/gauge.hpp"

namespace pauli {

using SpMat = Eigen::SparseMatrix<cplx, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<cplx, int>;

/// Uniform grid on the bounding square; nodes (i, j), 0 <= i, j <= n.
struct Grid {
  Point origin;
  double side = 1.0;
  int n = 0;
  double h = 0.0;
  std::vector<int> index;  // node id -> active index or -1
  std::vector<int> nodes;  // active index -> node id

  int id(int i, int j) const { return j * (n + 1) + i; }
  Point point(int node) const {
    int i = node % (n + 1), j = node / (n + 1);
    return {origin.x + i * h, origin.y + j * h};
  }
  int active(int i, int j) const {
    if (i < 0 || j < 0 || i > n || j > n) return -1;
    return index[id(i, j)];
  }
  int size() const { return static_cast<int>(nodes.size()); }
};

/// Active nodes: strictly inside dom and not on the bounding-box edge.
inline Grid make_grid(const Domain& dom, int n) {
  if (n < 8) throw std::invalid_argument("grid resolution n must be >= 8");
  auto [o, s] = dom.bbox();
  Grid g{o, s, n, s / n, std::vector<int>(static_cast<std::size_t>(n + 1) * (n + 1), -1), {}};
  for (int j = 1; j < n; ++j)
    for (int i = 1; i < n; ++i) {
      int node = g.id(i, j);
      if (dom.contains(g.point(node))) {
        g.index[node] = static_cast<int>(g.nodes.size());
        g.nodes.push_back(node);
      }
    }
  if (g.nodes.empty()) throw std::runtime_error("empty active node set");
  return g;
}

struct OperatorMeta {
  double t = 0.0;
  std::string gauge = "none";
  std::string field = "none";
  std::string method = "schrodinger";
  int components = 1;
  bool block_diagonal = true;
  std::vector<std::string> warnings;
};

struct SparseHermitianOperator {
  int dimension = 0;
  SpMat M;
  Grid grid;
  OperatorMeta meta;
};

enum class PauliMethod { lichnerowicz, dirac_form };

inline PauliMethod parse_method(const std::string& s) {
  if (s == "lichnerowicz") return PauliMethod::lichnerowicz;
  if (s == "dirac_form") return PauliMethod::dirac_form;
  throw std::invalid_argument("unknown assembly method: " + s);
}

namespace detail {

inline SpMat hermitian_part(const SpMat& M) {
  SpMat Mh = M.adjoint();
  SpMat S = 0.5 * (M + Mh);
  S.prune(cplx(0.0));
  return S;
}

/// Required spacing: an eighth of the magnetic length (t b_inf)^{-1/2}.
inline std::optional<std::string> adequacy_warning(double t, double b_inf, double h) {
  double tb = std::abs(t) * b_inf;
  if (tb <= 0) return std::nullopt;
  double hmax = 0.125 / std::sqrt(tb);
  if (h > hmax) {
    std::ostringstream os;
    os << "grid spacing " << h << " exceeds (1/8)(t b_inf)^{-1/2} = " << hmax;
    return os.str();
  }
  return std::nullopt;
}

/// Triplets of the covariant five-point Laplacian on the active set.
inline void schrodinger_triplets(const Grid& g, const VectorPotential& A, double t, int offset,
                                 std::vector<Triplet>& tr) {
  const double ih2 = 1.0 / (g.h * g.h);
  const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
  for (int a = 0; a < g.size(); ++a) {
    int node = g.nodes[a];
    int i = node % (g.n + 1), j = node / (g.n + 1);
    Point x = g.point(node);
    tr.emplace_back(offset + a, offset + a, 4.0 * ih2);
    for (int d = 0; d < 4; ++d) {
      int b = g.active(i + di[d], j + dj[d]);
      if (b < 0) continue;
      Point y = g.point(g.id(i + di[d], j + dj[d]));
      double th = A.line_integral(x, y);
      tr.emplace_back(offset + a, offset + b, -std::polar(ih2, -t * th));
    }
  }
}

}  // namespace detail

/// Dirichlet magnetic Schrodinger operator (-i grad - tA)^2 with link phases.
inline SparseHermitianOperator assemble_schrodinger(const Domain& dom, const VectorPotential& A, double t, int n) {
  SparseHermitianOperator op;
  op.grid = make_grid(dom, n);
  op.dimension = op.grid.size();
  std::vector<Triplet> tr;
  tr.reserve(static_cast<std::size_t>(op.dimension) * 5);
  detail::schrodinger_triplets(op.grid, A, t, 0, tr);
  SpMat M(op.dimension, op.dimension);
  M.setFromTriplets(tr.begin(), tr.end());
  op.M = detail::hermitian_part(M);
  op.meta.t = t;
  op.meta.gauge = to_string(A.provenance);
  op.meta.method = "schrodinger";
  return op;
}

namespace detail {

/// pi_s (s = +1 or -1) for one forward/backward choice per axis, rows over all grid nodes.
inline SpMat dirac_momentum(const Grid& g, const VectorPotential& A, double t, int s, bool fx, bool fy) {
  const int rows = (g.n + 1) * (g.n + 1);
  const double ih = 1.0 / g.h;
  std::vector<Triplet> tr;
  tr.reserve(static_cast<std::size_t>(g.size()) * 6);
  // x part carries -i, y part carries s
  const cplx cx(0.0, -1.0);
  const double cy = static_cast<double>(s);
  for (int j = 0; j <= g.n; ++j)
    for (int i = 0; i <= g.n; ++i) {
      int row = g.id(i, j);
      Point x = g.point(row);
      int a = g.active(i, j);
      // x-difference
      {
        int ii = fx ? i + 1 : i - 1;
        int b = g.active(ii, j);
        double sgn = fx ? 1.0 : -1.0;  // forward: (U u(x+e) - u(x))/h, backward: (u(x) - U u(x-e))/h
        if (a >= 0) tr.emplace_back(row, a, cx * (-sgn * ih));
        if (b >= 0) {
          double th = A.line_integral(x, g.point(g.id(ii, j)));
          tr.emplace_back(row, b, cx * (sgn * ih) * std::polar(1.0, -t * th));
        }
      }
      // y-difference
      {
        int jj = fy ? j + 1 : j - 1;
        int b = g.active(i, jj);
        double sgn = fy ? 1.0 : -1.0;
        if (a >= 0) tr.emplace_back(row, a, cy * (-sgn * ih));
        if (b >= 0) {
          double th = A.line_integral(x, g.point(g.id(i, jj)));
          tr.emplace_back(row, b, cy * (sgn * ih) * std::polar(1.0, -t * th));
        }
      }
    }
  SpMat P(rows, g.size());
  P.setFromTriplets(tr.begin(), tr.end());
  return P;
}

inline SpMat dirac_block(const Grid& g, const VectorPotential& A, double t, int s) {
  SpMat acc(g.size(), g.size());
  for (int c = 0; c < 4; ++c) {
    SpMat P = dirac_momentum(g, A, t, s, c & 1, c & 2);
    SpMat PhP = SpMat(P.adjoint()) * P;
    acc += 0.25 * PhP;
  }
  return acc;
}

}  // namespace detail

/// Two-component Dirichlet Pauli operator, spin-up block first.
inline SparseHermitianOperator assemble_pauli(const Domain& dom, const VectorPotential& A,
                                              const std::optional<ScalarField2D>& B, double t, int n,
                                              PauliMethod method = PauliMethod::lichnerowicz) {
  if (method == PauliMethod::lichnerowicz && !B) throw std::invalid_argument("lichnerowicz assembly requires B");
  SparseHermitianOperator op;
  op.grid = make_grid(dom, n);
  const Grid& g = op.grid;
  const int N = g.size();
  op.dimension = 2 * N;
  op.meta.t = t;
  op.meta.gauge = to_string(A.provenance);
  op.meta.components = 2;
  op.meta.block_diagonal = true;
  double b_inf = 0.0;
  if (method == PauliMethod::lichnerowicz) {
    std::vector<Triplet> tr;
    tr.reserve(static_cast<std::size_t>(N) * 10);
    detail::schrodinger_triplets(g, A, t, 0, tr);
    detail::schrodinger_triplets(g, A, t, N, tr);
    for (int a = 0; a < N; ++a) {
      double b = checked_eval(*B, g.point(g.nodes[a]));
      b_inf = std::max(b_inf, std::abs(b));
      tr.emplace_back(a, a, -t * b);
      tr.emplace_back(N + a, N + a, t * b);
    }
    SpMat M(2 * N, 2 * N);
    M.setFromTriplets(tr.begin(), tr.end());
    op.M = detail::hermitian_part(M);
    op.meta.method = "lichnerowicz";
    op.meta.field = "sampled";
  } else {
    SpMat up = detail::dirac_block(g, A, t, +1), dn = detail::dirac_block(g, A, t, -1);
    std::vector<Triplet> tr;
    for (int k = 0; k < up.outerSize(); ++k)
      for (SpMat::InnerIterator it(up, k); it; ++it) tr.emplace_back(it.row(), it.col(), it.value());
    for (int k = 0; k < dn.outerSize(); ++k)
      for (SpMat::InnerIterator it(dn, k); it; ++it) tr.emplace_back(N + it.row(), N + it.col(), it.value());
    SpMat M(2 * N, 2 * N);
    M.setFromTriplets(tr.begin(), tr.end());
    op.M = detail::hermitian_part(M);
    op.meta.method = "dirac_form";
    op.meta.field = B ? "sampled" : "implicit";
    if (B)
      for (int a = 0; a < N; ++a) b_inf = std::max(b_inf, std::abs(checked_eval(*B, g.point(g.nodes[a]))));
  }
  if (B && B->sup_bound) b_inf = std::max(b_inf, *B->sup_bound);
  if (auto w = detail::adequacy_warning(t, b_inf, g.h)) op.meta.warnings.push_back(*w);
  return op;
}

/// Dirichlet restriction to the active nodes inside `sub`.
inline SparseHermitianOperator restrict(const SparseHermitianOperator& op, const Domain& sub) {
  const Grid& g = op.grid;
  const int N = g.size();
  std::vector<int> keep_node;
  std::vector<int> map(N, -1);
  for (int a = 0; a < N; ++a)
    if (sub.contains(g.point(g.nodes[a]))) {
      map[a] = static_cast<int>(keep_node.size());
      keep_node.push_back(g.nodes[a]);
    }
  if (keep_node.empty()) throw std::runtime_error("empty restriction");
  const int K = static_cast<int>(keep_node.size());
  const int comps = op.meta.components;
  auto newidx = [&](int idx) {
    int c = idx / N, a = idx % N;
    return map[a] < 0 ? -1 : c * K + map[a];
  };
  std::vector<Triplet> tr;
  for (int k = 0; k < op.M.outerSize(); ++k)
    for (SpMat::InnerIterator it(op.M, k); it; ++it) {
      int r = newidx(static_cast<int>(it.row())), c = newidx(static_cast<int>(it.col()));
      if (r >= 0 && c >= 0) tr.emplace_back(r, c, it.value());
    }
  SparseHermitianOperator out;
  out.dimension = comps * K;
  out.M = SpMat(out.dimension, out.dimension);
  out.M.setFromTriplets(tr.begin(), tr.end());
  out.grid = g;
  std::fill(out.grid.index.begin(), out.grid.index.end(), -1);
  out.grid.nodes = keep_node;
  for (int a = 0; a < K; ++a) out.grid.index[keep_node[a]] = a;
  out.meta = op.meta;
  return out;
}

/// Matrix Market coordinate, complex hermitian, lower triangle, 1-based.
inline void write_matrix_market(const SparseHermitianOperator& op, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  std::size_t nnz = 0;
  for (int k = 0; k < op.M.outerSize(); ++k)
    for (SpMat::InnerIterator it(op.M, k); it; ++it)
      if (it.row() >= it.col()) ++nnz;
  out << "%%MatrixMarket matrix coordinate complex hermitian\n";
  out << "% t=" << op.meta.t << " method=" << op.meta.method << " gauge=" << op.meta.gauge << "\n";
  out << op.dimension << " " << op.dimension << " " << nnz << "\n";
  out.precision(17);
  for (int k = 0; k < op.M.outerSize(); ++k)
    for (SpMat::InnerIterator it(op.M, k); it; ++it)
      if (it.row() >= it.col())
        out << it.row() + 1 << " " << it.col() + 1 << " " << it.value().real() << " " << it.value().imag() << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Gershgorin enclosure [lo, hi] of the spectrum.
inline std::pair<double, double> gershgorin(const SpMat& M) {
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(M.rows()), rad = Eigen::VectorXd::Zero(M.rows());
  for (int k = 0; k < M.outerSize(); ++k)
    for (SpMat::InnerIterator it(M, k); it; ++it) {
      if (it.row() == it.col()) diag[it.row()] = it.value().real();
      else rad[it.row()] += std::abs(it.value());
    }
  return {(diag - rad).minCoeff(), (diag + rad).maxCoeff()};
}

inline double norm1(const SpMat& M) {
  double m = 0.0;
  for (int k = 0; k < M.outerSize(); ++k) {
    double s = 0.0;
    for (SpMat::InnerIterator it(M, k); it; ++it) s += std::abs(it.value());
    m = std::max(m, s);
  }
  return m;
}

}  // namespace pauli
