#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "pauli/common.hpp"
#include "pauli/field.hpp"

namespace pauli {

enum class GaugeKind { symmetric, scalar_potential, local_constant, transformed };

inline const char* to_string(GaugeKind k) {
  switch (k) {
    case GaugeKind::symmetric: return "symmetric";
    case GaugeKind::scalar_potential: return "scalar_potential";
    case GaugeKind::local_constant: return "local_constant";
    case GaugeKind::transformed: return "transformed";
  }
  return "?";
}

using Vec2 = std::array<double, 2>;

struct VectorPotential {
  std::function<Vec2(Point)> eval;
  ScalarField2D curl_field;
  GaugeKind provenance = GaugeKind::symmetric;
  /// Exact segment integral of A.dl when known; the midpoint rule otherwise.
  std::function<double(Point, Point)> segment;

  Vec2 operator()(Point p) const { return eval(p); }

  double line_integral(Point a, Point b) const {
    if (segment) return segment(a, b);
    Vec2 m = eval(0.5 * (a + b));
    return m[0] * (b.x - a.x) + m[1] * (b.y - a.y);
  }
};

/// Central-difference curl d1 A2 - d2 A1.
inline double numerical_curl(const VectorPotential& A, Point p, double h) {
  Vec2 xp = A({p.x + h, p.y}), xm = A({p.x - h, p.y});
  Vec2 yp = A({p.x, p.y + h}), ym = A({p.x, p.y - h});
  return (xp[1] - xm[1]) / (2 * h) - (yp[0] - ym[0]) / (2 * h);
}

inline VectorPotential zero_potential() {
  VectorPotential A;
  A.eval = [](Point) { return Vec2{0.0, 0.0}; };
  A.curl_field = constant_field(0.0);
  A.segment = [](Point, Point) { return 0.0; };
  return A;
}

/// A(x) = b (-(x2 - c2), x1 - c1) / 2.
inline VectorPotential symmetric_gauge(double b, Point c = {}) {
  VectorPotential A;
  A.eval = [b, c](Point p) { return Vec2{-0.5 * b * (p.y - c.y), 0.5 * b * (p.x - c.x)}; };
  A.curl_field = constant_field(b);
  A.provenance = GaugeKind::symmetric;
  // A is affine, so the midpoint rule is exact.
  return A;
}

struct GaugeCheckOptions {
  Point box_origin{-1.0, -1.0};
  double box_side = 2.0;
  int samples = 64;
  double step = 1e-4;
  double rel_tol = 1e-6;
};

/// A + grad psi. When psi itself is supplied, segment integrals pick up
/// psi(b) - psi(a) exactly, which makes assembled link phases exactly covariant.
inline VectorPotential gauge_transform(const VectorPotential& A, std::function<Vec2(Point)> psi_grad,
                                       std::function<double(Point)> psi = nullptr, GaugeCheckOptions chk = {}) {
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst = 0.0, scale = 0.0;
  const double h = chk.step;
  for (int s = 0; s < chk.samples; ++s) {
    Point p{chk.box_origin.x + chk.box_side * U(rng), chk.box_origin.y + chk.box_side * U(rng)};
    Vec2 xp = psi_grad({p.x + h, p.y}), xm = psi_grad({p.x - h, p.y});
    Vec2 yp = psi_grad({p.x, p.y + h}), ym = psi_grad({p.x, p.y - h});
    double d12 = (xp[1] - xm[1]) / (2 * h), d21 = (yp[0] - ym[0]) / (2 * h);
    worst = std::max(worst, std::abs(d12 - d21));
    scale = std::max({scale, std::abs(d12), std::abs(d21)});
  }
  if (worst > chk.rel_tol * (1.0 + scale)) {
    std::ostringstream os;
    os << "not a gauge function (sampled curl " << worst << ")";
    throw std::invalid_argument(os.str());
  }
  VectorPotential out;
  out.eval = [A, psi_grad](Point p) {
    Vec2 a = A(p), g = psi_grad(p);
    return Vec2{a[0] + g[0], a[1] + g[1]};
  };
  out.curl_field = A.curl_field;
  out.provenance = GaugeKind::transformed;
  if (psi) {
    out.segment = [A, psi](Point a, Point b) { return A.line_integral(a, b) + psi(b) - psi(a); };
  } else if (A.segment) {
    out.segment = [A, psi_grad](Point a, Point b) {
      Vec2 g = psi_grad(0.5 * (a + b));
      return A.line_integral(a, b) + g[0] * (b.x - a.x) + g[1] * (b.y - a.y);
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Local constant-field gauge on a square

struct LocalGauge {
  VectorPotential potential;
  double b_center = 0.0;
  double deviation = 0.0;      // sup |A_tilde - A_const| (Euclidean)
  Vec2 deviation_components{};  // per-component sups
  double alpha_bound = 0.0;     // (s / (2 sqrt 2)) * beta
};

inline LocalGauge local_constant_gauge(const ScalarField2D& B, const Square& sq, double beta, int samples = 17) {
  LocalGauge g;
  Point c = sq.center();
  g.b_center = checked_eval(B, c);
  g.potential = symmetric_gauge(g.b_center, c);
  g.potential.provenance = GaugeKind::local_constant;
  g.alpha_bound = sq.side / (2 * std::sqrt(2.0)) * beta;

  std::vector<double> gx, gw;
  gauss_legendre(16, gx, gw);
  auto integral = [&](auto f, double upper) {  // int_0^upper f(t) dt
    double s = 0.0;
    for (int i = 0; i < 16; ++i) s += gw[i] * f(upper * (gx[i] + 1) / 2);
    return s * upper / 2;
  };
  for (int j = 0; j < samples; ++j)
    for (int i = 0; i < samples; ++i) {
      double x1 = sq.side * (static_cast<double>(i) / (samples - 1) - 0.5);
      double x2 = sq.side * (static_cast<double>(j) / (samples - 1) - 0.5);
      double a1 = -0.5 * integral([&](double t) { return checked_eval(B, {c.x + x1, c.y + t}); }, x2);
      double a2 = 0.5 * integral([&](double t) { return checked_eval(B, {c.x + t, c.y + x2}); }, x1);
      double d1 = a1 + 0.5 * g.b_center * x2, d2 = a2 - 0.5 * g.b_center * x1;
      g.deviation_components[0] = std::max(g.deviation_components[0], std::abs(d1));
      g.deviation_components[1] = std::max(g.deviation_components[1], std::abs(d2));
      g.deviation = std::max(g.deviation, std::hypot(d1, d2));
    }
  return g;
}

// ---------------------------------------------------------------------------
// Disc scalar potential: Delta phi = B on the unit disc, phi = 0 on r = 1.
//
// Chebyshev collocation in r on the parity-folded grid x_j = cos(j pi / N),
// N = 2 N_r + 1, so r = 0 is never a node; Fourier in theta.

namespace detail {

/// Chebyshev differentiation matrix on x_j = cos(j pi / N).
inline Eigen::MatrixXd cheb_diff(int N, Eigen::VectorXd& x) {
  x.resize(N + 1);
  for (int j = 0; j <= N; ++j) x[j] = std::cos(pi * j / N);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(N + 1, N + 1);
  auto c = [N](int j) { return ((j == 0 || j == N) ? 2.0 : 1.0) * ((j % 2) ? -1.0 : 1.0); };
  for (int i = 0; i <= N; ++i) {
    double rs = 0.0;
    for (int j = 0; j <= N; ++j) {
      if (i == j) continue;
      // x_i - x_j without cancellation
      double dx = 2.0 * std::sin(pi * (i + j) / (2.0 * N)) * std::sin(pi * (j - i) / (2.0 * N));
      D(i, j) = c(i) / c(j) / dx;
      rs += D(i, j);
    }
    D(i, i) = -rs;
  }
  return D;
}

}  // namespace detail

struct PoissonOptions {
  bool require_positive = false;  // throw "boundary data not positive" unless h > 0
  double flux_tol = 1e-6;
  int flux_quadrature = 128;
};

class ScalarPotentialSolution {
 public:
  int N_r = 0, N_theta = 0;
  std::vector<double> r;              // radial nodes r_0 = 1 > r_1 > ... > r_{N_r} > 0
  std::vector<double> theta;          // theta_k = 2 pi k / N_theta
  Eigen::MatrixXd phi;                // (N_r + 1) x N_theta, row 0 is the boundary
  std::vector<double> h_boundary;     // d_r phi(1, theta_k)
  double kappa = 0.0;                 // max(|h|_inf, |1/h|_inf), +inf unless h > 0
  bool h_positive = false;
  double flux_B = 0.0;                // quadrature flux of B
  double flux_h = 0.0;                // (1/2pi) int h
  double residual = 0.0;              // sup |Delta phi - B| at off-grid points
  double phi_max = 0.0;               // max of phi over grid (should be <= 0 when B >= 0)
  VectorPotential potential;
  ScalarField2D field;

  /// Number of retained angular modes m = 0 .. modes() - 1.
  int modes() const { return static_cast<int>(ext_.size()); }

  /// phi, d_r phi, d_rr phi of mode m at radius rr in [0, 1].
  std::array<cplx, 3> mode_values(int m, double rr) const {
    double xx = rr;
    const auto& w = bw_;
    std::array<cplx, 3> num{0.0, 0.0, 0.0};
    double den = 0.0;
    for (int j = 0; j < static_cast<int>(xg_.size()); ++j) {
      double dx = xx - xg_[j];
      if (dx == 0.0) return {ext_[m][j], d1_[m][j], d2_[m][j]};
      double c = w[j] / dx;
      den += c;
      num[0] += c * ext_[m][j];
      num[1] += c * d1_[m][j];
      num[2] += c * d2_[m][j];
    }
    return {num[0] / den, num[1] / den, num[2] / den};
  }

  double phi_at(double rr, double th) const {
    double s = 0.0;
    for (int m = 0; m < active_; ++m) {
      cplx v = mode_values(m, rr)[0] * std::polar(1.0, m * th);
      s += (m == 0 ? 1.0 : 2.0) * v.real();
    }
    return s;
  }
  double phi_at(Point p) const { return phi_at(norm(p), std::atan2(p.y, p.x)); }

  /// (d_r phi, d_theta phi) at polar point.
  std::array<double, 2> grad_polar(double rr, double th) const {
    double fr = 0.0, ft = 0.0;
    for (int m = 0; m < active_; ++m) {
      auto v = mode_values(m, rr);
      cplx e = std::polar(1.0, m * th);
      double wgt = (m == 0 ? 1.0 : 2.0);
      fr += wgt * (v[1] * e).real();
      ft += wgt * (cplx(0, m) * v[0] * e).real();
    }
    return {fr, ft};
  }

  /// phi on the ring of radius rr at n_theta equispaced angles (n_theta a power of two).
  std::vector<double> ring(double rr, int n_theta) const {
    std::vector<cplx> spec(n_theta, 0.0);
    int mmax = std::min(active_, n_theta / 2);
    for (int m = 0; m < mmax; ++m) {
      cplx v = mode_values(m, rr)[0];
      spec[m] += v;
      if (m > 0) spec[n_theta - m] += std::conj(v);
    }
    std::vector<cplx> out;
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::Unscaled);
    fft.inv(out, spec);
    std::vector<double> res(n_theta);
    for (int k = 0; k < n_theta; ++k) res[k] = out[k].real();
    return res;
  }

  /// Fourier coefficients h_m, m = 0 .. modes()-1 (negative m by conjugation).
  std::vector<cplx> h_modes() const {
    std::vector<cplx> hm(ext_.size());
    for (std::size_t m = 0; m < ext_.size(); ++m) hm[m] = d1_[m][0];
    return hm;
  }

  void require_positive() const {
    if (!h_positive) throw std::runtime_error("boundary data not positive");
  }

 private:
  friend ScalarPotentialSolution solve_scalar_potential(const ScalarField2D&, int, int, PoissonOptions);
  std::vector<double> xg_, bw_;                      // full Chebyshev grid and barycentric weights
  std::vector<std::vector<cplx>> ext_, d1_, d2_;     // per mode: values, d/dr, d2/dr2 on the full grid
  int active_ = 0;                                   // modes with non-negligible content
};

inline ScalarPotentialSolution solve_scalar_potential(const ScalarField2D& B, int N_r, int N_theta,
                                                      PoissonOptions opt = {}) {
  if (!is_pow2(N_theta)) throw std::invalid_argument("N_theta must be a power of two");
  if (N_r < 16) throw std::invalid_argument("N_r must be >= 16");
  const int N = 2 * N_r + 1;
  Eigen::VectorXd x;
  Eigen::MatrixXd D = detail::cheb_diff(N, x);
  Eigen::MatrixXd D2 = D * D;

  ScalarPotentialSolution sol;
  sol.N_r = N_r;
  sol.N_theta = N_theta;
  sol.field = B;
  sol.r.resize(N_r + 1);
  for (int j = 0; j <= N_r; ++j) sol.r[j] = x[j];
  sol.theta.resize(N_theta);
  for (int k = 0; k < N_theta; ++k) sol.theta[k] = two_pi * k / N_theta;

  // Angular transform of B on every interior ring.
  const int M = N_theta / 2;  // modes 0 .. M-1 kept, Nyquist dropped
  Eigen::MatrixXcd Bm(N_r, M);
  Eigen::FFT<double> fft;
  {
    std::vector<cplx> in(N_theta), out;
    for (int i = 1; i <= N_r; ++i) {
      for (int k = 0; k < N_theta; ++k)
        in[k] = checked_eval(B, {x[i] * std::cos(sol.theta[k]), x[i] * std::sin(sol.theta[k])});
      fft.fwd(out, in);
      for (int m = 0; m < M; ++m) Bm(i - 1, m) = out[m] / static_cast<double>(N_theta);
    }
  }

  sol.xg_.assign(x.data(), x.data() + N + 1);
  sol.bw_.resize(N + 1);
  for (int j = 0; j <= N; ++j) sol.bw_[j] = ((j % 2) ? -1.0 : 1.0) * ((j == 0 || j == N) ? 0.5 : 1.0);
  sol.ext_.assign(M, std::vector<cplx>(N + 1, 0.0));
  sol.d1_ = sol.ext_;
  sol.d2_ = sol.ext_;

  double scale = Bm.cwiseAbs().maxCoeff();
  Eigen::MatrixXd L(N_r, N_r);
  for (int m = 0; m < M; ++m) {
    Eigen::VectorXcd rhs = Bm.col(m);
    if (rhs.cwiseAbs().maxCoeff() <= 1e-17 * scale || scale == 0.0) continue;
    const double sg = (m % 2) ? -1.0 : 1.0;
    for (int i = 1; i <= N_r; ++i) {
      double ri = x[i];
      for (int j = 1; j <= N_r; ++j) {
        L(i - 1, j - 1) = D2(i, j) + sg * D2(i, N - j) + (D(i, j) + sg * D(i, N - j)) / ri;
      }
      L(i - 1, i - 1) -= static_cast<double>(m) * m / (ri * ri);
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(L);
    Eigen::VectorXd re = lu.solve(rhs.real()), im = lu.solve(rhs.imag());
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(N + 1);
    for (int j = 1; j <= N_r; ++j) {
      v[j] = cplx(re[j - 1], im[j - 1]);
      v[N - j] = sg * v[j];
    }
    Eigen::VectorXcd v1 = D.cast<cplx>() * v, v2 = D2.cast<cplx>() * v;
    for (int j = 0; j <= N; ++j) {
      sol.ext_[m][j] = v[j];
      sol.d1_[m][j] = v1[j];
      sol.d2_[m][j] = v2[j];
    }
    sol.active_ = m + 1;
  }

  // Grid values of phi and boundary data h.
  sol.phi = Eigen::MatrixXd::Zero(N_r + 1, N_theta);
  {
    std::vector<cplx> spec(N_theta), out;
    fft.SetFlag(Eigen::FFT<double>::Unscaled);
    for (int i = 0; i <= N_r; ++i) {
      std::fill(spec.begin(), spec.end(), 0.0);
      for (int m = 0; m < sol.active_; ++m) {
        spec[m] += sol.ext_[m][i];
        if (m > 0) spec[N_theta - m] += std::conj(sol.ext_[m][i]);
      }
      fft.inv(out, spec);
      for (int k = 0; k < N_theta; ++k) sol.phi(i, k) = out[k].real();
    }
    std::fill(spec.begin(), spec.end(), 0.0);
    for (int m = 0; m < sol.active_; ++m) {
      spec[m] += sol.d1_[m][0];
      if (m > 0) spec[N_theta - m] += std::conj(sol.d1_[m][0]);
    }
    fft.inv(out, spec);
    sol.h_boundary.resize(N_theta);
    for (int k = 0; k < N_theta; ++k) sol.h_boundary[k] = out[k].real();
  }
  sol.phi_max = sol.phi.bottomRows(N_r).maxCoeff();
  double hmin = *std::min_element(sol.h_boundary.begin(), sol.h_boundary.end());
  double hmax = *std::max_element(sol.h_boundary.begin(), sol.h_boundary.end());
  sol.h_positive = hmin > 0.0;
  sol.kappa = sol.h_positive ? std::max(hmax, 1.0 / hmin) : std::numeric_limits<double>::infinity();
  if (opt.require_positive) sol.require_positive();

  // Residual of Delta phi - B at off-grid points (midpoints between radial nodes).
  {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(0.0, two_pi);
    double res = 0.0;
    int stride = std::max(1, N_r / 16);
    for (int i = 1; i < N_r; i += stride) {
      double rr = 0.5 * (x[i] + x[i + 1]);
      for (int s = 0; s < 8; ++s) {
        double th = U(rng);
        double lap = 0.0;
        for (int m = 0; m < sol.active_; ++m) {
          auto v = sol.mode_values(m, rr);
          cplx val = v[2] + v[1] / rr - static_cast<double>(m) * m / (rr * rr) * v[0];
          lap += (m == 0 ? 1.0 : 2.0) * (val * std::polar(1.0, m * th)).real();
        }
        res = std::max(res, std::abs(lap - checked_eval(B, {rr * std::cos(th), rr * std::sin(th)})));
      }
    }
    sol.residual = res;
  }

  sol.flux_h = sol.active_ > 0 ? sol.d1_[0][0].real() : 0.0;
  sol.flux_B = flux(B, Domain::unit_disc(), {opt.flux_quadrature});
  double fres = std::abs(sol.flux_h - sol.flux_B);
  if (fres > opt.flux_tol * std::max(1.0, std::abs(sol.flux_B))) {
    std::ostringstream os;
    os << "flux identity violated: (1/2pi) int h = " << sol.flux_h << ", flux(B) = " << sol.flux_B
       << ", residual " << fres;
    throw std::runtime_error(os.str());
  }

  // The gauge A = (-d2 phi, d1 phi). Shared ownership keeps the copy cheap.
  auto shared = std::make_shared<ScalarPotentialSolution>(sol);
  sol.potential.eval = [shared](Point p) {
    double rr = std::max(norm(p), 1e-12);
    double th = std::atan2(p.y, p.x);
    auto g = shared->grad_polar(rr, th);
    double c = std::cos(th), s = std::sin(th);
    double d1 = c * g[0] - s * g[1] / rr, d2 = s * g[0] + c * g[1] / rr;
    return Vec2{-d2, d1};
  };
  sol.potential.curl_field = B;
  sol.potential.provenance = GaugeKind::scalar_potential;
  return sol;
}

}  // namespace pauli
