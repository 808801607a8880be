#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <unsupported/Eigen/FFT>

#include "pauli/gauge.hpp"
#include "pauli/tiling.hpp"

// Circle functions are stored as coefficient vectors c (index k mod N) with
// f(theta) = (2 pi)^{-1/2} sum_k c_k e^{i k theta}, so that |f|^2 = sum |c_k|^2.

namespace pauli {

namespace detail {

/// c_k = (1/N) sum_j f_j e^{-i k theta_j}
inline Eigen::VectorXcd fft_coeffs(const Eigen::VectorXcd& samples) {
  std::vector<cplx> in(samples.data(), samples.data() + samples.size()), out;
  Eigen::FFT<double> fft;
  fft.fwd(out, in);
  Eigen::VectorXcd c(out.size());
  const double s = 1.0 / static_cast<double>(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) c[k] = out[k] * s;
  return c;
}

/// f_j = sum_k c_k e^{i k theta_j}
inline Eigen::VectorXcd fft_samples(const Eigen::VectorXcd& coeffs) {
  std::vector<cplx> in(coeffs.data(), coeffs.data() + coeffs.size()), out;
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  fft.inv(out, in);
  return Eigen::Map<Eigen::VectorXcd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

inline int freq(int row, int N) { return row < N / 2 ? row : row - N; }

}  // namespace detail

struct CircleSpectralData {
  int N = 0;
  int N_basis = 0;
  Eigen::VectorXcd h_hat;  // h(theta) = sum_k h_hat[k] e^{i k theta}
  Eigen::VectorXd h;       // samples at theta_j = 2 pi j / N
  Eigen::VectorXd Phi;     // antiderivative of h with Phi(0) = 0
  double kappa = 0.0;
  double gram_error = 0.0;     // max |<e_n, e_m>_h - delta_nm|, |n|, |m| <= N_basis
  double phi_end_error = 0.0;  // |int h - 2 pi|
  Eigen::MatrixXcd basis_coeffs;  // column n + N_basis holds e_n

  double theta(int j) const { return two_pi * j / N; }
  int freq(int row) const { return detail::freq(row, N); }
  Eigen::VectorXcd e(int n) const { return basis_coeffs.col(n + N_basis); }

  Eigen::VectorXcd samples(const Eigen::VectorXcd& c) const {
    return detail::fft_samples(c) / std::sqrt(two_pi);
  }
  Eigen::VectorXcd coeffs(const Eigen::VectorXcd& f) const { return detail::fft_coeffs(f) * std::sqrt(two_pi); }
  Eigen::VectorXcd times_h(const Eigen::VectorXcd& c) const {
    Eigen::VectorXcd f = samples(c);
    return coeffs(f.cwiseProduct(h.cast<cplx>()));
  }
  double norm_sq(const Eigen::VectorXcd& c) const { return c.squaredNorm(); }
  cplx inner_h(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) const { return a.dot(times_h(b)); }
  double norm_h_sq(const Eigen::VectorXcd& c) const { return inner_h(c, c).real(); }

  /// gamma_n = <e_n, f>_h for n = -N_basis .. N_basis.
  Eigen::VectorXcd gamma(const Eigen::VectorXcd& c) const { return basis_coeffs.adjoint() * times_h(c); }

  /// sum_n gamma_n e_n.
  Eigen::VectorXcd from_gamma(const Eigen::VectorXcd& g) const { return basis_coeffs * g; }
};

inline CircleSpectralData circle_data(const ScalarPotentialSolution& sol, int N = 4096, int N_basis = 256) {
  if (!is_pow2(N)) throw std::invalid_argument("N must be a power of two");
  if (N_basis < 1 || N < 4 * N_basis) throw std::invalid_argument("need N >= 4 N_basis");
  CircleSpectralData d;
  d.N = N;
  d.N_basis = N_basis;
  d.h_hat = Eigen::VectorXcd::Zero(N);
  auto hm = sol.h_modes();
  const int mm = std::min<int>(static_cast<int>(hm.size()), N / 2);
  for (int m = 0; m < mm; ++m) {
    d.h_hat[m] += hm[m];
    if (m > 0) d.h_hat[N - m] += std::conj(hm[m]);
  }
  d.h = detail::fft_samples(d.h_hat).real();
  const double hmin = d.h.minCoeff(), hmax = d.h.maxCoeff();
  if (!(hmin > 0)) throw std::runtime_error("boundary data not positive");
  d.kappa = std::max(hmax, 1.0 / hmin);

  const double h0 = d.h_hat[0].real();
  d.phi_end_error = two_pi * std::abs(h0 - 1.0);
  if (std::abs(h0 - 1.0) > 1e-8) {
    std::ostringstream os;
    os << "flux normalization violated: mean of h is " << h0;
    throw std::invalid_argument(os.str());
  }
  // Phi = theta + periodic part; the unit mean is imposed so e^{i n Phi} is periodic.
  Eigen::VectorXcd g_hat = Eigen::VectorXcd::Zero(N);
  for (int k = 1; k < N; ++k) {
    int f = d.freq(k);
    if (f != 0 && std::abs(f) < N / 2) g_hat[k] = d.h_hat[k] / cplx(0.0, f);
  }
  Eigen::VectorXd g = detail::fft_samples(g_hat).real();
  d.Phi.resize(N);
  for (int j = 0; j < N; ++j) d.Phi[j] = d.theta(j) + g[j] - g[0];
  for (int j = 1; j < N; ++j)
    if (!(d.Phi[j] > d.Phi[j - 1])) throw std::runtime_error("Phi not strictly increasing");

  d.basis_coeffs.resize(N, 2 * N_basis + 1);
  Eigen::VectorXcd s(N);
  for (int n = -N_basis; n <= N_basis; ++n) {
    for (int j = 0; j < N; ++j) s[j] = std::polar(1.0, n * d.Phi[j]);
    d.basis_coeffs.col(n + N_basis) = detail::fft_coeffs(s);
  }
  // <e_n, e_m>_h depends on m - n only.
  double err = 0.0;
  for (int dd = 0; dd <= 2 * N_basis; ++dd) {
    cplx acc = 0.0;
    for (int j = 0; j < N; ++j) acc += std::polar(d.h[j], dd * d.Phi[j]);
    acc /= static_cast<double>(N);
    err = std::max(err, std::abs(acc - (dd == 0 ? 1.0 : 0.0)));
  }
  d.gram_error = err;
  if (err > 1e-6) {
    std::ostringstream os;
    os << "truncation insufficient: Gram deviation " << err;
    throw std::runtime_error(os.str());
  }
  return d;
}

/// (P+ f, P- f): frequencies k >= 0 and k < 0.
inline std::pair<Eigen::VectorXcd, Eigen::VectorXcd> hardy_project(const Eigen::VectorXcd& c) {
  const int N = static_cast<int>(c.size());
  Eigen::VectorXcd plus = Eigen::VectorXcd::Zero(N), minus = Eigen::VectorXcd::Zero(N);
  for (int k = 0; k < N; ++k) (detail::freq(k, N) >= 0 ? plus : minus)[k] = c[k];
  return {plus, minus};
}

// ---------------------------------------------------------------------------

struct TailSums {
  std::vector<double> pw, pv;  // |P- e_n|^2, |P- h e_n|^2 for n = 0 .. N_basis
  std::vector<double> w, v;    // m = 0 .. m_max, tail bound included
  double w_err = 0.0, v_err = 0.0;  // bound on the sums beyond N_basis
  double decay_w = 0.0, decay_v = 0.0;  // log-log slopes of w_m, v_m (+inf when identically zero)
  double decay_exponent = 0.0;
  double alpha = 0.5;
  double C7 = 0.0;  // max_m (m+1)^{2 alpha} max(w_m, v_m)
  int m_max = 0;

  double wv_product(int M) const { return std::sqrt(w.at(0) * w.at(M) * v.at(0) * v.at(M)); }

  nlohmann::json to_json() const {
    return {{"w", w}, {"v", v}, {"w_err", w_err}, {"v_err", v_err}, {"decay_w", decay_w},
            {"decay_v", decay_v}, {"alpha", alpha}, {"C7", C7}, {"m_max", m_max}};
  }
};

inline constexpr double coefficient_floor = 1e-13;

namespace detail {

inline double negative_mass(const Eigen::VectorXcd& c) {
  const int N = static_cast<int>(c.size());
  double s = 0.0;
  for (int k = N / 2; k < N; ++k)
    if (std::abs(c[k]) > coefficient_floor) s += std::norm(c[k]);
  return s;
}

/// Least-squares slope p of log y = a - p log x over positive y.
inline std::optional<std::pair<double, double>> loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (y[i] > 0) {
      double lx = std::log(x[i]), ly = std::log(y[i]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++n;
    }
  if (n < 3) return std::nullopt;
  double den = n * sxx - sx * sx;
  if (den <= 0) return std::nullopt;
  double slope = (n * sxy - sx * sy) / den;
  double a = (sy - slope * sx) / n;
  return std::make_pair(a, -slope);
}

/// sum_{n > N} e^a n^{-p}
inline double tail_bound(double a, double p, int N) {
  if (p <= 1.0) return std::numeric_limits<double>::infinity();
  return std::exp(a) * std::pow(static_cast<double>(N), 1.0 - p) / (p - 1.0);
}

}  // namespace detail

inline TailSums tail_sums(const CircleSpectralData& d, int m_max, double alpha = 0.5, int margin = 8) {
  if (m_max < 0 || m_max >= d.N_basis - margin) throw std::invalid_argument("m_max must be < N_basis - margin");
  if (!(alpha > 0 && alpha <= 1)) throw std::invalid_argument("alpha must lie in (0,1]");
  TailSums T;
  T.alpha = alpha;
  T.m_max = m_max;
  const int Nb = d.N_basis;
  T.pw.resize(Nb + 1);
  T.pv.resize(Nb + 1);
  for (int n = 0; n <= Nb; ++n) {
    Eigen::VectorXcd en = d.e(n);
    T.pw[n] = detail::negative_mass(en);
    T.pv[n] = detail::negative_mass(d.times_h(en));
  }
  auto tail = [&](const std::vector<double>& p) {
    std::vector<double> xs, ys;
    for (int n = Nb / 2; n <= Nb; ++n) {
      xs.push_back(n);
      ys.push_back(p[n]);
    }
    auto fit = detail::loglog_fit(xs, ys);
    if (!fit) return 0.0;  // decayed below the roundoff floor
    return detail::tail_bound(fit->first, fit->second, Nb);
  };
  T.w_err = tail(T.pw);
  T.v_err = tail(T.pv);
  T.w.assign(m_max + 1, 0.0);
  T.v.assign(m_max + 1, 0.0);
  double sw = 0.0, sv = 0.0;
  std::vector<double> cw(Nb + 2, 0.0), cv(Nb + 2, 0.0);
  for (int n = Nb; n >= 1; --n) {
    sw += T.pw[n];
    sv += T.pv[n];
    cw[n - 1] = sw;  // sum over n' > n - 1
    cv[n - 1] = sv;
  }
  for (int m = 0; m <= m_max; ++m) {
    if (T.w_err > cw[m] || T.v_err > cv[m]) {
      std::ostringstream os;
      os << "increase N_basis: tail error bar exceeds w_" << m << " or v_" << m;
      throw std::runtime_error(os.str());
    }
    T.w[m] = cw[m] + T.w_err;
    T.v[m] = cv[m] + T.v_err;
  }
  std::vector<double> xs(m_max + 1);
  for (int m = 0; m <= m_max; ++m) xs[m] = m + 1.0;
  auto fw = detail::loglog_fit(xs, T.w), fv = detail::loglog_fit(xs, T.v);
  const double inf = std::numeric_limits<double>::infinity();
  T.decay_w = fw ? fw->second : inf;
  T.decay_v = fv ? fv->second : inf;
  T.decay_exponent = std::min(T.decay_w, T.decay_v);
  double c7 = 0.0;
  for (int m = 0; m <= m_max; ++m) c7 = std::max(c7, std::pow(m + 1.0, 2 * alpha) * std::max(T.w[m], T.v[m]));
  T.C7 = c7 * (1 + 1e-12);
  return T;
}

// ---------------------------------------------------------------------------

/// sum_n (n - t) |gamma_n|^2, gamma indexed n = -N_basis .. N_basis.
inline double t_form(const Eigen::VectorXcd& gamma, double t) {
  const int Nb = static_cast<int>(gamma.size() - 1) / 2;
  double s = 0.0;
  for (int i = 0; i < gamma.size(); ++i) s += (i - Nb - t) * std::norm(gamma[i]);
  return s;
}

/// <f, T f> for f in Fourier coordinates, via the e_n expansion.
inline double t_form(const CircleSpectralData& d, const Eigen::VectorXcd& c, double t) {
  Eigen::VectorXcd g = d.gamma(c);
  double nh = d.norm_h_sq(c);
  if (std::abs(g.squaredNorm() - nh) > 1e-8 * std::max(nh, 1e-300)) {
    std::ostringstream os;
    os << "truncation insufficient: e_n expansion captures " << g.squaredNorm() << " of " << nh
       << "; increase N_basis";
    throw std::runtime_error(os.str());
  }
  return t_form(g, t);
}

/// <f, (-i d/dtheta - t h) f> by direct quadrature.
inline double t_form_direct(const CircleSpectralData& d, const Eigen::VectorXcd& c, double t) {
  double s = 0.0;
  for (int k = 0; k < d.N; ++k) s += d.freq(k) * std::norm(c[k]);
  return s - t * d.norm_h_sq(c);
}

// ---------------------------------------------------------------------------
// Radial evaluation of E f e^{-t phi}

struct RadialRule {
  std::vector<double> r, w;
};

inline RadialRule composite_gauss(const std::vector<double>& breaks, int order) {
  std::vector<double> x, w;
  gauss_legendre(order, x, w);
  RadialRule R;
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    double a = breaks[p], b = breaks[p + 1];
    if (!(b > a)) continue;
    for (int i = 0; i < order; ++i) {
      R.r.push_back(0.5 * (a + b) + 0.5 * (b - a) * x[i]);
      R.w.push_back(0.5 * (b - a) * w[i]);
    }
  }
  return R;
}

inline void append_uniform(std::vector<double>& breaks, double a, double b, int panels) {
  for (int i = (breaks.empty() ? 0 : 1); i <= panels; ++i) breaks.push_back(a + (b - a) * i / panels);
}

struct RadialOptions {
  int panels_inner = 12;  // on [0, 1 - 3 delta]
  int panels_mid = 4;     // on [1 - 3 delta, 1 - delta]
  int panels_outer = 6;   // on [1 - delta, 1]
  int order = 10;
  int n_theta = 0;        // 0: chosen from the data bandwidth
};

inline std::vector<double> cutoff_breaks(double delta, const RadialOptions& o) {
  std::vector<double> b;
  append_uniform(b, 0.0, 1.0 - 3 * delta, o.panels_inner);
  append_uniform(b, 1.0 - 3 * delta, 1.0 - delta, o.panels_mid);
  append_uniform(b, 1.0 - delta, 1.0, o.panels_outer);
  return b;
}

/// Samples of u = (E f) e^{-t (phi - phi_ref)} on rings; phi_ref = min phi keeps weights bounded.
class HardyRadial {
 public:
  HardyRadial(const ScalarPotentialSolution& sol, double t, int n_theta)
      : sol_(&sol), t_(t), n_theta_(n_theta) {
    if (!is_pow2(n_theta)) throw std::invalid_argument("n_theta must be a power of two");
    phi_ref_ = sol.phi.minCoeff();
  }

  int n_theta() const { return n_theta_; }
  double phi_ref() const { return phi_ref_; }

  /// n_theta x cols samples at radius r.
  Eigen::MatrixXcd u(const Eigen::MatrixXcd& F, double r) const {
    const int N = static_cast<int>(F.rows());
    const int kmax = std::min(N / 2, n_theta_ / 2);
    auto ph = sol_->ring(r, n_theta_);
    Eigen::VectorXd wt(n_theta_);
    for (int j = 0; j < n_theta_; ++j) wt[j] = std::exp(-t_ * (ph[j] - phi_ref_)) / std::sqrt(two_pi);
    std::vector<double> rk(kmax);
    double p = 1.0;
    for (int k = 0; k < kmax; ++k) {
      rk[k] = p;
      p *= r;
    }
    Eigen::MatrixXcd out(n_theta_, F.cols());
    Eigen::VectorXcd spec(n_theta_);
    for (int c = 0; c < F.cols(); ++c) {
      spec.setZero();
      // roundoff-level coefficients would be amplified by the interior weight
      const double floor = coefficient_floor * F.col(c).cwiseAbs().maxCoeff();
      for (int k = 0; k < kmax; ++k)
        if (std::abs(F(k, c)) > floor) spec[k] = F(k, c) * rk[k];
      out.col(c) = detail::fft_samples(spec).cwiseProduct(wt.cast<cplx>());
    }
    return out;
  }

  /// a_f(r) per column (scaled by e^{2 t phi_ref}).
  Eigen::VectorXd a(const Eigen::MatrixXcd& F, double r) const {
    Eigen::MatrixXcd U = u(F, r);
    return U.colwise().squaredNorm().transpose() * (two_pi / n_theta_);
  }

  /// Per column bound on int |computed u - u|^2 dtheta at radius r from the inverse FFT:
  /// |dy|_2 <= c eps log2(n) |y|_2, times the largest weight on the ring.
  Eigen::VectorXd eval_error_sq(const Eigen::MatrixXcd& F, double r) const {
    const int kmax = std::min(static_cast<int>(F.rows()) / 2, n_theta_ / 2);
    auto ph = sol_->ring(r, n_theta_);
    const double wmax = std::exp(-2 * t_ * (*std::min_element(ph.begin(), ph.end()) - phi_ref_));
    const double c = 8 * std::numeric_limits<double>::epsilon() * (std::log2(n_theta_) + 1);
    Eigen::VectorXd out(F.cols());
    for (int col = 0; col < F.cols(); ++col) {
      const double floor = coefficient_floor * F.col(col).cwiseAbs().maxCoeff();
      double m = 0.0, p = 1.0;
      for (int k = 0; k < kmax; ++k) {
        if (std::abs(F(k, col)) > floor) m += std::norm(F(k, col)) * p;
        p *= r * r;
      }
      out[col] = c * c * wmax * m;
    }
    return out;
  }

  /// Relative error of pointwise weights and positive sums over n_nodes radii.
  double relative_error(int n_nodes) const {
    const double range = sol_->phi.maxCoeff() - phi_ref_;
    return std::numeric_limits<double>::epsilon() * (4 + 2 * t_ * range + n_theta_ + n_nodes);
  }

 private:
  const ScalarPotentialSolution* sol_;
  double t_;
  int n_theta_;
  double phi_ref_;
};

/// Ring size resolving E f e^{-t phi} without aliasing of |u|^2.
inline int choose_n_theta(const Eigen::MatrixXcd& F, const ScalarPotentialSolution& sol, double t, int n_min = 64) {
  const int N = static_cast<int>(F.rows());
  double fmax = F.cwiseAbs().maxCoeff();
  int kmax = 0;
  for (int k = 0; k < N / 2; ++k)
    if (F.row(k).cwiseAbs().maxCoeff() > coefficient_floor * fmax) kmax = k;
  int bw = 0;
  const int probe = 4096;
  double phi_ref = sol.phi.minCoeff();
  for (double r : {0.2, 0.4, 0.577, 0.7, 0.85, 0.95}) {
    auto ph = sol.ring(r, probe);
    Eigen::VectorXcd w(probe);
    for (int j = 0; j < probe; ++j) w[j] = std::exp(-t * (ph[j] - phi_ref));
    Eigen::VectorXcd c = detail::fft_coeffs(w);
    double cm = c.cwiseAbs().maxCoeff();
    for (int k = 0; k < probe / 2; ++k)
      if (std::abs(c[k]) > 1e-16 * cm) bw = std::max(bw, k);
  }
  return std::max(n_min, next_pow2(2 * (kmax + bw) + 32));
}

// ---------------------------------------------------------------------------

enum class BetaMethod { circle, radial };

struct BetaOptions {
  double step = 0.0;  // radial differencing step; 0 picks min(1e-3, 0.05 / t)
  int n_theta = 0;
  double agreement_tol = 1e-3;
};

struct BetaResult {
  double value = 0.0;
  double circle = 0.0;
  std::optional<double> radial;
  bool flagged = false;  // methods disagree beyond agreement_tol
};

inline double beta_radial(const HardyRadial& H, const Eigen::VectorXcd& c, double step) {
  double F[5];
  Eigen::MatrixXcd col = c;
  for (int i = 0; i < 5; ++i) {
    double r = 1.0 - i * step;
    F[i] = std::log(r * H.a(col, r)[0]);
  }
  return (25 * F[0] - 48 * F[1] + 36 * F[2] - 16 * F[3] + 3 * F[4]) / (12 * step);
}

inline BetaResult beta_f(const CircleSpectralData& d, const Eigen::VectorXcd& c, const ScalarPotentialSolution& sol,
                         double t, BetaMethod method = BetaMethod::circle, BetaOptions opt = {}) {
  double n2 = d.norm_sq(c);
  if (!(n2 > 0)) throw std::invalid_argument("beta_f requires f != 0");
  BetaResult res;
  res.circle = 2.0 * t_form(d, c, t) / n2 + 1.0;
  res.value = res.circle;
  if (method == BetaMethod::radial) {
    Eigen::MatrixXcd F = c;
    int nt = opt.n_theta > 0 ? opt.n_theta : choose_n_theta(F, sol, t);
    HardyRadial H(sol, t, nt);
    double step = opt.step > 0 ? opt.step : std::min(1e-3, 0.05 / std::max(t, 1.0));
    res.radial = beta_radial(H, c, step);
    res.value = *res.radial;
    res.flagged = std::abs(*res.radial - res.circle) > opt.agreement_tol * std::max(1.0, std::abs(res.circle));
  }
  return res;
}

// ---------------------------------------------------------------------------

struct TestSpace {
  double t = 0.0;
  int m = 0;
  int M_t = 0;
  double nu_t = 0.0;
  double nu_1 = 0.0;          // from the proof chain
  double nu_1_display = 0.0;  // from the displayed recipe (reported)
  double C41 = 0.0, C42 = 0.0;
  double C41_display = 0.0, C42_display = 0.0;
  double dim_bound = 0.0;  // t - C41 nu_t - C42 t^{(1-2 alpha)+}
  Eigen::MatrixXcd coeff_matrix;  // N x dim, columns P+ e_n, m < n <= M_t
  int dim = 0;
  int rank = 0;
  bool empty = false;

  nlohmann::json to_json() const {
    return {{"t", t}, {"m", m}, {"M_t", M_t}, {"nu_t", nu_t}, {"nu_1", nu_1}, {"nu_1_display", nu_1_display},
            {"C41", C41}, {"C42", C42}, {"C41_display", C41_display}, {"C42_display", C42_display},
            {"dim_bound", dim_bound}, {"dim", dim}, {"rank", rank}, {"empty", empty}};
  }
};

/// Smallest m with w_m <= 1/(2 kappa^2), or -1.
inline int smallest_admissible_m(const CircleSpectralData& d, const TailSums& T) {
  const double lim = 1.0 / (2 * d.kappa * d.kappa);
  for (int m = 0; m <= T.m_max; ++m)
    if (T.w[m] <= lim) return m;
  return -1;
}

inline int numerical_rank(const Eigen::MatrixXcd& A, double rel = 1e-10) {
  if (A.cols() == 0) return 0;
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(A);
  const auto& s = svd.singularValues();
  int r = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > rel * s[0]) ++r;
  return r;
}

inline TestSpace build_test_space(const CircleSpectralData& d, const TailSums& T, double t, double nu_t, int m) {
  if (!(t >= 1)) throw std::invalid_argument("t must be >= 1");
  if (m < 0 || m > T.m_max) throw std::invalid_argument("m outside the tail-sum range");
  const double k = d.kappa;
  if (T.w[m] > 1.0 / (2 * k * k)) {
    std::ostringstream os;
    os << "w_" << m << " = " << T.w[m] << " exceeds 1/(2 kappa^2) = " << 1.0 / (2 * k * k) << "; choose a larger m";
    throw std::invalid_argument(os.str());
  }
  TestSpace S;
  S.t = t;
  S.m = m;
  S.nu_t = nu_t;
  const double tp = std::pow(t, std::max(0.0, 1.0 - 2 * T.alpha));
  const double c7sq = T.C7 * T.C7;
  S.nu_1 = k * (nu_t + 1) / 2 + 2 * k * k * k * c7sq * tp;
  S.nu_1_display = (nu_t + 1) / (2 * k * k) + 2 * c7sq * tp;
  S.C41 = k / 2;
  S.C42 = S.C41 + 2 * k * k * k * c7sq + m + 1;
  S.C41_display = 1.0 / (2 * k * k);
  S.C42_display = S.C41_display + 2 * c7sq + m + 1;
  S.dim_bound = t - S.C41 * nu_t - S.C42 * tp;
  S.M_t = std::max(0, static_cast<int>(std::ceil(t - S.nu_1 - 1 - 1e-12)));
  if (S.M_t <= m) {
    S.empty = true;
    S.coeff_matrix.resize(d.N, 0);
    return S;
  }
  if (S.M_t > d.N_basis) throw std::runtime_error("increase N_basis: M_t exceeds the basis range");
  S.dim = S.M_t - m;
  S.coeff_matrix.resize(d.N, S.dim);
  for (int n = m + 1; n <= S.M_t; ++n) S.coeff_matrix.col(n - m - 1) = hardy_project(d.e(n)).first;
  S.rank = numerical_rank(S.coeff_matrix.topRows(d.N / 2));
  return S;
}

// ---------------------------------------------------------------------------

/// Cutoff psi_delta(r) = S((1 - r) / delta) and its r-derivative.
inline double cutoff(double r, double delta) { return smooth_step((1.0 - r) / delta); }
inline double cutoff_slope(double r, double delta) { return -smooth_step_slope((1.0 - r) / delta) / delta; }

struct SampledSpinor {
  std::vector<double> r, r_weight;  // radial nodes with quadrature weights (boundary ring has weight 0)
  int n_theta = 0;
  Eigen::MatrixXcd u_plus;   // rows: radial nodes, cols: angles 2 pi j / n_theta
  Eigen::MatrixXcd u_minus;  // identically zero

  double norm_sq() const {
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += r_weight[i] * r[i] * u_plus.row(i).squaredNorm();
    return s * two_pi / n_theta;
  }
};

struct PolarGrid {
  int n_theta = 256;
  RadialOptions radial;
};

inline SampledSpinor assemble_test_function(const Eigen::VectorXcd& c, const ScalarPotentialSolution& sol, double t,
                                            double delta, PolarGrid grid = {}) {
  if (!(delta > 0 && delta <= 1.0 / 3.0)) throw std::invalid_argument("delta must lie in (0, 1/3]");
  RadialRule R = composite_gauss(cutoff_breaks(delta, grid.radial), grid.radial.order);
  R.r.push_back(1.0);
  R.w.push_back(0.0);
  SampledSpinor s;
  s.r = R.r;
  s.r_weight = R.w;
  s.n_theta = grid.n_theta;
  s.u_plus.resize(R.r.size(), grid.n_theta);
  s.u_minus = Eigen::MatrixXcd::Zero(R.r.size(), grid.n_theta);
  HardyRadial H(sol, t, grid.n_theta);
  const double scale = std::exp(-t * H.phi_ref());  // undo the reference shift
  Eigen::MatrixXcd F = c;
  for (std::size_t i = 0; i < R.r.size(); ++i) {
    Eigen::MatrixXcd U = H.u(F, R.r[i]);
    s.u_plus.row(i) = U.col(0).transpose() * (cutoff(R.r[i], delta) * scale);
  }
  return s;
}

// ---------------------------------------------------------------------------

inline constexpr double cutoff_slope_bound = smooth_step_slope_bound;

struct RayleighReport {
  double quotient = 0.0;
  double quotient_upper = 0.0;  // with the floating-point evaluation error bound
  double norm_sq = 0.0;  // scaled by e^{2 t phi_ref}
  double form = 0.0;
  double beta = 0.0;
  double exponent = 0.0;         // beta delta + 6 b_inf t delta^2
  double bound_paper = 0.0;      // e^E / (4 delta^2)
  double bound_corrected = 0.0;  // S^2 e^E / delta^2
  double bound_sharp = 0.0;      // S^2 e^E / (2 delta^2)
  bool hypothesis = false;       // beta <= -6 b_inf t delta
  bool within_bound = true;
  bool afest_ok = true;
  double afest_violation = 0.0;  // max relative increase of e^{br} r a_f(r) on [1-3 delta, 1]
  std::string status;

  nlohmann::json to_json() const {
    return {{"quotient", quotient}, {"quotient_upper", quotient_upper}, {"beta", beta}, {"exponent", exponent}, {"bound_paper", bound_paper},
            {"bound_corrected", bound_corrected}, {"bound_sharp", bound_sharp}, {"hypothesis", hypothesis},
            {"within_bound", within_bound}, {"afest_ok", afest_ok}, {"afest_violation", afest_violation},
            {"status", status}};
  }
};

struct RayleighBatch {
  std::vector<RayleighReport> items;
  std::optional<double> span_max;  // largest Rayleigh quotient on the span of the columns
  Eigen::MatrixXcd N_mat, P_mat;   // Gram matrices of |u|^2 and p(u) when the span was requested
  Eigen::VectorXd err_N, err_P;    // absolute evaluation error bounds per column
  double rho = 0.0;                // relative error of the positive sums
};

/// (P + eP) / (N - eN) with eX = 2 sqrt(X E) + E + 2 rho X.
inline double quotient_upper_bound(double P, double N, double EP, double EN, double rho) {
  const double eN = 2 * std::sqrt(N * EN) + EN + 2 * rho * N;
  const double eP = 2 * std::sqrt(P * EP) + EP + 2 * rho * P;
  if (!(N > eN)) return std::numeric_limits<double>::infinity();
  return (P + eP) / (N - eN);
}

struct CertifyOptions {
  std::optional<double> b_inf;
  bool span = false;
  RadialOptions radial;
  double afest_tol = 1e-9;
};

inline double field_sup(const ScalarPotentialSolution& sol) {
  double s = sampled_sup(sol.field, Domain::unit_disc(), 128);
  if (sol.field.sup_bound) s = std::max(s, *sol.field.sup_bound);
  return s;
}

/// max P v = mu N v after scaling N to unit diagonal; the masses of the columns span many decades.
inline double max_pencil_eigenvalue(const Eigen::MatrixXcd& P, const Eigen::MatrixXcd& N) {
  Eigen::VectorXd sc = N.diagonal().real().cwiseMax(std::numeric_limits<double>::min()).cwiseSqrt().cwiseInverse();
  Eigen::MatrixXcd Ns = sc.asDiagonal() * (0.5 * (N + N.adjoint())) * sc.asDiagonal();
  Eigen::MatrixXcd Ps = sc.asDiagonal() * (0.5 * (P + P.adjoint())) * sc.asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXcd> ges(Ps, Ns);
  return ges.eigenvalues().maxCoeff();
}

/// Rayleigh quotients p(u)/|u|^2 of the cut-off test functions built from the columns of F.
inline RayleighBatch rayleigh_certify(const CircleSpectralData& d, const Eigen::MatrixXcd& F,
                                      const ScalarPotentialSolution& sol, double t, double delta,
                                      CertifyOptions opt = {}) {
  if (!(delta > 0 && delta <= 1.0 / 3.0)) throw std::invalid_argument("delta must lie in (0, 1/3]");
  const double b_inf = opt.b_inf ? *opt.b_inf : field_sup(sol);
  const int cols = static_cast<int>(F.cols());
  RayleighBatch B;
  B.items.resize(cols);
  if (cols == 0) return B;
  int nt = opt.radial.n_theta > 0 ? opt.radial.n_theta : choose_n_theta(F, sol, t);
  HardyRadial H(sol, t, nt);
  RadialRule R = composite_gauss(cutoff_breaks(delta, opt.radial), opt.radial.order);
  R.r.push_back(1.0);
  R.w.push_back(0.0);
  const int nr = static_cast<int>(R.r.size());
  Eigen::MatrixXd A(nr, cols);
  Eigen::VectorXd Nd = Eigen::VectorXd::Zero(cols), Pd = Eigen::VectorXd::Zero(cols);
  B.err_N = Eigen::VectorXd::Zero(cols);
  B.err_P = Eigen::VectorXd::Zero(cols);
  B.rho = H.relative_error(nr);
  if (opt.span) {
    B.N_mat = Eigen::MatrixXcd::Zero(cols, cols);
    B.P_mat = Eigen::MatrixXcd::Zero(cols, cols);
  }
  const double dth = two_pi / nt;
  for (int i = 0; i < nr; ++i) {
    double r = R.r[i];
    Eigen::MatrixXcd U = H.u(F, r);
    A.row(i) = U.colwise().squaredNorm() * dth;
    double psi = cutoff(r, delta), dpsi = cutoff_slope(r, delta);
    double wn = R.w[i] * r * psi * psi, wp = R.w[i] * r * dpsi * dpsi;
    Nd += wn * A.row(i).transpose();
    Pd += wp * A.row(i).transpose();
    if (R.w[i] > 0) {
      Eigen::VectorXd E = H.eval_error_sq(F, r);
      B.err_N += wn * E;
      B.err_P += wp * E;
    }
    if (opt.span && R.w[i] > 0) {
      Eigen::MatrixXcd G = U.adjoint() * U * dth;
      B.N_mat += wn * G;
      B.P_mat += wp * G;
    }
  }
  const double S2 = cutoff_slope_bound * cutoff_slope_bound;
  for (int c = 0; c < cols; ++c) {
    RayleighReport& rep = B.items[c];
    rep.norm_sq = Nd[c];
    rep.form = Pd[c];
    rep.quotient = Pd[c] / Nd[c];
    rep.quotient_upper = quotient_upper_bound(Pd[c], Nd[c], B.err_P[c], B.err_N[c], B.rho);
    rep.beta = 2.0 * t_form(d, F.col(c), t) / d.norm_sq(F.col(c)) + 1.0;
    rep.exponent = rep.beta * delta + 6 * b_inf * t * delta * delta;
    double e = std::exp(rep.exponent);
    rep.bound_paper = e / (4 * delta * delta);
    rep.bound_corrected = S2 * e / (delta * delta);
    rep.bound_sharp = S2 * e / (2 * delta * delta);
    rep.hypothesis = rep.beta <= -6 * b_inf * t * delta;
    if (!rep.hypothesis) {
      rep.status = "hypothesis not satisfied";
      continue;
    }
    rep.status = "ok";
    rep.within_bound = rep.quotient <= rep.bound_corrected * (1 + 1e-9);
    // e^{br} r a_f(r) non-increasing on [1 - 3 delta, 1]
    const double b = -(rep.beta + 6 * b_inf * t * delta);
    double prev = -1.0, worst = 0.0;
    for (int i = 0; i < nr; ++i) {
      double r = R.r[i];
      if (r < 1 - 3 * delta) continue;
      double g = std::exp(b * (r - 1)) * r * A(i, c);
      if (prev >= 0) worst = std::max(worst, (g - prev) / prev);
      prev = g;
    }
    rep.afest_violation = std::max(0.0, worst);
    rep.afest_ok = rep.afest_violation <= opt.afest_tol;
    if (!rep.within_bound) {
      std::ostringstream os;
      os << "Rayleigh quotient " << rep.quotient << " exceeds corrected bound " << rep.bound_corrected;
      throw assertion_failure(os.str());
    }
  }
  if (opt.span) B.span_max = max_pencil_eigenvalue(B.P_mat, B.N_mat);
  return B;
}

/// Largest generalized eigenvalue of the leading k x k blocks.
inline double span_max_leading(const RayleighBatch& B, int k) {
  if (k <= 0) return 0.0;
  return max_pencil_eigenvalue(B.P_mat.topLeftCorner(k, k), B.N_mat.topLeftCorner(k, k));
}

/// Certified subspace inside the span of the leading columns.
struct SpanCertificate {
  int dim = 0;
  double bound = 0.0;  // upper bound for the Rayleigh quotient on the subspace
  double tau = 0.0;    // smallest scaled Gram eigenvalue kept
};

namespace detail {

// With D = diag(N) and |v|_D = 1: Gram roundoff moves scaled N by at most rho k and scaled P by at most
// rho sum_j P_jj / N_jj, and the evaluation errors add energies sum_j E_j / N_jj. On a subspace where the
// computed scaled N is >= tau and P <= mu N, the quotient is largest when N sits at tau.
inline double scaled_upper(const RayleighBatch& B, const Eigen::VectorXd& dg, const Eigen::VectorXd& pg, int k,
                           double mu, double tau) {
  const double a = B.err_P.head(k).cwiseQuotient(dg).sum();
  const double b = B.err_N.head(k).cwiseQuotient(dg).sum();
  const double dP = B.rho * pg.head(k).cwiseQuotient(dg.head(k)).sum();
  const double dN = B.rho * k;
  if (!(tau > dN)) return std::numeric_limits<double>::infinity();
  return quotient_upper_bound(std::max(mu, 0.0) * tau + dP, tau - dN, a, b, B.rho);
}

}  // namespace detail

/// Upper bound for the Rayleigh quotient on the whole span of the leading k columns.
inline double span_max_upper(const RayleighBatch& B, int k) {
  if (k <= 0) return 0.0;
  Eigen::MatrixXcd N = B.N_mat.topLeftCorner(k, k);
  N = 0.5 * (N + N.adjoint()).eval();
  Eigen::VectorXd dg = N.diagonal().real(), pg = B.P_mat.diagonal().real().head(k);
  if (!(dg.minCoeff() > 0)) return std::numeric_limits<double>::infinity();
  Eigen::VectorXd s = dg.cwiseSqrt().cwiseInverse();
  const double lmin =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(s.asDiagonal() * N * s.asDiagonal(), Eigen::EigenvaluesOnly)
          .eigenvalues()[0];
  return detail::scaled_upper(B, dg, pg, k, span_max_leading(B, k), lmin);
}

/// Largest subspace of the span of the leading k columns whose quotient bound stays <= lambda. Candidate
/// subspaces: for each cut tau of the scaled Gram spectrum, the low pencil directions inside the
/// eigenvectors above tau.
inline SpanCertificate span_certify(const RayleighBatch& B, int k, double lambda) {
  SpanCertificate best;
  if (k <= 0) return best;
  Eigen::MatrixXcd N = B.N_mat.topLeftCorner(k, k), P = B.P_mat.topLeftCorner(k, k);
  N = 0.5 * (N + N.adjoint()).eval();
  P = 0.5 * (P + P.adjoint()).eval();
  Eigen::VectorXd dg = N.diagonal().real(), pg = P.diagonal().real();
  if (!(dg.minCoeff() > 0)) return best;
  Eigen::VectorXd s = dg.cwiseSqrt().cwiseInverse();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> en(s.asDiagonal() * N * s.asDiagonal());
  const Eigen::VectorXd& ev = en.eigenvalues();
  Eigen::MatrixXcd Ps = s.asDiagonal() * P * s.asDiagonal();
  for (int lo = 0; lo < k; ++lo) {
    const double tau = ev[lo];
    if (!(tau > B.rho * k)) continue;
    if (k - lo <= best.dim) break;
    // N-orthonormal coordinates on the kept eigenvectors
    Eigen::MatrixXcd W = en.eigenvectors().rightCols(k - lo);
    for (int j = 0; j < W.cols(); ++j) W.col(j) /= std::sqrt(ev[lo + j]);
    Eigen::MatrixXcd Pw = W.adjoint() * Ps * W;
    Eigen::VectorXd mu =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(0.5 * (Pw + Pw.adjoint()), Eigen::EigenvaluesOnly).eigenvalues();
    int c = static_cast<int>(mu.size());
    while (c > best.dim) {
      double ub = detail::scaled_upper(B, dg, pg, k, mu[c - 1], tau);
      if (ub <= lambda) {
        best = {c, ub, tau};
        break;
      }
      --c;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

struct AzmConstants {
  double C51 = 0, C52 = 0, C53 = 0, t0 = 0, delta = 0, nu = 0;
};

/// Constants of the sub-exponential recipe with the cutoff constant S^2 in place of 1/4.
inline AzmConstants azm_constants(double t, double gamma, double c, double Cc, double b_inf) {
  if (!(gamma > 0 && gamma < 1)) throw std::invalid_argument("gamma must lie in (0,1)");
  if (!(c > 0 && Cc > 0)) throw std::invalid_argument("c and C must be positive");
  AzmConstants K;
  const double p = (1 - gamma) / gamma;
  const double sup = std::pow(p / (c * std::exp(1.0)), p);  // sup_t t^{1-gamma} e^{-c t^gamma}
  K.C51 = cutoff_slope_bound * std::sqrt(sup / Cc);
  K.C52 = 2 * c / K.C51 + 6 * b_inf * K.C51;
  K.t0 = std::max(1.0, std::pow(3 * K.C51, 2 / (1 - gamma)));
  K.delta = K.C51 * std::pow(t, (gamma - 1) / 2);
  K.nu = K.C52 * std::pow(t, (gamma + 1) / 2);
  return K;
}

enum class AzmStrategy { recipe, tuned };

struct AzmOptions {
  AzmStrategy strategy = AzmStrategy::tuned;
  int m = -1;  // -1: smallest admissible
  std::optional<double> b_inf;
  int n_delta = 16;
  double delta_min = 0.01;
  bool span_check = true;
  double gram_rel_tol = 0.0;    // tuned: drop near-null directions of the norm Gram matrix
  double pencil_margin = 1e-6;  // tuned: select pencil eigenvalues <= lambda (1 - margin)
  RadialOptions radial;
};

struct AzmFailure {
  int n;  // basis index n; -1 span, -2 rank
  double quotient;
};

struct AzmReport {
  double t = 0, gamma = 0, c = 0, Cc = 0, lambda = 0;
  std::string strategy;
  int dim = 0;
  int certified = 0;
  double bound = 0;
  double ratio = 0;
  std::vector<AzmFailure> failures;
  int m = 0, M_t = 0;
  double delta = 0, nu_t = 0, t0 = 0;
  AzmConstants constants;
  double C41 = 0, C42 = 0;
  std::optional<double> span_max;
  double max_basis_quotient = 0;
  std::vector<double> quotients;  // upper bounds per certified basis vector
  int pencil_count = 0;  // tuned: pencil eigenvalues below lambda at the chosen delta
  int basis_count = 0;   // tuned: prefix whose basis quotients verify
  bool empty = false;

  nlohmann::json to_json() const {
    nlohmann::json f = nlohmann::json::array();
    for (const auto& x : failures) f.push_back({{"n", x.n}, {"quotient", x.quotient}});
    nlohmann::json j = {{"t", t}, {"dim", dim}, {"certified", certified}, {"bound", bound}, {"ratio", ratio},
                        {"failures", f}, {"lambda", lambda}, {"gamma", gamma}, {"c", c}, {"C", Cc},
                        {"strategy", strategy}, {"m", m}, {"M_t", M_t}, {"delta", delta}, {"nu_t", nu_t},
                        {"t0", t0}, {"C51", constants.C51}, {"C52", constants.C52}, {"C53", constants.C53},
                        {"C41", C41}, {"C42", C42}, {"max_basis_quotient", max_basis_quotient},
                        {"empty", empty}, {"quotients", quotients}, {"pencil_count", pencil_count},
                        {"basis_count", basis_count}};
    j["span_max"] = span_max ? nlohmann::json(*span_max) : nlohmann::json(nullptr);
    return j;
  }
};

inline AzmReport azm_count(const ScalarPotentialSolution& sol, const CircleSpectralData& d, const TailSums& T,
                           double t, double gamma, double c, double Cc, AzmOptions opt = {}) {
  AzmReport rep;
  rep.t = t;
  rep.gamma = gamma;
  rep.c = c;
  rep.Cc = Cc;
  rep.lambda = Cc * std::exp(-c * std::pow(t, gamma));
  rep.strategy = opt.strategy == AzmStrategy::recipe ? "recipe" : "tuned";
  const double b_inf = opt.b_inf ? *opt.b_inf : field_sup(sol);
  AzmConstants K = azm_constants(std::max(t, 1e-300), gamma, c, Cc, b_inf);
  const int m = opt.m >= 0 ? opt.m : smallest_admissible_m(d, T);
  if (m < 0) throw std::runtime_error("no admissible m: w_m > 1/(2 kappa^2) over the tail range; increase N_basis");
  rep.m = m;
  rep.t0 = K.t0;
  // bound constants use the proof-chain C41, C42
  const double kap = d.kappa;
  rep.C41 = kap / 2;
  rep.C42 = rep.C41 + 2 * kap * kap * kap * T.C7 * T.C7 + m + 1;
  K.C53 = std::max({1.0, 3 * K.C51, rep.C41 * K.C52});
  rep.constants = K;
  rep.bound = t - K.C53 * std::pow(t, (gamma + 1) / 2) - rep.C42 * std::pow(t, std::max(0.0, 1 - 2 * T.alpha));
  CertifyOptions co;
  co.b_inf = b_inf;
  co.radial = opt.radial;

  if (opt.strategy == AzmStrategy::recipe) {
    rep.delta = K.delta;
    rep.nu_t = K.nu;
    if (t < K.t0) {
      rep.empty = true;
      return rep;
    }
    TestSpace S = build_test_space(d, T, t, K.nu, m);
    rep.M_t = S.M_t;
    if (S.empty) {
      rep.empty = true;
      return rep;
    }
    rep.dim = S.dim;
    co.span = opt.span_check;
    RayleighBatch B = rayleigh_certify(d, S.coeff_matrix, sol, t, K.delta, co);
    for (int j = 0; j < S.dim; ++j) {
      double q = B.items[j].quotient_upper;
      rep.quotients.push_back(q);
      rep.max_basis_quotient = std::max(rep.max_basis_quotient, q);
      if (!(q <= rep.lambda)) rep.failures.push_back({m + 1 + j, q});
    }
    if (opt.span_check) {
      rep.span_max = span_max_upper(B, S.dim);
      if (*rep.span_max > rep.lambda) rep.failures.push_back({-1, *rep.span_max});
    }
    rep.certified = rep.failures.empty() ? rep.dim : 0;
    rep.ratio = rep.certified / t;
    return rep;
  }

  // tuned: sweep delta; for each, the subspace of span{P+ e_n} spanned by the generalized
  // eigenvectors of (P, N) with eigenvalue <= lambda, then re-certify that basis by quadrature
  const int n_max = std::min({static_cast<int>(std::floor(t)), d.N_basis - 8});
  rep.nu_t = K.nu;
  if (n_max <= m) {
    rep.empty = true;
    rep.M_t = m;
    return rep;
  }
  const int cols = n_max - m;
  rep.M_t = n_max;
  Eigen::MatrixXcd F(d.N, cols);
  for (int n = m + 1; n <= n_max; ++n) F.col(n - m - 1) = hardy_project(d.e(n)).first;
  const int nt = opt.radial.n_theta > 0 ? opt.radial.n_theta : choose_n_theta(F, sol, t);
  co.radial.n_theta = nt;
  HardyRadial H(sol, t, nt);

  std::vector<double> deltas;
  const double dmax = 1.0 / 3.0;
  for (int i = 0; i < opt.n_delta; ++i)
    deltas.push_back(opt.delta_min * std::pow(dmax / opt.delta_min, opt.n_delta > 1 ? double(i) / (opt.n_delta - 1) : 1.0));
  std::vector<double> breaks;
  append_uniform(breaks, 0.0, 1.0, opt.radial.panels_inner);
  for (double dl : deltas)
    for (double s : {dl, 3 * dl}) breaks.push_back(1.0 - s);
  std::vector<double> outer;
  append_uniform(outer, 1.0 - opt.delta_min, 1.0, opt.radial.panels_outer);
  breaks.insert(breaks.end(), outer.begin(), outer.end());
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end(), [](double a, double b) { return std::abs(a - b) < 1e-14; }),
               breaks.end());
  RadialRule R = composite_gauss(breaks, opt.radial.order);

  const int nd = static_cast<int>(deltas.size());
  std::vector<Eigen::MatrixXcd> Ns(nd, Eigen::MatrixXcd::Zero(cols, cols)), Ps = Ns;
  const double dth = two_pi / nt;
  for (std::size_t i = 0; i < R.r.size(); ++i) {
    const double r = R.r[i];
    Eigen::MatrixXcd U = H.u(F, r);
    Eigen::MatrixXcd G = Eigen::MatrixXcd::Zero(cols, cols);
    G.selfadjointView<Eigen::Lower>().rankUpdate(U.adjoint(), dth);
    G = G.selfadjointView<Eigen::Lower>();
    for (int k = 0; k < nd; ++k) {
      double psi = cutoff(r, deltas[k]), dpsi = cutoff_slope(r, deltas[k]);
      if (psi != 0.0) Ns[k] += (R.w[i] * r * psi * psi) * G;
      if (dpsi != 0.0) Ps[k] += (R.w[i] * r * dpsi * dpsi) * G;
    }
  }

  // coefficient combinations (cols x k) with Rayleigh quotient <= lambda, ascending
  auto pencil = [&](int k) -> Eigen::MatrixXcd {
    Eigen::MatrixXcd N = 0.5 * (Ns[k] + Ns[k].adjoint()), P = 0.5 * (Ps[k] + Ps[k].adjoint());
    Eigen::VectorXd D = N.diagonal().real().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> en(D.asDiagonal() * N * D.asDiagonal());
    const auto& ev = en.eigenvalues();
    std::vector<int> keep;
    for (int j = 0; j < cols; ++j)
      if (ev[j] > opt.gram_rel_tol * ev[cols - 1]) keep.push_back(j);
    Eigen::MatrixXcd W(cols, keep.size());
    for (std::size_t j = 0; j < keep.size(); ++j)
      W.col(j) = D.asDiagonal() * en.eigenvectors().col(keep[j]) / std::sqrt(ev[keep[j]]);
    Eigen::MatrixXcd Pw = W.adjoint() * P * W;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ep(0.5 * (Pw + Pw.adjoint()));
    int c = 0;
    while (c < ep.eigenvalues().size() && ep.eigenvalues()[c] <= rep.lambda * (1 - opt.pencil_margin)) ++c;
    return W * ep.eigenvectors().leftCols(c);
  };

  int best = -1, best_k = nd - 1;
  for (int k = 0; k < nd; ++k) {
    int c = static_cast<int>(pencil(k).cols());
    if (c > best || (c == best && deltas[k] > deltas[best_k])) {
      best = c;
      best_k = k;
    }
  }
  rep.delta = deltas[best_k];
  if (best <= 0) {
    rep.empty = true;
    return rep;
  }
  rep.pencil_count = best;
  Eigen::MatrixXcd Fb = F * pencil(best_k);
  for (int j = 0; j < Fb.cols(); ++j) Fb.col(j) /= Fb.col(j).norm();
  co.span = opt.span_check;
  RayleighBatch B = rayleigh_certify(d, Fb, sol, t, rep.delta, co);
  int k = static_cast<int>(Fb.cols());
  while (k > 0 && !(B.items[k - 1].quotient_upper <= rep.lambda)) --k;
  rep.basis_count = k;
  for (int j = 0; j < k; ++j) {
    double q = B.items[j].quotient_upper;
    rep.quotients.push_back(q);
    rep.max_basis_quotient = std::max(rep.max_basis_quotient, q);
  }
  if (opt.span_check) {
    // a positive lower bound for the norm on the subspace already makes it k-dimensional
    SpanCertificate sc = span_certify(B, static_cast<int>(Fb.cols()), rep.lambda);
    // the pencil mixes columns whose masses differ by many decades; the raw columns can do better
    RayleighBatch BF = rayleigh_certify(d, F, sol, t, rep.delta, co);
    SpanCertificate sf = span_certify(BF, cols, rep.lambda);
    if (sf.dim > sc.dim) sc = sf;
    rep.dim = sc.dim;
    if (sc.dim > 0) rep.span_max = sc.bound;
  } else {
    rep.dim = k;
    if (k > 0 && numerical_rank(Fb.leftCols(k).topRows(d.N / 2)) != k) rep.failures.push_back({-2, 0.0});
  }
  k = rep.dim;
  rep.empty = k == 0;
  rep.certified = rep.failures.empty() ? rep.dim : 0;
  rep.ratio = rep.certified / t;
  return rep;
}

// ---------------------------------------------------------------------------

struct InequalityCheck {
  std::string name;
  int trials = 0;
  int violations = 0;
  double worst_slack = std::numeric_limits<double>::infinity();
  bool asserted = true;

  void record(double slack, double tol) {
    ++trials;
    worst_slack = std::min(worst_slack, slack);
    if (slack < -tol) ++violations;
  }
  nlohmann::json to_json() const {
    return {{"name", name}, {"trials", trials}, {"violations", violations},
            {"worst_slack", std::isfinite(worst_slack) ? nlohmann::json(worst_slack) : nlohmann::json("inf")},
            {"asserted", asserted}};
  }
};

struct InequalityReport {
  std::vector<InequalityCheck> checks;
  int dim_expected = 0;
  int dim_rank = 0;
  bool dim_ok = false;
  bool hardy_hypothesis = false;  // w_m <= 1/(2 kappa^2)
  double norm_ratio_max = 0.0;    // targeted |f|_h^2 / |f|^2 near the maximum of h, over max h
  double norm_ratio_min = 0.0;    // targeted |f|_h^2 / |f|^2 near the minimum of h, over min h

  int violations() const {
    int v = 0;
    for (const auto& c : checks)
      if (c.asserted) v += c.violations;
    return v;
  }
  nlohmann::json to_json() const {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& c : checks) a.push_back(c.to_json());
    return {{"checks", a}, {"dim_expected", dim_expected}, {"dim_rank", dim_rank}, {"dim_ok", dim_ok},
            {"hardy_hypothesis", hardy_hypothesis}, {"norm_ratio_max", norm_ratio_max},
            {"norm_ratio_min", norm_ratio_min}};
  }
};

inline InequalityReport inequality_suite(const CircleSpectralData& d, const TailSums& T, double t, int m, int M,
                                         int trials = 1000, std::uint64_t seed = 11, double tol = 1e-9) {
  if (!(0 <= m && m < M && M <= T.m_max)) throw std::invalid_argument("need 0 <= m < M <= m_max");
  InequalityReport rep;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> G;
  const int Nb = d.N_basis;
  const int K = Nb / 2;
  const double kap = d.kappa;
  auto random_gamma = [&](int lo, int hi) {
    Eigen::VectorXcd g = Eigen::VectorXcd::Zero(2 * Nb + 1);
    for (int n = lo; n <= hi; ++n) g[n + Nb] = cplx(G(rng), G(rng));
    return g;
  };

  InequalityCheck proj{"projection_T_bound"}, neq{"norm_equivalence"}, hardy{"hardy_lower_bound"},
      cross{"cross_term_bound"}, chain{"test_space_T_bound"}, display{"test_space_T_bound_displayed"};
  display.asserted = false;
  rep.hardy_hypothesis = T.w[m] <= 1.0 / (2 * kap * kap);
  const double wv = T.wv_product(M);

  for (int it = 0; it < trials; ++it) {
    // <f,Tf> <= (M - t)|f|_h^2 + <Q_M f, T Q_M f>
    {
      Eigen::VectorXcd c = d.from_gamma(random_gamma(-K, K));
      c /= std::sqrt(d.norm_h_sq(c));
      Eigen::VectorXcd g = d.gamma(c);
      double q = 0.0;
      for (int n = M + 1; n <= Nb; ++n) q += (n - t) * std::norm(g[n + Nb]);
      proj.record((M - t) * d.norm_h_sq(c) + q - t_form_direct(d, c, t), tol * std::max(1.0, t));
    }
    // kappa^{-1}|f|^2 <= |f|_h^2 <= kappa |f|^2
    {
      Eigen::VectorXcd c = Eigen::VectorXcd::Zero(d.N);
      for (int k = -K; k <= K; ++k) c[(k + d.N) % d.N] = cplx(G(rng), G(rng));
      c /= c.norm();
      double nh = d.norm_h_sq(c);
      neq.record(std::min(nh - 1.0 / kap, kap - nh), tol);
    }
    if (rep.hardy_hypothesis) {
      Eigen::VectorXcd c = d.from_gamma(random_gamma(m + 1, K));
      c /= std::sqrt(d.norm_h_sq(c));
      double p2 = hardy_project(c).first.squaredNorm();
      hardy.record(2 * kap * kap * p2 - 1.0, tol);
    }
    // <Q_M P+ f, T Q_M P+ f> <= M [w0 wM v0 vM]^{1/2} |f|_h^2, f in span{e_n : 0 < n <= M}
    {
      Eigen::VectorXcd c = d.from_gamma(random_gamma(1, M));
      c /= std::sqrt(d.norm_h_sq(c));
      Eigen::VectorXcd g = d.gamma(hardy_project(c).first);
      double q = 0.0;
      for (int n = M + 1; n <= Nb; ++n) q += (n - t) * std::norm(g[n + Nb]);
      cross.record(M * wv - q, tol * std::max(1.0, t));
    }
    // f+ in P+ span{e_n : m < n <= M}
    if (rep.hardy_hypothesis && M <= t) {
      Eigen::VectorXcd c = hardy_project(d.from_gamma(random_gamma(m + 1, M))).first;
      c /= c.norm();
      double lhs = t_form_direct(d, c, t);
      chain.record((M - t) / kap + 2 * kap * kap * M * wv - lhs, tol * std::max(1.0, t));
      display.record(-kap * kap * (t - M - 2 * M * wv) - lhs, tol * std::max(1.0, t));
    }
  }

  // targeted trigonometric bumps at the extremes of h
  {
    int jmax = 0, jmin = 0;
    d.h.maxCoeff(&jmax);
    d.h.minCoeff(&jmin);
    auto bump = [&](int j0) -> Eigen::VectorXcd {
      Eigen::VectorXcd c = Eigen::VectorXcd::Zero(d.N);
      const int L = K;
      for (int k = -L; k <= L; ++k) c[(k + d.N) % d.N] = (1.0 - std::abs(k) / (L + 1.0)) * std::polar(1.0, -k * d.theta(j0));
      return c / c.norm();
    };
    Eigen::VectorXcd cmax = bump(jmax), cmin = bump(jmin);
    double nmax = d.norm_h_sq(cmax), nmin = d.norm_h_sq(cmin);
    rep.norm_ratio_max = nmax / d.h[jmax];
    rep.norm_ratio_min = nmin / d.h[jmin];
    neq.record(std::min(nmax - 1.0 / kap, kap - nmax), tol);
    neq.record(std::min(nmin - 1.0 / kap, kap - nmin), tol);
  }

  rep.dim_expected = M - m;
  Eigen::MatrixXcd X(d.N / 2, M - m);
  for (int n = m + 1; n <= M; ++n) X.col(n - m - 1) = d.e(n).topRows(d.N / 2);
  rep.dim_rank = numerical_rank(X);
  rep.dim_ok = rep.dim_rank == rep.dim_expected;
  rep.checks = {proj, neq, hardy, cross, chain, display};
  return rep;
}

// ---------------------------------------------------------------------------

/// N_{D_R, tA}(lambda) = N_{D, tA'}(R^2 lambda) with A'(x) = R A(R x).
inline double disc_rescale(double R, double lambda) {
  if (!(R > 0)) throw std::invalid_argument("R must be positive");
  return R * R * lambda;
}

/// B'(x) = R^2 B(R x) on the unit disc, same flux as B on D_R.
inline ScalarField2D rescale_field(const ScalarField2D& B, double R, Point center = {}) {
  if (!(R > 0)) throw std::invalid_argument("R must be positive");
  ScalarField2D out = B;
  out.eval = [B, R, center](Point p) { return R * R * B.eval(center + R * p); };
  if (B.sup_bound) out.sup_bound = R * R * *B.sup_bound;
  if (B.holder_const) out.holder_const = *B.holder_const * R * R * std::pow(R, B.holder_alpha);
  return out;
}

}  // namespace pauli
