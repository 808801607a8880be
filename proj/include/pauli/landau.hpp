#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include "pauli/common.hpp"
#include "pauli/field.hpp"

namespace pauli::landau {

enum class Variant { raw, lower, upper };

inline Variant parse_variant(const std::string& s) {
  if (s == "raw") return Variant::raw;
  if (s == "lower") return Variant::lower;
  if (s == "upper") return Variant::upper;
  throw std::invalid_argument("unknown variant: " + s);
}

struct Threshold {
  bool on = false;
  long long k = 0;  // lambda = 2 k |b| when on
};

/// Detects lambda in 2|b|N0. Exact when fma(2|b|, k, -lambda) vanishes
/// (covers dyadic inputs), otherwise relative tolerance 1e-12.
inline Threshold threshold(double b_abs, double lambda) {
  Threshold th;
  if (b_abs == 0.0 || lambda < 0.0) return th;
  double q = lambda / (2.0 * b_abs);
  double k = std::nearbyint(q);
  if (k < 0) return th;
  if (std::fma(2.0 * b_abs, k, -lambda) == 0.0 || std::abs(q - k) <= 1e-12 * std::max(1.0, q)) {
    th.on = true;
    th.k = static_cast<long long>(k);
  }
  return th;
}

/// #{m in Z : 2|m b| <= lambda} off thresholds.
inline long long landau_count_raw(double b_abs, double lambda) {
  if (lambda < 0) return 0;
  return 2 * static_cast<long long>(std::floor(lambda / (2.0 * b_abs))) + 1;
}

/// nu, nu-, nu+ of the constant-field Landau problem.
inline double nu(double b, double lambda, Variant v = Variant::raw) {
  double ba = std::abs(b);
  if (v == Variant::raw) {
    if (ba == 0.0) throw std::invalid_argument("on Landau threshold: b = 0 is excluded");
    if (threshold(ba, lambda).on) throw std::invalid_argument("on Landau threshold");
  }
  if (lambda < 0) return 0.0;
  if (ba == 0.0) return lambda / two_pi;
  Threshold th = threshold(ba, lambda);
  long long count;
  if (th.on) count = (v == Variant::lower) ? (th.k == 0 ? 0 : 2 * th.k - 1) : 2 * th.k + 1;
  else count = landau_count_raw(ba, lambda);
  return ba / two_pi * static_cast<double>(count);
}

/// (|b|/2pi) #{m in N0 : (2m+1)|b| <= lambda}; mu(0, lambda) = lambda/(4pi).
inline double mu_cdv(double b_abs, double lambda) {
  if (b_abs < 0) throw std::invalid_argument("mu_cdv needs |b| >= 0");
  if (lambda < 0) return 0.0;
  if (b_abs == 0.0) return lambda / (4 * pi);
  if (lambda < b_abs) return 0.0;
  long long m = static_cast<long long>(std::floor((lambda / b_abs - 1.0) / 2.0)) + 1;
  return b_abs / two_pi * static_cast<double>(m);
}

/// Integral over dom of nu-/nu+(B(x), Lambda).
inline double semiclassical_integral(const ScalarField2D& B, const Domain& dom, double Lambda, Variant v,
                                     QuadratureSpec q = {}) {
  if (v == Variant::raw) throw std::invalid_argument("semiclassical_integral needs lower or upper");
  if (Lambda < 0) return 0.0;
  double s = 0.0;
  for (const auto& nd : quadrature_nodes(dom, q)) s += nd.w * nu(checked_eval(B, nd.p), Lambda, v);
  return s;
}

struct Bracket {
  double lower = 0.0;
  double upper = 0.0;
};

/// Constant field on a square of side R: R^2 (1-rho)^2 nu+(b, lambda - C2/(R rho)^2) and R^2 nu+(b, lambda).
inline Bracket const_square_bracket(double R, double b, double lambda, double rho, double C2 = 1.0) {
  if (!(rho > 0 && rho < 1)) throw std::invalid_argument("rho must lie in (0,1)");
  if (!(R > 0)) throw std::invalid_argument("R must be positive");
  if (!(C2 > 0)) throw std::invalid_argument("C2 must be positive");
  Bracket br;
  br.upper = R * R * nu(b, lambda, Variant::upper);
  br.lower = R * R * (1 - rho) * (1 - rho) * nu(b, lambda - C2 / (R * R * rho * rho), Variant::upper);
  return br;
}

}  // namespace pauli::landau
