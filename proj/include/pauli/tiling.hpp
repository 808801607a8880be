#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "pauli/eig.hpp"
#include "pauli/field.hpp"
#include "pauli/gauge.hpp"
#include "pauli/landau.hpp"

namespace pauli {

/// Grid-aligned squares of side 2^-k inside a region, and the piecewise field B_k.
struct Tiling {
  int k = 1;
  double side = 0.5;
  double delta_inner = 0.0;
  std::vector<Point> origins;
  std::vector<double> field_values;  // B at square centres
  double beta_k = 0.0;
  double alpha_k = 0.0;
  bool empty = false;

  std::size_t size() const { return origins.size(); }
  Square square(std::size_t j) const { return {origins[j], side}; }
  Domain U() const {
    UnionOfSquares u;
    for (std::size_t j = 0; j < size(); ++j) u.squares.push_back(square(j));
    return Domain(u);
  }
  double area() const { return static_cast<double>(size()) * side * side; }

  /// Index of the square whose closure holds p, or -1.
  int locate(Point p) const {
    for (std::size_t j = 0; j < size(); ++j) {
      const Point& o = origins[j];
      if (p.x >= o.x && p.x <= o.x + side && p.y >= o.y && p.y <= o.y + side) return static_cast<int>(j);
    }
    return -1;
  }

  /// B_k: the square-centre value on each square, 0 elsewhere.
  ScalarField2D piecewise_field() const {
    ScalarField2D f;
    auto self = *this;
    f.eval = [self](Point p) {
      int j = self.locate(p);
      return j < 0 ? 0.0 : self.field_values[j];
    };
    return f;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["k"] = k;
    j["origins"] = nlohmann::json::array();
    for (const auto& o : origins) j["origins"].push_back({o.x, o.y});
    j["b_values"] = field_values;
    j["beta_k"] = beta_k;
    j["alpha_k"] = alpha_k;
    return j;
  }
};

struct TilingOptions {
  int osc_samples = 20000;
  int square_samples = 5;  // per-axis samples for the per-square deviation
  double tol = 1e-12;
};

namespace detail {

/// Closed containment of the tile [o, o+s]^2 in the closure of region_delta.
inline bool tile_fits(const Domain& region, Point o, double s, double delta, double tol) {
  return std::visit(
      [&](const auto& d) -> bool {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Square>) {
          double lo_x = d.origin.x + delta - tol, hi_x = d.origin.x + d.side - delta + tol;
          double lo_y = d.origin.y + delta - tol, hi_y = d.origin.y + d.side - delta + tol;
          return o.x >= lo_x && o.x + s <= hi_x && o.y >= lo_y && o.y + s <= hi_y;
        } else if constexpr (std::is_same_v<T, Disc>) {
          double R = d.radius - delta + tol;
          if (R <= 0) return false;
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              if (norm(Point{o.x + a * s, o.y + b * s} - d.center) > R) return false;
          return true;
        } else {
          // sampled: interior samples of the tile keep distance >= delta to the complement
          const int m = 8, na = 16;
          const double shrink = tol * 10 + 1e-9 * s;
          for (int j = 0; j <= m; ++j)
            for (int i = 0; i <= m; ++i) {
              Point p{o.x + shrink + (s - 2 * shrink) * i / m, o.y + shrink + (s - 2 * shrink) * j / m};
              if (!region.contains(p)) return false;
              if (delta > 0)
                for (int a = 0; a < na; ++a) {
                  double th = two_pi * a / na;
                  if (!region.contains({p.x + delta * std::cos(th), p.y + delta * std::sin(th)})) return false;
                }
            }
          return true;
        }
      },
      region.kind());
}

}  // namespace detail

inline Tiling build_tiling(const ScalarField2D& B, const Domain& region, int k, double delta_inner = 0.0,
                           TilingOptions opt = {}) {
  if (k < 1) throw std::invalid_argument("tiling level k must be >= 1");
  if (delta_inner < 0) throw std::invalid_argument("delta_inner must be >= 0");
  Tiling T;
  T.k = k;
  T.side = std::ldexp(1.0, -k);
  T.delta_inner = delta_inner;
  auto [o, s] = region.bbox();
  const long long i0 = static_cast<long long>(std::floor(o.x / T.side)) - 1;
  const long long j0 = static_cast<long long>(std::floor(o.y / T.side)) - 1;
  const long long i1 = static_cast<long long>(std::ceil((o.x + s) / T.side)) + 1;
  const long long j1 = static_cast<long long>(std::ceil((o.y + s) / T.side)) + 1;
  for (long long j = j0; j <= j1; ++j)
    for (long long i = i0; i <= i1; ++i) {
      Point org{static_cast<double>(i) * T.side, static_cast<double>(j) * T.side};
      if (detail::tile_fits(region, org, T.side, delta_inner, opt.tol)) {
        T.origins.push_back(org);
        T.field_values.push_back(checked_eval(B, {org.x + T.side / 2, org.y + T.side / 2}));
      }
    }
  if (T.origins.empty()) {
    T.empty = true;
    return T;
  }
  const double r = std::ldexp(1.0, -k) / std::sqrt(2.0);
  if (B.holder_const) {
    T.beta_k = *B.holder_const * std::pow(r, B.holder_alpha);
  } else {
    double b = oscillation(B, T.U(), r, opt.osc_samples).value;
    const int m = opt.square_samples;
    for (std::size_t q = 0; q < T.size(); ++q) {
      Point org = T.origins[q];
      for (int jj = 0; jj < m; ++jj)
        for (int ii = 0; ii < m; ++ii) {
          Point p{org.x + T.side * ii / (m - 1), org.y + T.side * jj / (m - 1)};
          b = std::max(b, std::abs(checked_eval(B, p) - T.field_values[q]));
        }
    }
    T.beta_k = b;
  }
  T.alpha_k = std::ldexp(1.0, -k) / (2.0 * std::sqrt(2.0)) * T.beta_k;
  return T;
}

// ---------------------------------------------------------------------------

struct KSchedule {
  int k = 0;
  double t_alpha_sq = 0.0;   // t alpha_k^2 = t 2^{-2k-3} beta_k^2 (<= beta_k / 8)
  double scale_ratio = 0.0;  // 2^{2k} / t (<= 4 beta_{k-1} past the first threshold)
  double first_threshold = 0.0;  // 2^{2 k0} / beta(k0)
};

/// k(t) = min{k >= k0 : 2^{2k} / beta(k) >= t}.
inline KSchedule k_schedule(const std::function<double(int)>& beta, double t, int k0, int k_max = 62) {
  if (!(t > 0)) throw std::invalid_argument("t must be positive");
  KSchedule ks;
  double prev = beta(k0);
  if (!(prev >= 0)) throw std::invalid_argument("beta must be non-negative");
  ks.first_threshold = prev > 0 ? std::ldexp(1.0, 2 * k0) / prev : std::numeric_limits<double>::infinity();
  for (int k = k0; k <= k_max; ++k) {
    double b = beta(k);
    if (b > prev * (1 + 1e-12)) {
      std::ostringstream os;
      os << "non-monotone beta at k=" << k << ": " << b << " > " << prev;
      throw std::invalid_argument(os.str());
    }
    prev = b;
    double lhs = b > 0 ? std::ldexp(1.0, 2 * k) / b : std::numeric_limits<double>::infinity();
    if (lhs >= t) {
      ks.k = k;
      ks.t_alpha_sq = t * std::ldexp(1.0, -2 * k - 3) * b * b;
      ks.scale_ratio = std::ldexp(1.0, 2 * k) / t;
      return ks;
    }
  }
  throw std::runtime_error("k_schedule exceeded k_max");
}

// ---------------------------------------------------------------------------

struct BoundaryLayer {
  GridMask mask;  // Lambda_{k,delta} intersected with the region
  double measured_area = 0.0;
  double measure_bound = 0.0;  // |region \ U| + 4 |region| delta
  double grid_tol = 0.0;
};

/// Points of the region not at distance >= 2^-k delta inside some tile.
inline BoundaryLayer boundary_layer(const Tiling& T, double delta, const Domain& region, int resolution = 1024) {
  if (!(delta > 0 && delta < 1)) throw std::invalid_argument("delta must lie in (0,1)");
  BoundaryLayer L;
  auto [o, s] = region.bbox();
  L.mask = GridMask{o, s, resolution, std::vector<std::uint8_t>(static_cast<std::size_t>(resolution) * resolution, 0)};
  const double c = s / resolution;
  const double w = T.side * delta;
  std::size_t count = 0;
  for (int j = 0; j < resolution; ++j)
    for (int i = 0; i < resolution; ++i) {
      Point p{o.x + (i + 0.5) * c, o.y + (j + 0.5) * c};
      if (!region.contains(p)) continue;
      bool deep = false;
      int q = T.locate(p);
      if (q >= 0) {
        Point org = T.origins[q];
        deep = p.x >= org.x + w && p.x <= org.x + T.side - w && p.y >= org.y + w && p.y <= org.y + T.side - w;
      }
      if (!deep) {
        L.mask.inside[static_cast<std::size_t>(j) * resolution + i] = 1;
        ++count;
      }
    }
  L.measured_area = static_cast<double>(count) * c * c;
  const double area = region.area();
  L.measure_bound = std::max(0.0, area - T.area()) + 4.0 * area * delta;
  // boundary cells of the region and of every shrunken square may be misclassified
  double perim = 4.0 * s + static_cast<double>(T.size()) * 4.0 * T.side;
  L.grid_tol = perim * c;
  if (L.measured_area > L.measure_bound + L.grid_tol) {
    std::ostringstream os;
    os << "boundary layer area " << L.measured_area << " exceeds bound " << L.measure_bound;
    throw assertion_failure(os.str());
  }
  return L;
}

// ---------------------------------------------------------------------------
// Partition of unity

/// Quintic smooth step on [0, 1], clamped; sup slope 15/8.
inline double smooth_step(double s) {
  if (s <= 0) return 0.0;
  if (s >= 1) return 1.0;
  return s * s * s * (10 - 15 * s + 6 * s * s);
}
inline double smooth_step_slope(double s) {
  if (s <= 0 || s >= 1) return 0.0;
  return 30 * s * s * (1 - s) * (1 - s);
}
inline constexpr double smooth_step_slope_bound = 15.0 / 8.0;

struct PartitionOfUnity {
  Point origin;
  double spacing = 0.0;
  int grid = 0;               // samples per axis minus one
  double width = 0.0;         // 2^-k delta
  std::vector<double> chi0;   // per sample
  std::vector<int> owner;     // square whose chi_j may be non-zero, or -1
  std::vector<double> chi_owner;
  std::vector<double> grad_sq;  // |grad chi_0|^2 + sum_j |grad chi_j|^2
  double measured_C3 = 0.0;     // sup(grad_sq) * width^2
  double max_sum_dev = 0.0;     // max |chi_0^2 + sum chi_j^2 - 1|

  Point point(std::size_t idx) const {
    int i = static_cast<int>(idx % (grid + 1)), j = static_cast<int>(idx / (grid + 1));
    return {origin.x + i * spacing, origin.y + j * spacing};
  }
  /// chi_j at sample idx.
  double chi(int j, std::size_t idx) const { return owner[idx] == j ? chi_owner[idx] : 0.0; }
};

inline PartitionOfUnity partition_of_unity(const Tiling& T, double delta, int grid, Point origin, double extent) {
  if (!(delta > 0 && delta < 1)) throw std::invalid_argument("delta must lie in (0,1)");
  PartitionOfUnity P;
  P.origin = origin;
  P.grid = grid;
  P.spacing = extent / grid;
  P.width = T.side * delta;
  if (P.spacing > P.width / 8) {
    std::ostringstream os;
    os << "insufficient grid resolution: spacing " << P.spacing << " > layer width / 8 = " << P.width / 8;
    throw std::invalid_argument(os.str());
  }
  const std::size_t ns = static_cast<std::size_t>(grid + 1) * (grid + 1);
  P.chi0.assign(ns, 1.0);
  P.owner.assign(ns, -1);
  P.chi_owner.assign(ns, 0.0);
  P.grad_sq.assign(ns, 0.0);
  const double w = P.width;
  double gmax = 0.0;
  for (std::size_t idx = 0; idx < ns; ++idx) {
    Point p = P.point(idx);
    int j = T.locate(p);
    double chi = 0.0, gx = 0.0, gy = 0.0;
    if (j >= 0) {
      Point o = T.origins[j];
      double a = (p.x - o.x) / w, b = (o.x + T.side - p.x) / w;
      double c = (p.y - o.y) / w, d = (o.y + T.side - p.y) / w;
      double sx = smooth_step(a) * smooth_step(b), sy = smooth_step(c) * smooth_step(d);
      double dsx = (smooth_step_slope(a) * smooth_step(b) - smooth_step(a) * smooth_step_slope(b)) / w;
      double dsy = (smooth_step_slope(c) * smooth_step(d) - smooth_step(c) * smooth_step_slope(d)) / w;
      chi = sx * sy;
      gx = dsx * sy;
      gy = sx * dsy;
      if (chi > 0) {
        P.owner[idx] = j;
        P.chi_owner[idx] = chi;
      }
    }
    double rem = std::max(0.0, 1.0 - chi * chi);
    P.chi0[idx] = std::sqrt(rem);
    double g2 = gx * gx + gy * gy;
    double g0 = rem > 1e-12 ? chi * chi * g2 / rem : 0.0;
    P.grad_sq[idx] = g2 + g0;
    gmax = std::max(gmax, P.grad_sq[idx]);
    P.max_sum_dev = std::max(P.max_sum_dev, std::abs(P.chi0[idx] * P.chi0[idx] + chi * chi - 1.0));
  }
  P.measured_C3 = gmax * w * w;
  return P;
}

inline PartitionOfUnity partition_of_unity(const Tiling& T, double delta, int grid, const Domain& region) {
  auto [o, s] = region.bbox();
  return partition_of_unity(T, delta, grid, o, s);
}

// ---------------------------------------------------------------------------
// Counting-function bracket

struct BracketOptions {
  int n_region = 128;      // grid for the region operator
  int n_square = 64;       // grid for each constant-field square
  double C1 = 1.0;
  std::optional<double> C3;  // measured from the partition when unset
  int layer_resolution = 256;
  int pou_grid = 0;          // 0: smallest grid resolving the layer
  double delta_inner = 0.0;
};

struct BracketReport {
  long long N_region = 0;          // N(lambda)
  long long N_region_plus = 0;     // N(lambda + tol)
  long long N_region_minus = 0;    // N(lambda - tol)
  double lambda_tol = 0.0;         // two Weyl spacings 2 * 2pi / |region|
  double level_lower = 0.0;        // (1-eps)(lambda - t^2 alpha^2 / eps)
  double level_upper = 0.0;        // (1+eps)(lambda + t^2 alpha^2 / eps + C3 2^{2k} / delta^2)
  double level_layer = 0.0;
  long long squares_lower = 0;
  long long squares_upper = 0;
  long long layer_count = 0;       // discrete count on the boundary layer
  double layer_apriori = 0.0;      // apriori_count_bound on the layer (C1 relative)
  double C3 = 0.0;
  double lower_slack = 0.0;        // N(lambda + tol) - squares_lower
  double upper_slack = 0.0;        // layer_count + squares_upper - N(lambda - tol)
  bool lower_holds = false;
  bool upper_holds = false;
  bool saturated = false;
  std::size_t squares = 0;
  double alpha_k = 0.0;

  nlohmann::json to_json() const {
    return {{"N_region", N_region}, {"N_region_plus", N_region_plus}, {"N_region_minus", N_region_minus},
            {"lambda_tol", lambda_tol}, {"level_lower", level_lower}, {"level_upper", level_upper},
            {"squares_lower", squares_lower}, {"squares_upper", squares_upper}, {"layer_count", layer_count},
            {"layer_apriori", layer_apriori}, {"C3", C3}, {"lower_slack", lower_slack},
            {"upper_slack", upper_slack}, {"lower_holds", lower_holds}, {"upper_holds", upper_holds},
            {"saturated", saturated}, {"squares", squares}, {"alpha_k", alpha_k}};
  }
};

/// Both inequalities of the localisation corollary, evaluated with discrete counts.
inline BracketReport bracket_counts(const ScalarField2D& B, const VectorPotential& A, const Domain& region, int k,
                                    double delta, double epsilon, double t, double lambda, BracketOptions opt = {}) {
  if (!(epsilon > 0 && epsilon < 1)) throw std::invalid_argument("epsilon must lie in (0,1)");
  BracketReport rep;
  Tiling T = build_tiling(B, region, k, opt.delta_inner);
  rep.squares = T.size();
  rep.alpha_k = T.alpha_k;
  if (opt.C3) {
    rep.C3 = *opt.C3;
  } else {
    auto [o, s] = region.bbox();
    int g = opt.pou_grid > 0 ? opt.pou_grid : static_cast<int>(std::ceil(8.0 * s / (T.side * delta))) + 1;
    rep.C3 = partition_of_unity(T, delta, g, o, s).measured_C3;
  }

  auto op = assemble_pauli(region, A, B, t, opt.n_region);
  rep.lambda_tol = 2.0 * two_pi / region.area();
  rep.N_region = count_below(op, lambda).count;
  rep.N_region_plus = count_below(op, lambda + rep.lambda_tol).count;
  rep.N_region_minus = count_below(op, lambda - rep.lambda_tol).count;

  const double ta2 = t * t * T.alpha_k * T.alpha_k / epsilon;
  rep.level_lower = (1 - epsilon) * (lambda - ta2);
  rep.level_layer = lambda + ta2 + rep.C3 * std::ldexp(1.0, 2 * k) / (delta * delta);
  rep.level_upper = (1 + epsilon) * rep.level_layer;

  std::map<double, std::pair<long long, long long>> cache;
  for (std::size_t j = 0; j < T.size(); ++j) {
    double b = T.field_values[j];
    auto it = cache.find(b);
    if (it == cache.end()) {
      Square sq = T.square(j);
      Domain d = Domain(sq);
      auto sop = assemble_pauli(d, symmetric_gauge(b, sq.center()), constant_field(b), t, opt.n_square);
      auto [glo, ghi] = gershgorin(sop.M);
      if (rep.level_upper >= ghi) rep.saturated = true;
      long long lo = count_below(sop, rep.level_lower).count;
      long long hi = count_below(sop, rep.level_upper).count;
      it = cache.emplace(b, std::make_pair(lo, hi)).first;
    }
    rep.squares_lower += it->second.first;
    rep.squares_upper += it->second.second;
  }

  BoundaryLayer L = boundary_layer(T, delta, region, opt.layer_resolution);
  Domain layer(L.mask);
  try {
    rep.layer_count = count_below(restrict(op, layer), rep.level_layer).count;
  } catch (const std::runtime_error&) {
    rep.layer_count = 0;  // no grid node falls in the layer
  }
  // a layer thinner than a mask pixel has no measurable area
  rep.layer_apriori = L.measured_area > 0 ? apriori_count_bound(B, rep.level_layer, layer, opt.C1, {2}) : 0.0;

  rep.lower_slack = static_cast<double>(rep.N_region_plus - rep.squares_lower);
  rep.upper_slack = static_cast<double>(rep.layer_count + rep.squares_upper - rep.N_region_minus);
  rep.lower_holds = rep.lower_slack >= 0;
  rep.upper_holds = rep.upper_slack >= 0;
  return rep;
}

}  // namespace pauli
