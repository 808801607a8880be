#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "pauli/common.hpp"

namespace pauli {

struct ScalarField2D {
  std::function<double(Point)> eval;
  double holder_alpha = 1.0;
  std::optional<double> holder_const;
  std::optional<double> sup_bound;

  double operator()(Point p) const { return eval(p); }
};

inline ScalarField2D constant_field(double b) {
  ScalarField2D f;
  f.eval = [b](Point) { return b; };
  f.holder_const = 0.0;
  f.sup_bound = std::abs(b);
  return f;
}

/// Sum of c * x^px * y^py terms.
inline ScalarField2D polynomial_field(std::vector<std::array<double, 3>> terms) {
  ScalarField2D f;
  f.eval = [terms](Point p) {
    double s = 0.0;
    for (const auto& [c, px, py] : terms) s += c * std::pow(p.x, px) * std::pow(p.y, py);
    return s;
  };
  return f;
}

/// B = base + amplitude * r^mode * cos(mode * theta) about `center`.
/// This is a harmonic polynomial plus a constant.
inline ScalarField2D radial_cos_field(double base, double amplitude, int mode, Point center = {}) {
  ScalarField2D f;
  f.eval = [=](Point p) {
    Point d = p - center;
    if (mode == 0) return base + amplitude;
    std::complex<double> z(d.x, d.y);
    return base + amplitude * std::real(std::pow(z, mode));
  };
  return f;
}

/// Field sampled on a tensor grid, bilinear in between. Rows are (x1, x2, value).
inline ScalarField2D grid_field(const std::vector<std::array<double, 3>>& rows) {
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    xs.push_back(r[0]);
    ys.push_back(r[1]);
  }
  auto uniq = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(xs);
  uniq(ys);
  if (xs.size() < 2 || ys.size() < 2) throw std::invalid_argument("grid field needs at least 2x2 samples");
  if (xs.size() * ys.size() != rows.size())
    throw std::invalid_argument("grid field samples do not form a tensor grid");
  std::vector<double> vals(rows.size(), 0.0);
  for (const auto& r : rows) {
    auto i = std::lower_bound(xs.begin(), xs.end(), r[0]) - xs.begin();
    auto j = std::lower_bound(ys.begin(), ys.end(), r[1]) - ys.begin();
    vals[j * xs.size() + i] = r[2];
  }
  ScalarField2D f;
  double bmax = 0.0;
  for (double v : vals) bmax = std::max(bmax, std::abs(v));
  f.sup_bound = bmax;
  f.eval = [xs, ys, vals](Point p) {
    auto locate = [](const std::vector<double>& g, double x, std::size_t& i, double& s) {
      if (x <= g.front()) { i = 0; s = 0.0; return; }
      if (x >= g.back()) { i = g.size() - 2; s = 1.0; return; }
      i = std::upper_bound(g.begin(), g.end(), x) - g.begin() - 1;
      s = (x - g[i]) / (g[i + 1] - g[i]);
    };
    std::size_t i, j;
    double s, u;
    locate(xs, p.x, i, s);
    locate(ys, p.y, j, u);
    std::size_t nx = xs.size();
    double v00 = vals[j * nx + i], v10 = vals[j * nx + i + 1];
    double v01 = vals[(j + 1) * nx + i], v11 = vals[(j + 1) * nx + i + 1];
    return (1 - s) * (1 - u) * v00 + s * (1 - u) * v10 + (1 - s) * u * v01 + s * u * v11;
  };
  return f;
}

inline std::vector<std::array<double, 3>> read_grid_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grid file: " + path);
  std::vector<std::array<double, 3>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::array<double, 3> r;
    if (!(ls >> r[0] >> r[1] >> r[2])) continue;  // header line
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Domains

struct Square {
  Point origin;
  double side = 1.0;
  Point center() const { return {origin.x + side / 2, origin.y + side / 2}; }
};
struct Disc {
  Point center;
  double radius = 1.0;
};
struct UnionOfSquares {
  std::vector<Square> squares;
};
/// resolution x resolution cells over the box [origin, origin + side]^2.
struct GridMask {
  Point origin;
  double side = 1.0;
  int resolution = 0;
  std::vector<std::uint8_t> inside;  // row-major, cell (i, j) at j * resolution + i
  double cell() const { return side / resolution; }
};

class Domain {
 public:
  using Kind = std::variant<Square, Disc, UnionOfSquares, GridMask>;

  Domain(Kind k) : kind_(std::move(k)) { validate(); }  // NOLINT(implicit)

  static Domain square(Point origin, double side) { return Domain(Square{origin, side}); }
  static Domain unit_square() { return square({0, 0}, 1.0); }
  static Domain disc(Point center, double radius) { return Domain(Disc{center, radius}); }
  static Domain unit_disc() { return disc({0, 0}, 1.0); }

  const Kind& kind() const { return kind_; }

  double area() const {
    return std::visit(
        [](const auto& d) -> double {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Square>) return d.side * d.side;
          else if constexpr (std::is_same_v<T, Disc>) return pi * d.radius * d.radius;
          else if constexpr (std::is_same_v<T, UnionOfSquares>) {
            double a = 0.0;
            for (const auto& s : d.squares) a += s.side * s.side;
            return a;
          } else {
            std::size_t n = std::count(d.inside.begin(), d.inside.end(), 1);
            return static_cast<double>(n) * d.cell() * d.cell();
          }
        },
        kind_);
  }

  /// Open-set membership (boundaries excluded).
  bool contains(Point p) const {
    return std::visit(
        [p](const auto& d) -> bool {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Square>) {
            return p.x > d.origin.x && p.x < d.origin.x + d.side && p.y > d.origin.y &&
                   p.y < d.origin.y + d.side;
          } else if constexpr (std::is_same_v<T, Disc>) {
            return norm(p - d.center) < d.radius;
          } else if constexpr (std::is_same_v<T, UnionOfSquares>) {
            // interior of the union of closed squares: shared edges are inside
            auto closed_in = [&d](Point q) {
              for (const auto& s : d.squares)
                if (q.x >= s.origin.x && q.x <= s.origin.x + s.side && q.y >= s.origin.y &&
                    q.y <= s.origin.y + s.side)
                  return true;
              return false;
            };
            double eta = 0.0;
            for (const auto& s : d.squares) eta = std::max(eta, s.side);
            eta *= 1e-12;
            for (int a = -1; a <= 1; a += 2)
              for (int b = -1; b <= 1; b += 2)
                if (!closed_in({p.x + a * eta, p.y + b * eta})) return false;
            return true;
          } else {
            double c = d.cell();
            double fx = (p.x - d.origin.x) / c, fy = (p.y - d.origin.y) / c;
            if (fx <= 0 || fy <= 0 || fx >= d.resolution || fy >= d.resolution) return false;
            int i = static_cast<int>(fx), j = static_cast<int>(fy);
            return d.inside[static_cast<std::size_t>(j) * d.resolution + i] != 0;
          }
        },
        kind_);
  }

  /// Axis-aligned bounding square: (origin, side).
  std::pair<Point, double> bbox() const {
    return std::visit(
        [](const auto& d) -> std::pair<Point, double> {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Square>) return {d.origin, d.side};
          else if constexpr (std::is_same_v<T, Disc>)
            return {{d.center.x - d.radius, d.center.y - d.radius}, 2 * d.radius};
          else if constexpr (std::is_same_v<T, UnionOfSquares>) {
            double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
            for (const auto& s : d.squares) {
              x0 = std::min(x0, s.origin.x);
              y0 = std::min(y0, s.origin.y);
              x1 = std::max(x1, s.origin.x + s.side);
              y1 = std::max(y1, s.origin.y + s.side);
            }
            return {{x0, y0}, std::max(x1 - x0, y1 - y0)};
          } else {
            return {d.origin, d.side};
          }
        },
        kind_);
  }

  double diameter() const {
    return std::visit(
        [this](const auto& d) -> double {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Disc>) return 2 * d.radius;
          else return std::sqrt(2.0) * bbox().second;
        },
        kind_);
  }

 private:
  void validate() const {
    std::visit(
        [](const auto& d) {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, Square>) {
            if (!(d.side > 0)) throw std::invalid_argument("square side must be positive");
          } else if constexpr (std::is_same_v<T, Disc>) {
            if (!(d.radius > 0)) throw std::invalid_argument("disc radius must be positive");
          } else if constexpr (std::is_same_v<T, UnionOfSquares>) {
            for (const auto& s : d.squares)
              if (!(s.side > 0)) throw std::invalid_argument("square side must be positive");
          } else {
            if (d.resolution < 1 || d.inside.size() != static_cast<std::size_t>(d.resolution) * d.resolution)
              throw std::invalid_argument("grid mask size does not match resolution");
          }
        },
        kind_);
  }

  Kind kind_;
};

/// Rasterise a domain onto a mask over its bounding square (cell centres tested).
inline GridMask rasterize(const Domain& dom, int resolution) {
  auto [o, s] = dom.bbox();
  GridMask m{o, s, resolution, std::vector<std::uint8_t>(static_cast<std::size_t>(resolution) * resolution, 0)};
  double c = s / resolution;
  for (int j = 0; j < resolution; ++j)
    for (int i = 0; i < resolution; ++i)
      m.inside[static_cast<std::size_t>(j) * resolution + i] =
          dom.contains({o.x + (i + 0.5) * c, o.y + (j + 0.5) * c}) ? 1 : 0;
  return m;
}

// ---------------------------------------------------------------------------
// Quadrature

struct QuadratureSpec {
  int resolution = 64;
};

struct QuadNode {
  Point p;
  double w;
};

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
  }
}

inline void append_square_nodes(const Square& s, int n, std::vector<QuadNode>& out) {
  double c = s.side / n, w = c * c;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) out.push_back({{s.origin.x + (i + 0.5) * c, s.origin.y + (j + 0.5) * c}, w});
}

/// Midpoint rule on squares, Gauss-Legendre(r) x trapezoid(theta) on discs.
inline std::vector<QuadNode> quadrature_nodes(const Domain& dom, QuadratureSpec q) {
  if (q.resolution < 2) throw std::invalid_argument("quadrature resolution must be >= 2");
  if (!(dom.area() > 0)) throw std::invalid_argument("degenerate domain (zero area)");
  std::vector<QuadNode> out;
  const int n = q.resolution;
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Square>) {
          append_square_nodes(d, n, out);
        } else if constexpr (std::is_same_v<T, Disc>) {
          std::vector<double> x, w;
          gauss_legendre(n, x, w);
          int nt = 2 * n;
          for (int i = 0; i < n; ++i) {
            double r = d.radius * (x[i] + 1) / 2;
            double wr = w[i] * d.radius / 2 * r * (two_pi / nt);
            for (int k = 0; k < nt; ++k) {
              double th = two_pi * k / nt;
              out.push_back({{d.center.x + r * std::cos(th), d.center.y + r * std::sin(th)}, wr});
            }
          }
        } else if constexpr (std::is_same_v<T, UnionOfSquares>) {
          for (const auto& s : d.squares) append_square_nodes(s, n, out);
        } else {
          double c = d.cell() / n;
          for (int j = 0; j < d.resolution; ++j)
            for (int i = 0; i < d.resolution; ++i) {
              if (!d.inside[static_cast<std::size_t>(j) * d.resolution + i]) continue;
              append_square_nodes({{d.origin.x + i * d.cell(), d.origin.y + j * d.cell()}, d.cell()}, n, out);
            }
          (void)c;
        }
      },
      dom.kind());
  return out;
}

inline double checked_eval(const ScalarField2D& B, Point p) {
  double v = B(p);
  if (!std::isfinite(v)) throw std::runtime_error("non-finite field sample at " + fmt_point(p));
  return v;
}

/// (1/2pi) * integral of B over dom.
inline double flux(const ScalarField2D& B, const Domain& dom, QuadratureSpec q = {}) {
  double s = 0.0;
  for (const auto& nd : quadrature_nodes(dom, q)) s += nd.w * checked_eval(B, nd.p);
  return s / two_pi;
}

// ---------------------------------------------------------------------------
// Orlicz space L log L

/// N-function (s+1)log(1+s) - s.
inline double n_function(double s) {
  if (s < 1e-4) return s * s * (0.5 - s * (1.0 / 6 - s / 12));
  return (s + 1) * std::log1p(s) - s;
}

struct LuxemburgOptions {
  double lo = 1e-12;
  double hi = 1e12;
  int max_iter = 200;
  double rel_tol = 1e-10;
};

/// inf{k > 0 : integral of N(|V|/k) <= 1}.
inline double luxemburg_norm(const ScalarField2D& V, const Domain& dom, QuadratureSpec q = {},
                             LuxemburgOptions opt = {}) {
  auto nodes = quadrature_nodes(dom, q);
  std::vector<double> a(nodes.size());
  double amax = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    a[i] = std::abs(checked_eval(V, nodes[i].p));
    amax = std::max(amax, a[i]);
  }
  if (amax == 0.0) return 0.0;
  auto F = [&](double k) {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += nodes[i].w * n_function(a[i] / k);
    return s;
  };
  double lo = opt.lo, hi = opt.hi;
  double flo = F(lo), fhi = F(hi);
  if (!(flo > 1.0) || !(fhi <= 1.0)) {
    std::ostringstream os;
    os << "luxemburg bracket not found: F(" << lo << ")=" << flo << ", F(" << hi << ")=" << fhi;
    throw std::runtime_error(os.str());
  }
  for (int it = 0; it < opt.max_iter; ++it) {
    double mid = std::sqrt(lo * hi);
    if (F(mid) > 1.0) lo = mid;
    else hi = mid;
    if (hi - lo <= opt.rel_tol * hi * 0.5) break;
  }
  return hi;
}

/// 2 C1 (|B|_L + |lambda| |1|_L), Luxemburg norms over dom.
inline double apriori_count_bound(const ScalarField2D& B, double lambda, const Domain& dom, double C1 = 1.0,
                                  QuadratureSpec q = {}) {
  if (!(C1 > 0)) throw std::invalid_argument("C1 must be positive");
  double nb = luxemburg_norm(B, dom, q);
  double n1 = luxemburg_norm(constant_field(1.0), dom, q);
  return 2.0 * C1 * (nb + std::abs(lambda) * n1);
}

// ---------------------------------------------------------------------------
// Oscillation

struct OscillationResult {
  double value = 0.0;
  int samples = 0;         // pairs drawn (0 when Holder metadata was used)
  int pairs_used = 0;      // pairs with |x - y| <= r inside the domain
  bool from_holder = false;
};

/// Upper estimate of sup{|B(x) - B(y)| : |x - y| <= r}.
///
/// Without Holder metadata: fixed-seed pairs with log-uniform separations in
/// [1e-6 diam, diam]; each usable pair contributes |dB| * (r/|d|)^alpha.
/// The pair set does not depend on r, so the estimate is non-decreasing in r.
inline OscillationResult oscillation(const ScalarField2D& B, const Domain& dom, double r, int samples = 20000,
                                     std::uint64_t seed = 0x5eed) {
  if (!(r > 0)) throw std::invalid_argument("oscillation radius must be positive");
  OscillationResult res;
  if (B.holder_const) {
    res.value = *B.holder_const * std::pow(r, B.holder_alpha);
    res.from_holder = true;
    return res;
  }
  auto [o, side] = dom.bbox();
  double diam = dom.diameter();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double lmin = std::log(1e-6 * diam), lmax = std::log(diam);
  res.samples = samples;
  for (int s = 0; s < samples; ++s) {
    Point x{o.x + side * U(rng), o.y + side * U(rng)};
    double mag = std::exp(lmin + (lmax - lmin) * U(rng));
    double ang = two_pi * U(rng);
    if (mag > r || !dom.contains(x)) continue;
    Point y{x.x + mag * std::cos(ang), x.y + mag * std::sin(ang)};
    if (!dom.contains(y)) continue;
    ++res.pairs_used;
    double d = std::abs(checked_eval(B, x) - checked_eval(B, y));
    res.value = std::max(res.value, d * std::pow(r / mag, B.holder_alpha));
  }
  return res;
}

// ---------------------------------------------------------------------------
// JSON

inline ScalarField2D field_from_json(const nlohmann::json& j) {
  std::string kind = j.at("kind");
  ScalarField2D f;
  if (kind == "constant") {
    f = constant_field(j.at("value").get<double>());
  } else if (kind == "polynomial") {
    std::vector<std::array<double, 3>> terms;
    for (const auto& t : j.at("coeffs")) terms.push_back({t.at(0), t.at(1), t.at(2)});
    f = polynomial_field(terms);
  } else if (kind == "radial_cos") {
    Point c{};
    if (j.contains("center")) c = {j["center"].at(0), j["center"].at(1)};
    f = radial_cos_field(j.value("base", 0.0), j.at("amplitude").get<double>(), j.at("mode").get<int>(), c);
  } else if (kind == "grid") {
    f = grid_field(read_grid_csv(j.at("file").get<std::string>()));
  } else {
    throw std::invalid_argument("unknown field kind: " + kind);
  }
  if (j.contains("holder_alpha")) f.holder_alpha = j["holder_alpha"];
  if (j.contains("holder_const")) f.holder_const = j["holder_const"].get<double>();
  if (j.contains("sup_bound")) f.sup_bound = j["sup_bound"].get<double>();
  return f;
}

inline Domain domain_from_json(const nlohmann::json& j) {
  std::string kind = j.at("kind");
  auto pt = [](const nlohmann::json& a) { return Point{a.at(0), a.at(1)}; };
  if (kind == "square") return Domain::square(pt(j.value("origin", nlohmann::json::array({0, 0}))), j.value("side", 1.0));
  if (kind == "disc") return Domain::disc(pt(j.value("center", nlohmann::json::array({0, 0}))), j.value("radius", 1.0));
  if (kind == "union_of_squares") {
    UnionOfSquares u;
    for (const auto& s : j.at("squares")) u.squares.push_back({pt(s.at("origin")), s.at("side")});
    return Domain(u);
  }
  if (kind == "grid_mask") {
    GridMask m;
    m.origin = pt(j.value("origin", nlohmann::json::array({0, 0})));
    m.side = j.value("side", 1.0);
    m.resolution = j.at("resolution");
    for (const auto& v : j.at("inside")) m.inside.push_back(v.get<int>() ? 1 : 0);
    return Domain(m);
  }
  throw std::invalid_argument("unknown domain kind: " + kind);
}

/// sup_bound when present, else the largest |B| over quadrature nodes.
inline double sampled_sup(const ScalarField2D& B, const Domain& dom, int resolution = 64) {
  if (B.sup_bound) return *B.sup_bound;
  double m = 0.0;
  for (const auto& nd : quadrature_nodes(dom, {resolution})) m = std::max(m, std::abs(checked_eval(B, nd.p)));
  return m;
}

}  // namespace pauli
