#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pauli/discretize.hpp"
#include "pauli/eig.hpp"
#include "pauli/field.hpp"
#include "pauli/gauge.hpp"
#include "pauli/landau.hpp"
#include "pauli/tiling.hpp"
#include "pauli/zeromode.hpp"

namespace pauli {

inline constexpr const char* toolkit_version = "0.1.0";

// ---------------------------------------------------------------------------
// Tables and export

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> notes;

  void add(std::vector<double> row) {
    if (row.size() != columns.size()) throw std::invalid_argument("row width does not match columns");
    rows.push_back(std::move(row));
  }
  double at(std::size_t row, const std::string& col) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c] == col) return rows.at(row).at(c);
    throw std::out_of_range("no column " + col);
  }
  bool operator==(const Table& o) const { return columns == o.columns && rows == o.rows; }
};

/// FNV-1a 64 of the compact JSON dump, hex.
inline std::string config_hash(const nlohmann::json& cfg) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : cfg.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline nlohmann::json metadata(const nlohmann::json& cfg) {
  return {{"config_hash", config_hash(cfg)}, {"version", toolkit_version}, {"timestamp", utc_timestamp()}};
}

inline void write_csv(const Table& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << t.columns[c];
  out << "\n";
  out << std::setprecision(17);
  for (const auto& r : t.rows) {
    for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << r[c];
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline nlohmann::json table_json(const Table& t, const nlohmann::json& cfg) {
  return {{"metadata", metadata(cfg)}, {"columns", t.columns}, {"rows", t.rows}, {"notes", t.notes}};
}

inline void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline void write_json(const Table& t, const nlohmann::json& cfg, const std::string& path) {
  write_json(table_json(t, cfg), path);
}

inline Table table_from_json(const nlohmann::json& j) {
  Table t;
  t.columns = j.at("columns").get<std::vector<std::string>>();
  t.rows = j.at("rows").get<std::vector<std::vector<double>>>();
  if (j.contains("notes")) t.notes = j["notes"].get<std::vector<std::string>>();
  return t;
}

inline Table read_json_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return table_from_json(nlohmann::json::parse(in));
}

/// CSV when the path ends in .csv, JSON otherwise.
inline void export_table(const Table& t, const nlohmann::json& cfg, const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") write_csv(t, path);
  else write_json(t, cfg, path);
}

// ---------------------------------------------------------------------------
// Configuration

struct LambdaRule {
  enum class Kind { linear, subexp, fixed } kind = Kind::linear;
  double Lambda = 0.0;               // linear: lambda = Lambda t
  double c = 1.0, C = 1.0, gamma = 0.5;  // subexp: lambda = C exp(-c t^gamma)
  double eps = 0.0;                  // fixed: lambda = eps

  double at(double t) const {
    switch (kind) {
      case Kind::linear: return Lambda * t;
      case Kind::subexp: return C * std::exp(-c * std::pow(t, gamma));
      case Kind::fixed: return eps;
    }
    return 0.0;
  }

  static LambdaRule from_json(const nlohmann::json& j) {
    LambdaRule r;
    std::string k = j.at("kind").get<std::string>();
    if (k == "linear") {
      r.kind = Kind::linear;
      r.Lambda = j.at("Lambda").get<double>();
    } else if (k == "subexp") {
      r.kind = Kind::subexp;
      r.c = j.value("c", 1.0);
      r.C = j.value("C", 1.0);
      r.gamma = j.value("gamma", 0.5);
      if (!(r.gamma > 0 && r.gamma < 1)) throw std::invalid_argument("subexp gamma must lie in (0,1)");
      if (!(r.c > 0 && r.C > 0)) throw std::invalid_argument("subexp c and C must be positive");
    } else if (k == "fixed") {
      r.kind = Kind::fixed;
      r.eps = j.at("eps").get<double>();
      if (!(r.eps > 0)) throw std::invalid_argument("fixed eps must be positive");
    } else {
      throw std::invalid_argument("unknown lambda_rule kind: " + k);
    }
    return r;
  }
};

struct ScanConfig {
  nlohmann::json raw;
  ScalarField2D field;
  Domain domain = Domain::unit_square();
  std::vector<double> t_grid;
  LambdaRule rule;
  int n = 128;
  PauliMethod method = PauliMethod::lichnerowicz;
  double tol = 0.4;
  double C1 = 1.0;
  // zero-mode pipeline
  int N_r = 64, N_theta = 64, circle_N = 4096, N_basis = 256, m = -1;
  double alpha = 0.5;
  AzmStrategy strategy = AzmStrategy::tuned;
  // gauge check
  int draws = 20;
  int eig_count = 10;
  std::uint64_t seed = 2024;
  // packing
  double min_radius = 0.0;
  int search_grid = 128;

  static ScanConfig from_json(const nlohmann::json& j) {
    ScanConfig c;
    c.raw = j;
    c.field = field_from_json(j.at("field"));
    if (j.contains("domain")) c.domain = domain_from_json(j["domain"]);
    if (j.contains("t_grid")) c.t_grid = j["t_grid"].get<std::vector<double>>();
    for (std::size_t i = 0; i < c.t_grid.size(); ++i) {
      if (!(c.t_grid[i] > 0)) throw std::invalid_argument("t_grid entries must be positive");
      if (i > 0 && !(c.t_grid[i] > c.t_grid[i - 1])) throw std::invalid_argument("t_grid must be strictly increasing");
    }
    if (j.contains("lambda_rule")) c.rule = LambdaRule::from_json(j["lambda_rule"]);
    if (j.contains("grid")) {
      const auto& g = j["grid"];
      c.n = g.value("n", c.n);
      if (g.contains("method")) c.method = parse_method(g["method"].get<std::string>());
    }
    c.tol = j.value("tolerance", c.tol);
    c.C1 = j.value("C1", c.C1);
    if (j.contains("zeromode")) {
      const auto& z = j["zeromode"];
      c.N_r = z.value("N_r", c.N_r);
      c.N_theta = z.value("N_theta", c.N_theta);
      c.circle_N = z.value("N", c.circle_N);
      c.N_basis = z.value("N_basis", c.N_basis);
      c.m = z.value("m", c.m);
      c.alpha = z.value("alpha", c.alpha);
      std::string s = z.value("strategy", std::string("tuned"));
      if (s == "tuned") c.strategy = AzmStrategy::tuned;
      else if (s == "recipe") c.strategy = AzmStrategy::recipe;
      else throw std::invalid_argument("unknown zeromode strategy: " + s);
    }
    if (j.contains("gauge")) {
      const auto& g = j["gauge"];
      c.draws = g.value("draws", c.draws);
      c.eig_count = g.value("eigs", c.eig_count);
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("packing")) {
      c.min_radius = j["packing"].value("min_radius", 0.0);
      c.search_grid = j["packing"].value("grid", c.search_grid);
    }
    return c;
  }
};

inline double field_sup_on(const ScalarField2D& B, const Domain& dom) {
  double s = sampled_sup(B, dom, 128);
  if (B.sup_bound) s = std::max(s, *B.sup_bound);
  return s;
}

// ---------------------------------------------------------------------------
// Potentials for general fields on a domain

/// Symmetric gauge for constant fields; otherwise a potential by radial integration
/// A(x) = (int_0^1 s B(c + s(x - c)) ds) (-(x2 - c2), x1 - c1) about the bbox centre.
inline VectorPotential radial_gauge(const ScalarField2D& B, Point c, int order = 24) {
  std::vector<double> xs, ws;
  gauss_legendre(order, xs, ws);
  VectorPotential A;
  A.eval = [B, c, xs, ws](Point p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double s = 0.5 * (xs[i] + 1.0);
      acc += 0.5 * ws[i] * s * B.eval(c + s * (p - c));
    }
    return Vec2{-acc * (p.y - c.y), acc * (p.x - c.x)};
  };
  A.curl_field = B;
  A.provenance = GaugeKind::transformed;
  // segment integrals by 4-point Gauss-Legendre on each edge
  A.segment = [A0 = A.eval](Point a, Point b) {
    static const double g[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526};
    static const double w[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538};
    double s = 0.0;
    for (int i = 0; i < 4; ++i) {
      Point p = 0.5 * (a + b) + (0.5 * g[i]) * (b - a);
      Vec2 v = A0(p);
      s += 0.5 * w[i] * (v[0] * (b.x - a.x) + v[1] * (b.y - a.y));
    }
    return s;
  };
  return A;
}

inline VectorPotential symmetric_gauge_for(const ScalarField2D& B, const Domain& dom) {
  auto [o, s] = dom.bbox();
  Point c{o.x + s / 2, o.y + s / 2};
  if (B.holder_const && *B.holder_const == 0.0) return symmetric_gauge(checked_eval(B, c), c);
  return radial_gauge(B, c);
}

// ---------------------------------------------------------------------------
// Weyl scan

struct WeylScan {
  Table table;
  bool bracket_all = true;    // N/t inside [int nu- - tol, int nu+ + tol] at every t
  bool bracket_final = true;  // the same at the largest t
};

inline WeylScan weyl_scan(const ScanConfig& cfg) {
  if (cfg.rule.kind != LambdaRule::Kind::linear) throw std::invalid_argument("weyl_scan needs a linear lambda_rule");
  if (cfg.t_grid.empty()) throw std::invalid_argument("weyl_scan needs a t_grid");
  WeylScan out;
  out.table.columns = {"t", "lambda", "N", "N_over_t", "int_nu_minus", "int_nu_plus", "flux_abs", "in_bracket"};
  const double b_inf = field_sup_on(cfg.field, cfg.domain);
  auto [o, s] = cfg.domain.bbox();
  const double h = s / cfg.n;
  const double tmax = cfg.t_grid.back();
  if (auto w = detail::adequacy_warning(tmax, b_inf, h)) {
    int need = static_cast<int>(std::ceil(s * 8.0 * std::sqrt(tmax * b_inf)));
    throw std::invalid_argument("grid adequacy violated (" + *w + "); need n >= " + std::to_string(need));
  }
  double Lambda = cfg.rule.Lambda;
  // constant fields: nudge Lambda off a Landau threshold
  if (cfg.field.holder_const && *cfg.field.holder_const == 0.0) {
    double b = std::abs(checked_eval(cfg.field, cfg.domain.bbox().first + 0.5 * Point{s, s}));
    if (b > 0 && Lambda >= 0 && landau::threshold(b, Lambda).on) {
      Lambda += 1e-9 * b;
      out.table.notes.push_back("Lambda on a Landau threshold; nudged by 1e-9 |b|");
    }
  }
  const double nu_lo = landau::semiclassical_integral(cfg.field, cfg.domain, Lambda, landau::Variant::lower);
  const double nu_hi = landau::semiclassical_integral(cfg.field, cfg.domain, Lambda, landau::Variant::upper);
  ScalarField2D absB = cfg.field;
  absB.eval = [B = cfg.field](Point p) { return std::abs(B.eval(p)); };
  const double fabs = flux(absB, cfg.domain);
  for (double t : cfg.t_grid) {
    double lambda = Lambda * t;
    long long N = 0;
    if (lambda >= 0) {
      auto op = assemble_pauli(cfg.domain, symmetric_gauge_for(cfg.field, cfg.domain), cfg.field, t, cfg.n, cfg.method);
      N = count_below(op, lambda).count;
    }
    double ratio = N / t;
    bool in = ratio >= nu_lo - cfg.tol && ratio <= nu_hi + cfg.tol;
    if (!in) out.bracket_all = false;
    out.bracket_final = in;
    out.table.add({t, lambda, static_cast<double>(N), ratio, nu_lo, nu_hi, fabs, in ? 1.0 : 0.0});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Zero-mode scan on the unit disc

struct AzmScan {
  Table table;
  std::vector<AzmReport> reports;
};

/// +1, -1 or 0 (identically zero); throws on a sign change.
inline int field_sign_on_disc(const ScalarField2D& B, int res = 96) {
  bool pos = false, neg = false;
  for (const auto& nd : quadrature_nodes(Domain::unit_disc(), {res})) {
    double b = checked_eval(B, nd.p);
    if (b > 0) pos = true;
    if (b < 0) neg = true;
  }
  if (pos && neg) throw std::invalid_argument("field changes sign on the disc; use greedy_disc_packing to split it");
  return pos ? 1 : (neg ? -1 : 0);
}

inline AzmScan azm_scan(const ScanConfig& cfg) {
  if (cfg.rule.kind != LambdaRule::Kind::subexp) throw std::invalid_argument("azm_scan needs a subexp lambda_rule");
  AzmScan out;
  out.table.columns = {"t", "dim", "certified", "t_flux", "ratio", "bound", "delta"};
  const int sg = field_sign_on_disc(cfg.field);
  const double fl = std::abs(flux(cfg.field, Domain::unit_disc()));
  if (sg == 0 || fl == 0.0) {
    for (double t : cfg.t_grid) out.table.add({t, 0, 0, 0, 0, 0, 0});
    out.table.notes.push_back("zero field: flux 0, empty test spaces");
    return out;
  }
  // B -> |B| / flux has flux 1; t -> t flux keeps tB fixed
  ScalarField2D Bn = cfg.field;
  Bn.eval = [B = cfg.field, sg, fl](Point p) { return sg * B.eval(p) / fl; };
  if (cfg.field.sup_bound) Bn.sup_bound = *cfg.field.sup_bound / fl;
  if (cfg.field.holder_const) Bn.holder_const = *cfg.field.holder_const / fl;
  auto sol = solve_scalar_potential(Bn, cfg.N_r, cfg.N_theta, {true});
  auto data = circle_data(sol, cfg.circle_N, cfg.N_basis);
  auto tails = tail_sums(data, cfg.N_basis - 16, cfg.alpha);
  AzmOptions opt;
  opt.strategy = cfg.strategy;
  opt.m = cfg.m;
  for (double t : cfg.t_grid) {
    double tf = t * fl;
    auto rep = azm_count(sol, data, tails, tf, cfg.rule.gamma, cfg.rule.c, cfg.rule.C, opt);
    out.table.add({t, double(rep.dim), double(rep.certified), tf, rep.certified / tf, rep.bound, rep.delta});
    out.reports.push_back(std::move(rep));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Greedy disjoint disc packing into the sign regions of B

struct PackedDisc {
  Disc disc;
  int sign = 0;
};

struct Packing {
  std::vector<PackedDisc> discs;
  double flux_total = 0.0;    // (1/2pi) int |B| over the region
  double flux_covered = 0.0;  // (1/2pi) sum over discs of int |B|
  double covered_fraction = 0.0;
};

inline Packing greedy_disc_packing(const ScalarField2D& B, const Domain& region, double min_radius, int grid = 128) {
  if (!(min_radius > 0)) throw std::invalid_argument("min_radius must be positive");
  Packing P;
  auto [o, s] = region.bbox();
  const double hcell = s / grid;
  const int n = grid + 1;
  std::vector<Point> pts(static_cast<std::size_t>(n) * n);
  std::vector<int> sgn(pts.size(), 0);
  std::vector<char> inside(pts.size(), 0);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      std::size_t k = static_cast<std::size_t>(j) * n + i;
      pts[k] = {o.x + i * hcell, o.y + j * hcell};
      inside[k] = region.contains(pts[k]);
      if (inside[k]) {
        double b = checked_eval(B, pts[k]);
        sgn[k] = b > 0 ? 1 : (b < 0 ? -1 : 0);
      }
    }
  // distance from each grid point to the nearest point outside the region, and of non-matching sign
  std::vector<std::size_t> outside, nonpos, nonneg;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (!inside[k]) outside.push_back(k);
    else {
      if (sgn[k] <= 0) nonpos.push_back(k);
      if (sgn[k] >= 0) nonneg.push_back(k);
    }
  }
  auto nearest = [&](std::size_t k, const std::vector<std::size_t>& set) {
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t q : set) d = std::min(d, norm(pts[k] - pts[q]));
    return d;
  };
  std::vector<double> room(pts.size(), -1.0);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (!inside[k] || sgn[k] == 0) continue;
    // the bounding box edge also limits the disc
    double edge = std::min({pts[k].x - o.x, o.x + s - pts[k].x, pts[k].y - o.y, o.y + s - pts[k].y});
    double d = std::min({edge, nearest(k, outside), nearest(k, sgn[k] > 0 ? nonpos : nonneg)});
    room[k] = d - hcell;
  }
  while (true) {
    std::size_t best = 0;
    double r = -1.0;
    for (std::size_t k = 0; k < pts.size(); ++k)
      if (room[k] > r) {
        r = room[k];
        best = k;
      }
    if (r < min_radius) break;
    Disc d{pts[best], r};
    P.discs.push_back({d, sgn[best]});
    for (std::size_t k = 0; k < pts.size(); ++k)
      if (room[k] > 0) room[k] = std::min(room[k], norm(pts[k] - d.center) - r);
  }
  ScalarField2D absB = B;
  absB.eval = [B](Point p) { return std::abs(B.eval(p)); };
  P.flux_total = flux(absB, region);
  for (const auto& pd : P.discs) P.flux_covered += flux(absB, Domain(pd.disc));
  P.covered_fraction = P.flux_total > 0 ? P.flux_covered / P.flux_total : 0.0;
  return P;
}

// ---------------------------------------------------------------------------
// Gauge invariance regression

struct GaugeDraw {
  double t = 0.0;
  double max_rel_dev = 0.0;
  bool counts_equal = true;
  bool pass = true;
};

struct GaugeReport {
  std::vector<GaugeDraw> draws;
  bool pass = true;
  double worst = 0.0;
};

struct TrigGauge {
  std::function<double(Point)> psi;
  std::function<Vec2(Point)> grad;
};

/// Random trigonometric polynomial of degree <= deg with O(1) amplitudes.
inline TrigGauge random_trig_gauge(std::mt19937_64& rng, int deg = 3) {
  std::normal_distribution<double> G;
  std::uniform_real_distribution<double> U(0.0, two_pi);
  struct Term {
    double a, kx, ky, ph;
  };
  std::vector<Term> terms;
  for (int p = -deg; p <= deg; ++p)
    for (int q = 0; q <= deg; ++q)
      if (p != 0 || q != 0) terms.push_back({G(rng) / (1 + p * p + q * q), pi * p, pi * q, U(rng)});
  TrigGauge g;
  g.psi = [terms](Point x) {
    double s = 0;
    for (const auto& t : terms) s += t.a * std::cos(t.kx * x.x + t.ky * x.y + t.ph);
    return s;
  };
  g.grad = [terms](Point x) {
    Vec2 v{0, 0};
    for (const auto& t : terms) {
      double sn = -t.a * std::sin(t.kx * x.x + t.ky * x.y + t.ph);
      v[0] += sn * t.kx;
      v[1] += sn * t.ky;
    }
    return v;
  };
  return g;
}

inline GaugeDraw compare_gauges(const ScalarField2D& B, const Domain& dom, const VectorPotential& A,
                                const TrigGauge& g, double t, int n, int k, PauliMethod method) {
  GaugeDraw d;
  d.t = t;
  auto [o, s] = dom.bbox();
  GaugeCheckOptions chk;
  chk.box_origin = o;
  chk.box_side = s;
  VectorPotential At = gauge_transform(A, g.grad, g.psi, chk);
  auto op1 = assemble_pauli(dom, A, B, t, n, method);
  auto op2 = assemble_pauli(dom, At, B, t, n, method);
  auto e1 = lowest_eigenpairs(op1, k), e2 = lowest_eigenpairs(op2, k);
  double scale = 0.0;
  for (int i = 0; i < k; ++i) scale = std::max(scale, std::abs(e1[i].value));
  for (int i = 0; i < k; ++i)
    d.max_rel_dev = std::max(d.max_rel_dev, std::abs(e1[i].value - e2[i].value) / std::max(scale, 1e-300));
  // shifts in the middle of the three widest gaps among the computed eigenvalues
  std::vector<std::pair<double, double>> gaps;
  for (int i = 0; i + 1 < k; ++i) gaps.push_back({e1[i + 1].value - e1[i].value, 0.5 * (e1[i].value + e1[i + 1].value)});
  std::sort(gaps.rbegin(), gaps.rend());
  for (int i = 0; i < std::min<int>(3, static_cast<int>(gaps.size())); ++i) {
    double lam = gaps[i].second;
    if (count_below(op1, lam).count != count_below(op2, lam).count) d.counts_equal = false;
  }
  d.pass = d.counts_equal && d.max_rel_dev <= 1e-9;
  return d;
}

inline GaugeReport gauge_invariance_test(const ScanConfig& cfg) {
  GaugeReport rep;
  std::mt19937_64 rng(cfg.seed);
  std::vector<double> ts = cfg.t_grid.empty() ? std::vector<double>{1.0, 10.0, 50.0} : cfg.t_grid;
  VectorPotential A = symmetric_gauge_for(cfg.field, cfg.domain);
  for (int i = 0; i < cfg.draws; ++i) {
    TrigGauge g = random_trig_gauge(rng);
    double t = ts[i % ts.size()];
    auto d = compare_gauges(cfg.field, cfg.domain, A, g, t, cfg.n, cfg.eig_count, cfg.method);
    rep.worst = std::max(rep.worst, d.max_rel_dev);
    if (!d.pass) rep.pass = false;
    rep.draws.push_back(d);
  }
  return rep;
}

}  // namespace pauli
