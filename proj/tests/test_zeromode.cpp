#include <random>

#include <gtest/gtest.h>

#include "pauli/zeromode.hpp"

using namespace pauli;

namespace {

struct Fields : ::testing::Test {
  // B = 2 has h = 1; B = 2 + 2 x1 has h = 1 + cos(theta) / 2.
  static const ScalarPotentialSolution& flat() {
    static const auto s = solve_scalar_potential(constant_field(2.0), 64, 64, {true});
    return s;
  }
  static const ScalarPotentialSolution& bent() {
    static const auto s = solve_scalar_potential(radial_cos_field(2.0, 2.0, 1), 64, 64, {true});
    return s;
  }
  static const CircleSpectralData& flat_d() {
    static const auto d = circle_data(flat(), 4096, 256);
    return d;
  }
  static const CircleSpectralData& bent_d() {
    static const auto d = circle_data(bent(), 4096, 256);
    return d;
  }
  static const TailSums& bent_tails() {
    static const auto T = tail_sums(bent_d(), 240, 0.5);
    return T;
  }
};

Eigen::VectorXcd mode(int N, int k, cplx a = 1.0) {
  Eigen::VectorXcd c = Eigen::VectorXcd::Zero(N);
  c[(k + N) % N] = a;
  return c;
}

// int_0^1 w(r) dr by composite Simpson.
double simpson(const std::function<double(double)>& w, int n = 20000) {
  const double h = 1.0 / n;
  double s = w(0.0) + w(1.0);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * w(i * h);
  return s * h / 3;
}

// Rayleigh quotient of psi_delta(r) r^n e^{i n theta} e^{-t (r^2 - 1) / 2}.
double flat_quotient(int n, double t, double delta) {
  auto a = [=](double r) { return std::pow(r, 2 * n) * std::exp(-t * (r * r - 1)); };
  double num = simpson([&](double r) { double d = cutoff_slope(r, delta); return d * d * r * a(r); });
  double den = simpson([&](double r) { double p = cutoff(r, delta); return p * p * r * a(r); });
  return num / den;
}

}  // namespace

TEST_F(Fields, CircleDataForConstantField) {
  const auto& d = flat_d();
  EXPECT_NEAR(d.kappa, 1.0, 1e-8);
  for (int j = 0; j < d.N; j += 97) EXPECT_NEAR(d.Phi[j], d.theta(j), 1e-8);
  EXPECT_LT(d.gram_error, 1e-8);
  for (int n : {-3, 0, 5}) EXPECT_NEAR((d.e(n) - mode(d.N, n)).norm(), 0.0, 1e-8);
}

TEST_F(Fields, CircleDataForPerturbedField) {
  const auto& d = bent_d();
  EXPECT_NEAR(d.kappa, 2.0, 1e-8);
  EXPECT_LT(d.gram_error, 1e-8);
  for (int j = 0; j < d.N; ++j) {
    EXPECT_NEAR(d.h[j], 1 + 0.5 * std::cos(d.theta(j)), 1e-8);
    EXPECT_NEAR(d.Phi[j], d.theta(j) + 0.5 * std::sin(d.theta(j)), 1e-8);
    if (j > 0) {
      EXPECT_GT(d.Phi[j], d.Phi[j - 1]);
    }
  }
}

TEST_F(Fields, CircleDataRejectsSmallN) {
  EXPECT_THROW(circle_data(flat(), 512, 256), std::invalid_argument);
  EXPECT_THROW(circle_data(flat(), 1000, 16), std::invalid_argument);
}

TEST(HardyProject, SplitsFrequencies) {
  const int N = 16;
  Eigen::VectorXcd c = mode(N, 0, 1.0) + mode(N, 3, cplx(0, 2)) + mode(N, -2, 5.0);
  auto [p, m] = hardy_project(c);
  EXPECT_EQ(p, mode(N, 0, 1.0) + mode(N, 3, cplx(0, 2)));
  EXPECT_EQ(m, mode(N, -2, 5.0));
  std::mt19937_64 rng(8);
  std::normal_distribution<double> G;
  Eigen::VectorXcd r(64);
  for (auto& x : r) x = cplx(G(rng), G(rng));
  auto [rp, rm] = hardy_project(r);
  EXPECT_NEAR(rp.squaredNorm() + rm.squaredNorm(), r.squaredNorm(), 1e-12 * r.squaredNorm());
  EXPECT_EQ(rp.dot(rm), cplx(0.0));
}

TEST_F(Fields, TailSumsVanishForConstantField) {
  auto T = tail_sums(flat_d(), 100);
  for (int m = 0; m <= 100; ++m) {
    EXPECT_EQ(T.w[m], 0.0);
    EXPECT_EQ(T.v[m], 0.0);
  }
  EXPECT_TRUE(std::isinf(T.decay_exponent));
}

TEST_F(Fields, TailSumsForPerturbedField) {
  const auto& T = bent_tails();
  EXPECT_LT(T.w[30], 1e-10);
  for (int m = 0; m <= T.m_max; ++m) {
    EXPECT_GE(T.w[m], 0.0);
    EXPECT_GE(T.v[m], 0.0);
    if (m > 0) {
      EXPECT_LE(T.w[m], T.w[m - 1]);
      EXPECT_LE(T.v[m], T.v[m - 1]);
    }
  }
  EXPECT_GE(T.decay_exponent, 2 * T.alpha);
  for (int m = 0; m <= T.m_max; ++m) EXPECT_LE(std::pow(m + 1.0, 2 * T.alpha) * T.w[m], T.C7);
}

TEST_F(Fields, TailSumsValidation) {
  EXPECT_THROW(tail_sums(flat_d(), 250), std::invalid_argument);
  EXPECT_THROW(tail_sums(flat_d(), 10, 0.0), std::invalid_argument);
}

TEST_F(Fields, TFormOnBasis) {
  for (const auto* d : {&flat_d(), &bent_d()}) {
    for (int n : {-4, 0, 1, 7}) EXPECT_NEAR(t_form(*d, d->e(n), 3.0), n - 3.0, 1e-8);
    Eigen::VectorXcd c = (d->e(1) + d->e(2)) / std::sqrt(2.0);
    EXPECT_NEAR(t_form(*d, c, 1.5), 0.0, 1e-8);
  }
}

TEST_F(Fields, TFormMatchesQuadrature) {
  const auto& d = bent_d();
  std::mt19937_64 rng(17);
  std::normal_distribution<double> G;
  const int K = 12, M = 1000;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXcd c = Eigen::VectorXcd::Zero(d.N);
    for (int k = -K; k <= K; ++k) c[(k + d.N) % d.N] = cplx(G(rng), G(rng));
    const double t = 0.5 + 4 * trial;
    // int conj(f) (-i f' - t h f) dtheta on an M-point rule, exact for these trigonometric degrees
    cplx s = 0.0;
    for (int j = 0; j < M; ++j) {
      double th = two_pi * j / M;
      cplx f = 0.0, df = 0.0;
      for (int k = -K; k <= K; ++k) {
        cplx e = c[(k + d.N) % d.N] * std::polar(1.0, k * th) / std::sqrt(two_pi);
        f += e;
        df += cplx(0, k) * e;
      }
      s += std::conj(f) * (cplx(0, -1) * df - t * (1 + 0.5 * std::cos(th)) * f);
    }
    double oracle = (s * (two_pi / M)).real();
    EXPECT_NEAR(t_form(d, c, t), oracle, 1e-8 * (1 + std::abs(oracle)));
  }
}

TEST_F(Fields, BetaClosedFormForConstantField) {
  const auto& d = flat_d();
  for (double t : {1.0, 10.0, 40.0})
    for (int n : {1, 3, 8}) {
      auto b = beta_f(d, d.e(n), flat(), t, BetaMethod::radial);
      EXPECT_NEAR(b.circle, 2 * (n - t) + 1, 1e-6);
      ASSERT_TRUE(b.radial);
      EXPECT_NEAR(*b.radial, 2 * (n - t) + 1, 1e-4);
    }
  EXPECT_NEAR(beta_f(d, d.e(5), flat(), 5.0).value, 1.0, 1e-6);
  EXPECT_THROW(beta_f(d, Eigen::VectorXcd::Zero(d.N), flat(), 1.0), std::invalid_argument);
}

TEST_F(Fields, BetaMethodsAgreeForPerturbedField) {
  const auto& d = bent_d();
  for (double t : {2.0, 12.0})
    for (int n : {1, 4}) {
      Eigen::VectorXcd f = hardy_project(d.e(n)).first;
      auto b = beta_f(d, f, bent(), t, BetaMethod::radial);
      EXPECT_FALSE(b.flagged) << b.circle << " vs " << *b.radial;
      EXPECT_NEAR(*b.radial, b.circle, 1e-3 * std::max(1.0, std::abs(b.circle)));
    }
}

TEST_F(Fields, TestSpaceForConstantField) {
  const auto& d = flat_d();
  auto T = tail_sums(d, 100);
  auto S = build_test_space(d, T, 100.0, 20.0, 0);
  EXPECT_NEAR(S.nu_1, 10.5, 1e-8);
  EXPECT_EQ(S.M_t, 89);
  EXPECT_EQ(S.dim, 89);
  EXPECT_EQ(S.rank, 89);
  for (int n = 1; n <= S.M_t; ++n) {
    Eigen::VectorXcd col = S.coeff_matrix.col(n - 1);
    EXPECT_EQ(hardy_project(col).second.norm(), 0.0);
    EXPECT_LE(beta_f(d, col, flat(), 100.0).value, -S.nu_t + 1e-9);
  }
}

TEST_F(Fields, TestSpaceForPerturbedField) {
  const auto& d = bent_d();
  const auto& T = bent_tails();
  int m = smallest_admissible_m(d, T);
  ASSERT_GE(m, 0);
  EXPECT_LE(T.w[m], 1.0 / (2 * d.kappa * d.kappa));
  auto S = build_test_space(d, T, 200.0, 10.0, m);
  ASSERT_FALSE(S.empty);
  EXPECT_EQ(S.rank, S.dim);
  for (int j = 0; j < S.dim; ++j) {
    Eigen::VectorXcd col = S.coeff_matrix.col(j);
    EXPECT_EQ(hardy_project(col).second.norm(), 0.0);
    EXPECT_LE(beta_f(d, col, bent(), 200.0).value, -S.nu_t);
  }
  EXPECT_THROW(build_test_space(d, T, 0.5, 1.0, m), std::invalid_argument);
}

TEST(Cutoff, Values) {
  EXPECT_EQ(cutoff(1.0, 0.1), 0.0);
  EXPECT_EQ(cutoff(0.89, 0.1), 1.0);
  EXPECT_EQ(cutoff(0.2, 0.1), 1.0);
  EXPECT_NEAR(cutoff(0.95, 0.1), 0.5, 1e-12);
  EXPECT_NEAR(cutoff_slope(0.95, 0.1), -15.0 / 8.0 / 0.1, 1e-12);
}

TEST_F(Fields, TestFunctionVanishesOnBoundary) {
  auto u = assemble_test_function(bent_d().e(3), bent(), 5.0, 0.1);
  EXPECT_EQ(u.r.back(), 1.0);
  EXPECT_EQ(u.u_plus.row(u.r.size() - 1).norm(), 0.0);
  EXPECT_EQ(u.u_minus.norm(), 0.0);
  EXPECT_GT(u.norm_sq(), 0.0);
}

TEST(TestFunction, FieldFreeNormOracle) {
  auto sol = solve_scalar_potential(constant_field(0.0), 32, 32);
  for (int n : {0, 2, 5}) {
    const double delta = 0.2;
    auto u = assemble_test_function(mode(64, n), sol, 0.0, delta);
    double oracle = simpson([&](double r) { double p = cutoff(r, delta); return p * p * std::pow(r, 2 * n + 1); });
    EXPECT_NEAR(u.norm_sq(), oracle, 1e-10);
  }
  EXPECT_THROW(assemble_test_function(mode(64, 1), sol, 0.0, 0.5), std::invalid_argument);
}

TEST_F(Fields, RayleighExampleAtStrongField) {
  const auto& d = flat_d();
  Eigen::MatrixXcd F = d.e(1);
  auto B = rayleigh_certify(d, F, flat(), 50.0, 0.1);
  const auto& r = B.items[0];
  EXPECT_NEAR(r.beta, -97.0, 1e-6);
  EXPECT_NEAR(r.exponent, -3.7, 1e-6);
  EXPECT_TRUE(r.hypothesis);
  EXPECT_NEAR(r.bound_paper, std::exp(-3.7) / 0.04, 1e-9);
  EXPECT_NEAR(r.bound_corrected, (15.0 / 8) * (15.0 / 8) * std::exp(-3.7) / 0.01, 1e-9);
  EXPECT_LT(r.quotient, 1e-3);
  EXPECT_LE(r.quotient, r.bound_corrected);
  EXPECT_NEAR(r.quotient, flat_quotient(1, 50.0, 0.1), 1e-6 * flat_quotient(1, 50.0, 0.1) + 1e-300);
  EXPECT_TRUE(r.afest_ok);
}

TEST_F(Fields, RayleighSeparableOracle) {
  const auto& d = flat_d();
  for (double t : {0.0, 5.0})
    for (int n : {0, 1, 4})
      for (double delta : {0.05, 0.2}) {
        Eigen::MatrixXcd F = d.e(n);
        auto B = rayleigh_certify(d, F, flat(), t, delta);
        double q = flat_quotient(n, t, delta);
        EXPECT_NEAR(B.items[0].quotient, q, 1e-7 * q) << t << " " << n << " " << delta;
        if (t == 0.0) {
          EXPECT_EQ(B.items[0].status, "hypothesis not satisfied");
        }
      }
}

TEST_F(Fields, RayleighSpanContainsBasisQuotients) {
  const auto& d = bent_d();
  Eigen::MatrixXcd F(d.N, 4);
  for (int n = 1; n <= 4; ++n) F.col(n - 1) = hardy_project(d.e(n)).first;
  CertifyOptions o;
  o.span = true;
  auto B = rayleigh_certify(d, F, bent(), 30.0, 0.1, o);
  ASSERT_TRUE(B.span_max);
  for (const auto& it : B.items) EXPECT_LE(it.quotient, *B.span_max * (1 + 1e-9));
}

TEST_F(Fields, SpanCertificateOnOrthogonalModes) {
  // the modes are orthogonal for both forms, so the certified subspace is spanned by the passing modes
  const auto& d = flat_d();
  const int K = 40;
  Eigen::MatrixXcd F(d.N, K);
  for (int n = 1; n <= K; ++n) F.col(n - 1) = d.e(n);
  CertifyOptions o;
  o.span = true;
  auto B = rayleigh_certify(d, F, flat(), 60.0, 0.05, o);
  std::vector<double> q;
  for (const auto& it : B.items) q.push_back(it.quotient_upper);
  std::sort(q.begin(), q.end());
  const double lambda = std::sqrt(q[19] * q[20]);
  auto sc = span_certify(B, K, lambda);
  EXPECT_EQ(sc.dim, 20);
  EXPECT_LE(sc.bound, lambda);
  EXPECT_GE(sc.bound, q[19] * (1 - 1e-9));
  EXPECT_EQ(span_certify(B, K, q[0] * 0.5).dim, 0);
  EXPECT_EQ(span_certify(B, K, q[K - 1] * 1.01).dim, K);
}

TEST_F(Fields, AzmRecipeBelowThreshold) {
  const auto& d = flat_d();
  auto T = tail_sums(d, 100);
  AzmOptions o;
  o.strategy = AzmStrategy::recipe;
  auto rep = azm_count(flat(), d, T, 2.0, 0.5, 1.0, 1.0, o);
  EXPECT_LT(rep.t, rep.t0);
  EXPECT_TRUE(rep.empty);
  EXPECT_EQ(rep.certified, 0);
  EXPECT_LT(rep.bound, 0.0);
}

TEST_F(Fields, AzmTunedCertifiesSubspace) {
  const auto& d = bent_d();
  auto rep = azm_count(bent(), d, bent_tails(), 40.0, 0.5, 1.0, 1.0);
  EXPECT_TRUE(rep.failures.empty());
  EXPECT_EQ(rep.certified, rep.dim);
  EXPECT_GT(rep.dim, 0);
  EXPECT_DOUBLE_EQ(rep.ratio, rep.certified / 40.0);
  EXPECT_NEAR(rep.lambda, std::exp(-std::sqrt(40.0)), 1e-15);
  for (double q : rep.quotients) EXPECT_LE(q, rep.lambda);
  ASSERT_TRUE(rep.span_max);
  EXPECT_LE(*rep.span_max, rep.lambda);
  auto j = rep.to_json();
  for (const char* k : {"t", "dim", "certified", "bound", "ratio", "failures"}) EXPECT_TRUE(j.contains(k)) << k;
}

TEST_F(Fields, InequalitySuiteConstantField) {
  const auto& d = flat_d();
  auto T = tail_sums(d, 100);
  auto rep = inequality_suite(d, T, 40.0, 0, 30, 100);
  EXPECT_EQ(rep.violations(), 0);
  EXPECT_TRUE(rep.dim_ok);
  EXPECT_TRUE(rep.hardy_hypothesis);
}

TEST_F(Fields, InequalitySuitePerturbedField) {
  const auto& d = bent_d();
  const auto& T = bent_tails();
  int m = smallest_admissible_m(d, T);
  auto rep = inequality_suite(d, T, 60.0, m, m + 30, 200);
  EXPECT_EQ(rep.violations(), 0) << rep.to_json().dump();
  EXPECT_TRUE(rep.dim_ok);
  EXPECT_NEAR(rep.norm_ratio_max, 1.0, 0.02);
  EXPECT_NEAR(rep.norm_ratio_min, 1.0, 0.05);
}

TEST(DiscRescale, Examples) {
  EXPECT_DOUBLE_EQ(disc_rescale(2.0, 3.0), 12.0);
  EXPECT_DOUBLE_EQ(disc_rescale(1.0, 7.5), 7.5);
  EXPECT_THROW(disc_rescale(0.0, 1.0), std::invalid_argument);
}

TEST(DiscRescale, FluxInvariant) {
  auto B = polynomial_field({{1.0, 0, 0}, {0.3, 1, 1}, {2.0, 2, 0}});
  for (double R : {0.5, 2.0, 3.0}) {
    Point c{0.2, -0.1};
    double f = flux(B, Domain::disc(c, R), {256});
    double g = flux(rescale_field(B, R, c), Domain::unit_disc(), {256});
    EXPECT_NEAR(f, g, 1e-10 * std::abs(f));
  }
}
