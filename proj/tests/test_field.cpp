#include <random>

#include <gtest/gtest.h>

#include "pauli/field.hpp"

using namespace pauli;

namespace {

// Root of (s+1)log(1+s) - s = target by plain bisection.
double orlicz_root(double target) {
  double lo = 0.0, hi = 100.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    double v = (mid + 1) * std::log(1 + mid) - mid;
    (v > target ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

ScalarField2D x1_field() { return polynomial_field({{1.0, 1.0, 0.0}}); }

}  // namespace

TEST(Flux, ConstantOnDisc) { EXPECT_NEAR(flux(constant_field(2.0), Domain::unit_disc()), 1.0, 1e-12); }

TEST(Flux, LinearOnSquare) {
  EXPECT_NEAR(flux(x1_field(), Domain::unit_square()), 1.0 / (4 * pi), 1e-12);
}

TEST(Flux, ZeroField) {
  EXPECT_EQ(flux(constant_field(0.0), Domain::unit_disc()), 0.0);
  EXPECT_EQ(flux(constant_field(0.0), Domain::square({-3, 2}, 0.5)), 0.0);
}

TEST(Flux, AdditiveOverUnion) {
  auto B = polynomial_field({{1.0, 2.0, 1.0}, {-0.5, 0.0, 3.0}, {2.0, 0.0, 0.0}});
  UnionOfSquares u;
  double sum = 0.0;
  for (int j = 0; j < 3; ++j) {
    Square s{{0.25 * j, 0.1 * j}, 0.25};
    u.squares.push_back(s);
    sum += flux(B, Domain(s), {16});
  }
  EXPECT_NEAR(flux(B, Domain(u), {16}), sum, 1e-14);
}

TEST(Domain, AreasAndValidation) {
  EXPECT_DOUBLE_EQ(Domain::square({0, 0}, 2.0).area(), 4.0);
  EXPECT_DOUBLE_EQ(Domain::unit_disc().area(), pi);
  GridMask m{{0, 0}, 1.0, 4, std::vector<std::uint8_t>(16, 0)};
  m.inside[0] = m.inside[5] = m.inside[15] = 1;
  EXPECT_DOUBLE_EQ(Domain(m).area(), 3.0 / 16.0);
  EXPECT_THROW(Domain::square({0, 0}, 0.0), std::invalid_argument);
  EXPECT_THROW(Domain::disc({0, 0}, -1.0), std::invalid_argument);
}

TEST(Luxemburg, ZeroFunction) { EXPECT_EQ(luxemburg_norm(constant_field(0.0), Domain::unit_square()), 0.0); }

TEST(Luxemburg, UnitConstant) {
  double s = orlicz_root(1.0);
  // the root is e - 1 in closed form: e log e - (e - 1) = 1
  EXPECT_NEAR(s, std::exp(1.0) - 1.0, 1e-12);
  EXPECT_NEAR(luxemburg_norm(constant_field(1.0), Domain::unit_square()), 1.0 / s, 1e-8);
}

TEST(Luxemburg, Homogeneity) {
  double base = luxemburg_norm(constant_field(1.0), Domain::unit_square());
  for (double c : {0.1, 3.0, 250.0})
    EXPECT_NEAR(luxemburg_norm(constant_field(c), Domain::unit_square()), c * base, 1e-8 * c);
}

TEST(Luxemburg, MonotoneUnderPointwiseDomination) {
  auto V = polynomial_field({{1.0, 1.0, 0.0}});
  auto W = polynomial_field({{1.0, 1.0, 0.0}, {0.5, 0.0, 2.0}});
  EXPECT_LE(luxemburg_norm(V, Domain::unit_square()), luxemburg_norm(W, Domain::unit_square()));
}

TEST(AprioriBound, Examples) {
  EXPECT_EQ(apriori_count_bound(constant_field(0.0), 0.0, Domain::unit_square()), 0.0);
  EXPECT_NEAR(apriori_count_bound(constant_field(1.0), 0.0, Domain::unit_square()), 2.0 / orlicz_root(1.0), 1e-8);
  auto B = x1_field();
  double prev = apriori_count_bound(B, 0.5, Domain::unit_square());
  for (double lam : {1.0, 2.0, 4.0, 8.0}) {
    double cur = apriori_count_bound(B, -lam, Domain::unit_square());
    EXPECT_GE(cur, prev);
    prev = cur;
  }
}

TEST(Oscillation, Examples) {
  EXPECT_EQ(oscillation(constant_field(3.0), Domain::unit_square(), 0.2).value, 0.0);
  auto lin = oscillation(x1_field(), Domain::unit_square(), 0.1);
  EXPECT_NEAR(lin.value, 0.1, 1e-6);
  EXPECT_LE(lin.value, 0.1 + 1e-12);
  ScalarField2D h = x1_field();
  h.holder_alpha = 0.5;
  h.holder_const = 2.0;
  EXPECT_NEAR(oscillation(h, Domain::unit_square(), 0.04).value, 0.4, 1e-12);
}

TEST(Oscillation, NonDecreasingInRadius) {
  auto B = polynomial_field({{1.0, 2.0, 0.0}, {-1.0, 1.0, 1.0}});
  double prev = 0.0;
  for (double r : {0.01, 0.02, 0.05, 0.1, 0.3, 1.0}) {
    double v = oscillation(B, Domain::unit_disc(), r).value;
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(Field, HolderMetadataSpotCheck) {
  auto B = radial_cos_field(2.0, 2.0, 1);
  B.holder_const = 2.0;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-0.7, 0.7);
  for (int i = 0; i < 1000; ++i) {
    Point x{U(rng), U(rng)}, y{U(rng), U(rng)};
    EXPECT_LE(std::abs(B(x) - B(y)), *B.holder_const * norm(x - y) + 1e-12);
  }
}

TEST(Field, NonFiniteSampleRejected) {
  ScalarField2D B;
  B.eval = [](Point p) { return 1.0 / p.x; };
  EXPECT_THROW(checked_eval(B, {0.0, 0.3}), std::runtime_error);
}

TEST(Field, JsonFactories) {
  auto c = field_from_json({{"kind", "constant"}, {"value", 2.5}});
  EXPECT_EQ(c({0.3, 0.1}), 2.5);
  auto p = field_from_json({{"kind", "polynomial"}, {"coeffs", {{2.0, 1, 1}}}});
  EXPECT_DOUBLE_EQ(p({0.5, 3.0}), 3.0);
  auto r = field_from_json({{"kind", "radial_cos"}, {"base", 2.0}, {"amplitude", 2.0}, {"mode", 1}});
  EXPECT_DOUBLE_EQ(r({0.5, 0.2}), 3.0);
  EXPECT_THROW(field_from_json({{"kind", "bogus"}}), std::invalid_argument);
  auto d = domain_from_json({{"kind", "disc"}, {"radius", 2.0}});
  EXPECT_DOUBLE_EQ(d.area(), 4 * pi);
}
