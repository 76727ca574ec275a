#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "pphom/coefficients.hpp"

using namespace pphom;

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

FamilySpec trig(double a, double b, int k1 = 1, int k2 = 0) {
    FamilySpec s;
    s.family = "trig";
    s.a = a;
    s.b = b;
    s.k = {k1, k2};
    return s;
}

FamilySpec constant(double v) {
    FamilySpec s;
    s.family = "constant";
    s.value = v;
    return s;
}

CoefficientSet scalar_set(double D) {
    CoefficientSet set(1, 1);
    set.field(Coef::D, 0) = make_field(constant(D), 1);
    return set;
}

} // namespace

TEST(EpsTrace, SineAtHalfPeriodIsZero) {
    CoefficientSet set(1, 1);
    set.field(Coef::H, 0) = custom_field([](double, const Point&, const Point& y) { return std::sin(two_pi * y[0]); });
    const Tensor v = eval_eps_trace(set, Coef::H, 0.0, {0.25, 0.0}, 0.5);
    EXPECT_NEAR(v[0], 0.0, 1e-15);
}

TEST(EpsTrace, ConstantFieldIgnoresArguments) {
    CoefficientSet set(1, 1);
    set.field(Coef::K, 0) = constant_field(3.5);
    for (double eps : {0.5, 0.1, 1.0 / 7.0})
        for (double x : {0.0, 0.3, 1.0}) EXPECT_EQ(eval_eps_trace(set, "K", 0.7, {x, 0.0}, eps)[0], 3.5);
}

TEST(EpsTrace, SawtoothUsesFractionalPart) {
    CoefficientSet set(1, 1);
    set.field(Coef::J, 0) = custom_field([](double, const Point&, const Point& y) { return y[0]; });
    EXPECT_DOUBLE_EQ(eval_eps_trace(set, Coef::J, 0.0, {0.75, 0.0}, 0.5)[0], 0.5);
}

TEST(EpsTrace, Errors) {
    CoefficientSet set(1, 1);
    EXPECT_THROW(eval_eps_trace(set, Coef::E, 0.0, {0.5, 0.0}, 0.0), DomainError);
    EXPECT_THROW(eval_eps_trace(set, Coef::E, 0.0, {0.5, 0.0}, -0.1), DomainError);
    EXPECT_THROW(eval_eps_trace(set, "Q", 0.0, {0.5, 0.0}, 0.5), ConfigError);
    EXPECT_THROW(eval_eps_trace(set, Coef::L, 0.0, {0.5, 0.0}, 0.5), ConfigError);
}

TEST(EpsTrace, MatchesDirectSamplerForEveryFamily) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<FamilySpec> families;
    families.push_back(constant(1.25));
    families.push_back(trig(2.0, 0.7, 1, 2));
    FamilySpec sep = trig(1.5, 0.4, 2, 1);
    sep.family = "separable";
    sep.x1 = 0.3;
    sep.t1 = 0.2;
    families.push_back(sep);
    FamilySpec prod;
    prod.family = "product";
    prod.pa = {2.0, 1.0};
    prod.pb = {0.5, 0.25};
    prod.pk = {1, 3};
    prod.x1 = 0.5;
    families.push_back(prod);
    for (int d : {1, 2})
        for (const auto& f : families) {
            CoefficientSet set(d, 1);
            set.field(Coef::M, 0) = make_field(f, d);
            for (int trial = 0; trial < 50; ++trial) {
                const double eps = 1.0 / (2 + trial % 9);
                const Point x{u(rng), d == 2 ? u(rng) : 0.0};
                const double t = u(rng);
                Point y{0.0, 0.0};
                for (int m = 0; m < d; ++m) y[m] = x[m] / eps - std::floor(x[m] / eps);
                EXPECT_EQ(eval_eps_trace(set, Coef::M, t, x, eps)[0], set.m(0, t, x, y));
            }
        }
}

TEST(Families, PeriodicInEveryCellDirection) {
    FamilySpec prod;
    prod.family = "product";
    prod.pa = {2.0, 1.0};
    prod.pb = {0.5, 0.25};
    prod.pk = {2, 3};
    prod.pphase = {0.3, 1.1};
    for (const FamilySpec& f : {trig(1.0, 0.5, 3, 2), prod}) {
        const ScalarField s = make_field(f, 2);
        for (double y1 : {0.0, 0.13, 0.77})
            for (double y2 : {0.0, 0.41}) {
                const double base = s(0.2, {0.3, 0.6}, {y1, y2});
                EXPECT_NEAR(s(0.2, {0.3, 0.6}, {y1 + 1.0, y2}), base, 1e-12);
                EXPECT_NEAR(s(0.2, {0.3, 0.6}, {y1, y2 + 1.0}), base, 1e-12);
            }
    }
}

TEST(Families, UnknownFamilyIsConfigError) {
    FamilySpec s;
    s.family = "gaussian";
    EXPECT_THROW(make_field(s, 1), ConfigError);
    EXPECT_FALSE(is_known_family("gaussian"));
}

TEST(Families, DependencyFlags) {
    const ScalarField c = make_field(constant(2.0), 1);
    EXPECT_FALSE(c.depends_t || c.depends_x || c.depends_y);
    FamilySpec sep = trig(1.0, 0.5);
    sep.family = "separable";
    sep.t1 = 1.0;
    const ScalarField s = make_field(sep, 1);
    EXPECT_TRUE(s.depends_t);
    EXPECT_FALSE(s.depends_x);
    EXPECT_TRUE(s.depends_y);
    EXPECT_DOUBLE_EQ(s(2.0, {0.5, 0.0}, {0.25, 0.0}), 3.0 * 1.5);
}

TEST(CoefficientNames, RoundTrip) {
    for (Coef c : all_coefs) EXPECT_EQ(parse_coef(coef_name(c)), c);
    EXPECT_EQ(parse_coef("U*"), Coef::Ustar);
    EXPECT_THROW(parse_coef("Z"), ConfigError);
}

TEST(CoefficientSet, DefaultsAndShapes) {
    CoefficientSet set(2, 3);
    EXPECT_EQ(set.entries(Coef::D), 18u);
    EXPECT_EQ(set.entries(Coef::E), 2u);
    EXPECT_TRUE(set.G(0.0, {0.5, 0.5}).isApprox(Mat::Identity(3, 3)));
    EXPECT_EQ(set.m(2, 0.0, {0.1, 0.1}, {0.2, 0.2}), 1.0);
    EXPECT_THROW(CoefficientSet(3, 1), ConfigError);
    EXPECT_THROW(CoefficientSet(1, 0), ConfigError);
}

TEST(YAverage, SineSquaredIsHalf) {
    CoefficientSet set(1, 1);
    set.field(Coef::H, 0) = custom_field([](double, const Point&, const Point& y) {
        const double s = std::sin(two_pi * y[0]);
        return s * s;
    });
    EXPECT_NEAR(y_average(set, Coef::H, 0.0, {0.5, 0.0}, 64)[0], 0.5, 1e-12);
}

TEST(YAverage, ConstantIsExact) {
    CoefficientSet set(2, 1);
    set.field(Coef::K, 0) = make_field(constant(7.0), 2);
    EXPECT_EQ(y_average(set, Coef::K, 0.3, {0.5, 0.5}, 16)[0], 7.0);
}

TEST(YAverage, ZeroMeanOscillation) {
    CoefficientSet set(1, 1);
    set.field(Coef::E, 0) = make_field(trig(2.0, 1.0), 1);
    EXPECT_NEAR(y_average(set, Coef::E, 0.0, {0.5, 0.0}, 32)[0], 2.0, 1e-12);
}

TEST(YAverage, CoefficientWithoutCellArgumentIsReturnedUnchanged) {
    CoefficientSet set(1, 2);
    set.field(Coef::L, 1) = make_field(constant(4.0), 1);
    const Tensor v = y_average(set, Coef::L, 0.0, {0.5, 0.0}, 8);
    EXPECT_EQ(v[1], 4.0);
    EXPECT_THROW(y_average(set, Coef::E, 0.0, {0.5, 0.0}, 1), DomainError);
}

TEST(YAverage, InvariantUnderIntegerPhaseShift) {
    for (int shift : {1, 3, -2}) {
        CoefficientSet a(2, 1), b(2, 1);
        auto f = [](const Point& y) {
            return std::exp(std::sin(two_pi * y[0])) * (1.5 + std::cos(two_pi * (y[0] + 2 * y[1])));
        };
        a.field(Coef::H, 0) = custom_field([f](double, const Point&, const Point& y) { return f(y); });
        b.field(Coef::H, 0) = custom_field(
            [f, shift](double, const Point&, const Point& y) { return f({y[0] + shift, y[1] - shift}); });
        EXPECT_NEAR(y_average(a, Coef::H, 0.0, {0.5, 0.5}, 32)[0], y_average(b, Coef::H, 0.0, {0.5, 0.5}, 32)[0],
                    1e-10);
    }
}

TEST(Assumptions, DriftThreeFails) {
    const AssumptionReport r = validate_assumptions(scalar_set(3.0), {});
    EXPECT_TRUE(r.a2_ok);
    EXPECT_DOUBLE_EQ(r.a3_margin, -5.0);
    EXPECT_FALSE(r.passed());
}

TEST(Assumptions, DriftOnePasses) {
    const AssumptionReport r = validate_assumptions(scalar_set(1.0), {});
    EXPECT_DOUBLE_EQ(r.a3_margin, 3.0);
    EXPECT_DOUBLE_EQ(r.g_min_det, 1.0);
    EXPECT_TRUE(r.passed());
}

TEST(Assumptions, NonPositiveDiffusionFailsPositivity) {
    CoefficientSet set(1, 1);
    set.field(Coef::E, 0) = make_field(trig(0.5, 1.0), 1); // dips to -0.5
    const AssumptionReport r = validate_assumptions(set, {});
    EXPECT_FALSE(r.a2_ok);
    EXPECT_FALSE(r.passed());
}

TEST(Assumptions, SingularGIsReported) {
    CoefficientSet set(1, 2);
    set.field(Coef::G, 3) = make_field(constant(0.0), 1);
    const AssumptionReport r = validate_assumptions(set, {});
    EXPECT_EQ(r.g_min_det, 0.0);
    EXPECT_FALSE(r.passed());
}

TEST(Assumptions, RefiningTheSamplingGridNeverRaisesTheMargin) {
    CoefficientSet set(2, 2);
    FamilySpec e = trig(1.5, 0.9, 3, 1);
    e.family = "separable";
    e.x1 = 0.4;
    e.xq = 3;
    set.field(Coef::E, 0) = make_field(e, 2);
    set.field(Coef::D, set.idx3(1, 0, 1)) = make_field(trig(0.0, 0.2, 5, 2), 2);
    set.field(Coef::M, 1) = make_field(trig(1.0, 0.6, 7, 3), 2);
    double prev = std::numeric_limits<double>::infinity();
    for (int level = 0; level < 4; ++level) {
        SamplingGrid g;
        g.nt = 2;
        g.nx = (1 << (level + 1)) + 1; // nested lattices
        g.ny = 4 << level;
        const AssumptionReport r = validate_assumptions(set, g);
        EXPECT_LE(r.a3_margin, prev);
        prev = r.a3_margin;
    }
}

TEST(Assumptions, ReportIsDeterministic) {
    CoefficientSet set(1, 1);
    set.field(Coef::E, 0) = make_field(trig(2.0, 1.0), 1);
    const AssumptionReport a = validate_assumptions(set, {});
    const AssumptionReport b = validate_assumptions(set, {});
    EXPECT_EQ(a.a3_margin, b.a3_margin);
    EXPECT_EQ(a.samples_used, b.samples_used);
    EXPECT_EQ(a.samples_used, 5LL * 17 * 32);
}
