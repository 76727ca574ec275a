#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "pphom/verification.hpp"

using namespace pphom;

namespace {

constexpr double pi = std::numbers::pi;

FamilySpec trig(double a, double b) {
    FamilySpec s;
    s.family = "trig";
    s.a = a;
    s.b = b;
    return s;
}

ScalarField sin_pi_x(double scale = 1.0) {
    return custom_field([scale](double, const Point& x, const Point&) { return scale * std::sin(pi * x[0]); }, false,
                        true, false);
}

CoefficientSet oscillatory() {
    CoefficientSet set(1, 1);
    set.field(Coef::E, 0) = make_field(trig(2.0, 1.0), 1);
    set.field(Coef::D, 0) = make_field(trig(0.0, 0.3), 1);
    set.field(Coef::J, 0) = make_field(trig(0.2, 0.3), 1);
    set.field(Coef::K, 0) = constant_field(0.5);
    set.field(Coef::L, 0) = constant_field(1.0);
    set.field(Coef::Ustar, 0) = sin_pi_x();
    return set;
}

MicroTrajectory single_state(const MacroGrid& g, const Mat& U, const Mat& V) {
    MicroTrajectory t;
    t.grid = g;
    t.dt = 0.1;
    t.states.push_back({0.0, U, V});
    return t;
}

Mat nodal(const MacroGrid& g, const std::function<double(double)>& f) {
    Mat out(g.size(), 1);
    for (std::size_t p = 0; p < g.size(); ++p) out(p, 0) = f(g.node(p)[0]);
    return out;
}

} // namespace

TEST(EnergyConstants, ValidExactlyWhenDriftBoundHolds) {
    for (double D : {0.0, 0.5, 1.9, 1.99, 2.01, 3.0}) {
        CoefficientSet set(1, 1);
        set.field(Coef::D, 0) = constant_field(D);
        const SupBounds b = sample_bounds(set, {});
        const EnergyConstants c = derive_energy_constants(set, b);
        const AssumptionReport r = validate_assumptions(set, {});
        EXPECT_EQ(c.valid, r.a3_margin > 0.0) << "D=" << D;
        EXPECT_EQ(c.kappa < 1.0, r.a3_margin > 0.0) << "D=" << D;
    }
}

TEST(EnergyConstants, PositiveWhenValid) {
    const CoefficientSet set = oscillatory();
    const EnergyConstants c = derive_energy_constants(set, sample_bounds(set, {}));
    ASSERT_TRUE(c.valid);
    EXPECT_GT(c.m_tilde, 0.0);
    EXPECT_GT(c.e_tilde, 0.0);
    EXPECT_GT(c.H_tilde, 0.0);
    for (double k : c.K_tilde) EXPECT_GT(k, 0.0);
    for (double j : c.J_tilde) EXPECT_GT(j, 0.0);
}

TEST(EnergyCertificate, LeftSideMatchesContinuousNorms) {
    // V = sin(pi x): ||V||^2 = 1/2, ||V'||^2 = pi^2 / 2.
    EnergyConstants c;
    c.valid = true;
    c.m_tilde = 2.0;
    c.e_tilde = 3.0;
    c.H_tilde = 1.0;
    c.K_tilde = {0.0};
    c.J_tilde = {0.0};
    double prev = 0.0;
    for (int n : {33, 65, 129}) {
        const MacroGrid g(1, n);
        const auto traj = single_state(g, Mat::Zero(n, 1), nodal(g, [](double x) { return std::sin(pi * x); }));
        const EnergyReport r = energy_certificate(c, traj);
        const double err = std::abs(r.left[0] - (2.0 * 0.5 + 3.0 * pi * pi / 2.0));
        if (prev > 0.0) {
            EXPECT_NEAR(prev / err, 4.0, 0.2);
        }
        prev = err;
        EXPECT_EQ(r.right[0], 1.0);
    }
}

TEST(EnergyCertificate, ZeroSolutionPasses) {
    CoefficientSet set = oscillatory();
    set.field(Coef::Ustar, 0) = constant_field(0.0);
    const auto traj = run_micro(set, 0.25, MacroGrid(1, 33), 0.05, 0.2, TimeScheme::implicit_euler);
    const EnergyReport r = energy_certificate(set, traj);
    EXPECT_TRUE(r.all_pass());
    for (double l : r.left) EXPECT_EQ(l, 0.0);
}

TEST(EnergyCertificate, OscillatoryRunPassesAtEveryTime) {
    const CoefficientSet set = oscillatory();
    for (double eps : {0.25, 0.125}) {
        const auto traj = run_micro(set, eps, MacroGrid(1, 129), 0.05, 0.5, TimeScheme::implicit_euler);
        const EnergyReport r = energy_certificate(set, traj);
        ASSERT_EQ(r.pass.size(), traj.states.size());
        EXPECT_TRUE(r.all_pass());
        for (std::size_t i = 0; i < r.left.size(); ++i) EXPECT_LT(r.left[i], r.right[i]);
    }
}

TEST(EnergyCertificate, InvalidConstantsFail) {
    CoefficientSet set = oscillatory();
    set.field(Coef::D, 0) = constant_field(3.0);
    const auto traj = run_micro(set, 0.25, MacroGrid(1, 33), 0.05, 0.1, TimeScheme::implicit_euler);
    const EnergyReport r = energy_certificate(set, traj);
    EXPECT_FALSE(r.constants.valid);
    EXPECT_FALSE(r.all_pass());
}

TEST(CompositeNorm, ZeroTrajectoryIsZero) {
    const MacroGrid g(1, 17);
    MicroTrajectory t = single_state(g, Mat::Zero(17, 1), Mat::Zero(17, 1));
    t.states.push_back({0.1, Mat::Zero(17, 1), Mat::Zero(17, 1)});
    EXPECT_EQ(composite_norm(t), 0.0);
}

TEST(CompositeNorm, ConstantInTimeField) {
    // U = V = sin(pi x) on [0, T]: |U|_{H1 space-time} = sqrt(T (1/2 + pi^2/2)), |V| term = sqrt(1/2 + pi^2/2).
    const MacroGrid g(1, 257);
    const Mat S = nodal(g, [](double x) { return std::sin(pi * x); });
    MicroTrajectory t;
    t.grid = g;
    t.dt = 0.25;
    for (int n = 0; n <= 4; ++n) t.states.push_back({0.25 * n, S, S});
    const double h1 = 0.5 + pi * pi / 2.0;
    EXPECT_NEAR(composite_norm(t), std::sqrt(h1) + std::sqrt(h1), 1e-3);
}

TEST(UniformBound, CellIndependentDataGivesRatioOne) {
    CoefficientSet set(1, 1);
    set.field(Coef::L, 0) = constant_field(1.0);
    set.field(Coef::Ustar, 0) = sin_pi_x();
    std::vector<MicroTrajectory> runs;
    for (double eps : {0.25, 0.125, 0.0625})
        runs.push_back(run_micro(set, eps, MacroGrid(1, 65), 0.05, 0.2, TimeScheme::implicit_euler));
    EXPECT_NEAR(uniform_bound_check(runs).ratio, 1.0, 1e-12);
}

TEST(UniformBound, OscillatoryRatioBounded) {
    const CoefficientSet set = oscillatory();
    std::vector<MicroTrajectory> runs;
    for (double eps : {0.25, 0.125, 0.0625})
        runs.push_back(run_micro(set, eps, MacroGrid(1, 257), 0.05, 0.5, TimeScheme::implicit_euler));
    const UniformBoundTable t = uniform_bound_check(runs);
    EXPECT_EQ(t.eps.size(), 3u);
    EXPECT_LE(t.ratio, 1.5);
}

TEST(LogLogSlope, RecoversPowerLaw) {
    const std::vector<double> x{0.25, 0.125, 0.0625};
    std::vector<double> y;
    for (double v : x) y.push_back(3.0 * std::pow(v, 1.5));
    EXPECT_NEAR(log_log_slope(x, y), 1.5, 1e-12);
}

TEST(Inject, TakesCoincidentNodes) {
    const MacroGrid fine(1, 9), coarse(1, 3);
    Mat f(9, 1);
    for (int i = 0; i < 9; ++i) f(i, 0) = i;
    const Mat c = inject(f, fine, coarse);
    EXPECT_EQ(c(0, 0), 0.0);
    EXPECT_EQ(c(1, 0), 4.0);
    EXPECT_EQ(c(2, 0), 8.0);
}

TEST(Convergence, ResolutionIsEnforced) {
    ConvergenceSetup s;
    s.eps = {0.25, 1.0 / 64};
    s.micro_n = 257; // 4 nodes per period at eps = 1/64
    try {
        require_resolved(s);
        FAIL() << "expected DomainError";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("0.015625"), std::string::npos);
        EXPECT_EQ(std::string(e.what()).find("eps=0.25"), std::string::npos);
    }
}

TEST(Convergence, CellConstantCoefficientsHaveNoHomogenizationError) {
    CoefficientSet set(1, 1);
    set.field(Coef::E, 0) = constant_field(1.3);
    set.field(Coef::K, 0) = constant_field(0.5);
    set.field(Coef::L, 0) = constant_field(1.0);
    set.field(Coef::Ustar, 0) = sin_pi_x();
    ConvergenceSetup s;
    s.eps = {0.25, 0.125};
    s.micro_n = 65;
    s.macro_n = 65;
    s.T = 0.2;
    const ConvergenceTable t = micro_macro_convergence(set, s);
    for (const auto& row : t.rows) {
        EXPECT_LE(row.err_u, 1e-10);
        EXPECT_LE(row.err_v, 1e-10);
    }
}

TEST(Convergence, OscillatoryErrorsDecreaseWithEps) {
    ConvergenceSetup s;
    s.eps = {0.25, 0.125, 0.0625};
    std::vector<MicroTrajectory> runs;
    const ConvergenceTable t = micro_macro_convergence(oscillatory(), s, &runs);
    ASSERT_EQ(t.rows.size(), 3u);
    EXPECT_TRUE(t.strictly_decreasing_u());
    EXPECT_GT(t.rate_u, 0.5);
    EXPECT_EQ(runs.size(), 3u);
}

TEST(Convergence, MicroGridMustRefineMacroGrid) {
    ConvergenceSetup s;
    s.eps = {0.25};
    s.micro_n = 97;
    s.macro_n = 65;
    EXPECT_THROW(micro_macro_convergence(oscillatory(), s), DomainError);
}

TEST(ManufacturedOrders, MicroSystemReachesDesignOrders) {
    CoefficientSet set(1, 2);
    set.field(Coef::E, 0) = make_field(trig(2.0, 1.0), 1);
    set.field(Coef::D, set.idx3(0, 0, 1)) = make_field(trig(0.0, 0.2), 1);
    set.field(Coef::K, set.idx2(1, 0)) = constant_field(0.3);
    set.field(Coef::L, set.idx2(0, 1)) = constant_field(0.5);
    ManufacturedSetup s;
    s.amplitude = (Vec(2) << 1.0, -0.5).finished();
    const OrderReport r = manufactured_orders(set, ManufacturedTarget::micro, s);
    EXPECT_GE(r.spatial_order, 1.9);
    EXPECT_GE(r.temporal_order, 0.9);
}

TEST(ManufacturedOrders, MacroNeedsCellConstantJ) {
    ManufacturedSetup s;
    s.amplitude = Vec::Ones(1);
    EXPECT_THROW(manufactured_orders(oscillatory(), ManufacturedTarget::macro, s), DomainError);
}
