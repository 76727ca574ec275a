#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "pphom/cell_solver.hpp"

using namespace pphom;

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

CellCoefficients cell_1d(CellCoefficients::Fn E, CellCoefficients::Fn D = [](const Point&) { return 0.0; }) {
    CellCoefficients c;
    c.E = {std::move(E)};
    c.D = {std::move(D)};
    return c;
}

double harmonic_mean_oracle(const std::function<double(double)>& E) {
    // Composite Simpson on 1/E with 2^16 panels.
    const int n = 1 << 16;
    double s = 1.0 / E(0.0) + 1.0 / E(1.0);
    for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) / E(static_cast<double>(k) / n);
    return 1.0 / (s / (3.0 * n));
}

FamilySpec trig(double a, double b, int k1 = 1, int k2 = 0) {
    FamilySpec s;
    s.family = "trig";
    s.a = a;
    s.b = b;
    s.k = {k1, k2};
    return s;
}

double max_abs(const Vec& v) { return v.cwiseAbs().maxCoeff(); }

} // namespace

TEST(CellProblem, ConstantDiffusionHasZeroCorrector) {
    const CellSolution s = solve_cell(cell_1d([](const Point&) { return 2.5; }), CellGrid(1, 32));
    EXPECT_LE(max_abs(s.W[0]), 1e-12);
    EXPECT_NEAR(s.E_star(0, 0), 2.5, 1e-12);
}

TEST(CellProblem, ConstantDriftHasZeroCorrector) {
    const CellSolution s =
        solve_cell(cell_1d([](const Point& y) { return 2.0 + std::sin(two_pi * y[0]); }, [](const Point&) { return 0.7; }),
                   CellGrid(1, 32));
    EXPECT_LE(max_abs(s.delta[0]), 1e-12);
    EXPECT_NEAR(s.D_star[0], 0.7, 1e-12);
}

TEST(CellProblem, HarmonicMeanAtResolution256) {
    const auto E = [](double y) { return 2.0 + std::sin(two_pi * y); };
    const double oracle = harmonic_mean_oracle(E);
    EXPECT_NEAR(oracle, std::sqrt(3.0), 1e-12);
    const CellSolution s = solve_cell(cell_1d([E](const Point& y) { return E(y[0]); }), CellGrid(1, 256));
    EXPECT_NEAR(s.E_star(0, 0), oracle, 1e-6);
}

TEST(CellProblem, HarmonicMeanForAsymmetricProfile) {
    const auto E = [](double y) { return std::exp(std::sin(two_pi * y) + 0.5 * std::cos(4 * std::numbers::pi * y)); };
    const CellSolution s = solve_cell(cell_1d([E](const Point& y) { return E(y[0]); }), CellGrid(1, 128));
    EXPECT_NEAR(s.E_star(0, 0), harmonic_mean_oracle(E), 1e-9);
}

TEST(CellProblem, OneDimensionalFluxIsConstant) {
    const auto E = [](const Point& y) { return 2.0 + std::sin(two_pi * y[0]); };
    const auto D = [](const Point& y) { return 0.3 * std::cos(two_pi * y[0]) + 0.1; };
    const CellGrid cell(1, 64);
    const CellSolution s = solve_cell(cell_1d(E, D), cell);
    for (std::size_t p = 0; p < cell.size(); ++p) {
        const std::size_t q = *cell.neighbor(p, 0, 1);
        const Point y = cell.face(p, 0);
        // First integrals: E (1 + W') = E*, D + E delta' = D*.
        EXPECT_NEAR(E(y) * (1.0 + (s.W[0][q] - s.W[0][p]) / cell.h), s.E_star(0, 0), 1e-10);
        EXPECT_NEAR(D(y) + E(y) * (s.delta[0][q] - s.delta[0][p]) / cell.h, s.D_star[0], 1e-10);
    }
}

TEST(CellProblem, DeltaClosedFormForUnitDiffusion) {
    // E = 1, D = sin(2 pi y): delta = cos(2 pi y) / (2 pi).
    double prev = 0.0;
    for (int n : {32, 64, 128}) {
        const CellGrid cell(1, n);
        const CellSolution s = solve_cell(
            cell_1d([](const Point&) { return 1.0; }, [](const Point& y) { return std::sin(two_pi * y[0]); }), cell);
        double err = 0.0;
        for (std::size_t p = 0; p < cell.size(); ++p)
            err = std::max(err, std::abs(s.delta[0][p] - std::cos(two_pi * cell.node(p)[0]) / two_pi));
        if (prev > 0.0) {
            EXPECT_NEAR(prev / err, 4.0, 0.1);
        }
        prev = err;
        EXPECT_NEAR(s.D_star[0], 0.0, 1e-12);
    }
}

TEST(CellProblem, CorrectorsHaveZeroMean) {
    CellCoefficients c;
    c.d = 2;
    c.E = {[](const Point& y) { return 2.0 + std::sin(two_pi * (y[0] + y[1])); },
           [](const Point& y) { return 1.5 + 0.5 * std::cos(two_pi * y[0]); }};
    c.D = {[](const Point& y) { return std::sin(two_pi * y[1]); }, [](const Point& y) { return std::cos(two_pi * y[0]); }};
    const CellSolution s = solve_cell(c, CellGrid(2, 24));
    for (const Vec& w : s.W) EXPECT_NEAR(w.mean(), 0.0, 1e-13);
    EXPECT_NEAR(s.delta[0].mean(), 0.0, 1e-13);
}

TEST(CellProblem, DiscreteFluxIsDivergenceFree) {
    CellCoefficients c;
    c.d = 2;
    c.E = {[](const Point& y) { return 2.0 + std::sin(two_pi * (y[0] + y[1])); },
           [](const Point& y) { return 1.5 + 0.5 * std::cos(two_pi * (y[0] - 2 * y[1])); }};
    c.D = {[](const Point&) { return 0.0; }, [](const Point&) { return 0.0; }};
    const CellGrid cell(2, 24);
    const CellSolution s = solve_cell(c, cell);
    for (int j = 0; j < 2; ++j)
        for (std::size_t p = 0; p < cell.size(); ++p) {
            double div = 0.0;
            for (int k = 0; k < 2; ++k) {
                auto flux = [&](std::size_t a) {
                    const std::size_t b = *cell.neighbor(a, k, 1);
                    return c.E[k](cell.face(a, k)) * ((k == j ? 1.0 : 0.0) + (s.W[j][b] - s.W[j][a]) / cell.h);
                };
                div += (flux(p) - flux(*cell.neighbor(p, k, -1))) / cell.h;
            }
            EXPECT_NEAR(div, 0.0, 1e-8);
        }
}

TEST(CellProblem, SeparableProductMatchesOneDimensionalSolves) {
    const auto a = [](double y) { return 2.0 + std::sin(two_pi * y); };
    const auto b = [](double y) { return 1.5 + 0.5 * std::cos(two_pi * y); };
    CellCoefficients c;
    c.d = 2;
    const auto prod = [a, b](const Point& y) { return a(y[0]) * b(y[1]); };
    c.E = {prod, prod};
    c.D = {[](const Point&) { return 0.0; }, [](const Point&) { return 0.0; }};
    const int n = 32;
    const CellGrid cell(2, n);
    const CellSolution s = solve_cell(c, cell);
    const CellSolution sa = solve_cell(cell_1d([a](const Point& y) { return a(y[0]); }), CellGrid(1, n));
    const CellSolution sb = solve_cell(cell_1d([b](const Point& y) { return b(y[0]); }), CellGrid(1, n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const std::size_t p = cell.index(i, j);
            EXPECT_NEAR(s.W[0][p], sa.W[0][i], 1e-10);
            EXPECT_NEAR(s.W[1][p], sb.W[0][j], 1e-10);
        }
    EXPECT_NEAR(s.E_star(0, 1), 0.0, 1e-12);
    EXPECT_NEAR(s.E_star(1, 0), 0.0, 1e-12);
}

TEST(CellProblem, EffectiveTensorBoundsAndDefiniteness) {
    CellCoefficients c;
    c.d = 2;
    c.E = {[](const Point& y) { return 2.0 + std::sin(two_pi * (y[0] + y[1])); },
           [](const Point& y) { return 1.2 + 0.8 * std::sin(two_pi * y[0]) * std::cos(two_pi * y[1]); }};
    c.D = {[](const Point&) { return 0.0; }, [](const Point&) { return 0.0; }};
    const CellGrid cell(2, 32);
    const CellSolution s = solve_cell(c, cell);
    EXPECT_TRUE(positive_definite(s.E_star));
    // Variational bounds: harmonic mean <= E*_ii <= arithmetic mean.
    for (int i = 0; i < 2; ++i) {
        double mean = 0.0, inv = 0.0;
        for (std::size_t p = 0; p < cell.size(); ++p) {
            const double e = c.E[i](cell.face(p, i));
            mean += e;
            inv += 1.0 / e;
        }
        mean /= cell.size();
        inv /= cell.size();
        EXPECT_LE(s.E_star(i, i), mean + 1e-12);
        EXPECT_GE(s.E_star(i, i), 1.0 / inv - 1e-12);
    }
}

TEST(CellProblem, NonPositiveDiffusionIsAssemblyError) {
    EXPECT_THROW(solve_cell(cell_1d([](const Point& y) { return std::sin(two_pi * y[0]); }), CellGrid(1, 16)),
                 AssemblyError);
}

TEST(CorrectorTensors, ZeroFieldsGiveZero) {
    const CellGrid cell(1, 16);
    const std::vector<Vec> W{Vec::Zero(16)}, delta{Vec::Zero(16), Vec::Zero(16), Vec::Zero(16), Vec::Zero(16)};
    const CorrectorTensors t = corrector_tensors(Mat::Identity(2, 2), W, delta, cell);
    for (const Vec& v : t.delta_tilde) EXPECT_EQ(max_abs(v), 0.0);
    for (const Vec& v : t.omega_tilde) EXPECT_EQ(max_abs(v), 0.0);
}

TEST(CorrectorTensors, IdentityGReturnsGradientsAndScalesLinearly) {
    const CellGrid cell(1, 32);
    const CellSolution s = solve_cell(
        cell_1d([](const Point& y) { return 2.0 + std::sin(two_pi * y[0]); },
                [](const Point& y) { return 0.3 * std::sin(two_pi * y[0]); }),
        cell);
    const CellGradients g = corrector_gradients(s.W, s.delta, 1, cell);
    const CorrectorTensors one = corrector_tensors(Mat::Identity(1, 1), s.W, s.delta, cell);
    const CorrectorTensors two = corrector_tensors(2.0 * Mat::Identity(1, 1), s.W, s.delta, cell);
    EXPECT_TRUE(one.delta_tilde[0] == g.gradDelta[0]);
    EXPECT_TRUE(one.omega_tilde[0] == g.gradW[0]);
    EXPECT_TRUE(two.delta_tilde[0] == 2.0 * g.gradDelta[0]);
    EXPECT_TRUE(two.omega_tilde[0] == 2.0 * g.gradW[0]);
}

TEST(CellSweep, ConstantCoefficientsGiveIdenticalEntries) {
    CoefficientSet set(1, 2);
    set.field(Coef::E, 0) = constant_field(1.7);
    set.field(Coef::D, set.idx3(0, 0, 1)) = constant_field(0.2);
    const CellTable t = cell_sweep(set, MacroGrid(1, 9), {0.0}, CellGrid(1, 16));
    ASSERT_EQ(t.slices.size(), 1u);
    for (const CellEntry& e : t.slices[0]) {
        EXPECT_NEAR(e.E_star(0, 0), 1.7, 1e-12);
        EXPECT_NEAR(e.D_star[set.idx3(0, 0, 1)], 0.2, 1e-12);
        EXPECT_NEAR(e.D_star[set.idx3(0, 1, 0)], 0.0, 1e-12);
    }
}

TEST(CellSweep, SeparableScalingMatchesGeneralPath) {
    FamilySpec e = trig(2.0, 1.0);
    e.family = "separable";
    e.x0 = 1.0;
    e.x1 = 0.5;
    e.t1 = 0.3;
    FamilySpec dr = trig(0.1, 0.3);
    dr.family = "separable";
    dr.x0 = 0.5;
    dr.x1 = 1.0;
    CoefficientSet sep(1, 1), gen(1, 1);
    sep.request_separable = true;
    gen.request_separable = true;
    sep.field(Coef::E, 0) = make_field(e, 1);
    sep.field(Coef::D, 0) = make_field(dr, 1);
    const ScalarField fe = sep.field(Coef::E, 0), fd = sep.field(Coef::D, 0);
    gen.field(Coef::E, 0) = custom_field(fe.fn);
    gen.field(Coef::D, 0) = custom_field(fd.fn);
    const MacroGrid macro(1, 9);
    const CellGrid cell(1, 32);
    const CellTable a = cell_sweep(sep, macro, {0.0, 0.5}, cell, std::vector<bool>(9, true));
    const CellTable b = cell_sweep(gen, macro, {0.0, 0.5}, cell, std::vector<bool>(9, true));
    EXPECT_TRUE(a.separable);
    EXPECT_FALSE(b.separable);
    ASSERT_EQ(a.slices.size(), 2u);
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t p = 0; p < macro.size(); ++p) {
            const CellEntry& ea = a.at(s, p);
            const CellEntry& eb = b.at(s, p);
            EXPECT_NEAR(ea.E_star(0, 0), eb.E_star(0, 0), 1e-12);
            EXPECT_NEAR(ea.D_star[0], eb.D_star[0], 1e-12);
            const Vec scaled = ea.delta_scale(0, 0) * ea.grads->gradDelta[0];
            EXPECT_LE(max_abs(scaled - eb.grads->gradDelta[0]), 1e-10);
            EXPECT_LE(max_abs(ea.grads->gradW[0] - eb.grads->gradW[0]), 1e-10);
        }
}

TEST(CellSweep, TableEntryMatchesPointSolve) {
    CoefficientSet set(2, 1);
    set.field(Coef::E, 0) = custom_field([](double, const Point& x, const Point& y) {
        return 2.0 + x[0] * std::sin(two_pi * (y[0] + y[1]));
    }, false);
    set.field(Coef::E, 1) = custom_field([](double, const Point& x, const Point& y) {
        return 1.5 + 0.5 * x[1] * std::cos(two_pi * y[0]);
    }, false);
    const MacroGrid macro(2, 5);
    const CellGrid cell(2, 16);
    const CellTable t = cell_sweep(set, macro, {0.0}, cell);
    for (std::size_t p : {std::size_t{0}, std::size_t{7}, std::size_t{18}}) {
        const CellSolution s = solve_cell(CellCoefficients::at(set, 0.0, macro.node(p)), cell);
        EXPECT_TRUE((t.at(0, p).E_star - s.E_star).cwiseAbs().maxCoeff() <= 1e-14);
    }
}

TEST(CellSweep, TimeDependentCoefficientsGetSlices) {
    CoefficientSet set(1, 1);
    FamilySpec e = trig(2.0, 1.0);
    e.family = "separable";
    e.t1 = 1.0;
    set.field(Coef::E, 0) = make_field(e, 1);
    const CellTable t = cell_sweep(set, MacroGrid(1, 5), {0.0, 0.1, 0.2}, CellGrid(1, 64));
    ASSERT_EQ(t.slices.size(), 3u);
    EXPECT_EQ(t.slice_for(0.1), 1u);
    EXPECT_THROW(t.slice_for(0.15), DomainError);
    EXPECT_NEAR(t.at(2, 0).E_star(0, 0), 1.2 * std::sqrt(3.0), 1e-10);
}

TEST(MemoryNodes, OnlyInteriorNodesWhereJVariesInY) {
    CoefficientSet set(1, 1);
    set.field(Coef::J, 0) = custom_field([](double, const Point& x, const Point& y) {
        return x[0] < 0.5 ? 0.2 : 0.2 + std::sin(two_pi * y[0]);
    }, false);
    const auto active = memory_active_nodes(set, MacroGrid(1, 5), CellGrid(1, 16));
    EXPECT_EQ(active, (std::vector<bool>{false, false, true, true, false}));
    CoefficientSet flat(1, 1);
    flat.field(Coef::J, 0) = constant_field(0.4);
    const auto none = memory_active_nodes(flat, MacroGrid(1, 5), CellGrid(1, 16));
    EXPECT_EQ(std::count(none.begin(), none.end(), true), 0);
}
