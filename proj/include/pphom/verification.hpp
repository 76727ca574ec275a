#pragma once

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pphom/cell_solver.hpp"
#include "pphom/coefficients.hpp"
#include "pphom/error.hpp"
#include "pphom/grid.hpp"
#include "pphom/macro_solver.hpp"
#include "pphom/micro_solver.hpp"
#include "pphom/parallel.hpp"
#include "pphom/types.hpp"

namespace pphom {

// ---------------------------------------------------------------- energy

/// Constants of the a-priori estimate
///   sum m~ |V_a|^2 + sum e~ |d_i V_a|^2 <= H~ + sum K~_b |U_b|^2 + sum J~_ib |d_i U_b|^2.
struct EnergyConstants {
    bool valid = false; ///< false when the structural bounds do not allow a derivation
    double kappa = 0.0;
    double tau = 0.0;
    double m_tilde = 0.0;
    double e_tilde = 0.0;
    double H_tilde = 0.0;
    std::vector<double> K_tilde; ///< per component b
    std::vector<double> J_tilde; ///< index i * N + b
};

/// Young-inequality constants from sampled coefficient bounds (see
/// docs/energy_certificate.md). kappa < 1 exactly when the drift bound holds.
inline EnergyConstants derive_energy_constants(const CoefficientSet& set, const SupBounds& b) {
    const int d = set.dim();
    const int N = set.size();
    EnergyConstants c;
    c.K_tilde.assign(N, 0.0);
    c.J_tilde.assign(static_cast<std::size_t>(d) * N, 0.0);
    if (!(b.m_min > 0.0) || !(b.e_min > 0.0)) return c;
    const double m0 = b.m_min;
    const double e0 = b.e_min;
    c.kappa = std::sqrt(b.max_D_sq) * N * std::sqrt(static_cast<double>(d)) / (2.0 * std::sqrt(m0 * e0));
    if (!(c.kappa < 1.0)) return c;
    c.valid = true;
    c.m_tilde = 0.5 * m0 * (1.0 - c.kappa);
    c.e_tilde = e0 * (1.0 - c.kappa);
    c.tau = m0 * (1.0 - c.kappa) / (1.0 + N + d * N);
    const double w = 1.0 / (2.0 * c.tau);
    for (int a = 0; a < N; ++a) c.H_tilde += w * b.sup_H_sq[a];
    for (int bb = 0; bb < N; ++bb) {
        for (int a = 0; a < N; ++a) c.K_tilde[bb] += w * b.sup_K_sq[set.idx2(a, bb)];
        for (int i = 0; i < d; ++i)
            for (int a = 0; a < N; ++a) c.J_tilde[i * N + bb] += w * b.sup_J_sq[set.idx3(i, a, bb)];
    }
    c.H_tilde = std::max(c.H_tilde, DBL_EPSILON);
    for (auto& v : c.K_tilde) v = std::max(v, DBL_EPSILON);
    for (auto& v : c.J_tilde) v = std::max(v, DBL_EPSILON);
    return c;
}

struct EnergyReport {
    EnergyConstants constants;
    std::vector<double> times;
    std::vector<double> left;
    std::vector<double> right;
    std::vector<bool> pass;

    bool all_pass() const {
        return constants.valid && std::all_of(pass.begin(), pass.end(), [](bool b) { return b; });
    }
};

/// Squared discrete L2 norms of the face differences (d_i w) of every column;
/// result(i, a). Faces have weight h^d.
inline Mat face_difference_norms(const Mat& W, const MacroGrid& g) {
    Mat out = Mat::Zero(g.d, W.cols());
    const double vol = std::pow(g.h, g.d);
    for (int i = 0; i < g.d; ++i)
        for (std::size_t p = 0; p < g.size(); ++p) {
            if (!g.has_face(p, i)) continue;
            const std::size_t q = *g.neighbor(p, i, 1);
            for (Eigen::Index a = 0; a < W.cols(); ++a) {
                const double dv = (W(q, a) - W(p, a)) / g.h;
                out(i, a) += vol * dv * dv;
            }
        }
    return out;
}

/// Squared trapezoid norms of the nodal gradients of every column; result(i, a).
inline Mat nodal_gradient_norms(const Mat& U, const MacroGrid& g) {
    const Vec w = quadrature_weights(g);
    Mat out(g.d, U.cols());
    for (Eigen::Index a = 0; a < U.cols(); ++a) {
        const Mat gr = fd_gradient(U.col(a), g);
        for (int i = 0; i < g.d; ++i) out(i, a) = w.dot(gr.col(i).cwiseAbs2());
    }
    return out;
}

/// Evaluates both sides of the estimate at every recorded time.
inline EnergyReport energy_certificate(const EnergyConstants& c, const MicroTrajectory& traj) {
    const auto& g = traj.grid;
    const Vec w = quadrature_weights(g);
    EnergyReport r;
    r.constants = c;
    for (const auto& s : traj.states) {
        const int N = static_cast<int>(s.U.cols());
        const Mat dV = face_difference_norms(s.V, g);
        const Mat dU = nodal_gradient_norms(s.U, g);
        double left = 0.0;
        double right = c.H_tilde;
        for (int a = 0; a < N; ++a) {
            left += c.m_tilde * w.dot(s.V.col(a).cwiseAbs2());
            for (int i = 0; i < g.d; ++i) left += c.e_tilde * dV(i, a);
            if (c.valid) {
                right += c.K_tilde[a] * w.dot(s.U.col(a).cwiseAbs2());
                for (int i = 0; i < g.d; ++i) right += c.J_tilde[i * N + a] * dU(i, a);
            }
        }
        r.times.push_back(s.t);
        r.left.push_back(left);
        r.right.push_back(right);
        r.pass.push_back(c.valid && left <= right);
    }
    return r;
}

/// Derived-constant variant: bounds are sampled on `grid` (its T is reset to
/// the trajectory end time).
inline EnergyReport energy_certificate(const CoefficientSet& set, const MicroTrajectory& traj,
                                       SamplingGrid grid = {}) {
    grid.T = traj.states.empty() ? 0.0 : std::max(traj.states.back().t, 0.0);
    if (grid.T == 0.0) grid.nt = 1;
    return energy_certificate(derive_energy_constants(set, sample_bounds(set, grid)), traj);
}

// ------------------------------------------------------------ uniform bound

/// |U|_{H1((0,T) x Omega)} + |V|_{Linf((0,T), H1(Omega))} on a trajectory.
inline double composite_norm(const MicroTrajectory& traj) {
    const auto& g = traj.grid;
    const Vec w = quadrature_weights(g);
    auto h1_sq = [&](const Mat& F) {
        double s = 0.0;
        const Mat dn = nodal_gradient_norms(F, g);
        for (Eigen::Index a = 0; a < F.cols(); ++a) s += w.dot(F.col(a).cwiseAbs2()) + dn.col(a).sum();
        return s;
    };
    double u_space_time = 0.0;
    double v_max = 0.0;
    const auto& st = traj.states;
    for (std::size_t n = 0; n < st.size(); ++n) {
        v_max = std::max(v_max, h1_sq(st[n].V));
        if (n == 0) continue;
        const double tau = st[n].t - st[n - 1].t;
        u_space_time += 0.5 * tau * (h1_sq(st[n].U) + h1_sq(st[n - 1].U));
        u_space_time += tau * l2_squared((st[n].U - st[n - 1].U) / tau, w);
    }
    return std::sqrt(u_space_time) + std::sqrt(v_max);
}

struct UniformBoundTable {
    std::vector<double> eps;
    std::vector<double> norm;
    double ratio = 1.0; ///< max / min (1 when all norms vanish)
};

inline UniformBoundTable uniform_bound_check(const std::vector<MicroTrajectory>& runs) {
    UniformBoundTable t;
    for (const auto& r : runs) {
        t.eps.push_back(r.eps);
        t.norm.push_back(composite_norm(r));
    }
    if (!t.norm.empty()) {
        const double lo = *std::min_element(t.norm.begin(), t.norm.end());
        const double hi = *std::max_element(t.norm.begin(), t.norm.end());
        t.ratio = hi == 0.0 ? 1.0 : (lo == 0.0 ? std::numeric_limits<double>::infinity() : hi / lo);
    }
    return t;
}

// -------------------------------------------------------------- convergence

struct ConvergenceRow {
    double eps = 0.0;
    int micro_n = 0;
    int macro_n = 0;
    double dt = 0.0;
    double err_u = 0.0;
    double err_v = 0.0;
    double bound = 0.0; ///< composite norm of the micro run
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows; ///< decreasing eps
    double rate_u = 0.0;              ///< slope of log(err_u) against log(eps)
    double rate_v = 0.0;

    bool strictly_decreasing_u() const {
        for (std::size_t i = 1; i < rows.size(); ++i)
            if (!(rows[i].err_u < rows[i - 1].err_u)) return false;
        return true;
    }
};

/// Least-squares slope of log(y) against log(x).
inline double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double den = n * sxx - sx * sx;
    return den == 0.0 ? 0.0 : (n * sxy - sx * sy) / den;
}

/// Injects a fine macro-grid field onto a coarser nested grid.
inline Mat inject(const Mat& fine, const MacroGrid& fg, const MacroGrid& cg) {
    if ((fg.n - 1) % (cg.n - 1) != 0) throw DomainError("grids are not nested");
    const int r = (fg.n - 1) / (cg.n - 1);
    Mat out(cg.size(), fine.cols());
    for (std::size_t p = 0; p < cg.size(); ++p) {
        const auto c = cg.coords(p);
        out.row(p) = fine.row(fg.index(c[0] * r, c[1] * r));
    }
    return out;
}

/// L2((0,T) x Omega) distance, trapezoid in time, between two field
/// sequences sampled at the same times on grid g.
inline double space_time_l2(const std::vector<Mat>& a, const std::vector<Mat>& b, const std::vector<double>& t,
                            const MacroGrid& g) {
    if (a.size() != b.size() || a.size() != t.size()) throw DomainError("space_time_l2: length mismatch");
    const Vec w = quadrature_weights(g);
    if (a.size() == 1) return std::sqrt(l2_squared(a[0] - b[0], w));
    double s = 0.0;
    for (std::size_t n = 1; n < a.size(); ++n)
        s += 0.5 * (t[n] - t[n - 1]) * (l2_squared(a[n] - b[n], w) + l2_squared(a[n - 1] - b[n - 1], w));
    return std::sqrt(s);
}

struct ConvergenceSetup {
    std::vector<double> eps;
    int micro_n = 257;
    int macro_n = 65;
    int cell_n = 32;
    double dt = 0.05;
    double T = 0.5;
    int min_nodes_per_period = 8;
    CorrectorMode mode = CorrectorMode::stepped;
    TimeScheme scheme = TimeScheme::implicit_euler;
    SolverOptions options;
};

/// Throws DomainError listing every eps that the micro grid does not resolve.
inline void require_resolved(const ConvergenceSetup& s) {
    std::string bad;
    for (double e : s.eps) {
        const double per_period = e * (s.micro_n - 1);
        if (per_period + 1e-9 < s.min_nodes_per_period) {
            if (!bad.empty()) bad += ", ";
            bad += "eps=" + std::to_string(e) + " (" + std::to_string(per_period) + " nodes/period)";
        }
    }
    if (!bad.empty())
        throw DomainError("micro grid with " + std::to_string(s.micro_n) + " points does not resolve " + bad +
                          "; need >= " + std::to_string(s.min_nodes_per_period) + " nodes per period");
}

/// One macro run and one micro run per eps; errors on the shared coarse grid.
inline ConvergenceTable micro_macro_convergence(const CoefficientSet& set, const ConvergenceSetup& s,
                                                std::vector<MicroTrajectory>* micro_runs = nullptr) {
    require_resolved(s);
    const MacroGrid fine(set.dim(), s.micro_n);
    const MacroGrid coarse(set.dim(), s.macro_n);
    if ((fine.n - 1) % (coarse.n - 1) != 0) throw DomainError("micro grid must refine the macro grid");
    const CellGrid cell(set.dim(), s.cell_n);

    const int steps = step_count(s.T, s.dt);
    std::vector<double> times;
    for (int n = 0; n <= steps; ++n) times.push_back(n * s.dt);
    const CellTable table = cell_sweep(set, coarse, times, cell, memory_active_nodes(set, coarse, cell));
    const MacroTrajectory macro = run_macro(set, table, s.dt, s.T, s.mode, s.scheme, s.options);

    std::vector<double> eps = s.eps;
    std::sort(eps.begin(), eps.end(), std::greater<>());
    std::vector<MicroTrajectory> runs(eps.size());
    parallel_for(eps.size(), [&](std::size_t i) {
        runs[i] = run_micro(set, eps[i], fine, s.dt, s.T, s.scheme, s.options);
    });

    ConvergenceTable tab;
    std::vector<double> eu, ev;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        std::vector<Mat> Uc, Vc, uc, vc;
        std::vector<double> t;
        for (std::size_t n = 0; n < runs[i].states.size(); ++n) {
            Uc.push_back(inject(runs[i].states[n].U, fine, coarse));
            Vc.push_back(inject(runs[i].states[n].V, fine, coarse));
            uc.push_back(macro.states[n].u);
            vc.push_back(macro.states[n].v);
            t.push_back(runs[i].states[n].t);
        }
        ConvergenceRow row;
        row.eps = eps[i];
        row.micro_n = s.micro_n;
        row.macro_n = s.macro_n;
        row.dt = s.dt;
        row.err_u = space_time_l2(Uc, uc, t, coarse);
        row.err_v = space_time_l2(Vc, vc, t, coarse);
        row.bound = composite_norm(runs[i]);
        tab.rows.push_back(row);
        eu.push_back(row.err_u);
        ev.push_back(row.err_v);
    }
    bool positive = true;
    for (std::size_t i = 0; i < eu.size(); ++i) positive = positive && eu[i] > 0.0 && ev[i] > 0.0;
    if (positive) {
        tab.rate_u = log_log_slope(eps, eu);
        tab.rate_v = log_log_slope(eps, ev);
    }
    if (micro_runs) *micro_runs = std::move(runs);
    return tab;
}

// ------------------------------------------------------- manufactured orders

enum class ManufacturedTarget { micro, macro };

/// Manufactured problem U = c phi(t) prod_k sin(pi x_k), V = G^{-1}(dU/dt + L U);
/// H is the residual of the elliptic equation, built from fourth-order
/// finite differences of the flux.
struct ManufacturedSetup {
    Vec amplitude;               ///< c, length N
    double eps = 0.5;            ///< micro only
    int cell_n = 32;             ///< macro only
    double T = 0.2;
    std::vector<int> space_levels{17, 33, 65};
    double space_dt = 0.05;
    int time_grid = 17;
    std::vector<double> time_dts{0.05, 0.025, 0.0125};
};

struct OrderReport {
    std::vector<double> h;
    std::vector<double> space_error;
    std::vector<double> dt;
    std::vector<double> time_difference;
    double spatial_order = 0.0;
    double temporal_order = 0.0;
};

namespace detail {

struct TimeProfile {
    std::function<double(double)> phi;
    std::function<double(double)> dphi;
};

inline TimeProfile linear_profile() {
    return {[](double t) { return 1.0 + t; }, [](double) { return 1.0; }};
}

inline TimeProfile exponential_profile() {
    return {[](double t) { return std::exp(-t); }, [](double t) { return -std::exp(-t); }};
}

inline double shape(const Point& x, int d) {
    double s = 1.0;
    for (int k = 0; k < d; ++k) s *= std::sin(std::numbers::pi * x[k]);
    return s;
}

// Elliptic coefficients seen by the equation being manufactured.
struct EllipticView {
    std::function<Mat(double, const Point&)> E;                 // d x d
    std::function<std::vector<double>(double, const Point&)> D; // d*N*N
    std::function<Vec(double, const Point&)> m;                 // N
    std::function<Mat(double, const Point&)> K;                 // N x N
    std::function<Mat(double, const Point&)> J;                 // (d*N) x N, row i*N + a
};

template <class F>
Vec central4(F&& f, const Point& x, int k, double h) {
    Point p1 = x, m1 = x, p2 = x, m2 = x;
    p1[k] += h;
    m1[k] -= h;
    p2[k] += 2 * h;
    m2[k] -= 2 * h;
    const Vec a = f(p1), b = f(m1), c = f(p2), e = f(m2);
    return (8.0 * (a - b) - (c - e)) / (12.0 * h);
}

/// Forcing H(t, x) = m V - div(E grad V + D V) - K U - J . grad U.
inline Vec manufactured_forcing(const EllipticView& ev, const std::function<Vec(double, const Point&)>& U,
                                const std::function<Vec(double, const Point&)>& V, int d, int N, double t,
                                const Point& x, double step) {
    auto grad = [&](const std::function<Vec(double, const Point&)>& F, const Point& y, int k) {
        return central4([&](const Point& z) { return F(t, z); }, y, k, step);
    };
    auto flux = [&](const Point& y, int i) {
        const Mat E = ev.E(t, y);
        const std::vector<double> D = ev.D(t, y);
        const Vec v = V(t, y);
        Vec f = Vec::Zero(N);
        for (int j = 0; j < d; ++j)
            if (E(i, j) != 0.0) f += E(i, j) * grad(V, y, j);
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < N; ++b) f[a] += D[(static_cast<std::size_t>(i) * N + a) * N + b] * v[b];
        return f;
    };
    Vec h = ev.m(t, x).cwiseProduct(V(t, x)) - ev.K(t, x) * U(t, x);
    const Mat J = ev.J(t, x);
    for (int i = 0; i < d; ++i) {
        h -= central4([&](const Point& y) { return flux(y, i); }, x, i, step);
        h -= J.block(i * N, 0, N, N) * grad(U, x, i);
    }
    return h;
}

struct Manufactured {
    CoefficientSet set;
    std::function<Vec(double, const Point&)> U;
    std::function<Vec(double, const Point&)> V;
};

inline EllipticView micro_view(const CoefficientSet& base, double eps) {
    const int d = base.dim();
    const int N = base.size();
    EllipticView v;
    v.E = [&base, eps, d](double t, const Point& x) {
        const Point y = cell_coordinate(x, eps, d);
        Mat E = Mat::Zero(d, d);
        for (int i = 0; i < d; ++i) E(i, i) = base.e(i, t, x, y);
        return E;
    };
    v.D = [&base, eps, d](double t, const Point& x) {
        return base.sample(Coef::D, t, x, cell_coordinate(x, eps, d)).values;
    };
    v.m = [&base, eps, d, N](double t, const Point& x) {
        const Point y = cell_coordinate(x, eps, d);
        Vec m(N);
        for (int a = 0; a < N; ++a) m[a] = base.m(a, t, x, y);
        return m;
    };
    v.K = [&base, eps, d, N](double t, const Point& x) {
        const Point y = cell_coordinate(x, eps, d);
        Mat K(N, N);
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < N; ++b) K(a, b) = base.K(a, b, t, x, y);
        return K;
    };
    v.J = [&base, eps, d, N](double t, const Point& x) {
        const Point y = cell_coordinate(x, eps, d);
        Mat J(d * N, N);
        for (int i = 0; i < d; ++i)
            for (int a = 0; a < N; ++a)
                for (int b = 0; b < N; ++b) J(i * N + a, b) = base.J(i, a, b, t, x, y);
        return J;
    };
    return v;
}

// Effective view: point cell solves for E*, D* (cached per (t, x)) and
// Y-averages for the zeroth-order coefficients.
inline EllipticView macro_view(const CoefficientSet& base, const CellGrid& cell) {
    const int d = base.dim();
    const int N = base.size();
    struct Cache {
        std::mutex mu;
        std::map<std::array<double, 3>, std::pair<Mat, std::vector<double>>> values;
    };
    auto cache = std::make_shared<Cache>();
    const bool tc = base.time_constant(Coef::E) && base.time_constant(Coef::D);
    auto eff = [&base, cell, cache, tc](double t, const Point& x) {
        const std::array<double, 3> key{tc ? 0.0 : t, x[0], x[1]};
        {
            std::lock_guard<std::mutex> lock(cache->mu);
            auto it = cache->values.find(key);
            if (it != cache->values.end()) return it->second;
        }
        const CellSolution s = solve_cell(CellCoefficients::at(base, t, x), cell, t, x);
        std::lock_guard<std::mutex> lock(cache->mu);
        return cache->values.emplace(key, std::make_pair(s.E_star, s.D_star)).first->second;
    };
    const int qn = cell.n;
    EllipticView v;
    v.E = [eff](double t, const Point& x) { return eff(t, x).first; };
    v.D = [eff](double t, const Point& x) { return eff(t, x).second; };
    v.m = [&base, qn, N](double t, const Point& x) {
        const Tensor m = y_average(base, Coef::M, t, x, qn);
        return Vec(Eigen::Map<const Vec>(m.values.data(), N));
    };
    v.K = [&base, qn, N](double t, const Point& x) {
        const Tensor k = y_average(base, Coef::K, t, x, qn);
        Mat K(N, N);
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < N; ++b) K(a, b) = k[base.idx2(a, b)];
        return K;
    };
    v.J = [&base, qn, d, N](double t, const Point& x) {
        const Tensor j = y_average(base, Coef::J, t, x, qn);
        Mat J(d * N, N);
        for (int i = 0; i < d; ++i)
            for (int a = 0; a < N; ++a)
                for (int b = 0; b < N; ++b) J(i * N + a, b) = j[base.idx3(i, a, b)];
        return J;
    };
    return v;
}

/// Copy of `base` whose H and U* make (U, V) an exact solution. `base`
/// must outlive the result.
inline Manufactured manufacture(const CoefficientSet& base, const Vec& c, const TimeProfile& tp,
                                const EllipticView& view, double step) {
    const int d = base.dim();
    const int N = base.size();
    if (c.size() != N) throw DomainError("manufactured amplitude must have N entries");
    Manufactured m{base, {}, {}};
    m.U = [c, tp, d](double t, const Point& x) { return Vec(c * (tp.phi(t) * shape(x, d))); };
    m.V = [&base, c, tp, d](double t, const Point& x) {
        const Vec r = (tp.dphi(t) * c + tp.phi(t) * (base.L(t, x) * c)) * shape(x, d);
        return Vec(base.G(t, x).lu().solve(r));
    };
    auto U = m.U;
    auto V = m.V;
    // The forcing vector is shared by the N component samplers; cache the last (t, x).
    struct Last {
        std::mutex mu;
        bool have = false;
        double t = 0.0;
        Point x{};
        Vec h;
    };
    auto last = std::make_shared<Last>();
    auto forcing = [view, U, V, d, N, step, last](double t, const Point& x) {
        std::lock_guard<std::mutex> lock(last->mu);
        if (!(last->have && last->t == t && last->x == x)) {
            last->h = manufactured_forcing(view, U, V, d, N, t, x, step);
            last->t = t;
            last->x = x;
            last->have = true;
        }
        return last->h;
    };
    for (int a = 0; a < N; ++a) {
        m.set.field(Coef::H, a) =
            custom_field([forcing, a](double t, const Point& x, const Point&) { return forcing(t, x)[a]; }, true,
                         true, false);
        m.set.field(Coef::Ustar, a) =
            custom_field([U, a](double, const Point& x, const Point&) { return U(0.0, x)[a]; }, false, true, false);
    }
    return m;
}

inline double max_l2_error(const std::vector<double>& t, const std::vector<Mat>& fields, const MacroGrid& g,
                           const std::function<Vec(double, const Point&)>& exact) {
    const Vec w = quadrature_weights(g);
    double e = 0.0;
    for (std::size_t n = 0; n < t.size(); ++n) {
        Mat ex(g.size(), fields[n].cols());
        for (std::size_t p = 0; p < g.size(); ++p) ex.row(p) = exact(t[n], g.node(p)).transpose();
        e = std::max(e, std::sqrt(l2_squared(fields[n] - ex, w)));
    }
    return e;
}

struct RunFields {
    std::vector<double> t;
    std::vector<Mat> U;
    std::vector<Mat> V;
};

inline RunFields run_target(const CoefficientSet& set, ManufacturedTarget target, const ManufacturedSetup& s, int n,
                            double dt) {
    const MacroGrid g(set.dim(), n);
    RunFields f;
    if (target == ManufacturedTarget::micro) {
        const MicroTrajectory tr = run_micro(set, s.eps, g, dt, s.T, TimeScheme::implicit_euler);
        for (const auto& st : tr.states) {
            f.t.push_back(st.t);
            f.U.push_back(st.U);
            f.V.push_back(st.V);
        }
    } else {
        const CellGrid cell(set.dim(), s.cell_n);
        const int steps = step_count(s.T, dt);
        std::vector<double> times;
        for (int k = 0; k <= steps; ++k) times.push_back(k * dt);
        const CellTable table = cell_sweep(set, g, times, cell);
        const MacroTrajectory tr = run_macro(set, table, dt, s.T, CorrectorMode::stepped);
        for (const auto& st : tr.states) {
            f.t.push_back(st.t);
            f.U.push_back(st.u);
            f.V.push_back(st.v);
        }
    }
    return f;
}

} // namespace detail

/// Spatial order: errors against the exact solution with phi(t) = 1 + t, for
/// which implicit Euler is exact in time. Temporal order: three-level
/// self-convergence at the final time with phi(t) = exp(-t) on a fixed grid.
inline OrderReport manufactured_orders(const CoefficientSet& base, ManufacturedTarget target,
                                       const ManufacturedSetup& s) {
    if (target == ManufacturedTarget::macro && !base.y_constant(Coef::J))
        throw DomainError("macro manufactured solution needs J constant in y");
    if (s.space_levels.size() < 2 || s.time_dts.size() < 3) throw DomainError("need >= 2 space and 3 time levels");
    const int d = base.dim();
    const CellGrid cell(d, s.cell_n);
    const double step = 1e-3 * std::min(1.0, target == ManufacturedTarget::micro ? s.eps : 1.0);
    const detail::EllipticView view =
        target == ManufacturedTarget::micro ? detail::micro_view(base, s.eps) : detail::macro_view(base, cell);

    OrderReport rep;
    {
        const detail::Manufactured m = detail::manufacture(base, s.amplitude, detail::linear_profile(), view, step);
        for (int n : s.space_levels) {
            const MacroGrid g(d, n);
            const detail::RunFields f = detail::run_target(m.set, target, s, n, s.space_dt);
            rep.h.push_back(g.h);
            rep.space_error.push_back(std::max(detail::max_l2_error(f.t, f.U, g, m.U),
                                               detail::max_l2_error(f.t, f.V, g, m.V)));
        }
        rep.spatial_order = log_log_slope(rep.h, rep.space_error);
    }
    {
        const detail::Manufactured m =
            detail::manufacture(base, s.amplitude, detail::exponential_profile(), view, step);
        std::vector<Mat> finals;
        for (double dt : s.time_dts) {
            const detail::RunFields f = detail::run_target(m.set, target, s, s.time_grid, dt);
            finals.push_back(f.U.back());
        }
        const MacroGrid g(d, s.time_grid);
        const Vec w = quadrature_weights(g);
        for (std::size_t k = 0; k + 1 < finals.size(); ++k) {
            rep.dt.push_back(s.time_dts[k]);
            rep.time_difference.push_back(std::sqrt(l2_squared(finals[k] - finals[k + 1], w)));
        }
        rep.temporal_order = log_log_slope(rep.dt, rep.time_difference);
    }
    return rep;
}

} // namespace pphom
