#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pphom/coefficients.hpp"
#include "pphom/error.hpp"
#include "pphom/grid.hpp"
#include "pphom/parallel.hpp"
#include "pphom/sparse.hpp"
#include "pphom/types.hpp"

namespace pphom {

/// E (diagonal, d entries) and D (d x N x N) as periodic functions of y at a
/// frozen macro point (t, x).
struct CellCoefficients {
    using Fn = std::function<double(const Point&)>;

    int d = 1;
    int N = 1;
    std::vector<Fn> E;
    std::vector<Fn> D; ///< index (i * N + a) * N + b

    std::size_t idx3(int i, int a, int b) const { return (static_cast<std::size_t>(i) * N + a) * N + b; }

    static CellCoefficients at(const CoefficientSet& set, double t, const Point& x) {
        CellCoefficients c;
        c.d = set.dim();
        c.N = set.size();
        for (std::size_t i = 0; i < set.entries(Coef::E); ++i) {
            const ScalarField f = set.field(Coef::E, i);
            c.E.push_back([f, t, x](const Point& y) { return f(t, x, y); });
        }
        for (std::size_t i = 0; i < set.entries(Coef::D); ++i) {
            const ScalarField f = set.field(Coef::D, i);
            c.D.push_back([f, t, x](const Point& y) { return f(t, x, y); });
        }
        return c;
    }

    /// y-profiles of separable E and D entries.
    static CellCoefficients profiles(const CoefficientSet& set) {
        CellCoefficients c;
        c.d = set.dim();
        c.N = set.size();
        for (std::size_t i = 0; i < set.entries(Coef::E); ++i) c.E.push_back(set.field(Coef::E, i).yp);
        for (std::size_t i = 0; i < set.entries(Coef::D); ++i) c.D.push_back(set.field(Coef::D, i).yp);
        return c;
    }
};

/// Correctors W (d fields), delta (N x N fields) and the effective tensors at
/// one macro sample. Correctors carry the zero-mean gauge.
struct CellSolution {
    double t = 0.0;
    Point x{0.0, 0.0};
    CellGrid cell;
    std::vector<Vec> W;
    std::vector<Vec> delta;      ///< index a * N + b
    Mat E_star;                  ///< d x d
    std::vector<double> D_star;  ///< index (i * N + a) * N + b
};

/// Periodic operator -div(E grad .) on the cell grid with a zero-mean gauge
/// row, factored once for all right-hand sides.
class CellProblem {
public:
    CellProblem(const CellCoefficients& c, const CellGrid& cell, LinearMethod method = LinearMethod::direct,
                double tol = 1e-12)
        : cell_(cell), faces_(c.d, 1, cell.size(), false, false) {
        if (c.d != cell.d) throw DomainError("cell coefficient/grid dimension mismatch");
        for (int k = 0; k < cell.d; ++k)
            for (std::size_t p = 0; p < cell.size(); ++p) faces_.normal[k][p] = c.E[k](cell.face(p, k));
        const SparseSystem base = assemble_div_flux(cell, faces_);
        const Vec w = Vec::Constant(static_cast<Eigen::Index>(cell.size()), 1.0 / (cell.h * cell.h));
        const SparseSystem aug = add_mean_constraint(base, 1, w);
        solver_ = LinearSolver(aug.A, method, tol);
    }

    /// Solves -div(E grad w) = s with mean(w) = 0. `s` must have zero sum.
    Vec solve(const Vec& s) const {
        const auto n = static_cast<Eigen::Index>(cell_.size());
        Vec rhs = Vec::Zero(n + 1);
        rhs.head(n) = s;
        Vec w = solver_.solve(rhs).head(n);
        w.array() -= w.mean();
        return w;
    }

    /// E_k sampled at face (p, p + e_k).
    double face_E(int k, std::size_t p) const { return faces_.normal[k][p]; }

    const CellGrid& cell() const { return cell_; }

private:
    CellGrid cell_;
    FaceCoefficients faces_;
    LinearSolver solver_;
};

namespace detail {

/// Discrete divergence (sum_k (f(p + e_k/2) - f(p - e_k/2)) / h) of a face field.
inline Vec face_divergence(const CellGrid& cell, const std::function<double(int, std::size_t)>& face_value) {
    Vec s(cell.size());
    for (std::size_t p = 0; p < cell.size(); ++p) {
        double acc = 0.0;
        for (int k = 0; k < cell.d; ++k) {
            const std::size_t r = *cell.neighbor(p, k, -1);
            acc += (face_value(k, p) - face_value(k, r)) / cell.h;
        }
        s[p] = acc;
    }
    return s;
}

inline std::vector<Vec> solve_W(const CellProblem& prob, const CellGrid& cell) {
    std::vector<Vec> W;
    for (int i = 0; i < cell.d; ++i) {
        // -div(E grad W_i) = div(E e_i)
        const Vec s = face_divergence(cell, [&](int k, std::size_t p) { return k == i ? prob.face_E(k, p) : 0.0; });
        W.push_back(prob.solve(s));
    }
    return W;
}

inline std::vector<Vec> solve_delta(const CellProblem& prob, const CellCoefficients& c, const CellGrid& cell) {
    std::vector<Vec> delta;
    for (int a = 0; a < c.N; ++a)
        for (int b = 0; b < c.N; ++b) {
            // -div(E grad delta_ab) = div(D_.ab)
            const Vec s = face_divergence(cell, [&](int k, std::size_t p) { return c.D[c.idx3(k, a, b)](cell.face(p, k)); });
            delta.push_back(prob.solve(s));
        }
    return delta;
}

} // namespace detail

/// Each W_i solves div(E (e_i + grad W_i)) = 0, periodic, zero mean.
inline std::vector<Vec> solve_cell_W(const CellCoefficients& c, const CellGrid& cell) {
    for (int k = 0; k < cell.d; ++k)
        for (std::size_t p = 0; p < cell.size(); ++p)
            if (!(c.E[k](cell.face(p, k)) > 0.0)) throw AssemblyError("cell diffusion must be positive");
    return detail::solve_W(CellProblem(c, cell), cell);
}

/// Each delta_ab solves div(E grad delta_ab) = -div(D_.ab), periodic, zero mean.
inline std::vector<Vec> solve_cell_delta(const CellCoefficients& c, const CellGrid& cell) {
    return detail::solve_delta(CellProblem(c, cell), c, cell);
}

/// E*_ij = mean E_i (delta_ij + d_{y_i} W_j),  D*_iab = mean (D_iab + E_i d_{y_i} delta_ab).
///
/// Means are taken over the faces normal to axis i, where the discrete fluxes live.
inline std::pair<Mat, std::vector<double>> effective_tensors(const CellCoefficients& c, const std::vector<Vec>& W,
                                                             const std::vector<Vec>& delta, const CellGrid& cell) {
    const int d = cell.d;
    const int N = c.N;
    const double inv = 1.0 / static_cast<double>(cell.size());
    Mat E_star = Mat::Zero(d, d);
    std::vector<double> D_star(static_cast<std::size_t>(d) * N * N, 0.0);
    for (int i = 0; i < d; ++i) {
        for (std::size_t p = 0; p < cell.size(); ++p) {
            const std::size_t q = *cell.neighbor(p, i, 1);
            const Point y = cell.face(p, i);
            const double Ei = c.E[i](y);
            for (int j = 0; j < d; ++j)
                E_star(i, j) += Ei * ((i == j ? 1.0 : 0.0) + (W[j][q] - W[j][p]) / cell.h);
            for (int a = 0; a < N; ++a)
                for (int b = 0; b < N; ++b) {
                    const Vec& dl = delta[a * N + b];
                    D_star[c.idx3(i, a, b)] += c.D[c.idx3(i, a, b)](y) + Ei * (dl[q] - dl[p]) / cell.h;
                }
        }
    }
    E_star *= inv;
    for (auto& v : D_star) v *= inv;
    return {E_star, D_star};
}

inline bool positive_definite(const Mat& A) {
    const Mat S = 0.5 * (A + A.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() > 0.0;
}

/// Solves both cell problems with one factorization and forms E*, D*.
inline CellSolution solve_cell(const CellCoefficients& c, const CellGrid& cell, double t = 0.0, Point x = {}) {
    CellProblem prob(c, cell);
    CellSolution s;
    s.t = t;
    s.x = x;
    s.cell = cell;
    s.W = detail::solve_W(prob, cell);
    s.delta = detail::solve_delta(prob, c, cell);
    auto [E_star, D_star] = effective_tensors(c, s.W, s.delta, cell);
    if (!positive_definite(E_star))
        throw SolverError("effective tensor E* is not positive definite at x=(" + std::to_string(x[0]) + "," +
                              std::to_string(x[1]) + "), t=" + std::to_string(t),
                          {});
    s.E_star = std::move(E_star);
    s.D_star = std::move(D_star);
    return s;
}

/// Nodal y-gradients of the correctors (central differences on the cell grid).
struct CellGradients {
    std::vector<Vec> gradW;     ///< index j * d + i: d_{y_j} W_i
    std::vector<Vec> gradDelta; ///< index (j * N + a) * N + b: d_{y_j} delta_ab
};

inline CellGradients corrector_gradients(const std::vector<Vec>& W, const std::vector<Vec>& delta, int N,
                                         const CellGrid& cell) {
    const int d = cell.d;
    CellGradients g;
    g.gradW.assign(static_cast<std::size_t>(d) * d, Vec());
    g.gradDelta.assign(static_cast<std::size_t>(d) * N * N, Vec());
    for (int i = 0; i < d; ++i) {
        const Mat gr = fd_gradient(W[i], cell);
        for (int j = 0; j < d; ++j) g.gradW[j * d + i] = gr.col(j);
    }
    for (int ab = 0; ab < N * N; ++ab) {
        const Mat gr = fd_gradient(delta[ab], cell);
        for (int j = 0; j < d; ++j) g.gradDelta[j * N * N + ab] = gr.col(j);
    }
    return g;
}

/// delta~ and omega~ as explicit fields on the cell grid.
struct CorrectorTensors {
    std::vector<Vec> delta_tilde; ///< index (j * N + a) * N + b
    std::vector<Vec> omega_tilde; ///< index ((j * d + i) * N + a) * N + b
};

/// delta~_jab = sum_c G_ac d_{y_j} delta_cb,  omega~_jiab = d_{y_j} W_i G_ab.
///
/// G does not depend on y, so grad_y(G delta) = G grad_y delta.
inline CorrectorTensors corrector_tensors(const Mat& G, const std::vector<Vec>& W, const std::vector<Vec>& delta,
                                          const CellGrid& cell) {
    const int d = cell.d;
    const int N = static_cast<int>(G.rows());
    const CellGradients g = corrector_gradients(W, delta, N, cell);
    const auto n = static_cast<Eigen::Index>(cell.size());
    CorrectorTensors out;
    out.delta_tilde.assign(static_cast<std::size_t>(d) * N * N, Vec::Zero(n));
    out.omega_tilde.assign(static_cast<std::size_t>(d) * d * N * N, Vec::Zero(n));
    for (int j = 0; j < d; ++j)
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < N; ++b) {
                Vec& dt = out.delta_tilde[(j * N + a) * N + b];
                for (int c = 0; c < N; ++c) dt += G(a, c) * g.gradDelta[(j * N + c) * N + b];
                for (int i = 0; i < d; ++i) out.omega_tilde[((j * d + i) * N + a) * N + b] = G(a, b) * g.gradW[j * d + i];
            }
    return out;
}

/// Effective data at one (time slice, macro node).
///
/// `grads` is shared between nodes in separable sweeps; `delta_scale`
/// multiplies gradDelta entrywise ((a, b) -> g_ab / f).
struct CellEntry {
    Mat E_star;
    std::vector<double> D_star;
    std::shared_ptr<const CellGradients> grads;
    Mat delta_scale;
};

/// Effective tensors over macro nodes and time slices.
struct CellTable {
    CellGrid cell;
    MacroGrid macro;
    int N = 1;
    std::vector<double> times;
    bool time_constant = true;
    bool separable = false;
    std::vector<bool> active; ///< nodes that store corrector gradients
    std::vector<std::vector<CellEntry>> slices;

    std::size_t slice_for(double t) const {
        if (time_constant) return 0;
        for (std::size_t i = 0; i < times.size(); ++i)
            if (std::abs(times[i] - t) <= 1e-12 * std::max(1.0, std::abs(t))) return i;
        throw DomainError("cell table has no time slice at t=" + std::to_string(t));
    }

    const CellEntry& at(std::size_t slice, std::size_t node) const { return slices.at(slice).at(node); }
};

/// Nodes whose J varies in y; only there does the corrector feed back into
/// the macro equation (the Y-mean of a periodic gradient is zero).
inline std::vector<bool> memory_active_nodes(const CoefficientSet& set, const MacroGrid& macro, const CellGrid& cell) {
    std::vector<bool> active(macro.size(), false);
    if (set.y_constant(Coef::J)) return active;
    const bool j_time = !set.time_constant(Coef::J);
    for (std::size_t p = 0; p < macro.size(); ++p) {
        if (macro.on_boundary(p)) continue;
        if (j_time) {
            active[p] = true;
            continue;
        }
        const Point x = macro.node(p);
        for (std::size_t e = 0; e < set.entries(Coef::J) && !active[p]; ++e) {
            const auto& f = set.field(Coef::J, e);
            if (!f.depends_y) continue;
            const double ref = f(0.0, x, cell.node(0));
            for (std::size_t q = 1; q < cell.size(); ++q)
                if (std::abs(f(0.0, x, cell.node(q)) - ref) > 1e-14 * (1.0 + std::abs(ref))) {
                    active[p] = true;
                    break;
                }
        }
    }
    return active;
}

/// Solves the cell problems at every macro node for each requested time.
///
/// Time-constant E, D give a single slice. With separable coefficients the
/// problems are solved once on the y-profiles and the (t, x) factors applied:
/// E* = f E*_0, D*_iab = g_ab D*_0,iab, delta_ab = (g_ab / f) delta_0,ab.
inline CellTable cell_sweep(const CoefficientSet& set, const MacroGrid& macro, std::vector<double> times,
                            const CellGrid& cell, std::vector<bool> active = {}) {
    if (times.empty()) times.push_back(0.0);
    const int N = set.size();
    CellTable table;
    table.cell = cell;
    table.macro = macro;
    table.N = N;
    table.time_constant = set.time_constant(Coef::E) && set.time_constant(Coef::D);
    table.times = table.time_constant ? std::vector<double>{times.front()} : times;
    table.active = active.empty() ? std::vector<bool>(macro.size(), false) : std::move(active);

    std::vector<std::pair<double, Point>> probes;
    for (double t : table.times)
        for (std::size_t p = 0; p < macro.size(); ++p) probes.emplace_back(t, macro.node(p));
    table.separable = set.cells_separable(probes);

    table.slices.resize(table.times.size());
    if (table.separable) {
        const CellCoefficients prof = CellCoefficients::profiles(set);
        const CellSolution base = solve_cell(prof, cell);
        auto grads = std::make_shared<const CellGradients>(corrector_gradients(base.W, base.delta, N, cell));
        for (std::size_t s = 0; s < table.times.size(); ++s) {
            const double t = table.times[s];
            auto& slice = table.slices[s];
            slice.resize(macro.size());
            for (std::size_t p = 0; p < macro.size(); ++p) {
                const Point x = macro.node(p);
                const double f = set.field(Coef::E, 0).xt(t, x);
                CellEntry e;
                e.E_star = f * base.E_star;
                e.D_star = base.D_star;
                e.delta_scale = Mat::Ones(N, N);
                for (int a = 0; a < N; ++a)
                    for (int b = 0; b < N; ++b) {
                        const double g = set.field(Coef::D, set.idx3(0, a, b)).xt(t, x);
                        for (int i = 0; i < set.dim(); ++i) e.D_star[set.idx3(i, a, b)] *= g;
                        e.delta_scale(a, b) = g / f;
                    }
                e.grads = grads;
                slice[p] = std::move(e);
            }
        }
        return table;
    }

    for (std::size_t s = 0; s < table.times.size(); ++s) {
        const double t = table.times[s];
        auto& slice = table.slices[s];
        slice.resize(macro.size());
        parallel_for(macro.size(), [&](std::size_t p) {
            const Point x = macro.node(p);
            const CellSolution sol = solve_cell(CellCoefficients::at(set, t, x), cell, t, x);
            CellEntry e;
            e.E_star = sol.E_star;
            e.D_star = sol.D_star;
            e.delta_scale = Mat::Ones(N, N);
            if (table.active[p])
                e.grads = std::make_shared<const CellGradients>(corrector_gradients(sol.W, sol.delta, N, cell));
            slice[p] = std::move(e);
        });
    }
    return table;
}

} // namespace pphom
