#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pphom/cell_solver.hpp"
#include "pphom/coefficients.hpp"
#include "pphom/error.hpp"
#include "pphom/grid.hpp"
#include "pphom/matrix_exponential.hpp"
#include "pphom/micro_solver.hpp"
#include "pphom/parallel.hpp"
#include "pphom/sparse.hpp"
#include "pphom/types.hpp"

namespace pphom {

/// Macro fields at one instant. `gradU_y[p]` is the corrector gradient at
/// macro node p on the cell grid (cell nodes x d*N, column j*N + a); it is
/// empty at nodes that do not store it. `memory` is the Y-average of
/// J . grad_y U (nodes x N).
struct MacroState {
    double t = 0.0;
    Mat u;
    Mat v;
    std::vector<Mat> gradU_y;
    Mat memory;
};

struct MacroTrajectory {
    MacroGrid grid;
    CellGrid cell;
    double dt = 0.0;
    int stride = 1;
    TimeScheme scheme = TimeScheme::implicit_euler;
    CorrectorMode mode = CorrectorMode::stepped;
    std::vector<MacroState> states;

    double record_dt() const { return dt * stride; }
};

/// exp(-L k dt) for k = 0..steps.
struct MemoryKernel {
    double dt = 0.0;
    std::vector<Mat> values;

    const Mat& at(std::size_t k) const { return values.at(k); }
};

inline MemoryKernel make_memory_kernel(const Mat& L, double dt, int steps) {
    if (!(dt > 0.0)) throw DomainError("memory kernel needs dt > 0");
    MemoryKernel k;
    k.dt = dt;
    k.values.reserve(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) k.values.push_back(matrix_exponential(L, -i * dt));
    return k;
}

/// Source history sample q = (v, grad v) at one macro node: entries
/// [0, N) hold v_b, entry N + i*N + b holds d_{x_i} v_b.
inline Vec corrector_input(const Mat& v, const std::vector<Mat>& grads, std::size_t p, int d) {
    const int N = static_cast<int>(v.cols());
    Vec q(N + d * N);
    for (int b = 0; b < N; ++b) {
        q[b] = v(p, b);
        for (int i = 0; i < d; ++i) q[N + i * N + b] = grads[b](p, i);
    }
    return q;
}

namespace detail {

// T_j(y)(c, b) = scale(c, b) * d_{y_j} delta_0,cb(y)
inline Mat delta_gradient(const CellEntry& e, int j, std::size_t q, int N) {
    Mat T(N, N);
    for (int c = 0; c < N; ++c)
        for (int b = 0; b < N; ++b) T(c, b) = e.delta_scale(c, b) * e.grads->gradDelta[(j * N + c) * N + b][q];
    return T;
}

} // namespace detail

/// Corrector right-hand side r_j = delta~_j v + omega~_j . grad v at every
/// cell node (cell nodes x d*N).
inline Mat corrector_source(const CellEntry& e, const Mat& G, const Vec& q, const CellGrid& cell) {
    const int d = cell.d;
    const int N = static_cast<int>(G.rows());
    if (!e.grads) throw DomainError("cell entry has no corrector gradients");
    const Vec v = q.head(N);
    Mat r(cell.size(), d * N);
    for (std::size_t y = 0; y < cell.size(); ++y)
        for (int j = 0; j < d; ++j) {
            Vec s = detail::delta_gradient(e, j, y, N) * v;
            for (int i = 0; i < d; ++i) s += e.grads->gradW[j * d + i][y] * q.segment(N + i * N, N);
            r.row(y).segment(j * N, N) = (G * s).transpose();
        }
    return r;
}

/// Implicit-Euler step of d/dt gradU_y + L gradU_y = r at every cell node.
inline Mat step_corrector(const CellEntry& e, const Mat& G, const Mat& L, const Mat& prev, const Vec& q, double dt,
                          const CellGrid& cell) {
    if (!(dt > 0.0)) throw DomainError("dt must be positive");
    const int N = static_cast<int>(G.rows());
    Eigen::FullPivLU<Mat> lu(Mat::Identity(N, N) + dt * L);
    if (!lu.isInvertible()) throw StepError("singular I + dt L in corrector step (dt = " + std::to_string(dt) + ")");
    const Mat P = lu.inverse();
    const Mat r = corrector_source(e, G, q, cell);
    Mat out(prev.rows(), prev.cols());
    for (std::size_t y = 0; y < cell.size(); ++y)
        for (int j = 0; j < cell.d; ++j)
            out.row(y).segment(j * N, N) =
                (P * (prev.row(y).segment(j * N, N) + dt * r.row(y).segment(j * N, N)).transpose()).transpose();
    return out;
}

/// Duhamel form of the corrector at t_n = n dt:
///   gradU_y(t_n) = int_0^t_n exp(-L (t_n - s)) r(s) ds,
/// trapezoid rule over history[0..n]. The source is linear in q, so the sum
/// is taken over N x N moments S_c = sum_k w_k q_k[c] exp(-L (n-k) dt) first.
inline Mat nonlocal_corrector(const MemoryKernel& kernel, const std::vector<Vec>& history, std::size_t n,
                              const CellEntry& e, const Mat& G, const CellGrid& cell) {
    const int d = cell.d;
    const int N = static_cast<int>(G.rows());
    Mat out = Mat::Zero(cell.size(), d * N);
    if (n == 0) return out;
    if (history.size() < n + 1) throw DomainError("corrector history shorter than the requested step");
    if (kernel.values.size() < n + 1) throw DomainError("memory kernel shorter than the requested step");
    if (!e.grads) throw DomainError("cell entry has no corrector gradients");
    const int nq = N + d * N;
    std::vector<Mat> A(nq, Mat::Zero(N, N));
    for (std::size_t k = 0; k <= n; ++k) {
        const double w = (k == 0 || k == n) ? 0.5 * kernel.dt : kernel.dt;
        const Mat KG = kernel.at(n - k) * G;
        for (int c = 0; c < nq; ++c)
            if (history[k][c] != 0.0) A[c] += (w * history[k][c]) * KG;
    }
    std::vector<Vec> B(d, Vec::Zero(N));
    for (int i = 0; i < d; ++i)
        for (int b = 0; b < N; ++b) B[i] += A[N + i * N + b].col(b);
    for (std::size_t y = 0; y < cell.size(); ++y)
        for (int j = 0; j < d; ++j) {
            const Mat T = detail::delta_gradient(e, j, y, N);
            Vec g = Vec::Zero(N);
            for (int b = 0; b < N; ++b) g += A[b] * T.col(b);
            for (int i = 0; i < d; ++i) g += e.grads->gradW[j * d + i][y] * B[i];
            out.row(y).segment(j * N, N) = g.transpose();
        }
    return out;
}

/// Upscaled elliptic operator: M-bar v - div(E* grad v + D* v) with
/// homogeneous Dirichlet data, and the averaged zeroth-order source.
class MacroOperator {
public:
    MacroOperator(const CoefficientSet& set, const CellTable& table, const SolverOptions& opt)
        : set_(&set), table_(&table), grid_(table.macro), opt_(opt),
          m_time_constant_(set.time_constant(Coef::M)),
          source_time_constant_(set.time_constant(Coef::H) && set.time_constant(Coef::K) &&
                                set.time_constant(Coef::J)) {
        if (set.dim() != grid_.d) throw DomainError("coefficient/grid dimension mismatch");
    }

    Mat solve(const Mat& u, const Mat& memory, double t) {
        prepare(t);
        const Mat rhs = right_hand_side(u, memory, t);
        try {
            return from_dofs(solver_.solve(to_dofs(rhs)), grid_.size(), set_->size());
        } catch (const SolverError& e) {
            throw SolverError(std::string(e.what()) + " [macro elliptic solve, t=" + std::to_string(t) + "]",
                              e.history());
        }
    }

    /// H-bar + K-bar u + J-bar . grad u + memory, Dirichlet rows zeroed.
    Mat right_hand_side(const Mat& u, const Mat& memory, double t) {
        Mat rhs = zeroth_order_source(averages(t), u, grid_);
        if (memory.size() > 0) rhs += memory;
        for (std::size_t p = 0; p < grid_.size(); ++p)
            if (grid_.on_boundary(p)) rhs.row(p).setZero();
        return rhs;
    }

    /// Y-averaged M, H, K, J at the macro nodes.
    const NodalTraces& averages(double t) {
        if (!(avg_.t == t) && !(source_time_constant_ && m_time_constant_ && !std::isnan(avg_.t))) avg_ = sample(t);
        return avg_;
    }

    SpMat matrix(double t) {
        const std::size_t slice = table_->slice_for(t);
        const int d = grid_.d;
        const int N = set_->size();
        FaceCoefficients fc(d, N, grid_.size(), d > 1, true);
        for (int k = 0; k < d; ++k)
            for (std::size_t p = 0; p < grid_.size(); ++p) {
                if (!grid_.has_face(p, k)) continue;
                const std::size_t q = *grid_.neighbor(p, k, 1);
                const CellEntry& a = table_->at(slice, p);
                const CellEntry& b = table_->at(slice, q);
                fc.normal[k][p] = 0.5 * (a.E_star(k, k) + b.E_star(k, k));
                for (int l = 0; l < d && d > 1; ++l)
                    if (l != k) fc.cross[k * d + l][p] = 0.5 * (a.E_star(k, l) + b.E_star(k, l));
                for (int al = 0; al < N; ++al)
                    for (int be = 0; be < N; ++be)
                        fc.drift_at(k, p, al, be) =
                            0.5 * (a.D_star[set_->idx3(k, al, be)] + b.D_star[set_->idx3(k, al, be)]);
            }
        SparseSystem sys = assemble_div_flux(grid_, fc);
        const NodalTraces& av = averages(t);
        std::vector<Triplet> diag;
        for (std::size_t p = 0; p < grid_.size(); ++p) {
            if (grid_.on_boundary(p)) continue;
            for (int a = 0; a < N; ++a) {
                const auto dof = static_cast<Eigen::Index>(a * grid_.size() + p);
                diag.emplace_back(dof, dof, av.m(p, a));
            }
        }
        SpMat Mm(sys.A.rows(), sys.A.cols());
        Mm.setFromTriplets(diag.begin(), diag.end());
        SpMat A = sys.A + Mm;
        A.makeCompressed();
        return A;
    }

    const MacroGrid& grid() const { return grid_; }

private:
    NodalTraces sample(double t) const {
        const int d = set_->dim();
        const int N = set_->size();
        const int qn = table_->cell.n;
        NodalTraces tr;
        tr.t = t;
        tr.m.resize(grid_.size(), N);
        tr.H.resize(grid_.size(), N);
        tr.K.assign(grid_.size(), Mat::Zero(N, N));
        tr.J.assign(grid_.size(), Mat::Zero(d * N, N));
        for (std::size_t p = 0; p < grid_.size(); ++p) {
            const Point x = grid_.node(p);
            const Tensor m = y_average(*set_, Coef::M, t, x, qn);
            const Tensor h = y_average(*set_, Coef::H, t, x, qn);
            const Tensor k = y_average(*set_, Coef::K, t, x, qn);
            const Tensor j = y_average(*set_, Coef::J, t, x, qn);
            for (int a = 0; a < N; ++a) {
                tr.m(p, a) = m[a];
                tr.H(p, a) = h[a];
                for (int b = 0; b < N; ++b) {
                    tr.K[p](a, b) = k[set_->idx2(a, b)];
                    for (int i = 0; i < d; ++i) tr.J[p](i * N + a, b) = j[set_->idx3(i, a, b)];
                }
            }
        }
        return tr;
    }

    void prepare(double t) {
        const std::size_t slice = table_->slice_for(t);
        if (!solver_.empty() && slice == factored_slice_ && (m_time_constant_ || factored_t_ == t)) return;
        solver_ = LinearSolver(matrix(t), opt_.linear, opt_.linear_tol);
        factored_slice_ = slice;
        factored_t_ = t;
    }

    const CoefficientSet* set_;
    const CellTable* table_;
    MacroGrid grid_;
    SolverOptions opt_;
    bool m_time_constant_;
    bool source_time_constant_;
    std::size_t factored_slice_ = std::numeric_limits<std::size_t>::max();
    double factored_t_ = std::numeric_limits<double>::quiet_NaN();
    LinearSolver solver_;
    NodalTraces avg_;
};

/// Y-average of sum_{j,b} J_jab(t, x, y) gradU_y(y)_{jb} at the nodes that
/// store a corrector (zero elsewhere).
inline Mat memory_term(const CoefficientSet& set, const MacroGrid& grid, const CellGrid& cell,
                       const std::vector<Mat>& gradU_y, double t) {
    const int d = set.dim();
    const int N = set.size();
    Mat out = Mat::Zero(grid.size(), N);
    for (std::size_t p = 0; p < grid.size(); ++p) {
        if (p >= gradU_y.size() || gradU_y[p].size() == 0) continue;
        const Point x = grid.node(p);
        const Mat& g = gradU_y[p];
        for (std::size_t q = 0; q < cell.size(); ++q) {
            const Point y = cell.node(q);
            for (int a = 0; a < N; ++a) {
                double s = 0.0;
                for (int j = 0; j < d; ++j)
                    for (int b = 0; b < N; ++b) s += set.J(j, a, b, t, x, y) * g(q, j * N + b);
                out(p, a) += s;
            }
        }
    }
    return out / static_cast<double>(cell.size());
}

/// v solving the upscaled elliptic equation for given u and corrector gradient.
inline Mat solve_macro_v(const CoefficientSet& set, const CellTable& table, const Mat& u,
                         const std::vector<Mat>& gradU_y, double t, const SolverOptions& opt = {}) {
    MacroOperator op(set, table, opt);
    return op.solve(u, memory_term(set, table.macro, table.cell, gradU_y, t), t);
}

/// Same contract as the fine-scale step_U, on macro fields.
inline Mat step_macro_u(const CoefficientSet& set, const MacroGrid& grid, const Mat& u0, const Mat& v0,
                        const Mat& v1, double t0, double dt, TimeScheme scheme) {
    return step_U(set, grid, u0, v0, v1, t0, dt, scheme);
}

/// Upscaled time loop. Each step resolves (v, u, gradU_y) by Picard
/// iteration; the corrector is either stepped by implicit Euler or evaluated
/// from the Duhamel sum over the stored (v, grad v) history.
///
/// Corrector fields are kept in the first and last recorded states, and in
/// every state when `keep_corrector` is set.
inline MacroTrajectory run_macro(const CoefficientSet& set, const CellTable& table, double dt, double T,
                                 CorrectorMode mode, TimeScheme scheme = TimeScheme::implicit_euler,
                                 const SolverOptions& opt = {}, bool keep_corrector = false) {
    const MacroGrid& grid = table.macro;
    const CellGrid& cell = table.cell;
    const int d = set.dim();
    const int N = set.size();
    const int steps = step_count(T, dt);
    if (opt.output_stride < 1 || steps % opt.output_stride != 0)
        throw DomainError("output stride must divide the number of steps");
    if (mode == CorrectorMode::nonlocal &&
        !(set.time_constant(Coef::L) && set.time_constant(Coef::G) && set.time_constant(Coef::E) &&
          set.time_constant(Coef::D)))
        throw DomainError("nonlocal corrector mode requires time-constant L, G, E and D; use the stepped mode");

    std::vector<std::size_t> active;
    for (std::size_t p = 0; p < grid.size(); ++p)
        if (p < table.active.size() && table.active[p]) active.push_back(p);

    MacroOperator op(set, table, opt);
    MacroTrajectory traj;
    traj.grid = grid;
    traj.cell = cell;
    traj.dt = dt;
    traj.stride = opt.output_stride;
    traj.scheme = scheme;
    traj.mode = mode;

    std::vector<MemoryKernel> kernels;
    std::vector<std::size_t> kernel_of(grid.size(), 0);
    std::vector<std::vector<Vec>> history(grid.size());
    if (mode == CorrectorMode::nonlocal && !active.empty()) {
        if (set.x_constant(Coef::L)) {
            kernels.push_back(make_memory_kernel(set.L(0.0, grid.node(active.front())), dt, steps));
        } else {
            for (std::size_t p : active) {
                kernel_of[p] = kernels.size();
                kernels.push_back(make_memory_kernel(set.L(0.0, grid.node(p)), dt, steps));
            }
        }
    }

    Mat u = sample_initial(set, grid);
    std::vector<Mat> g(grid.size());
    for (std::size_t p : active) g[p] = Mat::Zero(cell.size(), d * N);
    Mat mem = Mat::Zero(grid.size(), N);
    Mat v = op.solve(u, mem, 0.0);
    auto record = [&](double t, bool with_g) {
        MacroState s{t, u, v, {}, mem};
        if (with_g || keep_corrector) s.gradU_y = g;
        traj.states.push_back(std::move(s));
    };
    record(0.0, true);
    if (mode == CorrectorMode::nonlocal) {
        const auto grads = component_gradients(v, grid);
        for (std::size_t p : active) history[p].push_back(corrector_input(v, grads, p, d));
    }

    for (int n = 0; n < steps; ++n) {
        const double t0 = n * dt;
        const double t1 = (n + 1) * dt;
        const std::size_t slice = active.empty() ? 0 : table.slice_for(t1);
        Mat uk = u;
        std::vector<Mat> gk = g;
        Mat memk = mem;
        std::vector<double> hist;
        bool converged = false;
        for (int it = 0; it < opt.picard_max; ++it) {
            const Mat vk = op.solve(uk, memk, t1);
            Mat unew = step_macro_u(set, grid, u, v, vk, t0, dt, scheme);
            std::vector<Mat> gnew = gk;
            if (!active.empty()) {
                const auto grads = component_gradients(vk, grid);
                parallel_for(active.size(), [&](std::size_t ai) {
                    const std::size_t p = active[ai];
                    const Point x = grid.node(p);
                    const CellEntry& e = table.at(slice, p);
                    const Vec q = corrector_input(vk, grads, p, d);
                    if (mode == CorrectorMode::stepped) {
                        gnew[p] = step_corrector(e, set.G(t1, x), set.L(t1, x), g[p], q, dt, cell);
                    } else {
                        std::vector<Vec>& h = history[p];
                        h.push_back(q);
                        gnew[p] = nonlocal_corrector(kernels[kernel_of[p]], h, static_cast<std::size_t>(n + 1), e,
                                                     set.G(t1, x), cell);
                        h.pop_back();
                    }
                });
            }
            Mat memnew = active.empty() ? Mat(Mat::Zero(grid.size(), N)) : memory_term(set, grid, cell, gnew, t1);
            const double inc = std::max(picard_increment(unew, uk), picard_increment(memnew, memk));
            hist.push_back(inc);
            uk = std::move(unew);
            gk = std::move(gnew);
            memk = std::move(memnew);
            if (inc <= opt.picard_tol) {
                converged = true;
                break;
            }
        }
        if (!converged)
            throw SolverError("macro Picard iteration did not converge at t=" + std::to_string(t1), hist);
        u = std::move(uk);
        g = std::move(gk);
        mem = std::move(memk);
        v = op.solve(u, mem, t1);
        if (mode == CorrectorMode::nonlocal && !active.empty()) {
            const auto grads = component_gradients(v, grid);
            for (std::size_t p : active) history[p].push_back(corrector_input(v, grads, p, d));
        }
        if ((n + 1) % opt.output_stride == 0) record(t1, n + 1 == steps);
    }
    return traj;
}

} // namespace pphom
