#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pphom/coefficients.hpp"
#include "pphom/error.hpp"
#include "pphom/grid.hpp"
#include "pphom/sparse.hpp"
#include "pphom/types.hpp"

namespace pphom {

/// Fields U^eps, V^eps (nodes x N) at one instant.
struct MicroState {
    double t = 0.0;
    Mat U;
    Mat V;
};

struct MicroTrajectory {
    double eps = 0.0;
    MacroGrid grid;
    double dt = 0.0;
    int stride = 1;
    TimeScheme scheme = TimeScheme::implicit_euler;
    std::vector<MicroState> states;

    double record_dt() const { return dt * stride; }
};

/// Nodal eps-traces of the zeroth-order coefficients at one time.
struct NodalTraces {
    double t = std::numeric_limits<double>::quiet_NaN();
    Mat m;                 // nodes x N (diagonal of M)
    Mat H;                 // nodes x N
    std::vector<Mat> K;    // per node, N x N
    std::vector<Mat> J;    // per node, (d*N) x N, row i*N + a
};

inline NodalTraces sample_nodal_traces(const CoefficientSet& set, const MacroGrid& g, double t, double eps) {
    const int d = set.dim();
    const int N = set.size();
    NodalTraces tr;
    tr.t = t;
    tr.m.resize(g.size(), N);
    tr.H.resize(g.size(), N);
    tr.K.assign(g.size(), Mat::Zero(N, N));
    tr.J.assign(g.size(), Mat::Zero(d * N, N));
    for (std::size_t p = 0; p < g.size(); ++p) {
        const Point x = g.node(p);
        const Point y = cell_coordinate(x, eps, d);
        for (int a = 0; a < N; ++a) {
            tr.m(p, a) = set.m(a, t, x, y);
            tr.H(p, a) = set.H(a, t, x, y);
            for (int b = 0; b < N; ++b) {
                tr.K[p](a, b) = set.K(a, b, t, x, y);
                for (int i = 0; i < d; ++i) tr.J[p](i * N + a, b) = set.J(i, a, b, t, x, y);
            }
        }
    }
    return tr;
}

/// Face samples of E^eps (normal diffusion) and D^eps (drift) at time t.
inline FaceCoefficients micro_faces(const CoefficientSet& set, const MacroGrid& g, double t, double eps) {
    const int d = set.dim();
    const int N = set.size();
    FaceCoefficients fc(d, N, g.size(), false, true);
    for (int k = 0; k < d; ++k)
        for (std::size_t p = 0; p < g.size(); ++p) {
            if (!g.has_face(p, k)) continue;
            const Point x = macro_face(g, p, k);
            const Point y = cell_coordinate(x, eps, d);
            fc.normal[k][p] = set.e(k, t, x, y);
            for (int a = 0; a < N; ++a)
                for (int b = 0; b < N; ++b) fc.drift_at(k, p, a, b) = set.D(k, a, b, t, x, y);
        }
    return fc;
}

/// Per-column nodal gradients of a multi-component field: result[a] is nodes x d.
inline std::vector<Mat> component_gradients(const Mat& U, const MacroGrid& g) {
    std::vector<Mat> out;
    out.reserve(U.cols());
    for (Eigen::Index a = 0; a < U.cols(); ++a) out.push_back(fd_gradient(U.col(a), g));
    return out;
}

/// H + K U + J . grad U at every node (nodes x N), boundary rows included.
inline Mat zeroth_order_source(const NodalTraces& tr, const Mat& U, const MacroGrid& g) {
    const int N = static_cast<int>(U.cols());
    const int d = g.d;
    const auto grads = component_gradients(U, g);
    Mat out = tr.H;
    for (std::size_t p = 0; p < g.size(); ++p) {
        out.row(p) += (tr.K[p] * U.row(p).transpose()).transpose();
        for (int a = 0; a < N; ++a) {
            double s = 0.0;
            for (int i = 0; i < d; ++i)
                for (int b = 0; b < N; ++b) s += tr.J[p](i * N + a, b) * grads[b](p, i);
            out(p, a) += s;
        }
    }
    return out;
}

/// Blocked dof vector of a nodes x N field (column-major storage is already blocked).
inline Vec to_dofs(const Mat& f) { return Eigen::Map<const Vec>(f.data(), f.size()); }

inline Mat from_dofs(const Vec& v, std::size_t nodes, int N) {
    return Eigen::Map<const Mat>(v.data(), static_cast<Eigen::Index>(nodes), N);
}

/// Discrete elliptic operator of the fine-scale system at fixed eps:
/// M^eps V - div(E^eps grad V + D^eps V) with homogeneous Dirichlet data.
/// The factorization is reused while the coefficients are time-constant.
class MicroOperator {
public:
    MicroOperator(const CoefficientSet& set, const MacroGrid& grid, double eps, const SolverOptions& opt)
        : set_(&set), grid_(grid), eps_(eps), opt_(opt),
          time_constant_(set.elliptic_time_constant()),
          source_time_constant_(set.time_constant(Coef::M) && set.time_constant(Coef::H) &&
                                set.time_constant(Coef::K) && set.time_constant(Coef::J)) {
        if (!(eps > 0.0)) throw DomainError("eps must be positive");
        if (set.dim() != grid.d) throw DomainError("coefficient/grid dimension mismatch");
    }

    /// Solves for V given U at time t.
    Mat solve(const Mat& U, double t) {
        prepare(t);
        const Mat rhs = right_hand_side(U, t);
        try {
            return from_dofs(solver_.solve(to_dofs(rhs)), grid_.size(), set_->size());
        } catch (const SolverError& e) {
            throw SolverError(std::string(e.what()) + " [micro elliptic solve, t=" + std::to_string(t) +
                                  ", eps=" + std::to_string(eps_) + "]",
                              e.history());
        }
    }

    /// Right-hand side with Dirichlet rows zeroed (nodes x N).
    Mat right_hand_side(const Mat& U, double t) {
        const NodalTraces& tr = traces(t);
        Mat rhs = zeroth_order_source(tr, U, grid_);
        for (std::size_t p = 0; p < grid_.size(); ++p)
            if (grid_.on_boundary(p)) rhs.row(p).setZero();
        return rhs;
    }

    const NodalTraces& traces(double t) {
        if (!(tr_.t == t) && !(source_time_constant_ && !std::isnan(tr_.t)))
            tr_ = sample_nodal_traces(*set_, grid_, t, eps_);
        return tr_;
    }

    /// Full operator matrix (reaction + flux) at time t.
    SpMat matrix(double t, BoundaryColumns columns = BoundaryColumns::eliminate) const {
        SparseSystem sys = assemble_div_flux(grid_, micro_faces(*set_, grid_, t, eps_), columns);
        const int N = set_->size();
        const int d = set_->dim();
        std::vector<Triplet> diag;
        for (std::size_t p = 0; p < grid_.size(); ++p) {
            if (grid_.on_boundary(p)) continue;
            const Point x = grid_.node(p);
            const Point y = cell_coordinate(x, eps_, d);
            for (int a = 0; a < N; ++a) {
                const auto dof = static_cast<Eigen::Index>(a * grid_.size() + p);
                diag.emplace_back(dof, dof, set_->m(a, t, x, y));
            }
        }
        SpMat Mm(sys.A.rows(), sys.A.cols());
        Mm.setFromTriplets(diag.begin(), diag.end());
        SpMat A = sys.A + Mm;
        A.makeCompressed();
        return A;
    }

    double eps() const { return eps_; }
    const MacroGrid& grid() const { return grid_; }

private:
    void prepare(double t) {
        if (!solver_.empty() && (time_constant_ || factored_t_ == t)) return;
        solver_ = LinearSolver(matrix(t), opt_.linear, opt_.linear_tol);
        factored_t_ = t;
    }

    const CoefficientSet* set_;
    MacroGrid grid_;
    double eps_;
    SolverOptions opt_;
    bool time_constant_;
    bool source_time_constant_;
    double factored_t_ = std::numeric_limits<double>::quiet_NaN();
    LinearSolver solver_;
    NodalTraces tr_;
};

/// V solving the discrete elliptic equation at time t for the given U.
inline Mat solve_elliptic_V(const CoefficientSet& set, const Mat& U, double t, double eps, const MacroGrid& grid,
                            const SolverOptions& opt = {}) {
    MicroOperator op(set, grid, eps, opt);
    return op.solve(U, t);
}

/// One step of dU/dt + L U = G V, nodewise N x N solves.
///
/// implicit-euler: (I + dt L1) U1 = U0 + dt G1 V1
/// crank-nicolson: (I + dt/2 L1) U1 = (I - dt/2 L0) U0 + dt/2 (G0 V0 + G1 V1)
inline Mat step_U(const CoefficientSet& set, const MacroGrid& grid, const Mat& U0, const Mat& V0, const Mat& V1,
                  double t0, double dt, TimeScheme scheme) {
    if (!(dt > 0.0)) throw DomainError("dt must be positive");
    const int N = set.size();
    const double t1 = t0 + dt;
    const bool lg_const = set.time_constant(Coef::L) && set.time_constant(Coef::G) && set.x_constant(Coef::L) &&
                          set.x_constant(Coef::G);
    Mat out(U0.rows(), U0.cols());
    Mat L1, G1, L0, G0;
    Eigen::FullPivLU<Mat> lu;
    auto load = [&](const Point& x) {
        L1 = set.L(t1, x);
        G1 = set.G(t1, x);
        if (scheme == TimeScheme::crank_nicolson) {
            L0 = set.L(t0, x);
            G0 = set.G(t0, x);
        }
        const double theta = scheme == TimeScheme::implicit_euler ? 1.0 : 0.5;
        lu.compute(Mat::Identity(N, N) + theta * dt * L1);
    };
    if (lg_const) load(grid.node(0));
    for (std::size_t p = 0; p < grid.size(); ++p) {
        if (!lg_const) load(grid.node(p));
        if (!lu.isInvertible())
            throw StepError("singular I + dt L at node " + std::to_string(p) + " (dt = " + std::to_string(dt) + ")");
        const Vec u0 = U0.row(p).transpose();
        Vec rhs;
        if (scheme == TimeScheme::implicit_euler) {
            rhs = u0 + dt * G1 * V1.row(p).transpose();
        } else {
            rhs = u0 - 0.5 * dt * (L0 * u0) + 0.5 * dt * (G0 * V0.row(p).transpose() + G1 * V1.row(p).transpose());
        }
        out.row(p) = lu.solve(rhs).transpose();
    }
    return out;
}

inline Mat sample_initial(const CoefficientSet& set, const MacroGrid& grid) {
    Mat U(grid.size(), set.size());
    for (std::size_t p = 0; p < grid.size(); ++p)
        for (int a = 0; a < set.size(); ++a) U(p, a) = set.u_star(a, grid.node(p));
    return U;
}

inline int step_count(double T, double dt) {
    if (!(dt > 0.0)) throw DomainError("dt must be positive");
    if (!(T > 0.0)) throw DomainError("T must be positive");
    const double r = T / dt;
    const long long steps = std::llround(r);
    if (steps < 1 || std::abs(r - static_cast<double>(steps)) > 1e-9 * std::max(1.0, r))
        throw DomainError("T must be an integer multiple of dt");
    return static_cast<int>(steps);
}

/// Relative max-norm increment used by the Picard loops.
inline double picard_increment(const Mat& next, const Mat& prev) {
    const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
    return (next - prev).cwiseAbs().maxCoeff() / scale;
}

/// Fine-scale time loop. Each step resolves the coupled (V, U) pair by Picard
/// iteration between the elliptic solve and the ODE step; V is then
/// recomputed from the converged U.
inline MicroTrajectory run_micro(const CoefficientSet& set, double eps, const MacroGrid& grid, double dt, double T,
                                 TimeScheme scheme, const SolverOptions& opt = {}) {
    const int steps = step_count(T, dt);
    if (opt.output_stride < 1 || steps % opt.output_stride != 0)
        throw DomainError("output stride must divide the number of steps");
    MicroOperator op(set, grid, eps, opt);

    MicroTrajectory traj;
    traj.eps = eps;
    traj.grid = grid;
    traj.dt = dt;
    traj.stride = opt.output_stride;
    traj.scheme = scheme;

    Mat U = sample_initial(set, grid);
    Mat V = op.solve(U, 0.0);
    traj.states.push_back({0.0, U, V});

    for (int n = 0; n < steps; ++n) {
        const double t0 = n * dt;
        const double t1 = (n + 1) * dt;
        Mat Uk = U;
        std::vector<double> history;
        bool converged = false;
        for (int it = 0; it < opt.picard_max; ++it) {
            const Mat Vk = op.solve(Uk, t1);
            Mat Unew = step_U(set, grid, U, V, Vk, t0, dt, scheme);
            const double inc = picard_increment(Unew, Uk);
            history.push_back(inc);
            Uk = std::move(Unew);
            if (inc <= opt.picard_tol) {
                converged = true;
                break;
            }
        }
        if (!converged)
            throw SolverError("Picard iteration did not converge at t=" + std::to_string(t1) +
                                  " (eps=" + std::to_string(eps) + ")",
                              history);
        U = std::move(Uk);
        V = op.solve(U, t1);
        if ((n + 1) % opt.output_stride == 0) traj.states.push_back({t1, U, V});
    }
    return traj;
}

/// Residual of the undecomposed pseudo-parabolic operator on a trajectory.
///
/// W = G^{-1}(dU/dt + L U) is rebuilt by time differencing (centred inside,
/// one-sided at the ends) and substituted into
///   M G^{-1} dU/dt - div((E grad + D) W) - H - (K - M G^{-1} L) U - J . grad U.
/// Returns the discrete L2 norm over interior nodes at every recorded time.
inline std::vector<double> q_residual(const CoefficientSet& set, const MicroTrajectory& traj) {
    const auto& g = traj.grid;
    const int N = set.size();
    const int d = set.dim();
    const std::size_t nodes = g.size();
    const std::size_t M = traj.states.size();
    if (M < 2) throw DomainError("q_residual needs at least two recorded states");
    const double tau = traj.record_dt();
    const double cell_volume = std::pow(g.h, d);

    SolverOptions opt;
    MicroOperator op(set, g, traj.eps, opt);
    std::vector<double> out;
    out.reserve(M);
    for (std::size_t n = 0; n < M; ++n) {
        const auto& s = traj.states[n];
        Mat dU;
        if (n == 0) {
            dU = (traj.states[1].U - s.U) / tau;
        } else if (n + 1 == M) {
            dU = (s.U - traj.states[n - 1].U) / tau;
        } else {
            dU = (traj.states[n + 1].U - traj.states[n - 1].U) / (2.0 * tau);
        }
        const double t = s.t;
        Mat W(nodes, N);
        Mat zeroth(nodes, N); // M G^{-1} dU/dt - (K - M G^{-1} L) U, before H and J terms
        const NodalTraces& tr = op.traces(t);
        for (std::size_t p = 0; p < nodes; ++p) {
            const Point x = g.node(p);
            const Mat Ginv = set.G(t, x).inverse();
            const Mat L = set.L(t, x);
            const Vec du = dU.row(p).transpose();
            const Vec u = s.U.row(p).transpose();
            W.row(p) = (Ginv * (du + L * u)).transpose();
            const Mat MGinv = tr.m.row(p).transpose().asDiagonal() * Ginv;
            zeroth.row(p) = (MGinv * du - (tr.K[p] - MGinv * L) * u).transpose();
        }
        const SparseSystem flux = assemble_div_flux(g, micro_faces(set, g, t, traj.eps), BoundaryColumns::keep);
        const Mat divW = from_dofs(flux.A * to_dofs(W), nodes, N);
        // zeroth_order_source adds H + K U + J grad U; remove K U (already in `zeroth`).
        Mat hj = zeroth_order_source(tr, s.U, g);
        for (std::size_t p = 0; p < nodes; ++p) hj.row(p) -= (tr.K[p] * s.U.row(p).transpose()).transpose();
        const Mat R = zeroth + divW - hj;
        double acc = 0.0;
        for (std::size_t p = 0; p < nodes; ++p) {
            if (g.on_boundary(p)) continue;
            acc += cell_volume * R.row(p).squaredNorm();
        }
        out.push_back(std::sqrt(acc));
    }
    return out;
}

} // namespace pphom
