#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "pphom/error.hpp"
#include "pphom/grid.hpp"
#include "pphom/types.hpp"

namespace pphom {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Square sparse system A x = b.
struct SparseSystem {
    SpMat A;
    Vec b;

    std::size_t n_dof() const { return static_cast<std::size_t>(A.rows()); }
};

/// Whether interior rows of a Dirichlet operator keep couplings to boundary
/// nodes. Eliminating them is exact for homogeneous data and keeps A
/// symmetric; keeping them lets the operator act on fields with nonzero
/// boundary values.
enum class BoundaryColumns { eliminate, keep };

/// Face samples of the flux a . grad w + b w for ncomp coupled components.
///
/// Face (p, p + e_k) is stored at index p of axis k. `normal[k][p]` is a_kk,
/// `cross[k * d + l][p]` is a_kl (l != k; empty means a is diagonal) and
/// `drift[k][(p * ncomp + a) * ncomp + b]` is b_kab (empty means b == 0).
struct FaceCoefficients {
    int d = 1;
    int ncomp = 1;
    std::vector<std::vector<double>> normal;
    std::vector<std::vector<double>> cross;
    std::vector<std::vector<double>> drift;

    FaceCoefficients() = default;
    FaceCoefficients(int dim, int components, std::size_t nodes, bool with_cross, bool with_drift)
        : d(dim), ncomp(components), normal(dim, std::vector<double>(nodes, 0.0)) {
        if (with_cross) cross.assign(static_cast<std::size_t>(dim) * dim, std::vector<double>(nodes, 0.0));
        if (with_drift)
            drift.assign(dim, std::vector<double>(nodes * static_cast<std::size_t>(components) * components, 0.0));
    }

    double& drift_at(int k, std::size_t p, int a, int b) {
        return drift[k][(p * ncomp + a) * ncomp + b];
    }
    double drift_at(int k, std::size_t p, int a, int b) const {
        return drift[k][(p * ncomp + a) * ncomp + b];
    }
};

/// Conservative second-order finite-volume matrix of -div(a grad w + b w).
///
/// Dofs are blocked: dof(a, p) = a * size + p. On a Dirichlet grid boundary
/// rows are identity rows; on a periodic grid every row carries wrap-around
/// couplings. Drift uses centred face averages.
template <class Grid>
SparseSystem assemble_div_flux(const Grid& g, const FaceCoefficients& fc,
                               BoundaryColumns columns = BoundaryColumns::eliminate) {
    const std::size_t n = g.size();
    const int N = fc.ncomp;
    const double h = g.h;
    const bool have_cross = !fc.cross.empty() && g.d > 1;
    const bool have_drift = !fc.drift.empty();

    for (int k = 0; k < g.d; ++k)
        for (std::size_t p = 0; p < n; ++p) {
            if (!g.has_face(p, k)) continue;
            if (!(fc.normal[k][p] > 0.0)) {
                const auto c = g.coords(p);
                throw AssemblyError("non-positive diffusion " + std::to_string(fc.normal[k][p]) + " on axis " +
                                    std::to_string(k) + " face at node " + std::to_string(p) + " (" +
                                    std::to_string(c[0]) + "," + std::to_string(c[1]) + ")");
            }
        }

    auto dof = [n](int a, std::size_t p) { return static_cast<Eigen::Index>(a * n + p); };
    std::vector<Triplet> trip;
    trip.reserve(n * N * (1 + 2 * g.d) * (have_drift ? N : 1) * (have_cross ? 3 : 1));

    auto add = [&](Eigen::Index row, int comp, std::size_t node, double v) {
        if constexpr (!Grid::periodic) {
            if (columns == BoundaryColumns::eliminate && g.on_boundary(node)) return;
        }
        trip.emplace_back(row, dof(comp, node), v);
    };

    // Adds s * F(L -> R) for component a, with F = a_kk dw/dn + sum_l a_kl dw/dl + sum_b b_kab avg(w_b).
    auto add_flux = [&](Eigen::Index row, int a, int k, std::size_t L, std::size_t R, double s) {
        const double akk = fc.normal[k][L];
        add(row, a, R, s * akk / h);
        add(row, a, L, -s * akk / h);
        if (have_cross) {
            for (int l = 0; l < g.d; ++l) {
                if (l == k) continue;
                const double akl = fc.cross[k * g.d + l][L];
                if (akl == 0.0) continue;
                const double c = s * akl / (4.0 * h);
                add(row, a, *g.neighbor(R, l, 1), c);
                add(row, a, *g.neighbor(L, l, 1), c);
                add(row, a, *g.neighbor(R, l, -1), -c);
                add(row, a, *g.neighbor(L, l, -1), -c);
            }
        }
        if (have_drift) {
            for (int b = 0; b < N; ++b) {
                const double bk = fc.drift_at(k, L, a, b);
                if (bk == 0.0) continue;
                add(row, b, L, 0.5 * s * bk);
                add(row, b, R, 0.5 * s * bk);
            }
        }
    };

    for (std::size_t p = 0; p < n; ++p) {
        for (int a = 0; a < N; ++a) {
            const auto row = dof(a, p);
            if constexpr (!Grid::periodic) {
                if (g.on_boundary(p)) {
                    trip.emplace_back(row, row, 1.0);
                    continue;
                }
            }
            for (int k = 0; k < g.d; ++k) {
                const std::size_t q = *g.neighbor(p, k, 1);
                const std::size_t r = *g.neighbor(p, k, -1);
                add_flux(row, a, k, p, q, -1.0 / h);
                add_flux(row, a, k, r, p, 1.0 / h);
            }
        }
    }

    SparseSystem sys;
    sys.A.resize(static_cast<Eigen::Index>(n * N), static_cast<Eigen::Index>(n * N));
    sys.A.setFromTriplets(trip.begin(), trip.end());
    sys.A.makeCompressed();
    sys.b = Vec::Zero(sys.A.rows());
    return sys;
}

/// Appends one Lagrange row/column per component block fixing the weighted
/// mean of that block to zero (gauge of periodic problems).
inline SparseSystem add_mean_constraint(const SparseSystem& sys, int ncomp, const Vec& weights) {
    const Eigen::Index n = sys.A.rows();
    const Eigen::Index block = n / ncomp;
    if (weights.size() != block) throw DomainError("add_mean_constraint: weight size mismatch");
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(sys.A.nonZeros() + 2 * n));
    for (Eigen::Index c = 0; c < sys.A.outerSize(); ++c)
        for (SpMat::InnerIterator it(sys.A, c); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    for (int a = 0; a < ncomp; ++a)
        for (Eigen::Index p = 0; p < block; ++p) {
            trip.emplace_back(n + a, a * block + p, weights[p]);
            trip.emplace_back(a * block + p, n + a, weights[p]);
        }
    SparseSystem out;
    out.A.resize(n + ncomp, n + ncomp);
    out.A.setFromTriplets(trip.begin(), trip.end());
    out.A.makeCompressed();
    out.b = Vec::Zero(n + ncomp);
    out.b.head(n) = sys.b;
    return out;
}

/// Factor-once, solve-many wrapper over Eigen's sparse solvers.
///
/// `direct` uses SparseLU, `cg` Jacobi-preconditioned conjugate gradients
/// (caller asserts SPD), `bicgstab` Jacobi BiCGSTAB with an ILUT retry.
/// Every solve checks ||A x - b|| <= tol ||b||.
class LinearSolver {
public:
    LinearSolver() = default;

    LinearSolver(SpMat A, LinearMethod method, double tol)
        : A_(std::make_shared<const SpMat>(std::move(A))), method_(method), tol_(tol) {
        if (A_->rows() != A_->cols()) throw SolverError("matrix is not square", {});
        if (method_ == LinearMethod::direct) {
            auto lu = std::make_shared<Eigen::SparseLU<SpMat>>();
            lu->analyzePattern(*A_);
            lu->factorize(*A_);
            if (lu->info() != Eigen::Success)
                throw SolverError("sparse LU factorization failed: " + lu->lastErrorMessage(), {});
            lu_ = std::move(lu);
        }
    }

    bool empty() const { return !A_; }
    const SpMat& matrix() const { return *A_; }

    Vec solve(const Vec& b) const {
        if (!A_) throw SolverError("solve on an empty LinearSolver", {});
        const double bnorm = b.norm();
        if (bnorm == 0.0) return Vec::Zero(b.size());
        std::vector<double> history;
        Vec x;
        switch (method_) {
        case LinearMethod::direct:
            x = lu_->solve(b);
            break;
        case LinearMethod::cg: {
            Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg;
            cg.setTolerance(tol_);
            cg.setMaxIterations(max_iterations());
            cg.compute(*A_);
            x = cg.solve(b);
            history.push_back(cg.error());
            break;
        }
        case LinearMethod::bicgstab: {
            Eigen::BiCGSTAB<SpMat> it;
            it.setTolerance(tol_);
            it.setMaxIterations(max_iterations());
            it.compute(*A_);
            x = it.solve(b);
            history.push_back(it.error());
            if (it.info() != Eigen::Success || relative_residual(x, b, bnorm) > tol_) {
                Eigen::BiCGSTAB<SpMat, Eigen::IncompleteLUT<double>> ilu;
                ilu.setTolerance(tol_);
                ilu.setMaxIterations(max_iterations());
                ilu.compute(*A_);
                x = ilu.solveWithGuess(b, x);
                history.push_back(ilu.error());
            }
            break;
        }
        }
        const double res = relative_residual(x, b, bnorm);
        history.push_back(res);
        if (!(res <= tol_) && !(method_ == LinearMethod::direct && res <= direct_slack * tol_))
            throw SolverError("linear solve did not reach tolerance (relative residual " + std::to_string(res) + ")",
                              history);
        return x;
    }

private:
    // Rounding in LU back substitution may exceed a very tight tol slightly.
    static constexpr double direct_slack = 1e3;

    int max_iterations() const { return std::max<int>(1000, 4 * static_cast<int>(A_->rows())); }

    double relative_residual(const Vec& x, const Vec& b, double bnorm) const {
        return (*A_ * x - b).norm() / bnorm;
    }

    std::shared_ptr<const SpMat> A_;
    LinearMethod method_ = LinearMethod::direct;
    double tol_ = 1e-12;
    std::shared_ptr<Eigen::SparseLU<SpMat>> lu_;
};

inline Vec solve_linear(const SparseSystem& sys, LinearMethod method, double tol) {
    return LinearSolver(sys.A, method, tol).solve(sys.b);
}

} // namespace pphom
