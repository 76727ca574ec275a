#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "pphom/error.hpp"
#include "pphom/types.hpp"

namespace pphom {

/// Uniform node grid on the unit box (0,1)^d with Dirichlet boundary.
struct MacroGrid {
    int d = 1;
    int n = 3; ///< points per axis, boundary included
    double h = 0.5;

    MacroGrid() = default;
    MacroGrid(int dim, int points) : d(dim), n(points), h(1.0 / (points - 1)) {
        if (dim < 1 || dim > 2) throw DomainError("macro grid dimension must be 1 or 2");
        if (points < 3) throw DomainError("macro grid needs at least 3 points per axis");
    }

    std::size_t size() const { return d == 1 ? static_cast<std::size_t>(n) : static_cast<std::size_t>(n) * n; }

    std::array<int, 2> coords(std::size_t p) const {
        return {static_cast<int>(p % n), d == 2 ? static_cast<int>(p / n) : 0};
    }

    std::size_t index(int i, int j = 0) const { return static_cast<std::size_t>(j) * n + i; }

    double coordinate(int i) const { return static_cast<double>(i) / (n - 1); }

    Point node(std::size_t p) const {
        const auto c = coords(p);
        return {coordinate(c[0]), d == 2 ? coordinate(c[1]) : 0.0};
    }

    bool on_boundary(std::size_t p) const {
        const auto c = coords(p);
        for (int k = 0; k < d; ++k)
            if (c[k] == 0 || c[k] == n - 1) return true;
        return false;
    }

    std::vector<bool> boundary_mask() const {
        std::vector<bool> mask(size());
        for (std::size_t p = 0; p < size(); ++p) mask[p] = on_boundary(p);
        return mask;
    }

    std::optional<std::size_t> neighbor(std::size_t p, int axis, int step) const {
        auto c = coords(p);
        c[axis] += step;
        if (c[axis] < 0 || c[axis] >= n) return std::nullopt;
        return index(c[0], c[1]);
    }

    /// Face (p, p+e_axis) exists on this grid.
    bool has_face(std::size_t p, int axis) const { return coords(p)[axis] < n - 1; }

    static constexpr bool periodic = false;
};

/// Periodic node grid on the unit cell, n points per axis, no duplicated endpoint.
struct CellGrid {
    int d = 1;
    int n = 4;
    double h = 0.25;

    CellGrid() = default;
    CellGrid(int dim, int points) : d(dim), n(points), h(1.0 / points) {
        if (dim < 1 || dim > 2) throw DomainError("cell grid dimension must be 1 or 2");
        if (points < 4) throw DomainError("cell grid needs at least 4 points per axis");
    }

    std::size_t size() const { return d == 1 ? static_cast<std::size_t>(n) : static_cast<std::size_t>(n) * n; }

    std::array<int, 2> coords(std::size_t p) const {
        return {static_cast<int>(p % n), d == 2 ? static_cast<int>(p / n) : 0};
    }

    std::size_t index(int i, int j = 0) const {
        const int iw = ((i % n) + n) % n;
        const int jw = d == 2 ? ((j % n) + n) % n : 0;
        return static_cast<std::size_t>(jw) * n + iw;
    }

    Point node(std::size_t p) const {
        const auto c = coords(p);
        return {static_cast<double>(c[0]) / n, d == 2 ? static_cast<double>(c[1]) / n : 0.0};
    }

    /// Midpoint of the face between p and p + e_axis.
    Point face(std::size_t p, int axis) const {
        Point y = node(p);
        y[axis] += 0.5 * h;
        return y;
    }

    std::optional<std::size_t> neighbor(std::size_t p, int axis, int step) const {
        auto c = coords(p);
        c[axis] += step;
        return index(c[0], c[1]);
    }

    bool has_face(std::size_t, int) const { return true; }
    bool on_boundary(std::size_t) const { return false; }

    static constexpr bool periodic = true;
};

inline Point macro_face(const MacroGrid& g, std::size_t p, int axis) {
    Point x = g.node(p);
    x[axis] += 0.5 * g.h;
    return x;
}

/// Nodal gradient (size x d). Central differences in the interior, one-sided
/// second-order differences on Dirichlet boundary nodes.
inline Mat fd_gradient(const Vec& f, const MacroGrid& g) {
    if (static_cast<std::size_t>(f.size()) != g.size()) throw DomainError("fd_gradient: field/grid size mismatch");
    Mat out(g.size(), g.d);
    for (std::size_t p = 0; p < g.size(); ++p) {
        const auto c = g.coords(p);
        for (int k = 0; k < g.d; ++k) {
            if (c[k] == 0) {
                const auto p1 = *g.neighbor(p, k, 1);
                const auto p2 = *g.neighbor(p1, k, 1);
                out(p, k) = (-3.0 * f[p] + 4.0 * f[p1] - f[p2]) / (2.0 * g.h);
            } else if (c[k] == g.n - 1) {
                const auto m1 = *g.neighbor(p, k, -1);
                const auto m2 = *g.neighbor(m1, k, -1);
                out(p, k) = (3.0 * f[p] - 4.0 * f[m1] + f[m2]) / (2.0 * g.h);
            } else {
                out(p, k) = (f[*g.neighbor(p, k, 1)] - f[*g.neighbor(p, k, -1)]) / (2.0 * g.h);
            }
        }
    }
    return out;
}

/// Wrapped central differences on the periodic cell grid.
inline Mat fd_gradient(const Vec& f, const CellGrid& g) {
    if (static_cast<std::size_t>(f.size()) != g.size()) throw DomainError("fd_gradient: field/grid size mismatch");
    Mat out(g.size(), g.d);
    for (std::size_t p = 0; p < g.size(); ++p)
        for (int k = 0; k < g.d; ++k)
            out(p, k) = (f[*g.neighbor(p, k, 1)] - f[*g.neighbor(p, k, -1)]) / (2.0 * g.h);
    return out;
}

enum class Norm { l2, mean };

/// Tensor-product trapezoid weights on the macro grid (they sum to 1).
inline Vec quadrature_weights(const MacroGrid& g) {
    Vec w(g.size());
    for (std::size_t p = 0; p < g.size(); ++p) {
        const auto c = g.coords(p);
        double v = 1.0;
        for (int k = 0; k < g.d; ++k) v *= (c[k] == 0 || c[k] == g.n - 1) ? 0.5 * g.h : g.h;
        w[p] = v;
    }
    return w;
}

inline Vec quadrature_weights(const CellGrid& g) {
    return Vec::Constant(static_cast<Eigen::Index>(g.size()), 1.0 / static_cast<double>(g.size()));
}

/// Trapezoid (macro) or rectangle (cell) rule: discrete L2 norm or mean.
template <class Grid>
double integrate_field(const Vec& f, const Grid& g, Norm norm) {
    if (static_cast<std::size_t>(f.size()) != g.size()) throw DomainError("integrate_field: field/grid size mismatch");
    if constexpr (Grid::periodic) {
        if (norm == Norm::mean) return f.mean();
    }
    const Vec w = quadrature_weights(g);
    if (norm == Norm::mean) return w.dot(f) / w.sum();
    return std::sqrt(w.dot(f.cwiseAbs2()));
}

/// Squared discrete L2 norm, summed over the columns of a multi-component field.
inline double l2_squared(const Mat& fields, const Vec& weights) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < fields.cols(); ++c) s += weights.dot(fields.col(c).cwiseAbs2());
    return s;
}

} // namespace pphom
