#pragma once

#include <algorithm>
#include <array>
#include <cfloat>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pphom/error.hpp"
#include "pphom/types.hpp"

namespace pphom {

/// Identifiers of the problem coefficients.
enum class Coef { M, E, D, H, K, J, L, G, Ustar };

inline constexpr std::array<Coef, 9> all_coefs{Coef::M, Coef::E, Coef::D, Coef::H, Coef::K,
                                               Coef::J, Coef::L, Coef::G, Coef::Ustar};

inline std::string_view coef_name(Coef c) {
    switch (c) {
    case Coef::M: return "M";
    case Coef::E: return "E";
    case Coef::D: return "D";
    case Coef::H: return "H";
    case Coef::K: return "K";
    case Coef::J: return "J";
    case Coef::L: return "L";
    case Coef::G: return "G";
    case Coef::Ustar: return "U_star";
    }
    return "?";
}

inline Coef parse_coef(std::string_view name) {
    for (Coef c : all_coefs)
        if (coef_name(c) == name) return c;
    if (name == "Ustar" || name == "U*") return Coef::Ustar;
    throw ConfigError("unknown coefficient '" + std::string(name) + "'");
}

/// L, G and U* carry no periodic argument.
inline bool has_periodic_argument(Coef c) {
    return c != Coef::L && c != Coef::G && c != Coef::Ustar;
}

/// One scalar entry of a coefficient tensor, c(t, x, y).
///
/// The dependency flags drive caching (time-constant operators are factored
/// once) and the corrector storage economy. When `xt` and `yp` are both set
/// the entry factors as xt(t, x) * yp(y), which the cell sweep exploits.
struct ScalarField {
    using Fn = std::function<double(double, const Point&, const Point&)>;

    Fn fn;
    bool depends_t = true;
    bool depends_x = true;
    bool depends_y = true;
    std::function<double(double, const Point&)> xt;
    std::function<double(const Point&)> yp;

    double operator()(double t, const Point& x, const Point& y) const { return fn(t, x, y); }
    bool separable() const { return static_cast<bool>(xt) && static_cast<bool>(yp); }
};

inline ScalarField constant_field(double c) {
    ScalarField f;
    f.fn = [c](double, const Point&, const Point&) { return c; };
    f.depends_t = f.depends_x = f.depends_y = false;
    f.xt = [](double, const Point&) { return 1.0; };
    f.yp = [c](const Point&) { return c; };
    return f;
}

/// Extension point: any sampler. Flags must be truthful (false means the
/// sampler really ignores that argument).
inline ScalarField custom_field(ScalarField::Fn fn, bool depends_t = true, bool depends_x = true,
                                bool depends_y = true) {
    ScalarField f;
    f.fn = std::move(fn);
    f.depends_t = depends_t;
    f.depends_x = depends_x;
    f.depends_y = depends_y;
    return f;
}

/// Parametric family declaration as it appears in a run configuration.
///
/// Every family is xt(t, x) * yp(y) with
///   xt = (x0 + x1 * prod_m sin(pi xq x_m)) * (1 + t1 t)
/// and yp one of
///   constant:            value                               (xt fixed to 1)
///   trig:                a + b sin(2 pi k.y + phase)         (xt fixed to 1)
///   separable:           a + b sin(2 pi k.y + phase)
///   product:             prod_m (pa_m + pb_m sin(2 pi pk_m y_m + pphase_m))
struct FamilySpec {
    std::string family = "constant";
    double value = 0.0;
    double a = 1.0, b = 0.0, phase = 0.0;
    std::array<int, 2> k{1, 0};
    std::array<double, 2> pa{1.0, 1.0}, pb{0.0, 0.0}, pphase{0.0, 0.0};
    std::array<int, 2> pk{1, 1};
    double x0 = 1.0, x1 = 0.0, t1 = 0.0;
    int xq = 1;
};

inline bool is_known_family(std::string_view name) {
    return name == "constant" || name == "trig" || name == "separable" || name == "product";
}

inline ScalarField make_field(const FamilySpec& s, int d) {
    if (!is_known_family(s.family)) throw ConfigError("unknown coefficient family '" + s.family + "'");
    if (s.family == "constant") return constant_field(s.value);

    constexpr double two_pi = 2.0 * std::numbers::pi;
    const bool general_xt = s.family == "separable" || s.family == "product";
    const double x0 = general_xt ? s.x0 : 1.0;
    const double x1 = general_xt ? s.x1 : 0.0;
    const double t1 = general_xt ? s.t1 : 0.0;
    const int xq = s.xq;

    auto xt = [d, x0, x1, t1, xq](double t, const Point& x) {
        double px = 1.0;
        for (int m = 0; m < d; ++m) px *= std::sin(std::numbers::pi * xq * x[m]);
        return (x0 + x1 * px) * (1.0 + t1 * t);
    };

    std::function<double(const Point&)> yp;
    bool depends_y = false;
    if (s.family == "product") {
        auto pa = s.pa, pb = s.pb, ph = s.pphase;
        auto pk = s.pk;
        yp = [d, pa, pb, ph, pk](const Point& y) {
            double v = 1.0;
            for (int m = 0; m < d; ++m) v *= pa[m] + pb[m] * std::sin(two_pi * pk[m] * y[m] + ph[m]);
            return v;
        };
        for (int m = 0; m < d; ++m) depends_y = depends_y || pb[m] != 0.0;
    } else {
        const double a = s.a, b = s.b, phase = s.phase;
        const auto k = s.k;
        yp = [d, a, b, phase, k](const Point& y) {
            double arg = phase;
            for (int m = 0; m < d; ++m) arg += two_pi * k[m] * y[m];
            return a + b * std::sin(arg);
        };
        depends_y = b != 0.0;
    }

    ScalarField f;
    f.xt = xt;
    f.yp = yp;
    f.fn = [xt, yp](double t, const Point& x, const Point& y) { return xt(t, x) * yp(y); };
    f.depends_t = t1 != 0.0;
    f.depends_x = x1 != 0.0;
    f.depends_y = depends_y;
    return f;
}

/// Dense tensor value with row-major flat storage.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> values;

    double operator[](std::size_t i) const { return values[i]; }
};

/// All problem coefficients: M (diag, N), E (diag, d), D (d x N x N), H (N),
/// K (N x N), J (d x N x N), L (N x N), G (N x N), U* (N).
///
/// Defaults: M = E = 1, G = identity, everything else zero.
class CoefficientSet {
public:
    CoefficientSet(int d, int N) : d_(d), n_(N) {
        if (d < 1 || d > 2) throw ConfigError("dimension d must be 1 or 2");
        if (N < 1) throw ConfigError("system size N must be >= 1");
        for (Coef c : all_coefs) {
            std::size_t count = 1;
            for (int s : shape(c)) count *= static_cast<std::size_t>(s);
            fields_[idx(c)].assign(count, constant_field(0.0));
        }
        for (auto& f : fields_[idx(Coef::M)]) f = constant_field(1.0);
        for (auto& f : fields_[idx(Coef::E)]) f = constant_field(1.0);
        for (int a = 0; a < N; ++a) fields_[idx(Coef::G)][a * N + a] = constant_field(1.0);
    }

    int dim() const noexcept { return d_; }
    int size() const noexcept { return n_; }

    std::vector<int> shape(Coef c) const {
        switch (c) {
        case Coef::M: return {n_};
        case Coef::E: return {d_};
        case Coef::D: return {d_, n_, n_};
        case Coef::H: return {n_};
        case Coef::K: return {n_, n_};
        case Coef::J: return {d_, n_, n_};
        case Coef::L: return {n_, n_};
        case Coef::G: return {n_, n_};
        case Coef::Ustar: return {n_};
        }
        return {};
    }

    std::size_t entries(Coef c) const { return fields_[idx(c)].size(); }

    ScalarField& field(Coef c, std::size_t flat) { return fields_[idx(c)].at(flat); }
    const ScalarField& field(Coef c, std::size_t flat) const { return fields_[idx(c)].at(flat); }

    // Index helpers for the 3-index tensors D and J.
    std::size_t idx3(int i, int a, int b) const { return (static_cast<std::size_t>(i) * n_ + a) * n_ + b; }
    std::size_t idx2(int a, int b) const { return static_cast<std::size_t>(a) * n_ + b; }

    double m(int a, double t, const Point& x, const Point& y) const { return fields_[idx(Coef::M)][a](t, x, y); }
    double e(int i, double t, const Point& x, const Point& y) const { return fields_[idx(Coef::E)][i](t, x, y); }
    double D(int i, int a, int b, double t, const Point& x, const Point& y) const {
        return fields_[idx(Coef::D)][idx3(i, a, b)](t, x, y);
    }
    double H(int a, double t, const Point& x, const Point& y) const { return fields_[idx(Coef::H)][a](t, x, y); }
    double K(int a, int b, double t, const Point& x, const Point& y) const {
        return fields_[idx(Coef::K)][idx2(a, b)](t, x, y);
    }
    double J(int i, int a, int b, double t, const Point& x, const Point& y) const {
        return fields_[idx(Coef::J)][idx3(i, a, b)](t, x, y);
    }
    double u_star(int a, const Point& x) const { return fields_[idx(Coef::Ustar)][a](0.0, x, Point{}); }

    Mat L(double t, const Point& x) const { return matrix(Coef::L, t, x); }
    Mat G(double t, const Point& x) const { return matrix(Coef::G, t, x); }

    bool time_constant(Coef c) const {
        return std::none_of(fields_[idx(c)].begin(), fields_[idx(c)].end(),
                            [](const ScalarField& f) { return f.depends_t; });
    }
    bool x_constant(Coef c) const {
        return std::none_of(fields_[idx(c)].begin(), fields_[idx(c)].end(),
                            [](const ScalarField& f) { return f.depends_x; });
    }
    bool y_constant(Coef c) const {
        return std::none_of(fields_[idx(c)].begin(), fields_[idx(c)].end(),
                            [](const ScalarField& f) { return f.depends_y; });
    }

    /// Time-constancy of everything the micro elliptic operator depends on.
    bool elliptic_time_constant() const {
        return time_constant(Coef::M) && time_constant(Coef::E) && time_constant(Coef::D);
    }

    /// Samples the full tensor c(t, x, y).
    Tensor sample(Coef c, double t, const Point& x, const Point& y) const {
        Tensor out{shape(c), {}};
        const auto& fs = fields_[idx(c)];
        out.values.reserve(fs.size());
        for (const auto& f : fs) out.values.push_back(f(t, x, y));
        return out;
    }

    /// Cell problems may be solved once when this holds: E_i = f(t,x) e_i(y)
    /// with one common f, and D_{iab} = g_ab(t,x) d_{iab}(y) with g independent of i.
    /// Common factors are compared on the supplied probe points.
    bool request_separable = false;

    bool cells_separable(const std::vector<std::pair<double, Point>>& probes) const {
        if (!request_separable) return false;
        const auto& E = fields_[idx(Coef::E)];
        const auto& Dv = fields_[idx(Coef::D)];
        for (const auto& f : E)
            if (!f.separable()) return false;
        for (const auto& f : Dv)
            if (!f.separable()) return false;
        for (const auto& [t, x] : probes) {
            const double f0 = E[0].xt(t, x);
            if (f0 == 0.0) return false;
            for (int i = 1; i < d_; ++i)
                if (std::abs(E[i].xt(t, x) - f0) > 1e-14 * std::abs(f0)) return false;
            for (int a = 0; a < n_; ++a)
                for (int b = 0; b < n_; ++b) {
                    const double g0 = Dv[idx3(0, a, b)].xt(t, x);
                    for (int i = 1; i < d_; ++i)
                        if (std::abs(Dv[idx3(i, a, b)].xt(t, x) - g0) > 1e-14 * (1.0 + std::abs(g0)))
                            return false;
                }
        }
        return true;
    }

private:
    static std::size_t idx(Coef c) { return static_cast<std::size_t>(c); }

    Mat matrix(Coef c, double t, const Point& x) const {
        Mat out(n_, n_);
        const auto& fs = fields_[idx(c)];
        for (int a = 0; a < n_; ++a)
            for (int b = 0; b < n_; ++b) out(a, b) = fs[idx2(a, b)](t, x, Point{});
        return out;
    }

    int d_;
    int n_;
    std::array<std::vector<ScalarField>, all_coefs.size()> fields_;
};

/// Maps x/eps componentwise into [0, 1).
inline Point cell_coordinate(const Point& x, double eps, int d) {
    Point y{0.0, 0.0};
    for (int m = 0; m < d; ++m) {
        const double s = x[m] / eps;
        y[m] = s - std::floor(s);
    }
    return y;
}

/// c^eps(t, x) = c(t, x, frac(x/eps)).
inline Tensor eval_eps_trace(const CoefficientSet& set, Coef c, double t, const Point& x, double eps) {
    if (!(eps > 0.0)) throw DomainError("eps must be positive");
    if (!has_periodic_argument(c))
        throw ConfigError("coefficient '" + std::string(coef_name(c)) + "' has no periodic argument");
    return set.sample(c, t, x, cell_coordinate(x, eps, set.dim()));
}

inline Tensor eval_eps_trace(const CoefficientSet& set, std::string_view name, double t, const Point& x,
                             double eps) {
    return eval_eps_trace(set, parse_coef(name), t, x, eps);
}

/// (1/|Y|) int_Y c(t, x, y) dy by the periodic rectangle rule with quad_n
/// points per axis. Coefficients without a y argument are returned as is.
inline Tensor y_average(const CoefficientSet& set, Coef c, double t, const Point& x, int quad_n) {
    if (quad_n < 2) throw DomainError("y_average needs quad_n >= 2");
    if (!has_periodic_argument(c)) return set.sample(c, t, x, Point{});
    const int d = set.dim();
    Tensor acc{set.shape(c), std::vector<double>(set.entries(c), 0.0)};
    const std::size_t total = d == 1 ? quad_n : static_cast<std::size_t>(quad_n) * quad_n;
    for (std::size_t e = 0; e < acc.values.size(); ++e) {
        const auto& f = set.field(c, e);
        if (!f.depends_y) {
            acc.values[e] = f(t, x, Point{});
            continue;
        }
        double s = 0.0;
        for (std::size_t q = 0; q < total; ++q) {
            Point y{static_cast<double>(q % quad_n) / quad_n, d == 2 ? static_cast<double>(q / quad_n) / quad_n : 0.0};
            s += f(t, x, y);
        }
        acc.values[e] = s / static_cast<double>(total);
    }
    return acc;
}

/// Sampling lattice for sup-norm estimates: nt times in [0, T], nx points per
/// axis in [0, 1], ny points per axis in [0, 1).
struct SamplingGrid {
    int nt = 5;
    int nx = 17;
    int ny = 32;
    double T = 1.0;

    double time(int i) const { return nt <= 1 ? 0.0 : T * i / (nt - 1); }
    double xcoord(int i) const { return nx <= 1 ? 0.0 : static_cast<double>(i) / (nx - 1); }
    double ycoord(int i) const { return static_cast<double>(i) / ny; }
};

/// Sampled sup-norm bounds used both by the ellipticity and drift checks and by the
/// a-priori energy constants.
struct SupBounds {
    double m_min = std::numeric_limits<double>::infinity(); ///< min_a inf m_a
    double e_min = std::numeric_limits<double>::infinity(); ///< min_i inf e_i
    double sup_inv_m = 0.0;                                ///< max_a sup 1/m_a
    double sup_inv_e = 0.0;                                ///< max_i sup 1/e_i
    double max_D_sq = 0.0;                                 ///< max_{i,a,b} sup |D_iab|^2
    std::vector<double> sup_H_sq;                          ///< per a
    std::vector<double> sup_K_sq;                          ///< per (a, b)
    std::vector<double> sup_J_sq;                          ///< per (i, a, b)
    double g_min_det = std::numeric_limits<double>::infinity();
    long long samples = 0;
};

inline SupBounds sample_bounds(const CoefficientSet& set, const SamplingGrid& grid) {
    if (grid.nt < 1 || grid.nx < 1 || grid.ny < 1) throw DomainError("sampling grid must be nonempty");
    const int d = set.dim();
    const int N = set.size();
    SupBounds b;
    b.sup_H_sq.assign(N, 0.0);
    b.sup_K_sq.assign(static_cast<std::size_t>(N) * N, 0.0);
    b.sup_J_sq.assign(static_cast<std::size_t>(d) * N * N, 0.0);

    const int nx2 = d == 2 ? grid.nx : 1;
    const int ny2 = d == 2 ? grid.ny : 1;
    for (int it = 0; it < grid.nt; ++it) {
        const double t = grid.time(it);
        for (int ix = 0; ix < grid.nx; ++ix)
            for (int jx = 0; jx < nx2; ++jx) {
                const Point x{grid.xcoord(ix), d == 2 ? grid.xcoord(jx) : 0.0};
                const double det = std::abs(set.G(t, x).determinant());
                b.g_min_det = std::min(b.g_min_det, det);
                for (int iy = 0; iy < grid.ny; ++iy)
                    for (int jy = 0; jy < ny2; ++jy) {
                        const Point y{grid.ycoord(iy), d == 2 ? grid.ycoord(jy) : 0.0};
                        ++b.samples;
                        for (int a = 0; a < N; ++a) {
                            const double m = set.m(a, t, x, y);
                            b.m_min = std::min(b.m_min, m);
                            if (m > 0.0) b.sup_inv_m = std::max(b.sup_inv_m, 1.0 / m);
                            const double h = set.H(a, t, x, y);
                            b.sup_H_sq[a] = std::max(b.sup_H_sq[a], h * h);
                            for (int c = 0; c < N; ++c) {
                                const double k = set.K(a, c, t, x, y);
                                b.sup_K_sq[set.idx2(a, c)] = std::max(b.sup_K_sq[set.idx2(a, c)], k * k);
                            }
                        }
                        for (int i = 0; i < d; ++i) {
                            const double e = set.e(i, t, x, y);
                            b.e_min = std::min(b.e_min, e);
                            if (e > 0.0) b.sup_inv_e = std::max(b.sup_inv_e, 1.0 / e);
                            for (int a = 0; a < N; ++a)
                                for (int c = 0; c < N; ++c) {
                                    const double dv = set.D(i, a, c, t, x, y);
                                    b.max_D_sq = std::max(b.max_D_sq, dv * dv);
                                    const double jv = set.J(i, a, c, t, x, y);
                                    auto& s = b.sup_J_sq[set.idx3(i, a, c)];
                                    s = std::max(s, jv * jv);
                                }
                        }
                    }
            }
    }
    return b;
}

/// Pointwise consequences of the structural assumptions on the sampling grid.
struct AssumptionReport {
    bool a2_ok = false;
    double a3_margin = 0.0; ///< 4/(d N^2 sup(1/m) sup(1/e)) - max sup|D|^2
    double g_min_det = 0.0;
    long long samples_used = 0;
    SamplingGrid grid;
    double sup_inv_m = 0.0;
    double sup_inv_e = 0.0;
    double max_D_sq = 0.0;

    bool passed(double det_floor = 1e-12) const { return a2_ok && a3_margin > 0.0 && g_min_det > det_floor; }
};

inline AssumptionReport assumption_report(const CoefficientSet& set, const SupBounds& b, const SamplingGrid& grid) {
    AssumptionReport r;
    r.grid = grid;
    r.samples_used = b.samples;
    r.a2_ok = b.m_min > 0.0 && b.e_min > 0.0;
    r.g_min_det = b.g_min_det;
    r.sup_inv_m = b.sup_inv_m;
    r.sup_inv_e = b.sup_inv_e;
    r.max_D_sq = b.max_D_sq;
    if (r.a2_ok) {
        const double dN2 = static_cast<double>(set.dim()) * set.size() * set.size();
        r.a3_margin = 4.0 / (dN2 * b.sup_inv_m * b.sup_inv_e) - b.max_D_sq;
    } else {
        r.a3_margin = -std::numeric_limits<double>::infinity();
    }
    return r;
}

inline AssumptionReport validate_assumptions(const CoefficientSet& set, const SamplingGrid& grid) {
    return assumption_report(set, sample_bounds(set, grid), grid);
}

} // namespace pphom
