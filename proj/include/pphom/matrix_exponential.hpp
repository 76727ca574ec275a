#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "pphom/error.hpp"
#include "pphom/types.hpp"

namespace pphom {

namespace detail {

// Pade coefficients b_0..b_m for degrees 3, 5, 7, 9, 13.
inline constexpr std::array<double, 4> pade3{120.0, 60.0, 12.0, 1.0};
inline constexpr std::array<double, 6> pade5{30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
inline constexpr std::array<double, 8> pade7{17297280.0, 8648640.0, 1995840.0, 277200.0,
                                             25200.0,    1512.0,    56.0,      1.0};
inline constexpr std::array<double, 10> pade9{17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
                                              2162160.0,     110880.0,     3960.0,       90.0,        1.0};
inline constexpr std::array<double, 14> pade13{64764752532480000.0,
                                               32382376266240000.0,
                                               7771770303897600.0,
                                               1187353796428800.0,
                                               129060195264000.0,
                                               10559470521600.0,
                                               670442572800.0,
                                               33522128640.0,
                                               1323241920.0,
                                               40840800.0,
                                               960960.0,
                                               16380.0,
                                               182.0,
                                               1.0};

// Backward-error bounds on ||A||_1 for each degree.
inline constexpr std::array<double, 4> pade_theta{1.495585217958292e-2, 2.539398330063230e-1, 9.504178996162932e-1,
                                                  2.097847961257068e0};
inline constexpr double pade_theta13 = 5.371920351148152;

template <std::size_t K>
void pade_low(const Mat& A, const std::array<double, K>& b, Mat& U, Mat& V) {
    const auto n = A.rows();
    const Mat I = Mat::Identity(n, n);
    const Mat A2 = A * A;
    Mat P = I; // A^(2j)
    Mat Uo = b[1] * I;
    V = b[0] * I;
    for (std::size_t j = 1; 2 * j < K; ++j) {
        P = P * A2;
        V += b[2 * j] * P;
        if (2 * j + 1 < K) Uo += b[2 * j + 1] * P;
    }
    U = A * Uo;
}

inline bool finite(const Mat& A) { return A.allFinite(); }

// V diag(exp(lambda)) V^{-1}; used when the Pade denominator is unusable.
inline Mat exp_by_eigen(const Mat& A) {
    Eigen::EigenSolver<Mat> es(A);
    if (es.info() != Eigen::Success) throw SolverError("matrix exponential: eigendecomposition failed", {});
    const Eigen::MatrixXcd Vc = es.eigenvectors();
    const Eigen::VectorXcd ev = es.eigenvalues().array().exp();
    const Eigen::MatrixXcd R = Vc * ev.asDiagonal() * Vc.inverse();
    return R.real();
}

} // namespace detail

/// exp(s A) by scaling and squaring with a Pade approximant of degree
/// 3/5/7/9/13 chosen from ||s A||_1. Falls back to an eigendecomposition if
/// the Pade denominator is numerically singular.
inline Mat matrix_exponential(const Mat& A, double s) {
    if (A.rows() != A.cols()) throw DomainError("matrix_exponential needs a square matrix");
    const auto n = A.rows();
    if (n == 0) return Mat(0, 0);
    Mat X = s * A;
    if (!detail::finite(X)) throw DomainError("matrix_exponential: non-finite input");
    const double norm = X.cwiseAbs().colwise().sum().maxCoeff();
    if (norm == 0.0) return Mat::Identity(n, n);

    Mat U, V;
    int squarings = 0;
    if (norm <= detail::pade_theta[0]) {
        detail::pade_low(X, detail::pade3, U, V);
    } else if (norm <= detail::pade_theta[1]) {
        detail::pade_low(X, detail::pade5, U, V);
    } else if (norm <= detail::pade_theta[2]) {
        detail::pade_low(X, detail::pade7, U, V);
    } else if (norm <= detail::pade_theta[3]) {
        detail::pade_low(X, detail::pade9, U, V);
    } else {
        squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm / detail::pade_theta13))));
        X /= std::ldexp(1.0, squarings);
        const auto& b = detail::pade13;
        const Mat I = Mat::Identity(n, n);
        const Mat A2 = X * X;
        const Mat A4 = A2 * A2;
        const Mat A6 = A4 * A2;
        U = X * (A6 * (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I);
        V = A6 * (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;
    }
    Eigen::PartialPivLU<Mat> lu(V - U);
    const double rcond = lu.rcond();
    if (!(rcond > 1e-14)) return detail::exp_by_eigen(s * A);
    Mat R = lu.solve(V + U);
    for (int k = 0; k < squarings; ++k) R = R * R;
    if (!detail::finite(R)) return detail::exp_by_eigen(s * A);
    return R;
}

} // namespace pphom
