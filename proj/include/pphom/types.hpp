#pragma once

#include <array>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "pphom/error.hpp"

namespace pphom {

/// Point in the macro domain or the unit cell. Components beyond the
/// problem dimension are zero.
using Point = std::array<double, 2>;

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class TimeScheme { implicit_euler, crank_nicolson };
enum class LinearMethod { direct, cg, bicgstab };
enum class CorrectorMode { stepped, nonlocal };

inline TimeScheme parse_scheme(std::string_view s) {
    if (s == "implicit-euler") return TimeScheme::implicit_euler;
    if (s == "crank-nicolson") return TimeScheme::crank_nicolson;
    throw ConfigError("unknown time scheme '" + std::string(s) + "'");
}

inline LinearMethod parse_linear_method(std::string_view s) {
    if (s == "direct") return LinearMethod::direct;
    if (s == "cg") return LinearMethod::cg;
    if (s == "bicgstab") return LinearMethod::bicgstab;
    throw ConfigError("unknown linear method '" + std::string(s) + "'");
}

inline CorrectorMode parse_corrector_mode(std::string_view s) {
    if (s == "stepped") return CorrectorMode::stepped;
    if (s == "nonlocal") return CorrectorMode::nonlocal;
    throw ConfigError("unknown corrector mode '" + std::string(s) + "'");
}

inline const char* to_string(TimeScheme s) {
    return s == TimeScheme::implicit_euler ? "implicit-euler" : "crank-nicolson";
}

inline const char* to_string(CorrectorMode m) {
    return m == CorrectorMode::stepped ? "stepped" : "nonlocal";
}

/// Options shared by the coupled elliptic/ODE time loops.
struct SolverOptions {
    LinearMethod linear = LinearMethod::direct;
    double linear_tol = 1e-12;
    double picard_tol = 1e-10;
    int picard_max = 50;
    int output_stride = 1;
};

} // namespace pphom
