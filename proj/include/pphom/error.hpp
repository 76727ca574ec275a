#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pphom {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Configuration problem. Carries every violation found, not only the first.
class ConfigError : public Error {
public:
    enum class Kind { missing_file, syntax, semantic };

    ConfigError(Kind kind, std::vector<std::string> violations)
        : Error(join(violations)), kind_(kind), violations_(std::move(violations)) {}

    explicit ConfigError(std::string message)
        : ConfigError(Kind::semantic, std::vector<std::string>{std::move(message)}) {}

    Kind kind() const noexcept { return kind_; }
    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out;
        for (const auto& s : v) {
            if (!out.empty()) out += "; ";
            out += s;
        }
        return out;
    }

    Kind kind_;
    std::vector<std::string> violations_;
};

/// Argument outside the mathematical domain of an operation (eps <= 0, dt <= 0, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Matrix assembly rejected its input (e.g. non-positive diffusion at a face).
class AssemblyError : public Error {
public:
    using Error::Error;
};

/// Linear or fixed-point solver failed; `history` holds the residuals seen.
class SolverError : public Error {
public:
    SolverError(const std::string& what, std::vector<double> history)
        : Error(what), history_(std::move(history)) {}

    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

/// Singular nodal time-step matrix (I + dt L).
class StepError : public Error {
public:
    using Error::Error;
};

} // namespace pphom
