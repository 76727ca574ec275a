#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <string_view>
#include <vector>

#include "pphom/cell_solver.hpp"
#include "pphom/coefficients.hpp"
#include "pphom/config.hpp"
#include "pphom/csv.hpp"
#include "pphom/error.hpp"
#include "pphom/macro_solver.hpp"
#include "pphom/micro_solver.hpp"
#include "pphom/verification.hpp"

namespace pphom {

enum class Command { check, cell, micro, macro, converge, residual };

/// Process exit codes.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int certificate_failure = 1;
inline constexpr int solver_error = 2;
inline constexpr int usage = 64;
inline constexpr int config_syntax = 65;
inline constexpr int config_missing = 66;
inline constexpr int config_semantic = 78;
} // namespace exit_code

inline Command parse_command(std::string_view s) {
    if (s == "check") return Command::check;
    if (s == "cell") return Command::cell;
    if (s == "micro") return Command::micro;
    if (s == "macro") return Command::macro;
    if (s == "converge") return Command::converge;
    if (s == "residual") return Command::residual;
    throw ConfigError("unknown command '" + std::string(s) + "'");
}

inline int exit_code_for(const ConfigError& e) {
    switch (e.kind()) {
    case ConfigError::Kind::missing_file: return exit_code::config_missing;
    case ConfigError::Kind::syntax: return exit_code::config_syntax;
    case ConfigError::Kind::semantic: return exit_code::config_semantic;
    }
    return exit_code::config_semantic;
}

// ------------------------------------------------------------------ tables

inline std::string eps_label(double eps) { return std::to_string(std::llround(1.0 / eps)); }

inline CsvTable assumption_table(const AssumptionReport& r) {
    CsvTable t{{"quantity", "value"}, {}};
    t.add_row({"a2_ok", r.a2_ok ? "true" : "false"});
    t.add_row({"a3_margin", format_real(r.a3_margin)});
    t.add_row({"g_min_det", format_real(r.g_min_det)});
    t.add_row({"sup_inv_m", format_real(r.sup_inv_m)});
    t.add_row({"sup_inv_e", format_real(r.sup_inv_e)});
    t.add_row({"max_D_sq", format_real(r.max_D_sq)});
    t.add_row({"samples_used", std::to_string(r.samples_used)});
    t.add_row({"grid_nt", std::to_string(r.grid.nt)});
    t.add_row({"grid_nx", std::to_string(r.grid.nx)});
    t.add_row({"grid_ny", std::to_string(r.grid.ny)});
    t.add_row({"passed", r.passed() ? "true" : "false"});
    return t;
}

inline CsvTable effective_table(const CellTable& tab, int N) {
    const int d = tab.macro.d;
    CsvTable t;
    t.header = {"t", "x1", "x2"};
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) t.header.push_back("E_star_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
    for (int i = 0; i < d; ++i)
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < N; ++b)
                t.header.push_back("D_star_" + std::to_string(i + 1) + "_" + std::to_string(a + 1) + "_" +
                                   std::to_string(b + 1));
    for (std::size_t s = 0; s < tab.slices.size(); ++s)
        for (std::size_t p = 0; p < tab.macro.size(); ++p) {
            const Point x = tab.macro.node(p);
            const CellEntry& e = tab.at(s, p);
            std::vector<std::string> row{format_real(tab.times[s]), format_real(x[0]), format_real(x[1])};
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) row.push_back(format_real(e.E_star(i, j)));
            for (double v : e.D_star) row.push_back(format_real(v));
            t.add_row(std::move(row));
        }
    return t;
}

inline std::vector<std::string> field_columns(const char* prefix, int N) {
    std::vector<std::string> c;
    for (int a = 0; a < N; ++a) c.push_back(std::string(prefix) + "_" + std::to_string(a + 1));
    return c;
}

inline CsvTable micro_table(const MicroTrajectory& tr) {
    const int N = tr.states.empty() ? 0 : static_cast<int>(tr.states.front().U.cols());
    CsvTable t;
    t.header = {"eps", "t", "x1", "x2"};
    for (auto& c : field_columns("U", N)) t.header.push_back(c);
    for (auto& c : field_columns("V", N)) t.header.push_back(c);
    for (const auto& s : tr.states)
        for (std::size_t p = 0; p < tr.grid.size(); ++p) {
            const Point x = tr.grid.node(p);
            std::vector<std::string> row{format_real(tr.eps), format_real(s.t), format_real(x[0]), format_real(x[1])};
            for (int a = 0; a < N; ++a) row.push_back(format_real(s.U(p, a)));
            for (int a = 0; a < N; ++a) row.push_back(format_real(s.V(p, a)));
            t.add_row(std::move(row));
        }
    return t;
}

inline CsvTable macro_table(const MacroTrajectory& tr) {
    const int N = tr.states.empty() ? 0 : static_cast<int>(tr.states.front().u.cols());
    CsvTable t;
    t.header = {"t", "x1", "x2"};
    for (auto& c : field_columns("u", N)) t.header.push_back(c);
    for (auto& c : field_columns("v", N)) t.header.push_back(c);
    for (auto& c : field_columns("memory", N)) t.header.push_back(c);
    for (const auto& s : tr.states)
        for (std::size_t p = 0; p < tr.grid.size(); ++p) {
            const Point x = tr.grid.node(p);
            std::vector<std::string> row{format_real(s.t), format_real(x[0]), format_real(x[1])};
            for (int a = 0; a < N; ++a) row.push_back(format_real(s.u(p, a)));
            for (int a = 0; a < N; ++a) row.push_back(format_real(s.v(p, a)));
            for (int a = 0; a < N; ++a) row.push_back(format_real(s.memory(p, a)));
            t.add_row(std::move(row));
        }
    return t;
}

inline void append_energy_rows(CsvTable& t, double eps, const EnergyReport& r) {
    if (t.header.empty()) t.header = {"eps", "t", "left", "right", "pass"};
    for (std::size_t i = 0; i < r.times.size(); ++i)
        t.add_row({format_real(eps), format_real(r.times[i]), format_real(r.left[i]), format_real(r.right[i]),
                   r.pass[i] ? "true" : "false"});
}

inline CsvTable energy_constants_table(const EnergyConstants& c) {
    CsvTable t{{"constant", "value"}, {}};
    t.add_row({"valid", c.valid ? "true" : "false"});
    t.add_row({"kappa", format_real(c.kappa)});
    t.add_row({"tau", format_real(c.tau)});
    t.add_row({"m_tilde", format_real(c.m_tilde)});
    t.add_row({"e_tilde", format_real(c.e_tilde)});
    t.add_row({"H_tilde", format_real(c.H_tilde)});
    for (std::size_t b = 0; b < c.K_tilde.size(); ++b) t.add_row({"K_tilde_" + std::to_string(b + 1), format_real(c.K_tilde[b])});
    const std::size_t N = c.K_tilde.size();
    for (std::size_t k = 0; k < c.J_tilde.size(); ++k)
        t.add_row({"J_tilde_" + std::to_string(k / N + 1) + "_" + std::to_string(k % N + 1), format_real(c.J_tilde[k])});
    return t;
}

inline CsvTable convergence_csv(const ConvergenceTable& tab) {
    CsvTable t{{"eps", "micro_n", "macro_n", "dt", "err_u", "err_v", "bound"}, {}};
    for (const auto& r : tab.rows)
        t.add_row({format_real(r.eps), std::to_string(r.micro_n), std::to_string(r.macro_n), format_real(r.dt),
                   format_real(r.err_u), format_real(r.err_v), format_real(r.bound)});
    return t;
}

// ------------------------------------------------------------------ runner

struct HarnessOptions {
    std::string out_dir; ///< overrides the config when non-empty
    bool quiet = false;
};

namespace detail {

class Runner {
public:
    Runner(const RunConfig& cfg, const HarnessOptions& opt, std::ostream& log)
        : cfg_(cfg), set_(build_coefficients(cfg)), log_(log), quiet_(opt.quiet),
          out_(opt.out_dir.empty() ? cfg.out_dir : opt.out_dir) {}

    int run(Command c) {
        switch (c) {
        case Command::check: return check();
        case Command::cell: return cell();
        case Command::micro: return micro();
        case Command::macro: return macro();
        case Command::converge: return converge();
        case Command::residual: return residual();
        }
        return exit_code::usage;
    }

private:
    void say(const std::string& s) {
        if (!quiet_) log_ << s << '\n';
    }

    std::string path(const std::string& name) {
        std::filesystem::create_directories(out_);
        return (std::filesystem::path(out_) / name).string();
    }

    void write(const CsvTable& t, const std::string& name) {
        const std::string p = path(name);
        write_csv(t, p);
        say("wrote " + p);
    }

    AssumptionReport assumptions() { return validate_assumptions(set_, cfg_.sampling); }

    bool require_assumptions() {
        const AssumptionReport r = assumptions();
        if (r.passed()) return true;
        log_ << "structural assumptions fail (a2_ok=" << (r.a2_ok ? "true" : "false")
             << ", a3_margin=" << format_real(r.a3_margin) << ", g_min_det=" << format_real(r.g_min_det)
             << "); refusing to run solvers\n";
        return false;
    }

    MacroGrid macro_grid() const { return MacroGrid(cfg_.d, cfg_.macro_n); }
    MacroGrid micro_grid() const { return MacroGrid(cfg_.d, cfg_.micro_n); }
    CellGrid cell_grid() const { return CellGrid(cfg_.d, cfg_.cell_n); }

    std::vector<double> step_times() const {
        std::vector<double> t;
        const int steps = step_count(cfg_.T, cfg_.dt);
        for (int n = 0; n <= steps; ++n) t.push_back(n * cfg_.dt);
        return t;
    }

    CellTable table(bool with_correctors) {
        const MacroGrid g = macro_grid();
        const CellGrid c = cell_grid();
        std::vector<bool> active;
        if (with_correctors) active = memory_active_nodes(set_, g, c);
        return cell_sweep(set_, g, step_times(), c, active);
    }

    int check() {
        const AssumptionReport r = assumptions();
        write(assumption_table(r), "check.csv");
        char buf[256];
        std::snprintf(buf, sizeof buf, "a2_ok=%s a3_margin=%.17g g_min_det=%.17g samples=%lld", r.a2_ok ? "true" : "false",
                      r.a3_margin, r.g_min_det, r.samples_used);
        log_ << buf << '\n';
        log_ << (r.passed() ? "check: PASS" : "check: FAIL") << '\n';
        return r.passed() ? exit_code::ok : exit_code::certificate_failure;
    }

    int cell() {
        const CellTable t = table(false);
        write(effective_table(t, cfg_.N), "effective.csv");
        return exit_code::ok;
    }

    int micro() {
        if (!require_assumptions()) return exit_code::certificate_failure;
        SolverOptions opt = cfg_.solver;
        CsvTable energy;
        bool ok = true;
        SamplingGrid sg = cfg_.sampling;
        for (double eps : cfg_.eps) {
            const MicroTrajectory tr = run_micro(set_, eps, micro_grid(), cfg_.dt, cfg_.T, cfg_.scheme, opt);
            write(micro_table(tr), "micro_k" + eps_label(eps) + ".csv");
            const EnergyReport er = energy_certificate(set_, tr, sg);
            append_energy_rows(energy, eps, er);
            if (energy_constants_.empty()) energy_constants_ = energy_constants_table(er.constants).rows;
            ok = ok && er.all_pass();
            say("micro eps=1/" + eps_label(eps) + ": energy certificate " + (er.all_pass() ? "PASS" : "FAIL"));
        }
        if (energy.header.empty()) energy.header = {"eps", "t", "left", "right", "pass"};
        write(energy, "energy.csv");
        CsvTable consts{{"constant", "value"}, energy_constants_};
        write(consts, "energy_constants.csv");
        return ok ? exit_code::ok : exit_code::certificate_failure;
    }

    int macro() {
        if (!require_assumptions()) return exit_code::certificate_failure;
        const CellTable t = table(true);
        const MacroTrajectory tr = run_macro(set_, t, cfg_.dt, cfg_.T, cfg_.corrector, cfg_.scheme, cfg_.solver);
        write(macro_table(tr), "macro.csv");
        return exit_code::ok;
    }

    int converge() {
        ConvergenceSetup s;
        s.eps = cfg_.eps;
        s.micro_n = cfg_.micro_n;
        s.macro_n = cfg_.macro_n;
        s.cell_n = cfg_.cell_n;
        s.dt = cfg_.dt;
        s.T = cfg_.T;
        s.min_nodes_per_period = cfg_.min_nodes_per_period;
        s.mode = cfg_.corrector;
        s.scheme = cfg_.scheme;
        s.options = cfg_.solver;
        require_resolved(s);
        if (!require_assumptions()) return exit_code::certificate_failure;
        std::vector<MicroTrajectory> runs;
        const ConvergenceTable tab = micro_macro_convergence(set_, s, &runs);
        write(convergence_csv(tab), "convergence.csv");
        const UniformBoundTable ub = uniform_bound_check(runs);
        CsvTable summary{{"quantity", "value"}, {}};
        summary.add_row({"rate_u", format_real(tab.rate_u)});
        summary.add_row({"rate_v", format_real(tab.rate_v)});
        summary.add_row({"bound_ratio", format_real(ub.ratio)});
        summary.add_row({"bound_ratio_limit", format_real(cfg_.bound_ratio)});
        summary.add_row({"monotone", tab.strictly_decreasing_u() ? "true" : "false"});
        write(summary, "convergence_summary.csv");
        say("convergence rate (U) " + format_real(tab.rate_u) + ", bound ratio " + format_real(ub.ratio));
        const bool ok = tab.strictly_decreasing_u() && ub.ratio <= cfg_.bound_ratio;
        if (!ok) log_ << "converge: FAIL (error not strictly decreasing or bound ratio above limit)\n";
        return ok ? exit_code::ok : exit_code::certificate_failure;
    }

    int residual() {
        if (!require_assumptions()) return exit_code::certificate_failure;
        CsvTable t{{"eps", "t", "residual"}, {}};
        for (double eps : cfg_.eps) {
            const MicroTrajectory tr = run_micro(set_, eps, micro_grid(), cfg_.dt, cfg_.T, cfg_.scheme, cfg_.solver);
            const std::vector<double> r = q_residual(set_, tr);
            for (std::size_t n = 0; n < r.size(); ++n)
                t.add_row({format_real(eps), format_real(tr.states[n].t), format_real(r[n])});
        }
        write(t, "residual.csv");
        return exit_code::ok;
    }

    const RunConfig& cfg_;
    CoefficientSet set_;
    std::ostream& log_;
    bool quiet_;
    std::string out_;
    std::vector<std::vector<std::string>> energy_constants_;
};

} // namespace detail

/// Runs one command and maps failures to exit codes: certificate failures
/// give 1, solver errors 2, inputs a command cannot accept 78.
inline int run_command(Command cmd, const RunConfig& cfg, const HarnessOptions& opt = {},
                       std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    try {
        detail::Runner r(cfg, opt, log);
        return r.run(cmd);
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const DomainError& e) {
        err << "refused: " << e.what() << '\n';
        return exit_code::config_semantic;
    } catch (const SolverError& e) {
        err << "solver error: " << e.what();
        if (!e.history().empty()) {
            err << " [history:";
            for (double h : e.history()) err << ' ' << format_real(h);
            err << ']';
        }
        err << '\n';
        return exit_code::solver_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::solver_error;
    }
}

} // namespace pphom
