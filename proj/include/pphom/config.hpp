#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "pphom/coefficients.hpp"
#include "pphom/error.hpp"
#include "pphom/toml_lite.hpp"
#include "pphom/types.hpp"

namespace pphom {

/// One `[coef.<name>.<i>...]` section.
struct CoefficientDecl {
    Coef coef = Coef::M;
    std::vector<int> index;
    FamilySpec spec;
    int line = 0;
};

/// Fully validated run configuration. Defaults are listed in docs/config.md.
struct RunConfig {
    int d = 1;
    int N = 1;

    int macro_n = 65;
    int micro_n = 257;
    int cell_n = 32;

    double dt = 0.05;
    double T = 0.5;
    TimeScheme scheme = TimeScheme::implicit_euler;
    int output_stride = 1;

    std::vector<double> eps{0.25};
    double eps0 = 0.5;
    CorrectorMode corrector = CorrectorMode::stepped;
    bool separable = false;

    SolverOptions solver;
    SamplingGrid sampling;

    double bound_ratio = 1.5;
    int min_nodes_per_period = 8;

    std::string out_dir = "pphom_out";
    std::vector<CoefficientDecl> coefficients;
};

namespace detail {

class ConfigReader {
public:
    explicit ConfigReader(const toml::Document& doc) : doc_(doc) {}

    std::vector<std::string> violations;

    const toml::Table* table(const std::string& name) {
        seen_tables_.insert(name);
        return doc_.find(name);
    }

    const toml::Value* get(const std::string& section, const std::string& key) {
        const toml::Table* t = table(section);
        seen_keys_.insert(section + "\x1f" + key);
        return t ? t->find(key) : nullptr;
    }

    static std::string where(const std::string& section, const std::string& key, const toml::Value* v) {
        std::string s = section.empty() ? key : section + "." + key;
        if (v) s += " (line " + std::to_string(v->line) + ")";
        return s;
    }

    void integer(const std::string& section, const std::string& key, int& out, long long lo) {
        const toml::Value* v = get(section, key);
        if (!v) return;
        if (v->type != toml::Value::Type::integer) {
            violations.push_back(where(section, key, v) + ": expected an integer, got " + toml::type_name(v->type));
            return;
        }
        if (v->integer < lo) {
            violations.push_back(where(section, key, v) + ": must be >= " + std::to_string(lo));
            return;
        }
        out = static_cast<int>(v->integer);
    }

    /// Numeric field that must be strictly positive and finite.
    void positive(const std::string& section, const std::string& key, double& out) {
        const toml::Value* v = get(section, key);
        if (!v) return;
        if (!v->is_number()) {
            violations.push_back(where(section, key, v) + ": expected a number, got " + toml::type_name(v->type));
            return;
        }
        const double x = v->as_double();
        if (!(x > 0.0) || !std::isfinite(x)) {
            violations.push_back(where(section, key, v) + ": must be positive (got " + std::to_string(x) + ")");
            return;
        }
        out = x;
    }

    void number(const std::string& section, const std::string& key, double& out) {
        const toml::Value* v = get(section, key);
        if (!v) return;
        if (!v->is_number() || !std::isfinite(v->as_double())) {
            violations.push_back(where(section, key, v) + ": expected a finite number");
            return;
        }
        out = v->as_double();
    }

    void boolean(const std::string& section, const std::string& key, bool& out) {
        const toml::Value* v = get(section, key);
        if (!v) return;
        if (v->type != toml::Value::Type::boolean) {
            violations.push_back(where(section, key, v) + ": expected true or false");
            return;
        }
        out = v->boolean;
    }

    template <class T, class Parse>
    void choice(const std::string& section, const std::string& key, T& out, Parse parse) {
        const toml::Value* v = get(section, key);
        if (!v) return;
        if (v->type != toml::Value::Type::string) {
            violations.push_back(where(section, key, v) + ": expected a string");
            return;
        }
        try {
            out = parse(v->str);
        } catch (const ConfigError& e) {
            violations.push_back(where(section, key, v) + ": " + e.what());
        }
    }

    void string(const std::string& section, const std::string& key, std::string& out) {
        const toml::Value* v = get(section, key);
        if (!v) return;
        if (v->type != toml::Value::Type::string || v->str.empty()) {
            violations.push_back(where(section, key, v) + ": expected a non-empty string");
            return;
        }
        out = v->str;
    }

    /// Numeric array of length 1..2 (padded by repeating the last entry).
    template <class T>
    void pair_array(const std::string& section, const std::string& key, std::array<T, 2>& out) {
        const toml::Value* v = get(section, key);
        if (!v) return;
        if (v->type != toml::Value::Type::array || v->items.empty() || v->items.size() > 2) {
            violations.push_back(where(section, key, v) + ": expected an array of 1 or 2 numbers");
            return;
        }
        std::array<T, 2> tmp{};
        for (std::size_t i = 0; i < v->items.size(); ++i) {
            const auto& it = v->items[i];
            if constexpr (std::is_integral_v<T>) {
                if (it.type != toml::Value::Type::integer) {
                    violations.push_back(where(section, key, v) + ": expected integers");
                    return;
                }
                tmp[i] = static_cast<T>(it.integer);
            } else {
                if (!it.is_number()) {
                    violations.push_back(where(section, key, v) + ": expected numbers");
                    return;
                }
                tmp[i] = it.as_double();
            }
        }
        if (v->items.size() == 1) tmp[1] = tmp[0];
        out = tmp;
    }

    void report_unknown() {
        for (const auto& name : doc_.order) {
            const toml::Table& t = doc_.tables.at(name);
            if (name.empty()) {
                for (const auto& key : t.order) violations.push_back("unknown top-level key " + where("", key, t.find(key)));
                continue;
            }
            if (!seen_tables_.count(name)) {
                violations.push_back("unknown section [" + name + "] (line " + std::to_string(t.line) + ")");
                continue;
            }
            for (const auto& key : t.order)
                if (!seen_keys_.count(name + "\x1f" + key))
                    violations.push_back("unknown key " + where(name, key, t.find(key)));
        }
    }

    const toml::Document& doc() const { return doc_; }

private:
    const toml::Document& doc_;
    std::set<std::string> seen_tables_;
    std::set<std::string> seen_keys_;
};

inline std::vector<std::string> split_dots(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == '.') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline bool family_depends_on_y(const FamilySpec& s, int d) {
    if (s.family == "constant") return false;
    if (s.family == "product") {
        for (int m = 0; m < d; ++m)
            if (s.pb[m] != 0.0) return true;
        return false;
    }
    return s.b != 0.0;
}

} // namespace detail

/// Validates a parsed document; throws ConfigError(semantic) listing every violation.
inline RunConfig config_from_document(const toml::Document& doc) {
    detail::ConfigReader r(doc);
    RunConfig c;

    r.integer("problem", "d", c.d, 1);
    r.integer("problem", "N", c.N, 1);
    if (c.d > 2) r.violations.push_back("problem.d: must be 1 or 2");
    if (c.N > 8) r.violations.push_back("problem.N: at most 8 components are supported");

    r.integer("grid", "macro_n", c.macro_n, 3);
    r.integer("grid", "micro_n", c.micro_n, 3);
    r.integer("grid", "cell_n", c.cell_n, 4);
    if ((c.micro_n - 1) % (c.macro_n - 1) != 0)
        r.violations.push_back("grid.micro_n: micro_n - 1 must be a multiple of macro_n - 1 (got " +
                               std::to_string(c.micro_n) + ", " + std::to_string(c.macro_n) + ")");

    r.positive("time", "dt", c.dt);
    r.positive("time", "T", c.T);
    r.choice("time", "scheme", c.scheme, [](const std::string& s) { return parse_scheme(s); });
    r.integer("time", "output_stride", c.output_stride, 1);
    {
        const double q = c.T / c.dt;
        const long long steps = std::llround(q);
        if (steps < 1 || std::abs(q - static_cast<double>(steps)) > 1e-9 * std::max(1.0, q))
            r.violations.push_back("time.T: must be a positive integer multiple of time.dt");
        else if (steps % c.output_stride != 0)
            r.violations.push_back("time.output_stride: must divide the number of steps (" + std::to_string(steps) +
                                   ")");
    }

    r.positive("homogenization", "eps0", c.eps0);
    if (c.eps0 > 1.0) r.violations.push_back("homogenization.eps0: must be <= 1");
    if (const toml::Value* v = r.get("homogenization", "eps")) {
        const std::string at = detail::ConfigReader::where("homogenization", "eps", v);
        std::vector<toml::Value> items = v->type == toml::Value::Type::array ? v->items : std::vector<toml::Value>{*v};
        if (items.empty()) r.violations.push_back(at + ": list is empty");
        c.eps.clear();
        for (const auto& it : items) {
            if (!it.is_number()) {
                r.violations.push_back(at + ": entries must be numbers");
                continue;
            }
            const double e = it.as_double();
            const double k = 1.0 / e;
            const long long kr = std::llround(k);
            if (!(e > 0.0) || !std::isfinite(k) || std::abs(k - static_cast<double>(kr)) > 1e-9 * std::max(1.0, k) ||
                kr < 2) {
                r.violations.push_back(at + ": eps = " + std::to_string(e) + " is not of the form 1/k with integer k >= 2");
                continue;
            }
            const double exact = 1.0 / static_cast<double>(kr);
            if (exact > c.eps0 * (1.0 + 1e-12)) {
                r.violations.push_back(at + ": eps = " + std::to_string(e) + " exceeds eps0 = " + std::to_string(c.eps0));
                continue;
            }
            c.eps.push_back(exact);
        }
    }
    r.choice("homogenization", "corrector", c.corrector, [](const std::string& s) { return parse_corrector_mode(s); });
    r.boolean("homogenization", "separable", c.separable);

    r.choice("solver", "linear", c.solver.linear, [](const std::string& s) { return parse_linear_method(s); });
    r.positive("solver", "linear_tol", c.solver.linear_tol);
    r.positive("solver", "picard_tol", c.solver.picard_tol);
    r.integer("solver", "picard_max", c.solver.picard_max, 1);
    c.solver.output_stride = c.output_stride;

    r.integer("sampling", "nt", c.sampling.nt, 1);
    r.integer("sampling", "nx", c.sampling.nx, 2);
    r.integer("sampling", "ny", c.sampling.ny, 1);
    c.sampling.T = c.T;

    r.positive("verification", "bound_ratio", c.bound_ratio);
    r.integer("verification", "min_nodes_per_period", c.min_nodes_per_period, 1);

    r.string("output", "dir", c.out_dir);

    // Coefficient sections.
    CoefficientSet shape_probe(std::max(1, std::min(c.d, 2)), std::max(1, std::min(c.N, 8)));
    std::set<std::pair<int, std::vector<int>>> declared;
    for (const auto& name : doc.order) {
        if (name.rfind("coef", 0) != 0) continue;
        const auto parts = detail::split_dots(name);
        if (parts[0] != "coef") continue;
        const toml::Table* t = r.table(name);
        const std::string at = "[" + name + "] (line " + std::to_string(t->line) + ")";
        if (parts.size() < 2) {
            r.violations.push_back(at + ": expected [coef.<name>.<index>...]");
            continue;
        }
        CoefficientDecl decl;
        decl.line = t->line;
        try {
            decl.coef = parse_coef(parts[1]);
        } catch (const ConfigError&) {
            r.violations.push_back(at + ": unknown coefficient '" + parts[1] + "'");
            for (const auto& key : t->order) r.get(name, key);
            continue;
        }
        const auto shape = shape_probe.shape(decl.coef);
        bool ok = parts.size() - 2 == shape.size();
        for (std::size_t i = 2; ok && i < parts.size(); ++i) {
            const std::string& p = parts[i];
            if (p.empty() || p.find_first_not_of("0123456789") != std::string::npos) {
                ok = false;
                break;
            }
            const int v = std::stoi(p);
            if (v >= shape[i - 2]) ok = false;
            decl.index.push_back(v);
        }
        if (!ok) {
            std::string dims;
            for (int s : shape) dims += (dims.empty() ? "" : " x ") + std::to_string(s);
            r.violations.push_back(at + ": coefficient " + std::string(coef_name(decl.coef)) + " needs " +
                                   std::to_string(shape.size()) + " indices within " + dims);
            for (const auto& key : t->order) r.get(name, key);
            continue;
        }
        FamilySpec& s = decl.spec;
        s.family = t->find("family") ? "" : "constant";
        if (t->find("family")) {
            r.string(name, "family", s.family);
            if (!is_known_family(s.family)) {
                r.violations.push_back(detail::ConfigReader::where(name, "family", t->find("family")) +
                                       ": unknown family '" + s.family + "'");
                for (const auto& key : t->order) r.get(name, key);
                continue;
            }
        }
        r.number(name, "value", s.value);
        r.number(name, "a", s.a);
        r.number(name, "b", s.b);
        r.number(name, "phase", s.phase);
        r.pair_array(name, "k", s.k);
        r.pair_array(name, "pa", s.pa);
        r.pair_array(name, "pb", s.pb);
        r.pair_array(name, "pphase", s.pphase);
        r.pair_array(name, "pk", s.pk);
        r.number(name, "x0", s.x0);
        r.number(name, "x1", s.x1);
        r.number(name, "t1", s.t1);
        r.integer(name, "xq", s.xq, 1);
        if (s.family == "constant" && !t->find("value") && t->find("family"))
            r.violations.push_back(at + ": family 'constant' needs 'value'");
        if (!has_periodic_argument(decl.coef) && detail::family_depends_on_y(s, c.d))
            r.violations.push_back(at + ": " + std::string(coef_name(decl.coef)) + " cannot depend on y");
        if (!declared.insert({static_cast<int>(decl.coef), decl.index}).second)
            r.violations.push_back(at + ": entry declared twice");
        c.coefficients.push_back(decl);
    }

    r.report_unknown();
    if (!r.violations.empty()) throw ConfigError(ConfigError::Kind::semantic, r.violations);
    return c;
}

inline RunConfig parse_config(const std::string& path) { return config_from_document(toml::parse_file(path)); }

inline RunConfig parse_config_string(const std::string& text) {
    return config_from_document(toml::parse_string(text));
}

/// Builds the coefficient set declared by a configuration.
inline CoefficientSet build_coefficients(const RunConfig& cfg) {
    CoefficientSet set(cfg.d, cfg.N);
    set.request_separable = cfg.separable;
    for (const auto& decl : cfg.coefficients) {
        const auto shape = set.shape(decl.coef);
        std::size_t flat = 0;
        for (std::size_t i = 0; i < shape.size(); ++i) flat = flat * shape[i] + decl.index[i];
        set.field(decl.coef, flat) = make_field(decl.spec, cfg.d);
    }
    return set;
}

} // namespace pphom
