#pragma once

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pphom/error.hpp"

namespace pphom::toml {

/// A value of the supported subset: string, integer, float, boolean, or a
/// single-line array of those.
struct Value {
    enum class Type { string, integer, floating, boolean, array };

    Type type = Type::string;
    std::string str;
    long long integer = 0;
    double number = 0.0;
    bool boolean = false;
    std::vector<Value> items;
    int line = 0;

    bool is_number() const { return type == Type::integer || type == Type::floating; }
    double as_double() const { return type == Type::integer ? static_cast<double>(integer) : number; }
};

/// Keys of one [section] in file order, plus the header line.
struct Table {
    int line = 0;
    std::vector<std::string> order;
    std::map<std::string, Value> values;

    const Value* find(const std::string& key) const {
        auto it = values.find(key);
        return it == values.end() ? nullptr : &it->second;
    }
};

/// Sections keyed by their dotted name; keys before any header live in "".
struct Document {
    std::vector<std::string> order;
    std::map<std::string, Table> tables;

    const Table* find(const std::string& name) const {
        auto it = tables.find(name);
        return it == tables.end() ? nullptr : &it->second;
    }
};

inline const char* type_name(Value::Type t) {
    switch (t) {
    case Value::Type::string: return "string";
    case Value::Type::integer: return "integer";
    case Value::Type::floating: return "float";
    case Value::Type::boolean: return "boolean";
    case Value::Type::array: return "array";
    }
    return "?";
}

namespace detail {

class LineParser {
public:
    LineParser(const std::string& s, int line) : s_(s), line_(line) {}

    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }

    bool at_end_or_comment() {
        skip_ws();
        return pos_ >= s_.size() || s_[pos_] == '#';
    }

    char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

    std::string bare_key() {
        skip_ws();
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
                                     s_[pos_] == '-'))
            ++pos_;
        if (start == pos_) fail("expected a key");
        return s_.substr(start, pos_ - start);
    }

    void expect(char c) {
        skip_ws();
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    Value value() {
        skip_ws();
        Value v;
        v.line = line_;
        const char c = peek();
        if (c == '"') {
            v.type = Value::Type::string;
            v.str = quoted();
        } else if (c == '[') {
            ++pos_;
            v.type = Value::Type::array;
            skip_ws();
            if (peek() == ']') {
                ++pos_;
                return v;
            }
            while (true) {
                v.items.push_back(value());
                if (v.items.back().type == Value::Type::array) fail("nested arrays are not supported");
                skip_ws();
                if (peek() == ',') {
                    ++pos_;
                    skip_ws();
                    if (peek() == ']') {
                        ++pos_;
                        break;
                    }
                    continue;
                }
                if (peek() == ']') {
                    ++pos_;
                    break;
                }
                fail("expected ',' or ']' in array");
            }
        } else {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' && s_[pos_] != ' ' &&
                   s_[pos_] != '\t')
                ++pos_;
            const std::string tok = s_.substr(start, pos_ - start);
            if (tok.empty()) fail("expected a value");
            if (tok == "true" || tok == "false") {
                v.type = Value::Type::boolean;
                v.boolean = tok == "true";
            } else {
                scalar_number(tok, v);
            }
        }
        return v;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError(ConfigError::Kind::syntax,
                          {"line " + std::to_string(line_) + ": " + what + " (column " + std::to_string(pos_ + 1) + ")"});
    }

private:
    std::string quoted() {
        ++pos_;
        std::string out;
        while (pos_ < s_.size() && s_[pos_] != '"') {
            if (s_[pos_] == '\\') {
                ++pos_;
                if (pos_ >= s_.size()) break;
                switch (s_[pos_]) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default: fail("unsupported escape sequence");
                }
                ++pos_;
                continue;
            }
            out += s_[pos_++];
        }
        if (pos_ >= s_.size()) fail("unterminated string");
        ++pos_;
        return out;
    }

    void scalar_number(std::string tok, Value& v) const {
        std::string clean;
        for (char ch : tok)
            if (ch != '_') clean += ch;
        const bool floating = clean.find_first_of(".eE") != std::string::npos || clean == "inf" ||
                              clean == "+inf" || clean == "-inf" || clean == "nan";
        errno = 0;
        char* end = nullptr;
        if (floating) {
            v.type = Value::Type::floating;
            v.number = std::strtod(clean.c_str(), &end);
        } else {
            v.type = Value::Type::integer;
            v.integer = std::strtoll(clean.c_str(), &end, 10);
        }
        if (clean.empty() || end != clean.c_str() + clean.size() || errno == ERANGE)
            fail("invalid value '" + tok + "'");
    }

    const std::string& s_;
    int line_;
    std::size_t pos_ = 0;
};

} // namespace detail

/// Parses the subset: comments, [dotted.section] headers, `key = value`
/// lines, strings, integers, floats, booleans, single-line arrays.
/// Duplicate keys and duplicate sections are syntax errors.
inline Document parse(std::istream& in) {
    Document doc;
    doc.order.push_back("");
    doc.tables[""];
    std::string current;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        detail::LineParser lp(raw, line);
        if (lp.at_end_or_comment()) continue;
        if (lp.peek() == '[') {
            lp.expect('[');
            std::string name = lp.bare_key();
            while (true) {
                lp.skip_ws();
                if (lp.peek() != '.') break;
                lp.expect('.');
                name += "." + lp.bare_key();
            }
            lp.expect(']');
            if (!lp.at_end_or_comment()) lp.fail("unexpected text after section header");
            if (doc.tables.count(name) && name != "") lp.fail("duplicate section [" + name + "]");
            doc.order.push_back(name);
            doc.tables[name].line = line;
            current = name;
            continue;
        }
        const std::string key = lp.bare_key();
        lp.expect('=');
        Value v = lp.value();
        if (!lp.at_end_or_comment()) lp.fail("unexpected text after value");
        Table& t = doc.tables[current];
        if (t.values.count(key)) lp.fail("duplicate key '" + key + "'");
        t.order.push_back(key);
        t.values.emplace(key, std::move(v));
    }
    return doc;
}

inline Document parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
}

inline Document parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(ConfigError::Kind::missing_file, {"cannot open config file '" + path + "'"});
    return parse(in);
}

} // namespace pphom::toml
