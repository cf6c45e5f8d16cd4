#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qqc/errors.hpp"
#include "qqc/units.hpp"

namespace qqc {

// Minimal TOML reader covering what the run configs use: [table] headers,
// bare keys, strings, numbers, booleans, and flat arrays. Keys are exposed
// with their dotted path ("trap.drive_frequency"). Physical inputs are quoted
// value/unit strings ("6.0 amu") parsed on access.
class Config {
  public:
    struct Value {
        enum class Kind { String, Number, Boolean, Array } kind = Kind::String;
        std::string str;
        double num = 0.0;
        bool flag = false;
        std::vector<Value> items;
        int line = 0;
    };

    static Config parse_string(const std::string& text, const std::string& origin = "<string>") {
        Config c;
        c.origin_ = origin;
        c.text_ = text;
        std::istringstream in(text);
        std::string line;
        std::string table;
        int lineNo = 0;
        while (std::getline(in, line)) {
            ++lineNo;
            std::string s = strip_comment(line);
            s = trim(s);
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']')
                    throw ConfigError(origin + ":" + std::to_string(lineNo) +
                                      ": malformed table header");
                table = trim(s.substr(1, s.size() - 2));
                if (table.empty() || !valid_key_path(table))
                    throw ConfigError(origin + ":" + std::to_string(lineNo) +
                                      ": malformed table name");
                continue;
            }
            auto eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineNo) + ": expected key = value");
            std::string key = trim(s.substr(0, eq));
            std::string rhs = trim(s.substr(eq + 1));
            if (key.empty() || !valid_key_path(key))
                throw ConfigError(origin + ":" + std::to_string(lineNo) + ": malformed key");
            std::string path = table.empty() ? key : table + "." + key;
            if (c.values_.count(path))
                throw ConfigError(origin + ":" + std::to_string(lineNo) + ": duplicate key '" +
                                  path + "'");
            c.values_[path] = parse_value(rhs, origin, lineNo);
            c.values_[path].line = lineNo;
        }
        return c;
    }

    static Config parse_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::ostringstream os;
        os << in.rdbuf();
        return parse_string(os.str(), path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    const Value& at(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
        touched_.insert(key);
        return it->second;
    }

    double number(const std::string& key) const {
        const Value& v = at(key);
        if (v.kind != Value::Kind::Number)
            throw ConfigError("config key '" + key + "' must be a number");
        return v.num;
    }
    double number(const std::string& key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }
    long integer(const std::string& key) const {
        double d = number(key);
        long n = static_cast<long>(d);
        if (static_cast<double>(n) != d)
            throw ConfigError("config key '" + key + "' must be an integer");
        return n;
    }
    long integer(const std::string& key, long fallback) const {
        return has(key) ? integer(key) : fallback;
    }
    std::string str(const std::string& key) const {
        const Value& v = at(key);
        if (v.kind != Value::Kind::String)
            throw ConfigError("config key '" + key + "' must be a string");
        return v.str;
    }
    std::string str(const std::string& key, const std::string& fallback) const {
        return has(key) ? str(key) : fallback;
    }
    bool boolean(const std::string& key) const {
        const Value& v = at(key);
        if (v.kind != Value::Kind::Boolean)
            throw ConfigError("config key '" + key + "' must be a boolean");
        return v.flag;
    }
    bool boolean(const std::string& key, bool fallback) const {
        return has(key) ? boolean(key) : fallback;
    }

    // "6.0 amu" -> internal units for the stated dimension; bare numbers are
    // taken as atomic units directly
    double quantity(const std::string& key, Dimension dim) const {
        const Value& v = at(key);
        if (v.kind == Value::Kind::Number) return v.num;
        if (v.kind == Value::Kind::String) return to_internal(parse_quantity(v.str), dim);
        throw ConfigError("config key '" + key + "' must be a number or a \"value unit\" string");
    }
    double quantity(const std::string& key, Dimension dim, const std::string& fallback) const {
        if (!has(key)) return to_internal(parse_quantity(fallback), dim);
        return quantity(key, dim);
    }

    std::vector<double> number_array(const std::string& key) const {
        const Value& v = at(key);
        if (v.kind != Value::Kind::Array)
            throw ConfigError("config key '" + key + "' must be an array");
        std::vector<double> out;
        for (const auto& item : v.items) {
            if (item.kind != Value::Kind::Number)
                throw ConfigError("config key '" + key + "' must hold numbers");
            out.push_back(item.num);
        }
        return out;
    }

    std::vector<std::string> keys() const {
        std::vector<std::string> out;
        for (const auto& kv : values_) out.push_back(kv.first);
        return out;
    }

    // keys never read through an accessor; call after loading to reject typos
    std::vector<std::string> untouched() const {
        std::vector<std::string> out;
        for (const auto& kv : values_)
            if (!touched_.count(kv.first)) out.push_back(kv.first);
        return out;
    }
    void reject_unknown() const {
        auto extra = untouched();
        if (extra.empty()) return;
        std::ostringstream os;
        os << "unknown config key(s):";
        for (const auto& k : extra) os << " '" << k << "'";
        throw ConfigError(os.str());
    }

    const std::string& text() const { return text_; }
    const std::string& origin() const { return origin_; }

    // FNV-1a over the raw config text; stamped into every output file
    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ull;
        for (unsigned char c : text_) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

  private:
    static std::string trim(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        std::size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    static std::string strip_comment(const std::string& s) {
        bool inStr = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"') inStr = !inStr;
            if (s[i] == '#' && !inStr) return s.substr(0, i);
        }
        return s;
    }

    static bool valid_key_path(const std::string& s) {
        if (s.empty() || s.front() == '.' || s.back() == '.') return false;
        for (char c : s)
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
                return false;
        return s.find("..") == std::string::npos;
    }

    static Value parse_value(const std::string& rhs, const std::string& origin, int lineNo) {
        auto fail = [&](const std::string& what) {
            throw ConfigError(origin + ":" + std::to_string(lineNo) + ": " + what);
        };
        Value v;
        if (rhs.empty()) fail("empty value");
        if (rhs.front() == '"') {
            if (rhs.size() < 2 || rhs.back() != '"') fail("unterminated string");
            v.kind = Value::Kind::String;
            v.str = rhs.substr(1, rhs.size() - 2);
            if (v.str.find('"') != std::string::npos) fail("embedded quote in string");
            return v;
        }
        if (rhs.front() == '[') {
            if (rhs.back() != ']') fail("unterminated array");
            v.kind = Value::Kind::Array;
            std::string body = rhs.substr(1, rhs.size() - 2);
            std::size_t pos = 0;
            while (pos < body.size()) {
                std::size_t end = pos;
                bool inStr = false;
                while (end < body.size() && (inStr || body[end] != ',')) {
                    if (body[end] == '"') inStr = !inStr;
                    ++end;
                }
                std::string item = trim(body.substr(pos, end - pos));
                if (!item.empty()) v.items.push_back(parse_value(item, origin, lineNo));
                pos = end + 1;
            }
            return v;
        }
        if (rhs == "true" || rhs == "false") {
            v.kind = Value::Kind::Boolean;
            v.flag = (rhs == "true");
            return v;
        }
        try {
            std::size_t used = 0;
            v.num = std::stod(rhs, &used);
            if (used != rhs.size()) fail("trailing characters after number: '" + rhs + "'");
            v.kind = Value::Kind::Number;
            return v;
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            fail("cannot parse value '" + rhs + "'");
        }
        return v;  // unreachable
    }

    std::map<std::string, Value> values_;
    mutable std::set<std::string> touched_;
    std::string text_;
    std::string origin_;
};

}  // namespace qqc
