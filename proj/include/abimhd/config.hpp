#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"

namespace abimhd {

// Flat key = value configuration with [section] headers. Keys are addressed
// as "section.key"; keys before the first header have no prefix. The grammar
// is specified in docs/config.md.
class Config {
public:
    static Config parse(std::istream& in, const std::string& origin = "<config>")
    {
        Config c;
        c.origin_ = origin;
        std::string section, line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
            line = trim(line);
            if (line.empty()) continue;
            auto fail = [&](const std::string& what) {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + what);
            };
            if (line.front() == '[') {
                if (line.back() != ']') fail("unterminated section header");
                section = trim(line.substr(1, line.size() - 2));
                if (!valid_name(section)) fail("invalid section name '" + section + "'");
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos) fail("expected 'key = value'");
            std::string key = trim(line.substr(0, eq));
            std::string value = trim(line.substr(eq + 1));
            if (!valid_name(key)) fail("invalid key '" + key + "'");
            if (value.empty()) fail("empty value for '" + key + "'");
            std::string full = section.empty() ? key : section + "." + key;
            if (c.values_.count(full)) fail("duplicate key '" + full + "'");
            c.values_[full] = value;
            c.order_.push_back(full);
        }
        return c;
    }

    static Config load(const std::string& path)
    {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path);
        return parse(in, path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& value)
    {
        if (!values_.count(key)) order_.push_back(key);
        values_[key] = value;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const
    {
        auto it = values_.find(key);
        return record(key, it == values_.end() ? fallback : it->second);
    }

    std::string require_string(const std::string& key) const
    {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError(origin_ + ": missing required key '" + key + "'");
        return record(key, it->second);
    }

    double get_double(const std::string& key, double fallback) const
    {
        if (has(key)) return to_double(key, require_string(key));
        record(key, format(fallback));
        return fallback;
    }

    long long get_int(const std::string& key, long long fallback) const
    {
        if (!has(key)) {
            record(key, std::to_string(fallback));
            return fallback;
        }
        const std::string v = require_string(key);
        std::size_t used = 0;
        long long x = 0;
        try {
            x = std::stoll(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != v.size() || used == 0) throw ConfigError(origin_ + ": key '" + key + "' is not an integer: " + v);
        return x;
    }

    bool get_bool(const std::string& key, bool fallback) const
    {
        if (!has(key)) {
            record(key, fallback ? "true" : "false");
            return fallback;
        }
        std::string v = require_string(key);
        if (v == "true" || v == "yes" || v == "1") return true;
        if (v == "false" || v == "no" || v == "0") return false;
        throw ConfigError(origin_ + ": key '" + key + "' is not a boolean: " + v);
    }

    std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const
    {
        if (!has(key)) {
            std::string joined;
            for (std::size_t i = 0; i < fallback.size(); ++i) joined += (i ? "," : "") + format(fallback[i]);
            record(key, joined);
            return fallback;
        }
        std::vector<double> out;
        std::stringstream ss(require_string(key));
        for (std::string item; std::getline(ss, item, ',');) out.push_back(to_double(key, trim(item)));
        return out;
    }

    // Keys present in the file that no reader asked for.
    std::vector<std::string> unused() const
    {
        std::vector<std::string> out;
        for (const auto& k : order_) {
            if (!used_.count(k)) out.push_back(k);
        }
        return out;
    }

    void reject_unused() const
    {
        auto u = unused();
        if (u.empty()) return;
        std::string msg = origin_ + ": unknown key";
        msg += u.size() > 1 ? "s" : "";
        for (std::size_t i = 0; i < u.size(); ++i) msg += (i ? ", '" : " '") + u[i] + "'";
        throw ConfigError(msg);
    }

    // Every key that was read, with defaults filled in, as a loadable config.
    std::string echo() const
    {
        std::map<std::string, std::vector<std::pair<std::string, std::string>>> grouped;
        for (const auto& [k, v] : effective_) {
            auto dot = k.find('.');
            std::string sec = dot == std::string::npos ? "" : k.substr(0, dot);
            std::string key = dot == std::string::npos ? k : k.substr(dot + 1);
            grouped[sec].push_back({key, v});
        }
        std::ostringstream os;
        for (const auto& [sec, kv] : grouped) {
            if (!sec.empty()) os << "[" << sec << "]\n";
            for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
        }
        return os.str();
    }

    const std::string& origin() const { return origin_; }

    static std::string format(double x)
    {
        std::ostringstream os;
        os.precision(17);
        os << x;
        return os.str();
    }

private:
    const std::string& record(const std::string& key, const std::string& value) const
    {
        used_.insert(key);
        return effective_[key] = value;
    }

    static std::string trim(const std::string& s)
    {
        auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    static bool valid_name(const std::string& s)
    {
        if (s.empty()) return false;
        return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '_' || c == '-'; });
    }

    double to_double(const std::string& key, const std::string& v) const
    {
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != v.size() || !std::isfinite(x)) {
            throw ConfigError(origin_ + ": key '" + key + "' is not a finite number: " + v);
        }
        return x;
    }

    std::string origin_;
    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
    mutable std::set<std::string> used_;
    mutable std::map<std::string, std::string> effective_;
};

} // namespace abimhd
