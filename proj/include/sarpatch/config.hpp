#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "sarpatch/error.hpp"
#include "sarpatch/rng.hpp"

namespace sarpatch {

/// Sectioned key/value configuration (INI syntax). Relative paths resolve
/// against the directory holding the config file.
class Config {
public:
    Config() = default;

    static Config from_string(const std::string& text, std::filesystem::path base_dir = ".") {
        Config c;
        c.text_ = text;
        c.base_dir_ = std::move(base_dir);
        std::istringstream in(strip_comments(text));
        try {
            boost::property_tree::ini_parser::read_ini(in, c.tree_);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw Error(Errc::config_error, e.what());
        }
        return c;
    }

    static Config load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(Errc::config_error, "cannot open config " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        return from_string(ss.str(), std::filesystem::absolute(path).parent_path());
    }

    template <typename T>
    T get(const std::string& key, const T& fallback) const {
        const auto node = tree_.get_child_optional(key);
        if (!node) return fallback;
        const auto v = node->template get_value_optional<T>();
        if (!v) throw Error(Errc::config_error, "bad value for '" + key + "': '" + node->data() + "'");
        return *v;
    }

    template <typename T>
    T require(const std::string& key) const {
        auto v = tree_.get_optional<std::string>(key);
        if (!v || v->empty()) throw Error(Errc::config_error, "missing required key '" + key + "'");
        return get<T>(key, T{});
    }

    bool has(const std::string& key) const {
        auto v = tree_.get_optional<std::string>(key);
        return v && !v->empty();
    }

    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto v = get<std::string>(key, "");
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw Error(Errc::config_error, "'" + key + "' must be true or false");
    }

    std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const {
        if (!has(key)) return fallback;
        std::vector<double> out;
        std::stringstream ss(get<std::string>(key, ""));
        for (std::string item; std::getline(ss, item, ',');) {
            try {
                out.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw Error(Errc::config_error, "'" + key + "' is not a comma-separated number list");
            }
        }
        return out;
    }

    std::filesystem::path path(const std::string& key) const {
        std::filesystem::path p = require<std::string>(key);
        return p.is_absolute() ? p : base_dir_ / p;
    }

    std::filesystem::path resolve(const std::filesystem::path& p) const {
        return p.is_absolute() ? p : base_dir_ / p;
    }

    /// FNV-1a of the raw config text, as 16 hex digits.
    std::string hash() const {
        static const char* digits = "0123456789abcdef";
        std::uint64_t h = fnv1a64(text_);
        std::string s(16, '0');
        for (int i = 15; i >= 0; --i, h >>= 4) s[i] = digits[h & 0xF];
        return s;
    }

private:
    /// Drops ';' or '#' comments that start a line or follow whitespace.
    static std::string strip_comments(const std::string& text) {
        std::istringstream in(text);
        std::string out, line;
        while (std::getline(in, line)) {
            for (std::size_t i = 0; i < line.size(); ++i) {
                if ((line[i] == ';' || line[i] == '#') && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
                    line.erase(i);
                    break;
                }
            }
            while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r')) line.pop_back();
            out += line;
            out += '\n';
        }
        return out;
    }

    std::string text_;
    std::filesystem::path base_dir_ = ".";
    boost::property_tree::ptree tree_;
};

}  // namespace sarpatch
