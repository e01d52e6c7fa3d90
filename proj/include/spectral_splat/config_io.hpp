#pragma once

// Configuration files. JSON is parsed natively; a pragmatic TOML subset is
// also accepted ([section] headers, key = value with strings, numbers,
// booleans, and # comments) and normalized into the same nested JSON shape,
// so downstream code reads one format.

#include <cctype>
#include <fstream>
#include <string>

#include <json.hpp>

#include "spectral_splat/errors.hpp"

namespace sgs {

inline nlohmann::json parse_toml_subset(const std::string& text, const std::string& origin) {
    nlohmann::json doc = nlohmann::json::object();
    nlohmann::json* section = &doc;
    int line_no = 0;
    std::size_t start = 0;

    const auto fail = [&](const std::string& what) -> IoError {
        return IoError(origin + ": line " + std::to_string(line_no) + ": " + what);
    };
    const auto trim = [](std::string s) {
        const auto is_space = [](unsigned char ch) { return std::isspace(ch) != 0; };
        while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
        while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.pop_back();
        return s;
    };

    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        std::string line = text.substr(start, nl == std::string::npos ? nl : nl - start);
        start = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        // Strip comments outside of strings.
        bool in_string = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_string = !in_string;
            else if (line[i] == '#' && !in_string) {
                line.resize(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') throw fail("unterminated section header");
            const std::string name = trim(line.substr(1, line.size() - 2));
            if (name.empty()) throw fail("empty section name");
            section = &doc[name];
            if (!section->is_object()) *section = nlohmann::json::object();
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw fail("expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw fail("empty key");
        if (value.empty()) throw fail("empty value for key '" + key + "'");

        if (value.front() == '"') {
            if (value.size() < 2 || value.back() != '"')
                throw fail("unterminated string for key '" + key + "'");
            (*section)[key] = value.substr(1, value.size() - 2);
        } else if (value == "true" || value == "false") {
            (*section)[key] = (value == "true");
        } else {
            try {
                std::size_t used = 0;
                if (value.find_first_of(".eE") == std::string::npos) {
                    const long long v = std::stoll(value, &used);
                    if (used != value.size()) throw std::invalid_argument("trailing");
                    (*section)[key] = v;
                } else {
                    const double v = std::stod(value, &used);
                    if (used != value.size()) throw std::invalid_argument("trailing");
                    (*section)[key] = v;
                }
            } catch (const std::exception&) {
                throw fail("cannot parse value '" + value + "' for key '" + key + "'");
            }
        }
    }
    return doc;
}

// Loads a config file as nested JSON; dispatches on extension, falling back
// to content sniffing (a leading '{' means JSON).
inline nlohmann::json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_config: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const bool is_json_ext = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
    const bool is_toml_ext = path.size() >= 5 && path.substr(path.size() - 5) == ".toml";
    bool treat_as_json = is_json_ext;
    if (!is_json_ext && !is_toml_ext) {
        for (char ch : text) {
            if (std::isspace(static_cast<unsigned char>(ch))) continue;
            treat_as_json = (ch == '{');
            break;
        }
    }

    if (treat_as_json) {
        try {
            nlohmann::json doc = nlohmann::json::parse(text);
            if (!doc.is_object()) throw IoError(path + ": expected a top-level JSON object");
            return doc;
        } catch (const nlohmann::json::parse_error& e) {
            throw IoError(path + ": invalid JSON: " + e.what());
        }
    }
    return parse_toml_subset(text, path);
}

} // namespace sgs
