#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace stmre {

/// "key=value;key=value" -> map. Items without '=' are ignored.
inline std::map<std::string, std::string> parse_descriptor(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ';')) {
        auto eq = item.find('=');
        if (eq == std::string::npos) continue;
        kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return kv;
}

inline std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ',')) out.push_back(item);
    return out;
}

}  // namespace stmre
