// Internal text helpers shared across modules (not installed).
#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace dualtrace::detail {

inline std::string to_lower(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (unsigned char c : text) out += static_cast<char>(std::tolower(c));
    return out;
}

/// Lowercased alphanumeric runs; punctuation acts as a separator.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current += static_cast<char>(std::tolower(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

} // namespace dualtrace::detail
