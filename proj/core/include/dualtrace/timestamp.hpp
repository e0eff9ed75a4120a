#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace dualtrace {

/// UTC calendar timestamp with second resolution, serialized as
/// `YYYY-MM-DDTHH:MM:SSZ`. Entries carry these in their frontmatter and
/// the retrieval layer orders evidence by them.
struct UtcTimestamp {
    int year = 1970;
    int month = 1;
    int day = 1;
    int hour = 0;
    int minute = 0;
    int second = 0;

    /// Accepts only the canonical form; returns nullopt on any deviation
    /// (bad width, missing Z, impossible calendar date).
    static std::optional<UtcTimestamp> parse(std::string_view text);

    /// True iff the fields form a real calendar instant (leap years included).
    bool valid() const;

    std::string to_string() const;

    /// Date part only, `YYYY-MM-DD`.
    std::string date() const;

    auto operator<=>(const UtcTimestamp&) const = default;
};

} // namespace dualtrace
