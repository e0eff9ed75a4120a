#include "dualtrace/timestamp.hpp"

#include <cstdio>

namespace dualtrace {

namespace {

bool is_leap(int year) {
    return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
}

int days_in_month(int year, int month) {
    static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month < 1 || month > 12) return 0;
    if (month == 2 && is_leap(year)) return 29;
    return kDays[month - 1];
}

bool all_digits(std::string_view s) {
    for (char c : s)
        if (c < '0' || c > '9') return false;
    return !s.empty();
}

int to_int(std::string_view s) {
    int v = 0;
    for (char c : s) v = v * 10 + (c - '0');
    return v;
}

} // namespace

bool UtcTimestamp::valid() const {
    return year >= 1 && year <= 9999 && month >= 1 && month <= 12 && day >= 1 &&
           day <= days_in_month(year, month) && hour >= 0 && hour <= 23 && minute >= 0 &&
           minute <= 59 && second >= 0 && second <= 59;
}

std::optional<UtcTimestamp> UtcTimestamp::parse(std::string_view text) {
    // YYYY-MM-DDTHH:MM:SSZ, 20 chars, no variants.
    if (text.size() != 20) return std::nullopt;
    if (text[4] != '-' || text[7] != '-' || text[10] != 'T' || text[13] != ':' ||
        text[16] != ':' || text[19] != 'Z')
        return std::nullopt;
    const std::string_view y = text.substr(0, 4), mo = text.substr(5, 2), d = text.substr(8, 2),
                           h = text.substr(11, 2), mi = text.substr(14, 2),
                           s = text.substr(17, 2);
    if (!all_digits(y) || !all_digits(mo) || !all_digits(d) || !all_digits(h) ||
        !all_digits(mi) || !all_digits(s))
        return std::nullopt;
    UtcTimestamp out{to_int(y), to_int(mo), to_int(d), to_int(h), to_int(mi), to_int(s)};
    if (!out.valid()) return std::nullopt;
    return out;
}

std::string UtcTimestamp::to_string() const {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", year, month, day, hour,
                  minute, second);
    return buf;
}

std::string UtcTimestamp::date() const {
    char buf[12];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
    return buf;
}

} // namespace dualtrace
