#pragma once

#include <chrono>
#include <cstdio>
#include <string>
#include <string_view>

#include "fbrank/error.hpp"

namespace fbrank {

using Timestamp = std::chrono::sys_seconds;

/// "YYYY-MM-DDTHH:MM:SSZ"
inline std::string format_iso8601(Timestamp t) {
    using namespace std::chrono;
    auto day = floor<days>(t);
    year_month_day ymd{day};
    hh_mm_ss<seconds> hms{t - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()));
    return buf;
}

/// Accepts the UTC form written by format_iso8601.
inline Timestamp parse_iso8601(std::string_view s) {
    using namespace std::chrono;
    int y = 0;
    unsigned mo = 0, d = 0;
    int h = 0, mi = 0, sec = 0;
    char tail = 0;
    std::string buf(s);
    if (std::sscanf(buf.c_str(), "%4d-%2u-%2uT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &sec, &tail) != 7 ||
        tail != 'Z' || buf.size() != 20) {
        throw ValidationError("bad ISO-8601 timestamp '" + buf + "' (expected YYYY-MM-DDTHH:MM:SSZ)");
    }
    year_month_day ymd{year{y}, month{mo}, day{d}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 60 || h < 0 || mi < 0 || sec < 0) {
        throw ValidationError("bad ISO-8601 timestamp '" + buf + "'");
    }
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec};
}

inline Timestamp timestamp_from_unix(std::int64_t secs) { return Timestamp{std::chrono::seconds{secs}}; }

}  // namespace fbrank
