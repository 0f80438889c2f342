#include "gfwlab/records.hpp"

#include <chrono>
#include <cstdio>
#include <stdexcept>

namespace gfwlab {

Date Date::parse(std::string_view text)
{
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    const std::string s(text);
    if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3)
        throw std::invalid_argument("bad date '" + s + "', expected YYYY-MM-DD");
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok())
        throw std::invalid_argument("invalid calendar date '" + s + "'");
    return Date(std::chrono::sys_days(ymd).time_since_epoch().count());
}

std::string Date::str() const
{
    const std::chrono::year_month_day ymd{std::chrono::sys_days(std::chrono::days(days_))};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::string_view to_string(ProbeVerdict v) noexcept
{
    switch (v) {
    case ProbeVerdict::Censored: return "censored";
    case ProbeVerdict::NotCensored: return "not_censored";
    case ProbeVerdict::Inconclusive: return "inconclusive";
    }
    return "?";
}

ProbeVerdict probe_verdict_from_string(std::string_view s)
{
    if (s == "censored")
        return ProbeVerdict::Censored;
    if (s == "not_censored")
        return ProbeVerdict::NotCensored;
    if (s == "inconclusive")
        return ProbeVerdict::Inconclusive;
    throw std::invalid_argument("unknown verdict '" + std::string(s) + "'");
}

std::string ProbeRecord::identity() const
{
    return date.str() + "|" + path + "|" + qname.str() + "|" + std::string(to_string(qtype)) + "|"
           + std::to_string(round) + "|" + std::to_string(txid);
}

} // namespace gfwlab
