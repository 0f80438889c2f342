#pragma once

#include "gfwlab/wire.hpp"

#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace gfwlab {

/// Calendar day (UTC), stored as days since 1970-01-01.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(int days_since_epoch) : days_(days_since_epoch) {}

    /// "YYYY-MM-DD"; throws std::invalid_argument otherwise.
    static Date parse(std::string_view text);
    std::string str() const;
    constexpr int days() const noexcept { return days_; }
    constexpr Date operator+(int n) const noexcept { return Date(days_ + n); }

    friend constexpr auto operator<=>(Date, Date) = default;

private:
    int days_ = 0;
};

enum class ProbeVerdict { Censored, NotCensored, Inconclusive };

std::string_view to_string(ProbeVerdict v) noexcept;
ProbeVerdict probe_verdict_from_string(std::string_view s);

/// One query's resolution transcript on one path.
struct ProbeRecord {
    Date date;
    std::string path;
    Fqdn qname;
    QType qtype = QType::A;
    int round = 1;
    std::uint16_t txid = 0;
    Timestamp sent_at{0};
    std::vector<WireResponse> responses; // arrival order
    ProbeVerdict verdict = ProbeVerdict::NotCensored;
    std::string error;

    /// Stable identity used for idempotent ingestion.
    std::string identity() const;
};

} // namespace gfwlab
