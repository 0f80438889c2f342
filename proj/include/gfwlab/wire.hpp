#pragma once

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace gfwlab {

/// Timestamps are nanoseconds on the transport's monotonic clock.
using Timestamp = std::chrono::nanoseconds;

inline double to_ms(Timestamp t) noexcept
{
    return std::chrono::duration<double, std::milli>(t).count();
}

inline Timestamp from_ms(double ms) noexcept
{
    return std::chrono::duration_cast<Timestamp>(std::chrono::duration<double, std::milli>(ms));
}

class FqdnError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error("dns parse error: " + what) {}
};

/// A normalized domain name: lowercase, no trailing dot, labels of 1..63
/// octets, at most 253 octets of text.
class Fqdn {
public:
    static constexpr std::size_t max_label = 63;
    static constexpr std::size_t max_text = 253;

    Fqdn() = default;
    /// Canonicalizes and validates; throws FqdnError on violation.
    explicit Fqdn(std::string_view text);

    static std::optional<Fqdn> try_parse(std::string_view text) noexcept;

    const std::string& str() const noexcept { return text_; }
    bool empty() const noexcept { return text_.empty(); }
    std::vector<std::string_view> labels() const;

    friend auto operator<=>(const Fqdn&, const Fqdn&) = default;
    friend bool operator==(const Fqdn&, const Fqdn&) = default;

private:
    std::string text_;
};

/// Only the two query types the probing policy uses.
enum class QType : std::uint16_t { A = 1, AAAA = 28 };

std::string_view to_string(QType t) noexcept;
QType qtype_from_string(std::string_view s);

struct Ipv4 {
    std::uint32_t value = 0; // host byte order

    static Ipv4 parse(std::string_view text);
    static std::optional<Ipv4> try_parse(std::string_view text) noexcept;
    std::string str() const;
    friend auto operator<=>(const Ipv4&, const Ipv4&) = default;
};

struct Ipv6 {
    std::array<std::uint8_t, 16> bytes{};

    static Ipv6 parse(std::string_view text);
    static std::optional<Ipv6> try_parse(std::string_view text) noexcept;
    std::string str() const;
    /// Inside the Teredo prefix 2001::/32.
    bool in_teredo() const noexcept
    {
        return bytes[0] == 0x20 && bytes[1] == 0x01 && bytes[2] == 0 && bytes[3] == 0;
    }
    friend auto operator<=>(const Ipv6&, const Ipv6&) = default;
};

struct Cname {
    Fqdn target;
    friend auto operator<=>(const Cname&, const Cname&) = default;
};

using Rdata = std::variant<Ipv4, Ipv6, Cname>;

struct DnsAnswer {
    Rdata rr;
    std::uint32_t ttl = 300;

    /// Text of the record value: dotted quad, IPv6 text or CNAME target.
    std::string value() const;
    /// "A", "AAAA" or "CNAME".
    std::string_view type() const noexcept;

    /// Parse from (type, value) text as written in pool snapshots.
    static DnsAnswer parse(std::string_view type, std::string_view value);

    /// Answers are compared by record value; TTL is deliberately ignored.
    friend bool operator==(const DnsAnswer& a, const DnsAnswer& b) noexcept { return a.rr == b.rr; }
    friend auto operator<=>(const DnsAnswer& a, const DnsAnswer& b) noexcept { return a.rr <=> b.rr; }
};

struct DnsQuery {
    std::uint16_t txid = 0;
    Fqdn qname;
    QType qtype = QType::A;
    Timestamp sent_at{0};

    friend bool operator==(const DnsQuery&, const DnsQuery&) = default;
};

/// Metadata the transport knows about a datagram but the DNS message does not carry.
struct TransportMeta {
    std::optional<bool> df_flag;
    Timestamp received_at{0};
};

struct WireResponse {
    std::uint16_t txid = 0;
    Fqdn qname;
    QType qtype = QType::A;
    std::vector<DnsAnswer> answers;
    bool aa_flag = false;
    std::uint8_t rcode = 0;
    std::optional<bool> df_flag;
    Timestamp received_at{0};
    /// Set only by the simulator transport; never derived from wire bytes.
    std::optional<bool> ground_truth_forged;
};

std::vector<std::uint8_t> encode_query(const DnsQuery& q);
DnsQuery decode_query(std::span<const std::uint8_t> raw);

/// Serializes header, question and answer section. df_flag, received_at and
/// ground truth are not part of the message.
std::vector<std::uint8_t> encode_response(const WireResponse& r);
WireResponse decode_response(std::span<const std::uint8_t> raw, const TransportMeta& meta = {});

/// Correlation key of a query/response pair.
struct CorrelationKey {
    std::uint16_t txid = 0;
    Fqdn qname;
    QType qtype = QType::A;
    friend auto operator<=>(const CorrelationKey&, const CorrelationKey&) = default;
};

inline CorrelationKey key_of(const DnsQuery& q) { return {q.txid, q.qname, q.qtype}; }
inline CorrelationKey key_of(const WireResponse& r) { return {r.txid, r.qname, r.qtype}; }

} // namespace gfwlab
