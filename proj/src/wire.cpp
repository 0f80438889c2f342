#include "gfwlab/wire.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <cctype>

namespace gfwlab {

namespace {

bool valid_label_char(unsigned char c) noexcept
{
    return c > 0x20 && c < 0x7f && c != '.';
}

std::optional<std::string> canonicalize(std::string_view text, std::string* why)
{
    if (!text.empty() && text.back() == '.')
        text.remove_suffix(1);
    auto fail = [&](const char* reason) -> std::optional<std::string> {
        if (why)
            *why = reason;
        return std::nullopt;
    };
    if (text.empty())
        return fail("empty name");
    if (text.size() > Fqdn::max_text)
        return fail("name longer than 253 octets");
    std::string out;
    out.reserve(text.size());
    std::size_t label_len = 0;
    for (unsigned char c : text) {
        if (c == '.') {
            if (label_len == 0)
                return fail("empty label");
            label_len = 0;
            out.push_back('.');
            continue;
        }
        if (!valid_label_char(c))
            return fail("invalid character in label");
        if (++label_len > Fqdn::max_label)
            return fail("label longer than 63 octets");
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    if (label_len == 0)
        return fail("empty label");
    return out;
}

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v)
    {
        buf_.push_back(static_cast<std::uint8_t>(v >> 8));
        buf_.push_back(static_cast<std::uint8_t>(v));
    }
    void u32(std::uint32_t v)
    {
        u16(static_cast<std::uint16_t>(v >> 16));
        u16(static_cast<std::uint16_t>(v));
    }
    void name(const Fqdn& n)
    {
        for (auto label : n.labels()) {
            u8(static_cast<std::uint8_t>(label.size()));
            buf_.insert(buf_.end(), label.begin(), label.end());
        }
        u8(0);
    }
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    std::size_t size() const { return buf_.size(); }
    void patch_u16(std::size_t at, std::uint16_t v)
    {
        buf_[at] = static_cast<std::uint8_t>(v >> 8);
        buf_[at + 1] = static_cast<std::uint8_t>(v);
    }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> msg) : msg_(msg) {}

    std::uint8_t u8()
    {
        need(1);
        return msg_[pos_++];
    }
    std::uint16_t u16()
    {
        need(2);
        const auto v = static_cast<std::uint16_t>((msg_[pos_] << 8) | msg_[pos_ + 1]);
        pos_ += 2;
        return v;
    }
    std::uint32_t u32()
    {
        const std::uint32_t hi = u16();
        return (hi << 16) | u16();
    }
    std::span<const std::uint8_t> take(std::size_t n)
    {
        need(n);
        auto out = msg_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    void skip(std::size_t n) { need(n), pos_ += n; }
    std::size_t pos() const { return pos_; }

    /// Reads a possibly-compressed name. Pointers must point strictly
    /// backwards, so the walk terminates in at most |msg| steps.
    std::string name()
    {
        std::string out;
        std::size_t cursor = pos_;
        std::size_t lowest_start = pos_;
        bool jumped = false;
        for (;;) {
            if (cursor >= msg_.size())
                throw ParseError("truncated name");
            const std::uint8_t len = msg_[cursor];
            if ((len & 0xC0) == 0xC0) {
                if (cursor + 1 >= msg_.size())
                    throw ParseError("truncated compression pointer");
                const std::size_t target = static_cast<std::size_t>((len & 0x3F) << 8) | msg_[cursor + 1];
                if (target >= lowest_start)
                    throw ParseError("compression pointer loop");
                if (!jumped)
                    pos_ = cursor + 2;
                jumped = true;
                lowest_start = target;
                cursor = target;
                continue;
            }
            if ((len & 0xC0) != 0)
                throw ParseError("reserved label type");
            if (len == 0) {
                if (!jumped)
                    pos_ = cursor + 1;
                return out;
            }
            if (cursor + 1 + len > msg_.size())
                throw ParseError("truncated label");
            if (!out.empty())
                out.push_back('.');
            out.append(reinterpret_cast<const char*>(msg_.data() + cursor + 1), len);
            if (out.size() > 255)
                throw ParseError("name too long");
            cursor += 1 + len;
        }
    }

private:
    void need(std::size_t n) const
    {
        if (pos_ + n > msg_.size())
            throw ParseError("truncated message");
    }

    std::span<const std::uint8_t> msg_;
    std::size_t pos_ = 0;
};

Fqdn parse_name(const std::string& text)
{
    if (auto f = Fqdn::try_parse(text))
        return *std::move(f);
    throw ParseError("invalid name '" + text + "'");
}

constexpr std::uint16_t class_in = 1;
constexpr std::uint16_t type_cname = 5;

} // namespace

Fqdn::Fqdn(std::string_view text)
{
    std::string why;
    auto canon = canonicalize(text, &why);
    if (!canon)
        throw FqdnError("invalid domain name '" + std::string(text) + "': " + why);
    text_ = *std::move(canon);
}

std::optional<Fqdn> Fqdn::try_parse(std::string_view text) noexcept
{
    try {
        auto canon = canonicalize(text, nullptr);
        if (!canon)
            return std::nullopt;
        Fqdn f;
        f.text_ = *std::move(canon);
        return f;
    } catch (...) {
        return std::nullopt;
    }
}

std::vector<std::string_view> Fqdn::labels() const
{
    std::vector<std::string_view> out;
    std::string_view rest = text_;
    while (!rest.empty()) {
        const auto dot = rest.find('.');
        out.push_back(rest.substr(0, dot));
        if (dot == std::string_view::npos)
            break;
        rest.remove_prefix(dot + 1);
    }
    return out;
}

std::string_view to_string(QType t) noexcept
{
    return t == QType::A ? "A" : "AAAA";
}

QType qtype_from_string(std::string_view s)
{
    if (s == "A" || s == "a")
        return QType::A;
    if (s == "AAAA" || s == "aaaa")
        return QType::AAAA;
    throw std::invalid_argument("unsupported qtype '" + std::string(s) + "'");
}

std::optional<Ipv4> Ipv4::try_parse(std::string_view text) noexcept
{
    const std::string s(text);
    in_addr addr{};
    if (inet_pton(AF_INET, s.c_str(), &addr) != 1)
        return std::nullopt;
    return Ipv4{ntohl(addr.s_addr)};
}

Ipv4 Ipv4::parse(std::string_view text)
{
    if (auto v = try_parse(text))
        return *v;
    throw std::invalid_argument("invalid IPv4 address '" + std::string(text) + "'");
}

std::string Ipv4::str() const
{
    in_addr addr{htonl(value)};
    char buf[INET_ADDRSTRLEN] = {};
    inet_ntop(AF_INET, &addr, buf, sizeof buf);
    return buf;
}

std::optional<Ipv6> Ipv6::try_parse(std::string_view text) noexcept
{
    const std::string s(text);
    Ipv6 out;
    if (inet_pton(AF_INET6, s.c_str(), out.bytes.data()) != 1)
        return std::nullopt;
    return out;
}

Ipv6 Ipv6::parse(std::string_view text)
{
    if (auto v = try_parse(text))
        return *v;
    throw std::invalid_argument("invalid IPv6 address '" + std::string(text) + "'");
}

std::string Ipv6::str() const
{
    char buf[INET6_ADDRSTRLEN] = {};
    inet_ntop(AF_INET6, bytes.data(), buf, sizeof buf);
    return buf;
}

std::string DnsAnswer::value() const
{
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Cname>)
                return v.target.str();
            else
                return v.str();
        },
        rr);
}

std::string_view DnsAnswer::type() const noexcept
{
    switch (rr.index()) {
    case 0: return "A";
    case 1: return "AAAA";
    default: return "CNAME";
    }
}

DnsAnswer DnsAnswer::parse(std::string_view type, std::string_view value)
{
    if (type == "A")
        return {Ipv4::parse(value)};
    if (type == "AAAA")
        return {Ipv6::parse(value)};
    if (type == "CNAME")
        return {Cname{Fqdn(value)}};
    throw std::invalid_argument("unknown answer type '" + std::string(type) + "'");
}

std::vector<std::uint8_t> encode_query(const DnsQuery& q)
{
    if (q.qname.empty())
        throw FqdnError("query without a name");
    Writer w;
    w.u16(q.txid);
    w.u16(0x0100); // RD
    w.u16(1);
    w.u16(0);
    w.u16(0);
    w.u16(0);
    w.name(q.qname);
    w.u16(static_cast<std::uint16_t>(q.qtype));
    w.u16(class_in);
    return w.take();
}

DnsQuery decode_query(std::span<const std::uint8_t> raw)
{
    Reader r(raw);
    DnsQuery q;
    q.txid = r.u16();
    const std::uint16_t flags = r.u16();
    if (flags & 0x8000)
        throw ParseError("message is a response");
    if (r.u16() != 1)
        throw ParseError("expected exactly one question");
    r.skip(6);
    q.qname = parse_name(r.name());
    const std::uint16_t type = r.u16();
    if (type != static_cast<std::uint16_t>(QType::A) && type != static_cast<std::uint16_t>(QType::AAAA))
        throw ParseError("unsupported qtype " + std::to_string(type));
    q.qtype = static_cast<QType>(type);
    if (r.u16() != class_in)
        throw ParseError("unsupported class");
    return q;
}

std::vector<std::uint8_t> encode_response(const WireResponse& resp)
{
    Writer w;
    w.u16(resp.txid);
    std::uint16_t flags = 0x8000 | 0x0100 | 0x0080 | (resp.rcode & 0x0F);
    if (resp.aa_flag)
        flags |= 0x0400;
    w.u16(flags);
    w.u16(1);
    w.u16(static_cast<std::uint16_t>(resp.answers.size()));
    w.u16(0);
    w.u16(0);
    w.name(resp.qname);
    w.u16(static_cast<std::uint16_t>(resp.qtype));
    w.u16(class_in);
    for (const auto& ans : resp.answers) {
        w.u16(0xC00C); // owner = question name
        std::visit(
            [&](const auto& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, Ipv4>) {
                    w.u16(static_cast<std::uint16_t>(QType::A));
                    w.u16(class_in);
                    w.u32(ans.ttl);
                    w.u16(4);
                    w.u32(v.value);
                } else if constexpr (std::is_same_v<T, Ipv6>) {
                    w.u16(static_cast<std::uint16_t>(QType::AAAA));
                    w.u16(class_in);
                    w.u32(ans.ttl);
                    w.u16(16);
                    w.bytes(v.bytes);
                } else {
                    w.u16(type_cname);
                    w.u16(class_in);
                    w.u32(ans.ttl);
                    const std::size_t len_at = w.size();
                    w.u16(0);
                    const std::size_t start = w.size();
                    w.name(v.target);
                    w.patch_u16(len_at, static_cast<std::uint16_t>(w.size() - start));
                }
            },
            ans.rr);
    }
    return w.take();
}

WireResponse decode_response(std::span<const std::uint8_t> raw, const TransportMeta& meta)
{
    if (raw.size() < 12)
        throw ParseError("shorter than a DNS header");
    Reader r(raw);
    WireResponse out;
    out.txid = r.u16();
    const std::uint16_t flags = r.u16();
    if (!(flags & 0x8000))
        throw ParseError("message is not a response");
    out.aa_flag = (flags & 0x0400) != 0;
    out.rcode = static_cast<std::uint8_t>(flags & 0x0F);
    const std::uint16_t qdcount = r.u16();
    const std::uint16_t ancount = r.u16();
    r.skip(4);
    if (qdcount != 1)
        throw ParseError("expected exactly one question");
    out.qname = parse_name(r.name());
    const std::uint16_t qtype = r.u16();
    if (qtype != static_cast<std::uint16_t>(QType::A) && qtype != static_cast<std::uint16_t>(QType::AAAA))
        throw ParseError("unsupported qtype " + std::to_string(qtype));
    out.qtype = static_cast<QType>(qtype);
    r.u16();
    for (std::uint16_t i = 0; i < ancount; ++i) {
        r.name();
        const std::uint16_t type = r.u16();
        const std::uint16_t klass = r.u16();
        const std::uint32_t ttl = r.u32();
        const std::uint16_t rdlen = r.u16();
        const std::size_t rdata_at = r.pos();
        auto rdata = r.take(rdlen);
        if (klass != class_in)
            continue;
        if (type == static_cast<std::uint16_t>(QType::A)) {
            if (rdlen != 4)
                throw ParseError("bad A rdata length");
            const std::uint32_t v = (std::uint32_t{rdata[0]} << 24) | (std::uint32_t{rdata[1]} << 16)
                                    | (std::uint32_t{rdata[2]} << 8) | rdata[3];
            out.answers.push_back({Ipv4{v}, ttl});
        } else if (type == static_cast<std::uint16_t>(QType::AAAA)) {
            if (rdlen != 16)
                throw ParseError("bad AAAA rdata length");
            Ipv6 v;
            std::copy(rdata.begin(), rdata.end(), v.bytes.begin());
            out.answers.push_back({v, ttl});
        } else if (type == type_cname) {
            // The target may use compression pointers into the whole message.
            Reader sub(raw.first(rdata_at + rdlen));
            sub.skip(rdata_at);
            out.answers.push_back({Cname{parse_name(sub.name())}, ttl});
        }
    }
    out.df_flag = meta.df_flag;
    out.received_at = meta.received_at;
    return out;
}

} // namespace gfwlab
