#include "gfwlab/rng.hpp"
#include "gfwlab/wire.hpp"

#include <doctest.h>

using namespace gfwlab;

namespace {

std::vector<std::uint8_t> header(std::uint16_t txid, std::uint16_t flags, std::uint16_t qd, std::uint16_t an)
{
    return {static_cast<std::uint8_t>(txid >> 8), static_cast<std::uint8_t>(txid), static_cast<std::uint8_t>(flags >> 8),
            static_cast<std::uint8_t>(flags), 0, static_cast<std::uint8_t>(qd), 0, static_cast<std::uint8_t>(an),
            0, 0, 0, 0};
}

void append(std::vector<std::uint8_t>& v, std::initializer_list<std::uint8_t> bytes)
{
    v.insert(v.end(), bytes);
}

// example.com, type A, class IN
void question(std::vector<std::uint8_t>& v)
{
    append(v, {7, 'e', 'x', 'a', 'm', 'p', 'l', 'e', 3, 'c', 'o', 'm', 0, 0, 1, 0, 1});
}

} // namespace

TEST_CASE("encode_query lays out a 29-byte A query")
{
    const DnsQuery q{0x1234, Fqdn("example.com"), QType::A, {}};
    const auto raw = encode_query(q);
    REQUIRE(raw.size() == 29);
    CHECK(raw[0] == 0x12);
    CHECK(raw[1] == 0x34);
    const std::vector<std::uint8_t> qname{0x07, 0x65, 0x78, 0x61, 0x6d, 0x70, 0x6c, 0x65, 0x03, 0x63, 0x6f, 0x6d, 0x00};
    CHECK(std::vector<std::uint8_t>(raw.begin() + 12, raw.begin() + 25) == qname);
    CHECK(raw[25] == 0);
    CHECK(raw[26] == 1);
    CHECK(raw[27] == 0);
    CHECK(raw[28] == 1);
}

TEST_CASE("query round trip")
{
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        std::string name;
        const auto labels = 1 + rng.below(4);
        for (std::uint64_t l = 0; l < labels; ++l)
            name += (l ? "." : "") + random_label(rng, 1 + rng.below(63));
        auto f = Fqdn::try_parse(name);
        if (!f)
            continue;
        const DnsQuery q{static_cast<std::uint16_t>(rng.below(65536)), *f, rng.bernoulli(0.5) ? QType::A : QType::AAAA, {}};
        CHECK(decode_query(encode_query(q)) == q);
    }
}

TEST_CASE("response round trip preserves answers and flags")
{
    Rng rng(2);
    for (int i = 0; i < 2000; ++i) {
        WireResponse r;
        r.txid = static_cast<std::uint16_t>(rng.below(65536));
        r.qname = Fqdn(random_label(rng, 1 + rng.below(20)) + ".example.net");
        r.qtype = rng.bernoulli(0.5) ? QType::A : QType::AAAA;
        r.aa_flag = rng.bernoulli(0.5);
        r.rcode = static_cast<std::uint8_t>(rng.below(6));
        const auto n = rng.below(5);
        for (std::uint64_t k = 0; k < n; ++k) {
            DnsAnswer a;
            a.ttl = static_cast<std::uint32_t>(rng.next());
            switch (rng.below(3)) {
            case 0: a.rr = Ipv4{static_cast<std::uint32_t>(rng.next())}; break;
            case 1: {
                Ipv6 v;
                for (auto& b : v.bytes)
                    b = static_cast<std::uint8_t>(rng.below(256));
                a.rr = v;
                break;
            }
            default: a.rr = Cname{Fqdn(random_label(rng, 6) + "." + r.qname.str())};
            }
            r.answers.push_back(a);
        }
        const TransportMeta meta{true, std::chrono::milliseconds(7)};
        const auto back = decode_response(encode_response(r), meta);
        CHECK(back.txid == r.txid);
        CHECK(back.qname == r.qname);
        CHECK(back.qtype == r.qtype);
        CHECK(back.aa_flag == r.aa_flag);
        CHECK(back.rcode == r.rcode);
        REQUIRE(back.answers.size() == r.answers.size());
        for (std::size_t k = 0; k < r.answers.size(); ++k) {
            CHECK(back.answers[k] == r.answers[k]);
            CHECK(back.answers[k].ttl == r.answers[k].ttl);
        }
        CHECK(back.df_flag == true);
        CHECK(back.received_at == std::chrono::milliseconds(7));
        CHECK_FALSE(back.ground_truth_forged.has_value());
    }
}

TEST_CASE("labels longer than 63 octets are rejected")
{
    CHECK_THROWS_AS(Fqdn(std::string(64, 'a') + ".com"), FqdnError);
    CHECK_NOTHROW(Fqdn(std::string(63, 'a') + ".com"));

    auto raw = header(1, 0x0100, 1, 0);
    raw.push_back(64);
    raw.insert(raw.end(), 64, 'a');
    append(raw, {0, 0, 1, 0, 1});
    CHECK_THROWS_AS(decode_query(raw), ParseError);
}

TEST_CASE("names over 253 octets are rejected")
{
    std::string name;
    while (name.size() < 260)
        name += std::string(9, 'x') + ".";
    name += "com";
    CHECK_THROWS_AS(Fqdn{name}, FqdnError);
}

TEST_CASE("Fqdn canonicalization is idempotent")
{
    const char* inputs[] = {"Example.COM.", "www.example.com", "A.b.C", "xn--fiqs8s.cn."};
    for (const char* s : inputs) {
        const Fqdn once(s);
        const Fqdn twice(once.str());
        CHECK(once == twice);
        CHECK(once.str().back() != '.');
        for (char c : once.str())
            CHECK_FALSE((c >= 'A' && c <= 'Z'));
    }
    CHECK(Fqdn("Example.COM.").str() == "example.com");
    CHECK_FALSE(Fqdn::try_parse("a..b"));
    CHECK_FALSE(Fqdn::try_parse(""));
}

TEST_CASE("compression loops are rejected")
{
    auto raw = header(9, 0x8180, 1, 1);
    question(raw);
    // Answer owner is a pointer to itself.
    const auto self = static_cast<std::uint8_t>(raw.size());
    append(raw, {0xc0, self, 0, 1, 0, 1, 0, 0, 0, 60, 0, 4, 1, 2, 3, 4});
    CHECK_THROWS_AS(decode_response(raw), ParseError);

    // Two pointers referencing each other.
    auto two = header(9, 0x8180, 1, 1);
    question(two);
    const auto at = static_cast<std::uint8_t>(two.size());
    append(two, {0xc0, static_cast<std::uint8_t>(at + 2), 0xc0, at, 0, 1, 0, 1, 0, 0, 0, 60, 0, 4, 1, 2, 3, 4});
    CHECK_THROWS_AS(decode_response(two), ParseError);
}

TEST_CASE("unknown record types are skipped")
{
    auto raw = header(9, 0x8180, 1, 2);
    question(raw);
    // TXT record, then an A record; both owners point at the question name (offset 12).
    append(raw, {0xc0, 12, 0, 16, 0, 1, 0, 0, 0, 60, 0, 4, 3, 'a', 'b', 'c'});
    append(raw, {0xc0, 12, 0, 1, 0, 1, 0, 0, 0, 60, 0, 4, 10, 0, 0, 1});
    const auto r = decode_response(raw);
    REQUIRE(r.answers.size() == 1);
    CHECK(r.answers[0].value() == "10.0.0.1");
    CHECK(r.answers[0].ttl == 60);
}

TEST_CASE("decoder fuzz only ever raises ParseError")
{
    Rng rng(3);
    auto base = header(9, 0x8180, 1, 1);
    question(base);
    append(base, {0xc0, 12, 0, 1, 0, 1, 0, 0, 0, 60, 0, 4, 10, 0, 0, 1});

    std::size_t parsed = 0, rejected = 0, other = 0;
    for (int i = 0; i < 1'000'000; ++i) {
        std::vector<std::uint8_t> buf;
        if (i % 2 == 0) {
            buf.resize(rng.below(64));
            for (auto& b : buf)
                b = static_cast<std::uint8_t>(rng.below(256));
        } else {
            buf = base;
            const auto flips = 1 + rng.below(4);
            for (std::uint64_t f = 0; f < flips; ++f)
                buf[rng.below(buf.size())] = static_cast<std::uint8_t>(rng.below(256));
            if (rng.bernoulli(0.2))
                buf.resize(rng.below(buf.size()));
        }
        try {
            if (i % 4 == 1)
                (void)decode_query(buf);
            else
                (void)decode_response(buf);
            ++parsed;
        } catch (const ParseError&) {
            ++rejected;
        } catch (...) {
            ++other;
        }
    }
    CHECK(other == 0);
    CHECK(parsed + rejected == 1'000'000);
    CHECK(parsed > 0);
}

TEST_CASE("address text forms")
{
    CHECK(Ipv4::parse("59.24.3.173").str() == "59.24.3.173");
    CHECK_FALSE(Ipv4::try_parse("256.1.1.1"));
    const auto v6 = Ipv6::parse("2001::1a2b:3c4d");
    CHECK(v6.in_teredo());
    CHECK(v6.str() == "2001::1a2b:3c4d");
    CHECK_FALSE(Ipv6::parse("2001:db8::1").in_teredo());
    CHECK(DnsAnswer::parse("CNAME", "a.example.com").type() == "CNAME");
}
