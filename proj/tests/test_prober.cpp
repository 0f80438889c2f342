#include "gfwlab/prober.hpp"
#include "gfwlab/scenario.hpp"

#include <doctest.h>

#include <set>
#include <thread>

using namespace gfwlab;
using namespace std::chrono_literals;

namespace {

WireResponse reply(const DnsQuery& q, Timestamp at)
{
    WireResponse r;
    r.txid = q.txid;
    r.qname = q.qname;
    r.qtype = q.qtype;
    r.received_at = at;
    return r;
}

PathConfig sink_config(std::vector<BlockEntry> entries, std::string name = "sink")
{
    PathConfig cfg;
    cfg.name = std::move(name);
    cfg.blocklist = Blocklist(std::move(entries));
    cfg.dynamic_pool = uniform_dynamic_pool(20, 3);
    cfg.forged_delay = DelayDist::uniform(5, 50);
    return cfg;
}

// Fails every send after `ok_sends` successful ones.
class FlakyTransport final : public Transport {
public:
    explicit FlakyTransport(std::size_t ok_sends) : ok_(ok_sends) {}
    std::string name() const override { return "flaky"; }
    Timestamp now() const override { return now_; }
    DnsQuery send(DnsQuery q) override
    {
        if (sent_++ >= ok_)
            throw TransportError("network unreachable");
        q.sent_at = now_;
        return q;
    }
    std::vector<WireResponse> poll(Timestamp until) override
    {
        now_ = std::max(now_, until);
        return {};
    }
    bool exposes_df() const noexcept override { return false; }

private:
    std::size_t ok_;
    std::size_t sent_ = 0;
    Timestamp now_{0};
};

} // namespace

TEST_CASE("correlator keeps in-window responses in arrival order")
{
    Correlator c(100ms);
    const DnsQuery q{7, Fqdn("a.com"), QType::A, 10ms};
    c.open(q);
    c.deliver(reply(q, 20ms));
    c.deliver(reply(q, 110ms)); // exactly at the deadline
    c.deliver(reply(q, 111ms)); // late
    auto other = reply(q, 30ms);
    other.txid = 8;
    c.deliver(other); // no slot
    CHECK(c.expire(110ms).empty());
    const auto closed = c.expire(111ms + 1ns);
    REQUIRE(closed.size() == 1);
    CHECK(closed[0].responses.size() == 2);
    CHECK(closed[0].responses[0].received_at == 20ms);
    CHECK(c.late() == 1);
    CHECK(c.dropped() == 1);
    c.deliver(reply(q, 150ms)); // closed slot, still within retention
    CHECK(c.late() == 2);
    CHECK_THROWS_AS(Correlator(0ms), std::invalid_argument);
}

TEST_CASE("correlate separates qtypes and names")
{
    const DnsQuery q{7, Fqdn("a.com"), QType::A, 0ms};
    std::vector<WireResponse> in{reply(q, 1ms), reply(q, 5ms)};
    auto aaaa = reply(q, 2ms);
    aaaa.qtype = QType::AAAA;
    in.push_back(aaaa);
    auto other = reply(q, 3ms);
    other.qname = Fqdn("b.com");
    in.push_back(other);
    in.push_back(reply(q, 2001ms));
    const auto g = correlate(q, in, 2000ms);
    CHECK(g.responses.size() == 2);
    CHECK(g.dropped == 2);
    CHECK(g.late == 1);
}

TEST_CASE("probe_domains emits one record per domain, qtype and round")
{
    SimTransport sink(sink_config({{"blocked.com", RuleClass::R3, 10}, {"kw", RuleClass::R8, 4}}));
    ProbePlan plan;
    plan.domains = {Fqdn("blocked.com"), Fqdn("www.blocked.com"), Fqdn("free.org"), Fqdn("akwa.net")};
    plan.rounds = 3;
    plan.pacing_qps = 1000;
    plan.date = Date::parse("2024-03-01");
    Transport* paths[] = {&sink};
    const auto records = probe_domains(plan, paths);
    REQUIRE(records.size() == 4 * 2 * 3);

    std::set<std::tuple<std::string, QType, int>> keys;
    std::vector<Timestamp> sends;
    for (const auto& r : records) {
        keys.insert({r.qname.str(), r.qtype, r.round});
        sends.push_back(r.sent_at);
        CHECK(r.date == plan.date);
        CHECK(r.path == "sink");
        const bool blocked = r.qname.str() != "free.org";
        CHECK(r.verdict == (blocked ? ProbeVerdict::Censored : ProbeVerdict::NotCensored));
        for (const auto& resp : r.responses) {
            CHECK(key_of(resp) == CorrelationKey{r.txid, r.qname, r.qtype});
            CHECK(resp.received_at >= r.sent_at);
            CHECK(resp.received_at <= r.sent_at + plan.window);
        }
    }
    CHECK(keys.size() == records.size());
    std::sort(sends.begin(), sends.end());
    for (std::size_t i = 1; i < sends.size(); ++i)
        CHECK(sends[i] - sends[i - 1] >= 1ms - 1ns);

    const auto censored = censored_domains(records);
    CHECK(censored.size() == 3);
    const auto summary = summarize(records);
    REQUIRE(summary.size() == 4);
    for (const auto& d : summary)
        CHECK(d.rounds_total == 6);
}

TEST_CASE("transport failures give inconclusive records")
{
    FlakyTransport flaky(3);
    ProbePlan plan;
    plan.domains = {Fqdn("a.com"), Fqdn("b.com")};
    plan.rounds = 2;
    Transport* paths[] = {&flaky};
    const auto records = probe_domains(plan, paths);
    REQUIRE(records.size() == 8);
    std::size_t inconclusive = 0;
    for (const auto& r : records)
        if (r.verdict == ProbeVerdict::Inconclusive) {
            ++inconclusive;
            CHECK_FALSE(r.error.empty());
        }
    CHECK(inconclusive == 5);
    const auto summary = summarize(records);
    for (const auto& d : summary)
        CHECK(d.verdict == ProbeVerdict::Inconclusive);
}

TEST_CASE("verify_inside reports disagreement instead of dropping it")
{
    SimTransport outside(sink_config({{"a.com", RuleClass::R3, 10}, {"b.com", RuleClass::R3, 10}}, "out"));
    SimTransport reverse(sink_config({{"a.com", RuleClass::R3, 10}}, "rev"));
    ProbePlan plan;
    plan.domains = {Fqdn("a.com"), Fqdn("b.com"), Fqdn("c.com")};
    Transport* paths[] = {&outside};
    auto records = probe_domains(plan, paths);
    std::vector<ProbeRecord> censored;
    for (auto& r : records)
        if (r.verdict == ProbeVerdict::Censored)
            censored.push_back(r);
    const auto agreement = verify_inside(censored, reverse, plan);
    REQUIRE(agreement.size() == 2);
    CHECK(agreement[0].qname.str() == "a.com");
    CHECK(agreement[0].agree);
    CHECK(agreement[1].qname.str() == "b.com");
    CHECK_FALSE(agreement[1].agree);
    CHECK(agreement[1].reverse_verdict == ProbeVerdict::NotCensored);

    std::vector<ProbeRecord> mixed{records.begin(), records.end()};
    CHECK_THROWS_AS(verify_inside(mixed, reverse, plan), std::invalid_argument);
}

TEST_CASE("nonexistent names never draw a response")
{
    Rng rng(4);
    auto entries = plant_blocklist(60, rng);
    SimTransport sink(sink_config(entries));
    Prober prober(sink, {});
    for (const auto& name : nonexistent_domains(rng, 500))
        CHECK(prober.probe(name) == ProbeVerdict::NotCensored);
    CHECK(prober.probe(std::string_view("bad..name")) == ProbeVerdict::NotCensored);
}

TEST_CASE("UDP loopback: injector server and transport")
{
    auto cfg = sink_config({{"blocked.com", RuleClass::R3, 10}});
    cfg.forged_delay = DelayDist::constant(2);
    UdpInjectorServer server(cfg, Endpoint::parse("127.0.0.1:0"));
    REQUIRE(server.port() != 0);
    std::thread serving([&] { server.run(); });

    {
        UdpTransport udp(Endpoint{"127.0.0.1", server.port()});
        Prober prober(udp, {2, 300ms, QType::A, 1});
        CHECK(prober.probe(Fqdn("www.blocked.com")) == ProbeVerdict::Censored);
        CHECK(prober.probe(Fqdn("free.org")) == ProbeVerdict::NotCensored);

        ProbePlan plan;
        plan.domains = {Fqdn("blocked.com"), Fqdn("free.org")};
        plan.rounds = 1;
        plan.window = 300ms;
        Transport* paths[] = {&udp};
        const auto records = probe_domains(plan, paths);
        REQUIRE(records.size() == 4);
        for (const auto& r : records) {
            CHECK(r.verdict == (r.qname.str() == "blocked.com" ? ProbeVerdict::Censored : ProbeVerdict::NotCensored));
            for (const auto& resp : r.responses) {
                CHECK_FALSE(resp.df_flag.has_value());
                CHECK_FALSE(resp.ground_truth_forged.has_value());
            }
        }
        CHECK(udp.malformed() == 0);
    }
    CHECK(server.queries_seen() >= 5);
    server.stop();
    serving.join();
}

TEST_CASE("endpoint parsing")
{
    CHECK(Endpoint::parse("1.2.3.4").port == 53);
    CHECK(Endpoint::parse("1.2.3.4:5353").port == 5353);
    CHECK(Endpoint::parse("[::1]:54").host == "::1");
    CHECK_THROWS(Endpoint::parse("1.2.3.4:99999"));
}
