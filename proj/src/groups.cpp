#include "gfwlab/groups.hpp"

#include <algorithm>
#include <set>

namespace gfwlab {

namespace {

DnsAnswer a(std::string_view ip)
{
    return {Ipv4::parse(ip)};
}

DnsAnswer cname(std::string_view target)
{
    return {Cname{Fqdn(target)}};
}

InjectionGroup set_group(int id, InjectionMode mode, std::initializer_list<std::string_view> ips)
{
    InjectionGroup g{id, mode, {}, {}};
    for (auto ip : ips)
        g.choices.push_back({a(ip)});
    return g;
}

bool excluded(std::uint32_t v, const std::set<std::uint32_t>& statics)
{
    const std::uint8_t first = static_cast<std::uint8_t>(v >> 24);
    // Keep to ordinary unicast space so synthetic forged IPs look routable.
    if (first == 0 || first == 10 || first == 127 || first >= 224)
        return true;
    if ((v & 0xFFFE0000u) == 0xC6120000u) // 198.18.0.0/15, legitimate answers
        return true;
    return statics.contains(v);
}

std::vector<Ipv4> synth_addresses(std::size_t n, std::uint64_t seed)
{
    std::set<std::uint32_t> statics;
    for (const auto& ans : static_answers(paper_groups()))
        if (const auto* v4 = std::get_if<Ipv4>(&ans.rr))
            statics.insert(v4->value);
    Rng rng(seed);
    std::set<std::uint32_t> seen;
    std::vector<Ipv4> out;
    out.reserve(n);
    while (out.size() < n) {
        const auto v = static_cast<std::uint32_t>(rng.next() >> 32);
        if (excluded(v, statics) || !seen.insert(v).second)
            continue;
        out.push_back(Ipv4{v});
    }
    return out;
}

} // namespace

std::string_view to_string(InjectionMode m) noexcept
{
    switch (m) {
    case InjectionMode::CnameOnly: return "cname-only";
    case InjectionMode::CnamePlusIp: return "cname-plus-ip";
    case InjectionMode::StaticPerDomain: return "static-per-domain";
    case InjectionMode::StaticSet: return "static-set";
    case InjectionMode::Dynamic: return "dynamic";
    }
    return "?";
}

DynamicPool::DynamicPool(std::vector<Ipv4> addrs, std::vector<double> weights)
    : addrs_(std::move(addrs)), weights_(std::move(weights))
{
    if (addrs_.size() != weights_.size())
        throw std::invalid_argument("dynamic pool: address/weight count mismatch");
    table_ = AliasTable(weights_);
    double total = 0.0;
    for (double w : weights_)
        total += w;
    for (double& w : weights_)
        w /= total;
}

std::vector<InjectionGroup> paper_groups()
{
    std::vector<InjectionGroup> g;

    InjectionGroup g0{0, InjectionMode::CnameOnly, {}, {}};
    for (auto t : {"cathayan.org", "mijingui.com", "upload.la", "yy080.com"})
        g0.choices.push_back({cname(t)});
    g.push_back(std::move(g0));

    g.push_back({1, InjectionMode::CnamePlusIp, {{cname("why.cc"), a("216.139.213.144")}}, {}});
    g.push_back({2, InjectionMode::CnamePlusIp, {{cname("yumizi.com"), a("66.206.11.194")}}, {}});

    auto g3 = set_group(3, InjectionMode::StaticPerDomain,
                        {"46.38.24.209", "46.20.126.252", "61.54.28.6", "89.31.55.106", "122.218.101.190",
                         "123.50.49.171", "173.201.216.6", "208.109.138.55"});
    g3.per_domain.emplace("qcc.com.tw", 3);
    g.push_back(std::move(g3));

    g.push_back(set_group(4, InjectionMode::StaticSet, {"4.36.66.178", "64.33.88.161", "203.161.230.171"}));
    g.push_back(set_group(5, InjectionMode::StaticSet,
                          {"8.7.198.45", "59.24.3.173", "243.185.187.39", "203.98.7.65"}));
    g.push_back(set_group(6, InjectionMode::StaticSet,
                          {"8.7.198.46", "59.24.3.174", "46.82.174.69", "93.46.8.90"}));
    g.push_back(set_group(7, InjectionMode::StaticSet,
                          {"4.36.66.178", "64.33.88.161", "203.161.230.171", "59.24.3.174", "8.7.198.46",
                           "46.82.174.69", "93.46.8.90"}));
    g.push_back(set_group(8, InjectionMode::StaticSet,
                          {"4.36.66.178", "64.33.88.161", "203.161.230.171", "8.7.198.45", "59.24.3.173",
                           "243.185.187.39", "203.98.7.65"}));
    g.push_back(set_group(9, InjectionMode::StaticSet,
                          {"23.89.5.60", "49.2.123.56", "54.76.135.1", "77.4.7.92", "118.5.49.6", "188.5.4.96",
                           "189.163.17.5", "197.4.4.12", "249.129.46.48", "253.157.14.165"}));
    g.push_back({10, InjectionMode::Dynamic, {}, {}});
    return g;
}

DynamicPool paper_dynamic_pool(std::uint64_t seed)
{
    constexpr std::size_t head = 200, mid = 400, tail = 1181;
    constexpr double head_mass = 0.54, mid_mass = 0.4509, tail_mass = 0.0091;

    // Within a tier weights fall linearly from 1 to `floor`; tiers are then
    // scaled to their mass. The floors keep the tiers strictly ordered:
    // head min ~0.0016 > mid max ~0.00116 > mid min ~0.00110 > tail max ~0.000012.
    // The top 600 hold 0.9909 and the top 599 about 0.9898, so k@0.99 is 600.
    auto tier = [](std::size_t n, double floor, double mass) {
        std::vector<double> w(n);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = 1.0 - (1.0 - floor) * static_cast<double>(i) / static_cast<double>(n - 1);
            sum += w[i];
        }
        for (double& x : w)
            x *= mass / sum;
        return w;
    };
    std::vector<double> weights;
    for (auto part : {tier(head, 0.42, head_mass), tier(mid, 0.95, mid_mass), tier(tail, 0.25, tail_mass)})
        weights.insert(weights.end(), part.begin(), part.end());
    return DynamicPool(synth_addresses(head + mid + tail, seed), std::move(weights));
}

DynamicPool uniform_dynamic_pool(std::size_t n, std::uint64_t seed)
{
    return DynamicPool(synth_addresses(n, seed), std::vector<double>(n, 1.0));
}

std::string sample_unit(const std::vector<DnsAnswer>& answers)
{
    std::vector<std::string> parts;
    parts.reserve(answers.size());
    for (const auto& ans : answers)
        parts.push_back(std::string(ans.type()) + ":" + ans.value());
    std::sort(parts.begin(), parts.end());
    std::string out;
    for (const auto& p : parts) {
        if (!out.empty())
            out.push_back('+');
        out += p;
    }
    return out;
}

std::vector<StaticSetDef> static_set_catalog(const std::vector<InjectionGroup>& groups)
{
    std::vector<StaticSetDef> out;
    for (const auto& g : groups) {
        if (g.mode == InjectionMode::Dynamic || g.mode == InjectionMode::StaticPerDomain)
            continue;
        StaticSetDef def{g.group_id, {}};
        for (const auto& choice : g.choices)
            def.units.push_back(sample_unit(choice));
        std::sort(def.units.begin(), def.units.end());
        out.push_back(std::move(def));
    }
    return out;
}

std::vector<DnsAnswer> static_answers(const std::vector<InjectionGroup>& groups)
{
    std::vector<DnsAnswer> out;
    for (const auto& g : groups)
        for (const auto& choice : g.choices)
            for (const auto& ans : choice)
                if (std::find(out.begin(), out.end(), ans) == out.end())
                    out.push_back(ans);
    return out;
}

} // namespace gfwlab
