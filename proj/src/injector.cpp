#include "gfwlab/injector.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>

namespace gfwlab {

namespace {

double standard_normal_quantile(double p)
{
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double unit_hash(std::uint64_t seed, std::string_view key, std::uint64_t salt)
{
    return static_cast<double>(hash_str(key, mix64(seed ^ salt)) >> 11) * 0x1.0p-53;
}

} // namespace

DelayDist DelayDist::fit_lognormal(double p_lo, double x_lo, double p_hi, double x_hi)
{
    if (!(p_lo > 0 && p_lo < p_hi && p_hi < 1) || !(x_lo > 0 && x_lo < x_hi))
        throw std::invalid_argument("log-normal fit needs 0 < p_lo < p_hi < 1 and 0 < x_lo < x_hi");
    const double z_lo = standard_normal_quantile(p_lo);
    const double z_hi = standard_normal_quantile(p_hi);
    const double sigma = (std::log(x_hi) - std::log(x_lo)) / (z_hi - z_lo);
    const double mu = std::log(x_lo) - z_lo * sigma;
    return lognormal(mu, sigma);
}

double DelayDist::sample(Rng& rng) const
{
    switch (kind) {
    case Kind::Constant: return a;
    case Kind::LogNormal: return std::exp(a + b * rng.normal());
    case Kind::Uniform: return a + (b - a) * rng.uniform();
    }
    return a;
}

double DelayDist::quantile(double p) const
{
    switch (kind) {
    case Kind::Constant: return a;
    case Kind::LogNormal: return std::exp(a + b * standard_normal_quantile(p));
    case Kind::Uniform: return a + (b - a) * p;
    }
    return a;
}

double DelayDist::cdf(double x) const
{
    switch (kind) {
    case Kind::Constant: return x >= a ? 1.0 : 0.0;
    case Kind::LogNormal:
        if (x <= 0)
            return 0.0;
        return boost::math::cdf(boost::math::normal_distribution<double>(), (std::log(x) - a) / b);
    case Kind::Uniform: return std::clamp((x - a) / (b - a), 0.0, 1.0);
    }
    return 0.0;
}

std::vector<InjectorProfile> paper_profiles()
{
    // 1.7K of 311K domains are censored only by injector 1 (~0.55%), which
    // leaves injector 2 at 99.45%; injector 1 reaches 2K domains overall.
    return {
        {1, true, false, 0.0064},
        {2, false, true, 0.9945},
        {3, false, false, 0.64},
    };
}

RacePreset cn_race()
{
    constexpr double legit_ms = 400.0;
    return {DelayDist::fit_lognormal(0.01, legit_ms - 364.0, 0.999, legit_ms), DelayDist::constant(legit_ms), 0.999};
}

RacePreset us_race()
{
    constexpr double legit_ms = 150.0;
    return {DelayDist::fit_lognormal(0.11, legit_ms - 94.0, 0.89, legit_ms), DelayDist::constant(legit_ms), 0.89};
}

PathConfig paper_path(Blocklist blocklist, std::optional<RacePreset> race, std::uint64_t seed)
{
    PathConfig cfg;
    cfg.blocklist = std::move(blocklist);
    cfg.dynamic_pool = paper_dynamic_pool();
    cfg.seed = seed;
    if (race) {
        cfg.name = "race";
        cfg.forged_delay = race->forged;
        cfg.legit_delay = race->legit;
    } else {
        cfg.name = "sink";
        cfg.forged_delay = cn_race().forged;
    }
    return cfg;
}

InjectorSim::InjectorSim(PathConfig config) : config_(std::move(config)), rng_(config_.seed)
{
    for (std::size_t i = 0; i < config_.groups.size(); ++i) {
        const auto& g = config_.groups[i];
        if (!group_index_.emplace(g.group_id, i).second)
            throw ConfigError("duplicate group id " + std::to_string(g.group_id));
        if (g.mode != InjectionMode::Dynamic && g.choices.empty())
            throw ConfigError("group " + std::to_string(g.group_id) + " has no forged answers");
    }
    for (const auto& e : config_.blocklist.entries()) {
        auto it = group_index_.find(e.group_id);
        if (it == group_index_.end())
            throw ConfigError("blocklist entry " + e.base + " references unknown group "
                              + std::to_string(e.group_id));
        if (config_.groups[it->second].mode == InjectionMode::Dynamic && config_.dynamic_pool.size() == 0)
            throw ConfigError("dynamic group in use but the dynamic pool is empty");
    }
    for (const auto& p : config_.profiles) {
        const bool ok = (p.injector_id == 1 && p.aa_flag) || (p.injector_id == 2 && !p.aa_flag && p.df_flag)
                        || (p.injector_id == 3 && !p.aa_flag && !p.df_flag);
        if (!ok)
            throw ConfigError("injector " + std::to_string(p.injector_id) + " has a non-standard fingerprint");
        if (p.domain_share < 0 || p.domain_share > 1)
            throw ConfigError("injector share outside [0, 1]");
        if (!profile_by_id_.emplace(p.injector_id, p).second)
            throw ConfigError("duplicate injector id");
    }
    auto share = [&](int id) {
        auto it = profile_by_id_.find(id);
        return it == profile_by_id_.end() ? 0.0 : it->second.domain_share;
    };
    if (share(3) > share(2) + 1e-12)
        throw ConfigError("injector 3 must only censor domains injector 2 also censors");
    if (share(1) + share(2) < 1.0 - 1e-9)
        throw ConfigError("injector shares leave some censored domains without an injector");
    if (config_.miss_rate < 0 || config_.miss_rate > 1)
        throw ConfigError("miss_rate outside [0, 1]");
}

const InjectionGroup& InjectorSim::group(int id) const
{
    auto it = group_index_.find(id);
    if (it == group_index_.end())
        throw ConfigError("unknown group " + std::to_string(id));
    return config_.groups[it->second];
}

std::vector<int> InjectorSim::injectors_for(const BlockEntry& entry) const
{
    auto share = [&](int id) {
        auto it = profile_by_id_.find(id);
        return it == profile_by_id_.end() ? 0.0 : it->second.domain_share;
    };
    const std::string key = entry.base + "\t" + std::string(to_string(entry.rule_class));
    const double s1 = share(1), s2 = share(2), s3 = share(3);
    const std::uint64_t seed = config_.assignment_seed.value_or(config_.seed);
    const double only_first = 1.0 - s2;
    if (unit_hash(seed, key, 1) < only_first)
        return {1};
    std::vector<int> out;
    if (s2 > 0 && unit_hash(seed, key, 3) < std::max(0.0, s1 - only_first) / s2)
        out.push_back(1);
    out.push_back(2);
    if (s2 > 0 && unit_hash(seed, key, 2) < s3 / s2)
        out.push_back(3);
    return out;
}

std::size_t InjectorSim::static_choice_for(const InjectionGroup& g, const std::string& base) const
{
    if (auto it = g.per_domain.find(base); it != g.per_domain.end())
        return it->second % g.choices.size();
    return hash_str(base, mix64(config_.assignment_seed.value_or(config_.seed) ^ 0x5747)) % g.choices.size();
}

std::vector<DnsAnswer> InjectorSim::legit_answers(const Fqdn& qname, QType qtype) const
{
    if (auto it = config_.legit_records.find(qname.str()); it != config_.legit_records.end()) {
        std::vector<DnsAnswer> out;
        for (const auto& ans : it->second)
            if (ans.rr.index() == 2 || (qtype == QType::A) == (ans.rr.index() == 0))
                out.push_back(ans);
        return out;
    }
    const std::uint64_t h = hash_str(qname.str(), 0x6c65676974ULL);
    if (qtype == QType::A)
        return {{Ipv4{0xC6120000u | static_cast<std::uint32_t>(h & 0x1FFFF)}, 3600}};
    Ipv6 v6;
    v6.bytes[0] = 0xfd;
    for (std::size_t i = 1; i < 16; ++i)
        v6.bytes[i] = static_cast<std::uint8_t>(mix64(h + i));
    return {{v6, 3600}};
}

std::vector<DnsAnswer> InjectorSim::forged_answers(const BlockEntry& entry, QType qtype)
{
    std::vector<DnsAnswer> out;
    if (qtype == QType::AAAA) {
        Ipv6 v6;
        v6.bytes[0] = 0x20;
        v6.bytes[1] = 0x01;
        const std::uint64_t hi = rng_.next(), lo = rng_.next();
        for (std::size_t i = 0; i < 4; ++i)
            v6.bytes[4 + i] = static_cast<std::uint8_t>(hi >> (56 - 8 * i));
        for (std::size_t i = 0; i < 8; ++i)
            v6.bytes[8 + i] = static_cast<std::uint8_t>(lo >> (56 - 8 * i));
        out.push_back({v6, config_.forged_ttl});
        return out;
    }
    const auto& g = group(entry.group_id);
    switch (g.mode) {
    case InjectionMode::CnameOnly:
    case InjectionMode::CnamePlusIp:
    case InjectionMode::StaticSet: out = g.choices[rng_.below(g.choices.size())]; break;
    case InjectionMode::StaticPerDomain: out = g.choices[static_choice_for(g, entry.base)]; break;
    case InjectionMode::Dynamic: out.push_back({config_.dynamic_pool.sample(rng_)}); break;
    }
    for (auto& ans : out)
        ans.ttl = config_.forged_ttl;
    return out;
}

std::vector<WireResponse> InjectorSim::on_query(const DnsQuery& q)
{
    std::vector<WireResponse> out;
    if (auto entry = config_.blocklist.match(q.qname)) {
        std::vector<int> firing;
        for (int id : injectors_for(*entry))
            if (!rng_.bernoulli(config_.miss_rate))
                firing.push_back(id);
        // Random arrival order among the injectors that fired.
        for (std::size_t i = firing.size(); i > 1; --i)
            std::swap(firing[i - 1], firing[rng_.below(i)]);
        const double first = std::max(0.0, config_.forged_delay.sample(rng_));
        for (std::size_t i = 0; i < firing.size(); ++i) {
            const auto& profile = profile_by_id_.at(firing[i]);
            const double delay = i == 0 ? first : first + config_.injector_jitter_ms * rng_.uniform();
            WireResponse r;
            r.txid = q.txid;
            r.qname = q.qname;
            r.qtype = q.qtype;
            r.answers = forged_answers(*entry, q.qtype);
            r.aa_flag = profile.aa_flag;
            r.df_flag = profile.df_flag;
            r.received_at = q.sent_at + from_ms(delay);
            r.ground_truth_forged = true;
            out.push_back(std::move(r));
        }
    }
    if (config_.legit_delay) {
        WireResponse r;
        r.txid = q.txid;
        r.qname = q.qname;
        r.qtype = q.qtype;
        r.answers = legit_answers(q.qname, q.qtype);
        r.aa_flag = true;
        r.df_flag = true;
        r.received_at = q.sent_at + from_ms(std::max(0.0, config_.legit_delay->sample(rng_)));
        r.ground_truth_forged = false;
        out.push_back(std::move(r));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const WireResponse& x, const WireResponse& y) { return x.received_at < y.received_at; });
    return out;
}

} // namespace gfwlab
