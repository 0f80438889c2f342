#include "gfwlab/sentry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace gfwlab {

std::string_view to_string(PoisonReason r) noexcept
{
    switch (r) {
    case PoisonReason::TeredoV6: return "teredo-v6";
    case PoisonReason::PoolHit: return "pool-hit";
    case PoisonReason::StaticGroupHit: return "static-group-hit";
    case PoisonReason::FingerprintOnly: return "fingerprint-only";
    }
    return "?";
}

std::string to_string(const Verdict& v)
{
    switch (v.kind) {
    case Verdict::Kind::Poisoned: return "poisoned(" + std::string(to_string(*v.reason)) + ")";
    case Verdict::Kind::Legitimate: return "legitimate";
    case Verdict::Kind::Unknown: return "unknown";
    }
    return "?";
}

namespace {

std::set<std::string> unit_keys(const std::string& unit)
{
    std::set<std::string> out;
    std::size_t start = 0;
    while (start <= unit.size()) {
        const auto plus = unit.find('+', start);
        const auto end = plus == std::string::npos ? unit.size() : plus;
        if (end > start)
            out.insert(unit.substr(start, end - start));
        if (plus == std::string::npos)
            break;
        start = plus + 1;
    }
    return out;
}

} // namespace

Detector::Detector(ForgedPool pool, GroupInference groups, std::vector<StaticSetDef> catalog)
    : pool_(std::move(pool)), groups_(std::move(groups))
{
    for (const auto& def : catalog)
        for (const auto& unit : def.units)
            group_keys_[def.group_id].merge(unit_keys(unit));
}

bool Detector::static_group_hit(const WireResponse& response) const
{
    const auto* v = groups_.find(response.qname);
    if (!v)
        return false;
    std::set<std::string> keys;
    if (v->kind == GroupKind::StaticSet) {
        if (auto it = group_keys_.find(v->group_id); it != group_keys_.end())
            keys = it->second;
    } else if (v->kind == GroupKind::StaticPerDomain) {
        for (const auto& unit : v->units)
            keys.merge(unit_keys(unit));
    }
    return std::any_of(response.answers.begin(), response.answers.end(),
                       [&](const DnsAnswer& a) { return keys.contains(pool_key(a)); });
}

Verdict Detector::classify(const WireResponse& response, const TrustedCheck& trusted) const
{
    for (const auto& a : response.answers)
        if (const auto* v6 = std::get_if<Ipv6>(&a.rr); v6 && v6->in_teredo())
            return Verdict::poisoned(PoisonReason::TeredoV6);
    for (const auto& a : response.answers)
        if (pool_.contains(a))
            return Verdict::poisoned(PoisonReason::PoolHit);
    if (static_group_hit(response))
        return Verdict::poisoned(PoisonReason::StaticGroupHit);
    if (trusted && trusted(response))
        return Verdict::legitimate();
    return Verdict::unknown();
}

Verdict classify(const WireResponse& response, const ForgedPool& pool, const GroupInference& groups,
                 const std::vector<StaticSetDef>& catalog)
{
    return Detector(pool, groups, catalog).classify(response);
}

std::string_view to_string(HoldOnResult::Status s) noexcept
{
    switch (s) {
    case HoldOnResult::Status::Resolved: return "resolved";
    case HoldOnResult::Status::Unresolvable: return "unresolvable";
    case HoldOnResult::Status::Ambiguous: return "ambiguous";
    case HoldOnResult::Status::NoResponse: return "no-response";
    }
    return "?";
}

HoldOnResolver::HoldOnResolver(Transport& transport, const Detector& detector, HoldOnPolicy policy,
                               std::uint64_t seed)
    : transport_(transport), detector_(detector), policy_(std::move(policy)), rng_(seed)
{
    if (!(policy_.window_ms > 0.0))
        throw std::invalid_argument("hold-on window must be positive");
}

std::vector<WireResponse> HoldOnResolver::collect(const Fqdn& domain, bool first_only, HoldOnResult& result)
{
    DnsQuery q{static_cast<std::uint16_t>(rng_.below(65536)), domain, policy_.qtype, {}};
    q = transport_.send(q);
    ++result.queries;
    const auto key = key_of(q);
    std::vector<WireResponse> got;
    Timestamp deadline = q.sent_at + from_ms(policy_.timeout_ms);
    while (transport_.now() < deadline) {
        for (auto& r : transport_.poll_some(deadline)) {
            if (key_of(r) != key)
                continue;
            if (got.empty()) {
                if (first_only) {
                    got.push_back(std::move(r));
                    return got;
                }
                deadline = r.received_at + from_ms(policy_.window_ms);
            }
            if (r.received_at <= deadline)
                got.push_back(std::move(r));
        }
    }
    return got;
}

HoldOnResult HoldOnResolver::resolve(const Fqdn& domain)
{
    HoldOnResult result;
    const bool hold = policy_.force || policy_.apply_only_to.contains(domain);
    if (!hold) {
        result.fast_path = true;
        auto first = collect(domain, true, result);
        if (!first.empty()) {
            result.status = HoldOnResult::Status::Resolved;
            result.answers = first.front().answers;
        }
        result.transcript = std::move(first);
        return result;
    }

    auto candidates = [&](const std::vector<WireResponse>& rs) {
        std::map<std::string, std::vector<DnsAnswer>> out;
        for (const auto& r : rs)
            if (!detector_.classify(r).is_poisoned())
                out.emplace(sample_unit(r.answers), r.answers);
        return out;
    };

    auto first = collect(domain, false, result);
    result.transcript = first;
    if (first.empty())
        return result;
    const auto c1 = candidates(first);
    if (c1.size() == 1) {
        result.status = HoldOnResult::Status::Resolved;
        result.answers = c1.begin()->second;
        return result;
    }
    if (c1.empty()) {
        result.status = HoldOnResult::Status::Unresolvable;
        return result;
    }
    result.status = HoldOnResult::Status::Ambiguous;
    if (!policy_.backtoback)
        return result;

    auto second = collect(domain, false, result);
    result.transcript.insert(result.transcript.end(), second.begin(), second.end());
    const auto c2 = candidates(second);
    std::vector<const std::vector<DnsAnswer>*> stable;
    for (const auto& [unit, answers] : c1)
        if (c2.contains(unit))
            stable.push_back(&answers);
    if (stable.size() == 1) {
        result.status = HoldOnResult::Status::Resolved;
        result.answers = *stable.front();
    }
    return result;
}

HoldOnResult holdon_resolve(const Fqdn& domain, const HoldOnPolicy& policy, Transport& transport,
                            const Detector& detector)
{
    HoldOnResolver resolver(transport, detector, policy,
                            hash_str(domain.str(), static_cast<std::uint64_t>(transport.now().count())));
    return resolver.resolve(domain);
}

bool ground_truth_label(const WireResponse& response)
{
    return response.ground_truth_forged.value_or(false);
}

double DeltaStats::quantile(double p) const
{
    if (deltas_ms.empty())
        throw DataError("no deltas");
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("quantile p must be in [0, 1]");
    const double h = p * static_cast<double>(deltas_ms.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, deltas_ms.size() - 1);
    return deltas_ms[lo] + (h - static_cast<double>(lo)) * (deltas_ms[hi] - deltas_ms[lo]);
}

double DeltaStats::forged_first_fraction() const
{
    if (deltas_ms.empty())
        return 0.0;
    const auto first = std::upper_bound(deltas_ms.begin(), deltas_ms.end(), 0.0);
    return static_cast<double>(deltas_ms.end() - first) / static_cast<double>(deltas_ms.size());
}

void DeltaStats::write_summary_csv(std::ostream& out) const
{
    out << "percentile,delta_ms\n";
    if (deltas_ms.empty())
        return;
    char buf[64];
    for (int p : {1, 11, 50, 89, 99}) {
        std::snprintf(buf, sizeof buf, "%d,%.3f\n", p, quantile(p / 100.0));
        out << buf;
    }
}

void DeltaStats::write_cdf_csv(std::ostream& out) const
{
    out << "delta_ms,cdf\n";
    char buf[64];
    const double n = static_cast<double>(deltas_ms.size());
    for (std::size_t i = 0; i < deltas_ms.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.3f,%.6f\n", deltas_ms[i], static_cast<double>(i + 1) / n);
        out << buf;
    }
}

DeltaStats delta_stats(std::span<const ProbeRecord> records, const ForgedLabeler& forged)
{
    DeltaStats out;
    for (const auto& rec : records) {
        std::optional<Timestamp> first_forged;
        std::vector<Timestamp> legit;
        for (const auto& r : rec.responses) {
            if (forged(r))
                first_forged = first_forged ? std::min(*first_forged, r.received_at) : r.received_at;
            else
                legit.push_back(r.received_at);
        }
        if (!first_forged || legit.size() != 1) {
            ++out.skipped;
            continue;
        }
        out.deltas_ms.push_back(to_ms(legit.front() - *first_forged));
    }
    std::sort(out.deltas_ms.begin(), out.deltas_ms.end());
    return out;
}

double calibrate_window(const DeltaStats& stats)
{
    if (stats.empty())
        throw DataError("calibration needs transcripts with both forged and legitimate responses");
    return std::max(1.0, stats.quantile(0.99) * 1.1);
}

void AuditReport::write_csv(std::ostream& out) const
{
    out << "resolver,domains_tested,polluted,unmeasured\n";
    out << resolver << ',' << domains_tested << ',' << polluted << ',' << unmeasured << '\n';
}

AuditReport audit_resolver(Transport& resolver, std::span<const Fqdn> domains, const Detector& detector,
                           double timeout_ms, std::size_t max_examples)
{
    AuditReport report;
    report.resolver = resolver.name();
    Rng rng(hash_str(report.resolver));
    for (const auto& domain : domains) {
        ++report.domains_tested;
        bool answered = false;
        std::optional<std::string> poisoned;
        for (QType qtype : {QType::A, QType::AAAA}) {
            DnsQuery q{static_cast<std::uint16_t>(rng.below(65536)), domain, qtype, {}};
            try {
                q = resolver.send(q);
                const Timestamp deadline = q.sent_at + from_ms(timeout_ms);
                bool got = false;
                while (!got && resolver.now() < deadline) {
                    for (const auto& r : resolver.poll_some(deadline)) {
                        if (key_of(r) != key_of(q))
                            continue;
                        got = true;
                        for (const auto& a : r.answers) {
                            WireResponse single = r;
                            single.answers = {a};
                            if (!poisoned && detector.classify(single).is_poisoned())
                                poisoned = pool_key(a);
                        }
                        break;
                    }
                }
                answered = answered || got;
            } catch (const TransportError&) {
            }
        }
        if (!answered) {
            ++report.unmeasured;
        } else if (poisoned) {
            ++report.polluted;
            if (report.examples.size() < max_examples)
                report.examples.emplace_back(domain, *poisoned);
        }
    }
    return report;
}

} // namespace gfwlab
