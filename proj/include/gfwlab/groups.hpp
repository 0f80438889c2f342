#pragma once

#include "gfwlab/rng.hpp"
#include "gfwlab/wire.hpp"

#include <map>
#include <string>
#include <vector>

namespace gfwlab {

enum class InjectionMode { CnameOnly, CnamePlusIp, StaticPerDomain, StaticSet, Dynamic };

std::string_view to_string(InjectionMode m) noexcept;

/// One injection group. `choices` holds the alternatives the injector picks
/// from; each alternative is the full answer list of one forged response.
struct InjectionGroup {
    int group_id = 10;
    InjectionMode mode = InjectionMode::Dynamic;
    std::vector<std::vector<DnsAnswer>> choices;
    /// StaticPerDomain only: base -> index into `choices`.
    std::map<std::string, std::size_t> per_domain;
};

/// Weighted forged-IPv4 pool behind the dynamic group.
class DynamicPool {
public:
    DynamicPool() = default;
    DynamicPool(std::vector<Ipv4> addrs, std::vector<double> weights);

    Ipv4 sample(Rng& rng) const { return addrs_[table_.sample(rng)]; }

    const std::vector<Ipv4>& addresses() const noexcept { return addrs_; }
    /// Normalized to sum 1, same order as addresses().
    const std::vector<double>& weights() const noexcept { return weights_; }
    std::size_t size() const noexcept { return addrs_.size(); }

private:
    std::vector<Ipv4> addrs_;
    std::vector<double> weights_;
    AliasTable table_;
};

/// The eleven groups with their forged IPs/CNAMEs (group 10 payload lives in DynamicPool).
std::vector<InjectionGroup> paper_groups();

/// 1,781 addresses with a long-tail weight profile: the top 200 carry 54% of
/// the mass, ranks 201-600 a further 45.09%, the remaining 1,181 share 0.91%.
/// Weights are strictly decreasing in list order. Addresses avoid every
/// static-group IP and the 198.18.0.0/15 range used for legitimate answers.
DynamicPool paper_dynamic_pool(std::uint64_t seed = 0x6766776c6162ULL);

/// A smaller uniform pool of `n` addresses (same exclusions), for quick tests.
DynamicPool uniform_dynamic_pool(std::size_t n, std::uint64_t seed);

/// Static sets usable for group inference: every group except 3 (per-domain)
/// and 10 (dynamic). Each alternative is rendered as a sample unit string.
struct StaticSetDef {
    int group_id = 0;
    std::vector<std::string> units;
};
std::vector<StaticSetDef> static_set_catalog(const std::vector<InjectionGroup>& groups);

/// Canonical text of one response's answer list, order-independent.
std::string sample_unit(const std::vector<DnsAnswer>& answers);

/// Every static answer (IPs and CNAMEs) in groups 0-9.
std::vector<DnsAnswer> static_answers(const std::vector<InjectionGroup>& groups);

} // namespace gfwlab
