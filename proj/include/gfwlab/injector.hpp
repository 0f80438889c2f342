#pragma once

#include "gfwlab/blockrule.hpp"
#include "gfwlab/groups.hpp"
#include "gfwlab/rng.hpp"
#include "gfwlab/wire.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gfwlab {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A delay distribution in milliseconds.
struct DelayDist {
    enum class Kind { Constant, LogNormal, Uniform };
    Kind kind = Kind::Constant;
    double a = 0.0; // constant value | log-mean | lower bound
    double b = 0.0; // unused         | log-sd   | upper bound

    static DelayDist constant(double ms) { return {Kind::Constant, ms, 0.0}; }
    static DelayDist lognormal(double mu, double sigma) { return {Kind::LogNormal, mu, sigma}; }
    static DelayDist uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }

    /// Log-normal through two quantile anchors: P(X <= x_lo) = p_lo, P(X <= x_hi) = p_hi.
    static DelayDist fit_lognormal(double p_lo, double x_lo, double p_hi, double x_hi);

    double sample(Rng& rng) const;
    double quantile(double p) const;
    double cdf(double x) const;
};

/// Fingerprint of one injection process.
struct InjectorProfile {
    int injector_id = 2;
    bool aa_flag = false;
    bool df_flag = true;
    double domain_share = 0.99;
};

/// Injectors 1/2/3 with AA/DF fingerprints and per-domain shares
/// (injector 2: 99.45%, injector 3: 64%, injector 1: 0.64%).
std::vector<InjectorProfile> paper_profiles();

struct PathConfig {
    std::string name = "sim";
    Blocklist blocklist;
    std::vector<InjectorProfile> profiles = paper_profiles();
    std::vector<InjectionGroup> groups = paper_groups();
    DynamicPool dynamic_pool;
    DelayDist forged_delay = DelayDist::constant(5.0);
    /// Absent: the destination is a silent sink.
    std::optional<DelayDist> legit_delay;
    /// Later injectors trail the first forged response by U(0, jitter).
    double injector_jitter_ms = 2.0;
    double miss_rate = 0.0;
    std::uint32_t forged_ttl = 300;
    std::uint64_t seed = 1;
    /// Keys the per-entry injector sets and static choices; defaults to `seed`.
    std::optional<std::uint64_t> assignment_seed;
    /// Optional ground-truth records for the legitimate responder; names
    /// missing here get a synthetic, stable answer.
    std::map<std::string, std::vector<DnsAnswer>> legit_records;
};

/// Delay presets reproducing the forged-vs-legitimate race observed from
/// each vantage point. Legitimate responses use a fixed delay.
struct RacePreset {
    DelayDist forged;
    DelayDist legit;
    double forged_first = 0.0; // P(forged arrives first)
};
/// Forged first with p = 0.999; 99th percentile of (legit - forged) = 364 ms.
RacePreset cn_race();
/// Forged first with p = 0.89; 89th percentile of (legit - forged) = 94 ms.
RacePreset us_race();

/// Reference path: the eleven injection groups, the 1,781-IP dynamic pool and the three injector profiles.
PathConfig paper_path(Blocklist blocklist, std::optional<RacePreset> race, std::uint64_t seed);

/// The man-on-the-side simulator for one path. Holds the path's random
/// stream, so identical seed and query sequence yield identical output.
class InjectorSim {
public:
    /// Throws ConfigError on unknown group ids or inconsistent profiles.
    explicit InjectorSim(PathConfig config);

    /// Responses triggered by `q`, with received_at = q.sent_at + delay,
    /// sorted by arrival. Forged responses carry ground_truth_forged = true.
    std::vector<WireResponse> on_query(const DnsQuery& q);

    /// Injector ids firing for an entry (fixed per entry for the seed).
    std::vector<int> injectors_for(const BlockEntry& entry) const;
    /// The StaticPerDomain answer index assigned to a base.
    std::size_t static_choice_for(const InjectionGroup& group, const std::string& base) const;
    /// What the legitimate responder returns for a name.
    std::vector<DnsAnswer> legit_answers(const Fqdn& qname, QType qtype) const;

    const PathConfig& config() const noexcept { return config_; }
    const InjectionGroup& group(int id) const;

private:
    std::vector<DnsAnswer> forged_answers(const BlockEntry& entry, QType qtype);

    PathConfig config_;
    std::map<int, std::size_t> group_index_;
    std::map<int, InjectorProfile> profile_by_id_;
    Rng rng_;
};

} // namespace gfwlab
