#pragma once

#include "gfwlab/pool.hpp"
#include "gfwlab/transport.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace gfwlab {

enum class PoisonReason { TeredoV6, PoolHit, StaticGroupHit, FingerprintOnly };
std::string_view to_string(PoisonReason r) noexcept;

struct Verdict {
    enum class Kind { Poisoned, Legitimate, Unknown };
    Kind kind = Kind::Unknown;
    std::optional<PoisonReason> reason; // set iff Poisoned

    static Verdict poisoned(PoisonReason r) { return {Kind::Poisoned, r}; }
    static Verdict legitimate() { return {Kind::Legitimate, std::nullopt}; }
    static Verdict unknown() { return {Kind::Unknown, std::nullopt}; }
    bool is_poisoned() const noexcept { return kind == Kind::Poisoned; }
    friend bool operator==(const Verdict&, const Verdict&) = default;
};
std::string to_string(const Verdict& v);

/// Returns true when an independent trusted source confirms the response.
using TrustedCheck = std::function<bool(const WireResponse&)>;

/// Pool and group knowledge used to recognize forged answers.
class Detector {
public:
    Detector() = default;
    Detector(ForgedPool pool, GroupInference groups = {}, std::vector<StaticSetDef> catalog = {});

    /// TeredoV6 > PoolHit > StaticGroupHit; Legitimate only via `trusted`.
    Verdict classify(const WireResponse& response, const TrustedCheck& trusted = {}) const;

    const ForgedPool& pool() const noexcept { return pool_; }
    const GroupInference& groups() const noexcept { return groups_; }

private:
    bool static_group_hit(const WireResponse& response) const;

    ForgedPool pool_;
    GroupInference groups_;
    std::map<int, std::set<std::string>> group_keys_;
};

Verdict classify(const WireResponse& response, const ForgedPool& pool, const GroupInference& groups,
                 const std::vector<StaticSetDef>& catalog = {});

struct HoldOnPolicy {
    double window_ms = 400.0;
    std::set<Fqdn> apply_only_to;
    /// Hold on for every name, not only those in apply_only_to.
    bool force = false;
    bool backtoback = false;
    QType qtype = QType::A;
    /// Bound on the wait for the first response.
    double timeout_ms = 5000.0;
};

struct HoldOnResult {
    enum class Status { Resolved, Unresolvable, Ambiguous, NoResponse };
    Status status = Status::NoResponse;
    std::vector<DnsAnswer> answers;
    bool fast_path = false;
    int queries = 0;
    std::vector<WireResponse> transcript;

    bool ok() const noexcept { return status == Status::Resolved; }
};
std::string_view to_string(HoldOnResult::Status s) noexcept;

/// Hold-on stub resolver. Waits window_ms after the first response, drops
/// responses classified Poisoned and accepts a unique surviving answer set.
class HoldOnResolver {
public:
    HoldOnResolver(Transport& transport, const Detector& detector, HoldOnPolicy policy, std::uint64_t seed = 0x686f6c64);

    HoldOnResult resolve(const Fqdn& domain);
    const HoldOnPolicy& policy() const noexcept { return policy_; }

private:
    std::vector<WireResponse> collect(const Fqdn& domain, bool first_only, HoldOnResult& result);

    Transport& transport_;
    const Detector& detector_;
    HoldOnPolicy policy_;
    Rng rng_;
};

/// One-shot resolution; the query id is keyed by the domain and the transport clock.
HoldOnResult holdon_resolve(const Fqdn& domain, const HoldOnPolicy& policy, Transport& transport,
                            const Detector& detector);

/// Labels a response as forged for delta computation.
using ForgedLabeler = std::function<bool(const WireResponse&)>;
/// Simulator ground truth (absent ground truth counts as legitimate).
bool ground_truth_label(const WireResponse& response);

struct DeltaStats {
    std::vector<double> deltas_ms; // ascending; positive means forged arrived first
    std::size_t skipped = 0;       // records without exactly one legitimate and one or more forged

    bool empty() const noexcept { return deltas_ms.empty(); }
    /// Linear interpolation between order statistics; p in [0, 1].
    double quantile(double p) const;
    double forged_first_fraction() const;
    /// CSV `percentile,delta_ms` at 1, 11, 50, 89, 99.
    void write_summary_csv(std::ostream& out) const;
    /// CSV `delta_ms,cdf`.
    void write_cdf_csv(std::ostream& out) const;
};

DeltaStats delta_stats(std::span<const ProbeRecord> records, const ForgedLabeler& forged = ground_truth_label);

/// Window suggestion from known-censored transcripts: 99th-percentile delta plus 10%.
double calibrate_window(const DeltaStats& stats);

struct AuditReport {
    std::string resolver;
    std::size_t domains_tested = 0;
    std::size_t polluted = 0;
    std::size_t unmeasured = 0;
    std::vector<std::pair<Fqdn, std::string>> examples; // domain, poisoned answer

    void write_csv(std::ostream& out) const; // resolver,domains_tested,polluted,unmeasured
};

/// One query per (domain, qtype) to a resolver; a domain is polluted if any
/// answer classifies Poisoned and unmeasured if no qtype got a reply.
AuditReport audit_resolver(Transport& resolver, std::span<const Fqdn> domains, const Detector& detector,
                           double timeout_ms = 2000.0, std::size_t max_examples = 10);

} // namespace gfwlab
