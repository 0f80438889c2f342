#pragma once

#include "gfwlab/groups.hpp"
#include "gfwlab/records.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace gfwlab {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PoolEntry {
    DnsAnswer answer;
    Date first_seen;
    Date last_seen;
    std::uint64_t count = 0;
};

struct PoolDay {
    Date date;
    std::size_t unique = 0;     // distinct answers seen that day
    std::size_t added = 0;      // answers first seen that day
    std::size_t cumulative = 0; // distinct answers seen up to that day
};

/// Time-stamped multiset of forged answers, keyed by "TYPE:value".
class ForgedPool {
public:
    /// Tallies the forged answers of one record. Records whose identity was
    /// already ingested are ignored; returns whether anything was tallied.
    /// Responses with ground_truth_forged == false are skipped.
    bool ingest(const ProbeRecord& record);
    void ingest(std::span<const ProbeRecord> records);

    bool contains(const DnsAnswer& answer) const;
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    std::uint64_t total() const noexcept;
    const std::map<std::string, PoolEntry>& entries() const noexcept { return entries_; }

    /// Daily unique/new series in date order.
    std::vector<PoolDay> daily() const;

    /// Highest-count entries whose counts first reach `mass` of the total.
    ForgedPool truncated(double mass) const;

    /// CSV `answer,type,first_seen,last_seen,count`, sorted by key.
    void write_csv(std::ostream& out) const;
    static ForgedPool read_csv(std::istream& in);

private:
    std::map<std::string, PoolEntry> entries_;
    std::map<Date, std::set<std::string>> per_day_;
    std::set<std::string> ingested_;
};

std::string pool_key(const DnsAnswer& answer);

/// Answers ranked by descending weight, with the cumulative fraction at each rank.
struct FrequencyCdf {
    std::vector<std::string> answers;
    std::vector<double> weight;
    std::vector<double> cumulative;

    /// Smallest k whose top-k weight reaches `threshold` of the total.
    std::size_t rank_for(double threshold) const;
    void write_csv(std::ostream& out) const;
};

enum class AnswerFilter { Ipv4Only, All };

/// Throws DataError on an empty pool (after filtering).
FrequencyCdf frequency_cdf(const ForgedPool& pool, AnswerFilter filter = AnswerFilter::Ipv4Only);
/// The same ranking over a dynamic pool's configured weights.
FrequencyCdf frequency_cdf(const DynamicPool& pool);
std::size_t frequency_cdf(const ForgedPool& pool, double threshold, AnswerFilter filter = AnswerFilter::Ipv4Only);

enum class GroupKind { Unknown, StaticPerDomain, StaticSet, Dynamic };
std::string_view to_string(GroupKind k) noexcept;

struct GroupVerdict {
    Fqdn domain;
    GroupKind kind = GroupKind::Unknown;
    int group_id = -1; // StaticSet: catalog id; StaticPerDomain: 3; Dynamic: 10
    std::size_t samples = 0;
    std::set<std::string> units;
};

struct GroupInference {
    std::map<Fqdn, GroupVerdict> domains;
    const GroupVerdict* find(const Fqdn& domain) const;
};

/// Infers each domain's group from its forged A responses.
GroupInference infer_groups(std::span<const ProbeRecord> records, const std::vector<StaticSetDef>& catalog,
                            std::size_t n_min = 10);

struct InjectorReport {
    /// Injector id -> domains it answered for. In degraded mode 2 and 3 are merged under 2.
    std::map<int, std::set<Fqdn>> domains;
    std::size_t censored_domains = 0;
    bool degraded = false;
    bool subset_holds = true; // injector-3 domains within injector-2 domains

    double share(int injector) const;
    void write_csv(std::ostream& out) const;
};

/// (AA=1) -> 1, (AA=0, DF=1) -> 2, (AA=0, DF=0) -> 3; absent DF -> 2.
int injector_of(const WireResponse& response);
InjectorReport fingerprint_injectors(std::span<const ProbeRecord> records);

} // namespace gfwlab
