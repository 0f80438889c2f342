#pragma once

#include "gfwlab/records.hpp"
#include "gfwlab/rng.hpp"
#include "gfwlab/transport.hpp"

#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <vector>

namespace gfwlab {

struct ProbePlan {
    std::vector<Fqdn> domains;
    int rounds = 3;
    double pacing_qps = 10000.0;
    Timestamp window = std::chrono::milliseconds(2000);
    std::vector<QType> qtypes{QType::A, QType::AAAA};
    std::uint64_t seed = 1;
    Date date;
};

/// Open correlation slots keyed by (txid, qname, qtype). Responses inside
/// the window join their slot in arrival order; responses for an expired
/// slot count as late, responses for no known slot count as dropped.
/// Safe for concurrent use by a sender and a receiver.
class Correlator {
public:
    struct Closed {
        DnsQuery query;
        std::vector<WireResponse> responses;
    };

    explicit Correlator(Timestamp window);

    void open(const DnsQuery& sent);
    void deliver(WireResponse response);
    /// Closes and returns every slot whose window ended before `now`, in send order.
    std::vector<Closed> expire(Timestamp now);
    /// Closes everything regardless of time.
    std::vector<Closed> drain();

    std::size_t open_slots() const;
    std::size_t dropped() const;
    std::size_t late() const;
    Timestamp window() const noexcept { return window_; }
    /// Latest deadline among open slots, or zero if none.
    Timestamp last_deadline() const;

private:
    struct Slot {
        std::uint64_t order;
        DnsQuery query;
        Timestamp deadline;
        std::vector<WireResponse> responses;
    };

    std::vector<Closed> close_if(const std::function<bool(const Slot&)>& pred);

    Timestamp window_;
    mutable std::mutex mu_;
    std::map<CorrelationKey, Slot> open_;
    std::map<CorrelationKey, Timestamp> recently_closed_; // key -> retention end
    std::uint64_t next_order_ = 0;
    std::size_t dropped_ = 0;
    std::size_t late_ = 0;
};

struct CorrelatedGroup {
    std::vector<WireResponse> responses;
    std::size_t dropped = 0;
    std::size_t late = 0;
};

/// Groups `inbound` against one sent query. Arrivals at exactly
/// sent_at + window are kept; later ones count as late.
CorrelatedGroup correlate(const DnsQuery& sent, std::span<const WireResponse> inbound, Timestamp window);

using RecordSink = std::function<void(ProbeRecord&&)>;

/// Probes every domain `rounds` times per path for each qtype, pacing sends
/// with a token bucket. Emits one record per (domain, qtype, round) in
/// completion order. Transport failures yield Inconclusive records.
void probe_domains(const ProbePlan& plan, std::span<Transport* const> paths, const RecordSink& sink);
std::vector<ProbeRecord> probe_domains(const ProbePlan& plan, std::span<Transport* const> paths);

/// Per (path, qname) verdict aggregated over rounds and qtypes: Censored if
/// any round saw a response, NotCensored if all were silent, Inconclusive otherwise.
struct DomainVerdict {
    std::string path;
    Fqdn qname;
    ProbeVerdict verdict = ProbeVerdict::NotCensored;
    int rounds_censored = 0;
    int rounds_total = 0;
};
std::vector<DomainVerdict> summarize(std::span<const ProbeRecord> records);

/// Sorted, de-duplicated censored names among `records`.
std::vector<Fqdn> censored_domains(std::span<const ProbeRecord> records);

struct Agreement {
    Fqdn qname;
    ProbeVerdict reverse_verdict = ProbeVerdict::NotCensored;
    bool agree = false;
};

/// Re-probes each censored domain across the reverse path; disagreement is
/// reported, not discarded. Throws std::invalid_argument on non-Censored input.
std::vector<Agreement> verify_inside(std::span<const ProbeRecord> censored, Transport& reverse_path,
                                     const ProbePlan& plan);

/// Sequential single-name prober, the building block for rule discovery.
/// A name is Censored as soon as any of `rounds` queries draws a response.
class Prober {
public:
    struct Options {
        int rounds = 3;
        Timestamp window = std::chrono::milliseconds(2000);
        QType qtype = QType::A;
        std::uint64_t seed = 7;
    };

    Prober(Transport& transport, Options options);

    ProbeVerdict probe(const Fqdn& name);
    /// Invalid names cannot be sent and count as NotCensored.
    ProbeVerdict probe(std::string_view name);

    std::size_t queries_sent() const noexcept { return queries_; }
    std::size_t probes() const noexcept { return probes_; }

private:
    Transport& transport_;
    Options options_;
    Rng rng_;
    std::size_t queries_ = 0;
    std::size_t probes_ = 0;
};

} // namespace gfwlab
