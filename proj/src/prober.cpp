#include "gfwlab/prober.hpp"

#include <algorithm>
#include <set>

namespace gfwlab {

Correlator::Correlator(Timestamp window) : window_(window)
{
    if (window <= Timestamp::zero())
        throw std::invalid_argument("correlation window must be positive");
}

void Correlator::open(const DnsQuery& sent)
{
    std::lock_guard lock(mu_);
    auto key = key_of(sent);
    recently_closed_.erase(key);
    open_.insert_or_assign(std::move(key), Slot{next_order_++, sent, sent.sent_at + window_, {}});
}

void Correlator::deliver(WireResponse response)
{
    std::lock_guard lock(mu_);
    const auto key = key_of(response);
    if (auto it = open_.find(key); it != open_.end()) {
        if (response.received_at <= it->second.deadline)
            it->second.responses.push_back(std::move(response));
        else
            ++late_;
        return;
    }
    if (auto it = recently_closed_.find(key); it != recently_closed_.end() && response.received_at <= it->second) {
        ++late_;
        return;
    }
    ++dropped_;
}

std::vector<Correlator::Closed> Correlator::close_if(const std::function<bool(const Slot&)>& pred)
{
    std::vector<Slot> closing;
    for (auto it = open_.begin(); it != open_.end();) {
        if (pred(it->second)) {
            recently_closed_.insert_or_assign(it->first, it->second.deadline + window_);
            closing.push_back(std::move(it->second));
            it = open_.erase(it);
        } else {
            ++it;
        }
    }
    std::sort(closing.begin(), closing.end(), [](const Slot& a, const Slot& b) { return a.order < b.order; });
    std::vector<Closed> out;
    out.reserve(closing.size());
    for (auto& s : closing)
        out.push_back({std::move(s.query), std::move(s.responses)});
    return out;
}

std::vector<Correlator::Closed> Correlator::expire(Timestamp now)
{
    std::lock_guard lock(mu_);
    std::erase_if(recently_closed_, [&](const auto& kv) { return kv.second < now; });
    return close_if([&](const Slot& s) { return s.deadline < now; });
}

std::vector<Correlator::Closed> Correlator::drain()
{
    std::lock_guard lock(mu_);
    return close_if([](const Slot&) { return true; });
}

std::size_t Correlator::open_slots() const
{
    std::lock_guard lock(mu_);
    return open_.size();
}

std::size_t Correlator::dropped() const
{
    std::lock_guard lock(mu_);
    return dropped_;
}

std::size_t Correlator::late() const
{
    std::lock_guard lock(mu_);
    return late_;
}

Timestamp Correlator::last_deadline() const
{
    std::lock_guard lock(mu_);
    Timestamp last{0};
    for (const auto& [key, slot] : open_)
        last = std::max(last, slot.deadline);
    return last;
}

CorrelatedGroup correlate(const DnsQuery& sent, std::span<const WireResponse> inbound, Timestamp window)
{
    Correlator c(window);
    c.open(sent);
    for (const auto& r : inbound)
        c.deliver(r);
    auto closed = c.drain();
    CorrelatedGroup out;
    if (!closed.empty())
        out.responses = std::move(closed.front().responses);
    out.dropped = c.dropped();
    out.late = c.late();
    return out;
}

namespace {

ProbeVerdict verdict_of(const std::vector<WireResponse>& responses)
{
    return responses.empty() ? ProbeVerdict::NotCensored : ProbeVerdict::Censored;
}

void probe_path(const ProbePlan& plan, Transport& transport, const RecordSink& sink)
{
    if (!(plan.pacing_qps > 0))
        throw std::invalid_argument("pacing must be positive");
    if (plan.rounds < 1)
        throw std::invalid_argument("rounds must be at least 1");

    const std::string path = transport.name();
    Rng rng(mix64(plan.seed) ^ hash_str(path));
    Correlator corr(plan.window);
    std::map<CorrelationKey, int> round_of;
    const auto interval = std::chrono::duration_cast<Timestamp>(std::chrono::duration<double>(1.0 / plan.pacing_qps));

    auto emit = [&](Correlator::Closed&& c, ProbeVerdict verdict, std::string error) {
        ProbeRecord rec;
        rec.date = plan.date;
        rec.path = path;
        rec.qname = c.query.qname;
        rec.qtype = c.query.qtype;
        rec.txid = c.query.txid;
        rec.sent_at = c.query.sent_at;
        auto it = round_of.find(key_of(c.query));
        if (it != round_of.end()) {
            rec.round = it->second;
            round_of.erase(it);
        }
        rec.responses = std::move(c.responses);
        rec.verdict = verdict;
        rec.error = std::move(error);
        sink(std::move(rec));
    };
    auto pump = [&](Timestamp until) {
        try {
            for (auto& r : transport.poll(until))
                corr.deliver(std::move(r));
        } catch (const TransportError& e) {
            for (auto& c : corr.drain())
                emit(std::move(c), ProbeVerdict::Inconclusive, e.what());
            return;
        }
        for (auto& c : corr.expire(transport.now())) {
            const auto v = verdict_of(c.responses);
            emit(std::move(c), v, {});
        }
    };

    Timestamp next_send = transport.now();
    for (int round = 1; round <= plan.rounds; ++round) {
        for (const auto& name : plan.domains) {
            for (QType qtype : plan.qtypes) {
                pump(next_send);
                DnsQuery q{static_cast<std::uint16_t>(rng.below(65536)), name, qtype, {}};
                while (round_of.contains(key_of(q)))
                    q.txid = static_cast<std::uint16_t>(rng.below(65536));
                try {
                    q = transport.send(q);
                    round_of.emplace(key_of(q), round);
                    corr.open(q);
                } catch (const TransportError& e) {
                    round_of.emplace(key_of(q), round);
                    emit({q, {}}, ProbeVerdict::Inconclusive, e.what());
                }
                next_send = std::max(next_send + interval, transport.now());
            }
        }
    }
    while (corr.open_slots() > 0) {
        const Timestamp until = corr.last_deadline() + Timestamp(1);
        pump(until);
        if (transport.now() < until)
            continue;
        for (auto& c : corr.expire(until + Timestamp(1))) {
            const auto v = verdict_of(c.responses);
            emit(std::move(c), v, {});
        }
    }
}

} // namespace

void probe_domains(const ProbePlan& plan, std::span<Transport* const> paths, const RecordSink& sink)
{
    for (Transport* t : paths)
        probe_path(plan, *t, sink);
}

std::vector<ProbeRecord> probe_domains(const ProbePlan& plan, std::span<Transport* const> paths)
{
    std::vector<ProbeRecord> out;
    probe_domains(plan, paths, [&](ProbeRecord&& r) { out.push_back(std::move(r)); });
    return out;
}

std::vector<DomainVerdict> summarize(std::span<const ProbeRecord> records)
{
    std::map<std::pair<std::string, Fqdn>, DomainVerdict> acc;
    std::map<std::pair<std::string, Fqdn>, bool> any_inconclusive;
    for (const auto& r : records) {
        auto& d = acc[{r.path, r.qname}];
        d.path = r.path;
        d.qname = r.qname;
        ++d.rounds_total;
        if (r.verdict == ProbeVerdict::Censored)
            ++d.rounds_censored;
        if (r.verdict == ProbeVerdict::Inconclusive)
            any_inconclusive[{r.path, r.qname}] = true;
    }
    std::vector<DomainVerdict> out;
    for (auto& [key, d] : acc) {
        if (d.rounds_censored > 0)
            d.verdict = ProbeVerdict::Censored;
        else if (any_inconclusive.contains(key))
            d.verdict = ProbeVerdict::Inconclusive;
        else
            d.verdict = ProbeVerdict::NotCensored;
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<Fqdn> censored_domains(std::span<const ProbeRecord> records)
{
    std::set<Fqdn> names;
    for (const auto& r : records)
        if (r.verdict == ProbeVerdict::Censored)
            names.insert(r.qname);
    return {names.begin(), names.end()};
}

std::vector<Agreement> verify_inside(std::span<const ProbeRecord> censored, Transport& reverse_path,
                                     const ProbePlan& plan)
{
    std::set<Fqdn> names;
    for (const auto& r : censored) {
        if (r.verdict != ProbeVerdict::Censored)
            throw std::invalid_argument("verify_inside expects Censored records only");
        names.insert(r.qname);
    }
    Prober prober(reverse_path, {plan.rounds, plan.window, QType::A, mix64(plan.seed ^ 0x696e73)});
    std::vector<Agreement> out;
    for (const auto& name : names) {
        const auto v = prober.probe(name);
        out.push_back({name, v, v == ProbeVerdict::Censored});
    }
    return out;
}

Prober::Prober(Transport& transport, Options options)
    : transport_(transport), options_(options), rng_(options.seed)
{
    if (options_.rounds < 1)
        throw std::invalid_argument("rounds must be at least 1");
}

ProbeVerdict Prober::probe(std::string_view name)
{
    auto fqdn = Fqdn::try_parse(name);
    if (!fqdn)
        return ProbeVerdict::NotCensored;
    return probe(*fqdn);
}

ProbeVerdict Prober::probe(const Fqdn& name)
{
    ++probes_;
    int failures = 0;
    for (int round = 0; round < options_.rounds; ++round) {
        DnsQuery q{static_cast<std::uint16_t>(rng_.below(65536)), name, options_.qtype, {}};
        try {
            q = transport_.send(q);
            ++queries_;
            const Timestamp deadline = q.sent_at + options_.window;
            while (transport_.now() < deadline) {
                for (const auto& r : transport_.poll_some(deadline))
                    if (key_of(r) == key_of(q))
                        return ProbeVerdict::Censored;
            }
        } catch (const TransportError&) {
            ++failures;
        }
    }
    return failures == options_.rounds ? ProbeVerdict::Inconclusive : ProbeVerdict::NotCensored;
}

} // namespace gfwlab
