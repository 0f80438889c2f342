#include "gfwlab/pool.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace gfwlab {

std::string pool_key(const DnsAnswer& answer)
{
    return std::string(answer.type()) + ":" + answer.value();
}

bool ForgedPool::ingest(const ProbeRecord& record)
{
    if (!ingested_.insert(record.identity()).second)
        return false;
    bool any = false;
    for (const auto& r : record.responses) {
        if (r.ground_truth_forged == false)
            continue;
        for (const auto& ans : r.answers) {
            auto key = pool_key(ans);
            auto [it, fresh] = entries_.try_emplace(key, PoolEntry{ans, record.date, record.date, 0});
            auto& e = it->second;
            if (!fresh) {
                e.first_seen = std::min(e.first_seen, record.date);
                e.last_seen = std::max(e.last_seen, record.date);
            }
            e.answer.ttl = 0;
            ++e.count;
            per_day_[record.date].insert(std::move(key));
            any = true;
        }
    }
    return any;
}

void ForgedPool::ingest(std::span<const ProbeRecord> records)
{
    for (const auto& r : records)
        ingest(r);
}

bool ForgedPool::contains(const DnsAnswer& answer) const
{
    return entries_.contains(pool_key(answer));
}

std::uint64_t ForgedPool::total() const noexcept
{
    std::uint64_t n = 0;
    for (const auto& [key, e] : entries_)
        n += e.count;
    return n;
}

std::vector<PoolDay> ForgedPool::daily() const
{
    std::map<Date, PoolDay> days;
    for (const auto& [date, keys] : per_day_)
        days[date].unique = keys.size();
    for (const auto& [key, e] : entries_)
        ++days[e.first_seen].added;
    std::vector<PoolDay> out;
    std::size_t cumulative = 0;
    for (auto& [date, d] : days) {
        d.date = date;
        cumulative += d.added;
        d.cumulative = cumulative;
        out.push_back(d);
    }
    return out;
}

ForgedPool ForgedPool::truncated(double mass) const
{
    if (!(mass > 0.0 && mass <= 1.0))
        throw std::invalid_argument("mass must be in (0, 1]");
    std::vector<const std::pair<const std::string, PoolEntry>*> ranked;
    for (const auto& kv : entries_)
        ranked.push_back(&kv);
    std::stable_sort(ranked.begin(), ranked.end(), [](auto a, auto b) { return a->second.count > b->second.count; });
    const double need = mass * static_cast<double>(total());
    ForgedPool out;
    double acc = 0.0;
    for (auto* kv : ranked) {
        if (acc >= need)
            break;
        out.entries_.insert(*kv);
        acc += static_cast<double>(kv->second.count);
    }
    return out;
}

void ForgedPool::write_csv(std::ostream& out) const
{
    out << "answer,type,first_seen,last_seen,count\n";
    for (const auto& [key, e] : entries_)
        out << e.answer.value() << ',' << e.answer.type() << ',' << e.first_seen.str() << ',' << e.last_seen.str()
            << ',' << e.count << '\n';
}

ForgedPool ForgedPool::read_csv(std::istream& in)
{
    ForgedPool pool;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 || line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');)
            f.push_back(cell);
        if (f.size() != 5)
            throw DataError("pool.csv line " + std::to_string(lineno) + ": expected 5 fields");
        try {
            PoolEntry e{DnsAnswer::parse(f[1], f[0]), Date::parse(f[2]), Date::parse(f[3]), std::stoull(f[4])};
            e.answer.ttl = 0;
            if (e.last_seen < e.first_seen)
                throw DataError("last_seen before first_seen");
            pool.entries_.insert_or_assign(pool_key(e.answer), std::move(e));
        } catch (const std::exception& ex) {
            throw DataError("pool.csv line " + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return pool;
}

std::size_t FrequencyCdf::rank_for(double threshold) const
{
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw std::invalid_argument("threshold must be in (0, 1]");
    if (cumulative.empty())
        throw DataError("empty frequency distribution");
    // Tolerate rounding in the cumulative sum so threshold 1.0 maps to the full set.
    const double eps = 1e-12;
    auto it = std::lower_bound(cumulative.begin(), cumulative.end(), threshold - eps);
    if (it == cumulative.end())
        return cumulative.size();
    return static_cast<std::size_t>(it - cumulative.begin()) + 1;
}

void FrequencyCdf::write_csv(std::ostream& out) const
{
    out << "rank,answer,weight,cumulative\n";
    char buf[64];
    for (std::size_t i = 0; i < answers.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9f", weight[i], cumulative[i]);
        out << i + 1 << ',' << answers[i] << ',' << buf << '\n';
    }
}

namespace {

FrequencyCdf build_cdf(std::vector<std::pair<std::string, double>> items)
{
    if (items.empty())
        throw DataError("frequency_cdf on an empty pool");
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    FrequencyCdf cdf;
    const double total = std::accumulate(items.begin(), items.end(), 0.0,
                                         [](double s, const auto& kv) { return s + kv.second; });
    double acc = 0.0;
    for (auto& [key, w] : items) {
        acc += w;
        cdf.answers.push_back(std::move(key));
        cdf.weight.push_back(w);
        cdf.cumulative.push_back(acc / total);
    }
    cdf.cumulative.back() = 1.0;
    return cdf;
}

} // namespace

FrequencyCdf frequency_cdf(const ForgedPool& pool, AnswerFilter filter)
{
    std::vector<std::pair<std::string, double>> items;
    for (const auto& [key, e] : pool.entries())
        if (filter == AnswerFilter::All || std::holds_alternative<Ipv4>(e.answer.rr))
            items.emplace_back(key, static_cast<double>(e.count));
    return build_cdf(std::move(items));
}

FrequencyCdf frequency_cdf(const DynamicPool& pool)
{
    std::vector<std::pair<std::string, double>> items;
    for (std::size_t i = 0; i < pool.size(); ++i)
        items.emplace_back("A:" + pool.addresses()[i].str(), pool.weights()[i]);
    return build_cdf(std::move(items));
}

std::size_t frequency_cdf(const ForgedPool& pool, double threshold, AnswerFilter filter)
{
    return frequency_cdf(pool, filter).rank_for(threshold);
}

std::string_view to_string(GroupKind k) noexcept
{
    switch (k) {
    case GroupKind::Unknown: return "unknown";
    case GroupKind::StaticPerDomain: return "static-per-domain";
    case GroupKind::StaticSet: return "static-set";
    case GroupKind::Dynamic: return "dynamic";
    }
    return "?";
}

const GroupVerdict* GroupInference::find(const Fqdn& domain) const
{
    auto it = domains.find(domain);
    return it == domains.end() ? nullptr : &it->second;
}

GroupInference infer_groups(std::span<const ProbeRecord> records, const std::vector<StaticSetDef>& catalog,
                            std::size_t n_min)
{
    GroupInference out;
    for (const auto& rec : records) {
        if (rec.qtype != QType::A)
            continue;
        for (const auto& r : rec.responses) {
            if (r.ground_truth_forged == false || r.answers.empty())
                continue;
            auto& v = out.domains[rec.qname];
            v.domain = rec.qname;
            ++v.samples;
            v.units.insert(sample_unit(r.answers));
        }
    }

    std::vector<std::pair<std::set<std::string>, int>> sets;
    for (const auto& def : catalog)
        sets.push_back({{def.units.begin(), def.units.end()}, def.group_id});
    std::stable_sort(sets.begin(), sets.end(), [](const auto& a, const auto& b) { return a.first.size() < b.first.size(); });

    for (auto& [name, v] : out.domains) {
        if (v.samples < n_min)
            continue;
        auto fit = std::find_if(sets.begin(), sets.end(), [&](const auto& s) {
            return std::includes(s.first.begin(), s.first.end(), v.units.begin(), v.units.end());
        });
        if (fit != sets.end()) {
            v.kind = GroupKind::StaticSet;
            v.group_id = fit->second;
        } else if (v.units.size() == 1) {
            v.kind = GroupKind::StaticPerDomain;
            v.group_id = 3;
        } else {
            v.kind = GroupKind::Dynamic;
            v.group_id = 10;
        }
    }
    return out;
}

int injector_of(const WireResponse& response)
{
    if (response.aa_flag)
        return 1;
    return response.df_flag.value_or(true) ? 2 : 3;
}

double InjectorReport::share(int injector) const
{
    if (censored_domains == 0)
        return 0.0;
    auto it = domains.find(injector);
    const std::size_t n = it == domains.end() ? 0 : it->second.size();
    return static_cast<double>(n) / static_cast<double>(censored_domains);
}

void InjectorReport::write_csv(std::ostream& out) const
{
    out << "injector,domains,share\n";
    char buf[32];
    for (int id : {1, 2, 3}) {
        if (degraded && id == 3)
            continue;
        auto it = domains.find(id);
        std::snprintf(buf, sizeof buf, "%.6f", share(id));
        out << id << ',' << (it == domains.end() ? 0 : it->second.size()) << ',' << buf << '\n';
    }
}

InjectorReport fingerprint_injectors(std::span<const ProbeRecord> records)
{
    InjectorReport out;
    std::set<Fqdn> censored;
    for (const auto& rec : records) {
        for (const auto& r : rec.responses) {
            if (r.ground_truth_forged == false || r.answers.empty())
                continue;
            if (!r.df_flag)
                out.degraded = true;
            censored.insert(rec.qname);
            out.domains[injector_of(r)].insert(rec.qname);
        }
    }
    if (out.degraded) {
        if (auto it = out.domains.find(3); it != out.domains.end()) {
            out.domains[2].insert(it->second.begin(), it->second.end());
            out.domains.erase(3);
        }
    }
    out.censored_domains = censored.size();
    static const std::set<Fqdn> none;
    auto domains_of = [&](int id) -> const std::set<Fqdn>& {
        auto it = out.domains.find(id);
        return it == out.domains.end() ? none : it->second;
    };
    const auto& d2 = domains_of(2);
    const auto& d3 = domains_of(3);
    out.subset_holds = std::includes(d2.begin(), d2.end(), d3.begin(), d3.end());
    return out;
}

} // namespace gfwlab
