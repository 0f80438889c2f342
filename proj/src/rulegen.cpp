#include "gfwlab/rulegen.hpp"

#include <algorithm>
#include <map>
#include <ostream>

namespace gfwlab {

namespace {

constexpr std::array<std::pair<RuleClass, int>, 6> defining_template{{
    {RuleClass::R0, 0},
    {RuleClass::R2, 2},
    {RuleClass::R3, 3},
    {RuleClass::R4, 4},
    {RuleClass::R6, 6},
    {RuleClass::R8, 8},
}};

std::string_view strip_dots(std::string_view s)
{
    while (!s.empty() && s.front() == '.')
        s.remove_prefix(1);
    while (!s.empty() && s.back() == '.')
        s.remove_suffix(1);
    return s;
}

} // namespace

RuleClass most_general_class(const std::array<bool, template_count>& triggered)
{
    std::vector<RuleClass> candidates;
    for (auto [cls, tmpl] : defining_template)
        if (triggered[static_cast<std::size_t>(tmpl)])
            candidates.push_back(cls);
    if (candidates.empty())
        return RuleClass::R0;
    std::vector<RuleClass> maximal;
    for (auto c : candidates) {
        const bool dominated = std::any_of(candidates.begin(), candidates.end(), [&](RuleClass o) {
            return o != c && at_least_as_general(o, c);
        });
        if (!dominated)
            maximal.push_back(c);
    }
    auto agreement = [&](RuleClass c) {
        const auto sig = template_signature(c);
        int score = 0;
        for (std::size_t i = 0; i < sig.size(); ++i)
            score += sig[i] == triggered[i] ? 1 : 0;
        return score;
    };
    return *std::max_element(maximal.begin(), maximal.end(), [&](RuleClass a, RuleClass b) {
        const int sa = agreement(a), sb = agreement(b);
        return sa != sb ? sa < sb : a > b;
    });
}

RuleGen::RuleGen(Prober& prober, Options options) : prober_(prober), options_(options), rng_(options.seed)
{
    if (options_.trials < 1)
        throw std::invalid_argument("trials must be at least 1");
}

bool RuleGen::censored(std::string_view candidate)
{
    ++probes_;
    const auto v = prober_.probe(candidate);
    if (v == ProbeVerdict::Inconclusive)
        ++inconclusive_;
    return v == ProbeVerdict::Censored;
}

TemplateProbe RuleGen::probe_rule_classes(std::string_view candidate)
{
    TemplateProbe out;
    const std::size_t probes_before = probes_, inconclusive_before = inconclusive_;
    for (int t = 0; t < template_count; ++t) {
        bool all = true;
        for (int k = 0; k < options_.trials && all; ++k) {
            const std::string name = instantiate_template(t, candidate, rng_, options_.random_len);
            all = Fqdn::try_parse(name).has_value() && censored(name);
            if (t == 0)
                break; // Rule 0 has no random part; one probe (with its rounds) suffices.
        }
        out.triggered[static_cast<std::size_t>(t)] = all;
    }
    out.probes = probes_ - probes_before;
    if (out.probes > 0 && inconclusive_ - inconclusive_before == out.probes)
        throw RulegenError(RulegenError::Kind::PathDown, "every probe was inconclusive; path is down");
    out.assigned = most_general_class(out.triggered);
    return out;
}

BaseDomainResult RuleGen::find_base(const Fqdn& input)
{
    const std::size_t probes_before = probes_;
    const std::string s = input.str();
    const std::size_t inconclusive_before = inconclusive_;
    if (!censored(s)) {
        if (inconclusive_ > inconclusive_before)
            throw RulegenError(RulegenError::Kind::PathDown, "cannot probe " + s + ": path is down");
        throw RulegenError(RulegenError::Kind::StaleInput, s + " is no longer censored");
    }

    // Largest k in [0, n) with pred(k) true, given pred(0) true and pred monotone.
    auto largest = [&](std::size_t n, auto&& pred) {
        std::size_t lo = 0, hi = n;
        while (hi - lo > 1) {
            const std::size_t mid = lo + (hi - lo) / 2;
            (pred(mid) ? lo : hi) = mid;
        }
        while (lo + 1 < n && pred(lo + 1))
            ++lo;
        return lo;
    };

    // Leading labels first: trimming mid-label is not monotone for label-aligned classes.
    std::vector<std::size_t> starts{0};
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] == '.')
            starts.push_back(i + 1);
    const std::size_t k =
        largest(starts.size(), [&](std::size_t j) { return censored(std::string_view(s).substr(starts[j])); });
    std::string_view rest = std::string_view(s).substr(starts[k]);

    const auto first_label = static_cast<std::size_t>(std::find(rest.begin(), rest.end(), '.') - rest.begin());
    const std::size_t t = largest(first_label, [&](std::size_t j) { return censored(rest.substr(j)); });
    rest = rest.substr(t);

    const std::size_t r =
        largest(rest.size(), [&](std::size_t j) { return censored(strip_dots(rest.substr(0, rest.size() - j))); });
    const std::string base(strip_dots(rest.substr(0, rest.size() - r)));

    const auto classes = probe_rule_classes(base);
    BaseDomainResult out;
    out.base = base;
    out.rule_class = classes.assigned;
    out.derived_from.insert(s);
    out.probes_used = probes_ - probes_before;
    return out;
}

Blocklist BlocklistEstimate::blocklist() const
{
    std::vector<BlockEntry> entries;
    entries.reserve(merged.size());
    for (const auto& r : merged)
        entries.push_back({r.base, r.rule_class, 10});
    return Blocklist(std::move(entries));
}

BlocklistEstimate dedupe_bases(std::span<const BaseDomainResult> results)
{
    std::map<std::pair<std::string, RuleClass>, BaseDomainResult> acc;
    for (const auto& r : results) {
        auto [it, fresh] = acc.try_emplace({r.base, r.rule_class}, r);
        if (!fresh) {
            it->second.derived_from.insert(r.derived_from.begin(), r.derived_from.end());
            it->second.probes_used += r.probes_used;
        }
    }
    BlocklistEstimate out;
    for (auto& [key, r] : acc)
        out.merged.push_back(std::move(r));
    return out;
}

OverblockingReport overblocking_report(const Blocklist& blocklist, std::span<const Fqdn> censored)
{
    OverblockingReport out;
    std::map<std::pair<std::string, RuleClass>, OverblockingRow> rows;
    std::vector<Fqdn> names(censored.begin(), censored.end());
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    for (const auto& name : names) {
        auto entry = blocklist.match(name);
        if (!entry)
            throw RulegenError(RulegenError::Kind::Inconsistent,
                               name.str() + " matches no blocklist entry; blocklist is incomplete");
        if (blocklist.all_matches(name.str()).size() > 1)
            out.ambiguous.push_back(name);
        auto& row = rows[{entry->base, entry->rule_class}];
        row.base = entry->base;
        row.rule_class = entry->rule_class;
        ++row.n_derived;
        if (classify_overblocked(name.str(), entry->base)) {
            ++row.n_overblocked;
            out.overblocked.push_back(name);
        } else {
            out.intended.push_back(name);
        }
    }
    for (auto& [key, row] : rows)
        out.per_base.push_back(row);
    std::stable_sort(out.per_base.begin(), out.per_base.end(), [](const OverblockingRow& a, const OverblockingRow& b) {
        return a.n_overblocked > b.n_overblocked;
    });
    return out;
}

void write_overblocking_csv(std::ostream& out, const OverblockingReport& report)
{
    out << "base,rule_class,n_derived,n_overblocked\n";
    for (const auto& row : report.per_base)
        out << row.base << ',' << to_string(row.rule_class) << ',' << row.n_derived << ',' << row.n_overblocked
            << '\n';
}

} // namespace gfwlab
