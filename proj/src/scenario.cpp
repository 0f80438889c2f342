#include "gfwlab/scenario.hpp"

#include <algorithm>
#include <set>

namespace gfwlab {

namespace {

constexpr std::array<std::string_view, 7> tlds{"com", "net", "org", "cn", "tw", "info", "io"};

std::string random_base(Rng& rng)
{
    return random_label(rng, 5 + rng.below(5)) + "." + std::string(tlds[rng.below(tlds.size())]);
}

} // namespace

std::vector<BlockEntry> plant_blocklist(std::size_t n, Rng& rng, const std::vector<int>& group_ids)
{
    if (group_ids.empty())
        throw std::invalid_argument("group_ids must not be empty");
    const std::size_t floor = std::max<std::size_t>(1, n / 40);
    if (n < floor * all_rule_classes.size())
        throw std::invalid_argument("need at least 6 entries to cover every class");

    std::array<std::size_t, 6> counts{};
    counts.fill(floor);
    std::size_t left = n - floor * counts.size();
    const AliasTable table(planted_class_weights);
    for (; left > 0; --left)
        ++counts[table.sample(rng)];

    std::vector<std::string> bases;
    while (bases.size() < n) {
        auto b = random_base(rng);
        // Keep bases textually unrelated so one never triggers another.
        const bool clash = std::any_of(bases.begin(), bases.end(), [&](const std::string& o) {
            return o.find(b) != std::string::npos || b.find(o) != std::string::npos;
        });
        if (!clash)
            bases.push_back(std::move(b));
    }
    std::vector<BlockEntry> out;
    std::size_t next = 0;
    for (std::size_t c = 0; c < counts.size(); ++c)
        for (std::size_t i = 0; i < counts[c]; ++i)
            out.push_back({bases[next++], all_rule_classes[c], group_ids[rng.below(group_ids.size())]});
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Fqdn> censored_examples(const BlockEntry& entry, Rng& rng, std::size_t count)
{
    const auto sig = template_signature(entry.rule_class);
    std::vector<int> usable;
    for (int t = 1; t < template_count; ++t)
        if (sig[static_cast<std::size_t>(t)])
            usable.push_back(t);
    if (usable.empty())
        return count > 0 ? std::vector<Fqdn>{Fqdn(entry.base)} : std::vector<Fqdn>{};

    const bool left_open = sig[3];
    std::set<Fqdn> names;
    for (std::size_t attempt = 0; names.size() < count && attempt < count * 20; ++attempt) {
        std::string name = instantiate_template(usable[rng.below(usable.size())], entry.base, rng, 3 + rng.below(6));
        if (left_open && rng.bernoulli(0.3))
            name = random_label(rng, 3) + "." + name;
        if (auto f = Fqdn::try_parse(name); f && matches(*f, entry))
            names.insert(*f);
    }
    return {names.begin(), names.end()};
}

std::vector<Fqdn> overblocked_examples(std::string_view base, Rng& rng, std::size_t count)
{
    std::set<Fqdn> names;
    for (std::size_t attempt = 0; names.size() < count && attempt < count * 20; ++attempt) {
        std::string name = random_label(rng, 1 + rng.below(8)) + std::string(base);
        if (rng.bernoulli(0.25))
            name = random_label(rng, 3) + "." + name;
        if (auto f = Fqdn::try_parse(name))
            names.insert(*f);
    }
    return {names.begin(), names.end()};
}

std::vector<Fqdn> nonexistent_domains(Rng& rng, std::size_t count)
{
    std::vector<Fqdn> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        out.emplace_back(random_label(rng, 16) + "." + std::string(tlds[rng.below(3)]));
    return out;
}

std::vector<std::string> overblocking_fixture_bases()
{
    return {"919.com", "jetos.com", "33a.com", "9444.com", "sscenter.net",
            "1900.com", "98a.com", "ss.center", "reddit.com", "visi.tk"};
}

} // namespace gfwlab
