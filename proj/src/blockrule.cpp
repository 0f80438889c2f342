#include "gfwlab/blockrule.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace gfwlab {

std::string_view to_string(RuleClass c) noexcept
{
    switch (c) {
    case RuleClass::R0: return "R0";
    case RuleClass::R2: return "R2";
    case RuleClass::R3: return "R3";
    case RuleClass::R4: return "R4";
    case RuleClass::R6: return "R6";
    case RuleClass::R8: return "R8";
    }
    return "R?";
}

RuleClass rule_class_from_string(std::string_view s)
{
    for (auto c : all_rule_classes)
        if (to_string(c) == s)
            return c;
    if (s.size() == 1) {
        for (auto c : all_rule_classes)
            if (to_string(c)[1] == s[0])
                return c;
    }
    throw std::invalid_argument("unknown rule class '" + std::string(s) + "'");
}

bool at_least_as_general(RuleClass broad, RuleClass narrow) noexcept
{
    using R = RuleClass;
    if (broad == narrow || broad == R::R8 || narrow == R::R0)
        return true;
    switch (broad) {
    case R::R4: return narrow == R::R3;
    case R::R6: return narrow == R::R2 || narrow == R::R3;
    default: return false;
    }
}

namespace {

// Predicate on one occurrence of the base at [start, start+len) in a name of size n.
bool occurrence_matches(RuleClass cls, std::string_view s, std::size_t start, std::size_t len) noexcept
{
    const bool at_start = start == 0;
    const bool at_end = start + len == s.size();
    const bool dot_left = !at_start && s[start - 1] == '.';
    switch (cls) {
    case RuleClass::R0: return at_start && at_end;
    case RuleClass::R2: return at_start;
    case RuleClass::R3: return at_end && (at_start || dot_left);
    case RuleClass::R4: return at_end;
    case RuleClass::R6: return at_start || dot_left;
    case RuleClass::R8: return true;
    }
    return false;
}

bool better(const BlockEntry& a, const BlockEntry& b) noexcept
{
    if (a.base.size() != b.base.size())
        return a.base.size() > b.base.size();
    if (a.rule_class != b.rule_class)
        return a.rule_class < b.rule_class;
    return a.base < b.base;
}

} // namespace

bool matches(std::string_view s, const BlockEntry& entry) noexcept
{
    const std::string_view b = entry.base;
    if (b.empty() || b.size() > s.size())
        return false;
    switch (entry.rule_class) {
    case RuleClass::R0: return s == b;
    case RuleClass::R2: return s.starts_with(b);
    case RuleClass::R3:
        return s == b || (s.size() > b.size() && s.ends_with(b) && s[s.size() - b.size() - 1] == '.');
    case RuleClass::R4: return s.ends_with(b);
    case RuleClass::R6:
        for (std::size_t pos = s.find(b); pos != std::string_view::npos; pos = s.find(b, pos + 1))
            if (pos == 0 || s[pos - 1] == '.')
                return true;
        return false;
    case RuleClass::R8: return s.find(b) != std::string_view::npos;
    }
    return false;
}

// Byte-trie with failure links. Each node lists the patterns ending there,
// including those inherited through dictionary suffix links.
struct Blocklist::Automaton {
    struct Node {
        std::map<unsigned char, std::uint32_t> next;
        std::uint32_t fail = 0;
        std::uint32_t dict = 0;      // nearest terminal node via fail links (0 = none)
        std::int32_t pattern = -1;   // index into patterns
    };
    struct Pattern {
        std::size_t length = 0;
        std::vector<std::uint32_t> entries; // indices into Blocklist::entries_
    };

    std::vector<Node> nodes{Node{}};
    std::vector<Pattern> patterns;

    void add(const std::string& base, std::uint32_t entry)
    {
        std::uint32_t cur = 0;
        for (unsigned char c : base) {
            auto it = nodes[cur].next.find(c);
            if (it == nodes[cur].next.end()) {
                nodes.push_back({});
                const auto id = static_cast<std::uint32_t>(nodes.size() - 1);
                nodes[cur].next.emplace(c, id);
                cur = id;
            } else {
                cur = it->second;
            }
        }
        if (nodes[cur].pattern < 0) {
            nodes[cur].pattern = static_cast<std::int32_t>(patterns.size());
            patterns.push_back({base.size(), {}});
        }
        patterns[static_cast<std::size_t>(nodes[cur].pattern)].entries.push_back(entry);
    }

    void build()
    {
        std::vector<std::uint32_t> queue;
        for (auto [c, child] : nodes[0].next) {
            nodes[child].fail = 0;
            queue.push_back(child);
        }
        for (std::size_t head = 0; head < queue.size(); ++head) {
            const std::uint32_t u = queue[head];
            for (auto [c, v] : nodes[u].next) {
                std::uint32_t f = nodes[u].fail;
                for (;;) {
                    auto it = nodes[f].next.find(c);
                    if (it != nodes[f].next.end() && it->second != v) {
                        nodes[v].fail = it->second;
                        break;
                    }
                    if (f == 0) {
                        nodes[v].fail = 0;
                        break;
                    }
                    f = nodes[f].fail;
                }
                const std::uint32_t fl = nodes[v].fail;
                nodes[v].dict = nodes[fl].pattern >= 0 ? fl : nodes[fl].dict;
                queue.push_back(v);
            }
        }
    }

    template <typename Visit>
    void scan(std::string_view s, Visit&& visit) const
    {
        std::uint32_t cur = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const auto c = static_cast<unsigned char>(s[i]);
            for (;;) {
                auto it = nodes[cur].next.find(c);
                if (it != nodes[cur].next.end()) {
                    cur = it->second;
                    break;
                }
                if (cur == 0)
                    break;
                cur = nodes[cur].fail;
            }
            for (std::uint32_t n = nodes[cur].pattern >= 0 ? cur : nodes[cur].dict; n != 0; n = nodes[n].dict) {
                const auto& p = patterns[static_cast<std::size_t>(nodes[n].pattern)];
                visit(p, i + 1 - p.length);
            }
        }
    }
};

Blocklist::Blocklist(std::vector<BlockEntry> entries) : entries_(std::move(entries))
{
    std::sort(entries_.begin(), entries_.end());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.base.empty())
            throw std::invalid_argument("blocklist entry with empty base");
        if (std::any_of(e.base.begin(), e.base.end(), [](unsigned char c) { return std::isupper(c); }))
            throw std::invalid_argument("blocklist base must be lowercase: " + e.base);
        if (i > 0 && entries_[i - 1] == e)
            throw std::invalid_argument("duplicate blocklist entry " + e.base + " "
                                        + std::string(to_string(e.rule_class)));
    }
    auto automaton = std::make_shared<Automaton>();
    for (std::size_t i = 0; i < entries_.size(); ++i)
        automaton->add(entries_[i].base, static_cast<std::uint32_t>(i));
    automaton->build();
    index_ = std::move(automaton);
}

std::vector<BlockEntry> Blocklist::all_matches(std::string_view name) const
{
    std::vector<BlockEntry> out;
    if (!index_)
        return out;
    std::set<std::uint32_t> hit;
    index_->scan(name, [&](const Automaton::Pattern& p, std::size_t start) {
        for (auto idx : p.entries)
            if (!hit.contains(idx) && occurrence_matches(entries_[idx].rule_class, name, start, p.length))
                hit.insert(idx);
    });
    for (auto idx : hit)
        out.push_back(entries_[idx]);
    return out;
}

std::optional<BlockEntry> Blocklist::match(std::string_view name) const
{
    if (!index_)
        return std::nullopt;
    const BlockEntry* best = nullptr;
    index_->scan(name, [&](const Automaton::Pattern& p, std::size_t start) {
        for (auto idx : p.entries) {
            const auto& e = entries_[idx];
            if ((!best || better(e, *best)) && occurrence_matches(e.rule_class, name, start, p.length))
                best = &e;
        }
    });
    if (!best)
        return std::nullopt;
    return *best;
}

std::optional<BlockEntry> Blocklist::match(const Fqdn& qname) const
{
    return match(std::string_view(qname.str()));
}

Blocklist read_blocklist(std::istream& in)
{
    std::vector<BlockEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty() || line.front() == '#')
            continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        for (std::string col; std::getline(ss, col, '\t');)
            cols.push_back(col);
        if (cols.size() < 2 || cols.size() > 3)
            throw std::invalid_argument("blocklist line " + std::to_string(lineno) + ": expected 2 or 3 columns");
        BlockEntry e;
        e.base = cols[0];
        e.rule_class = rule_class_from_string(cols[1]);
        if (cols.size() == 3) {
            std::size_t used = 0;
            e.group_id = std::stoi(cols[2], &used);
            if (used != cols[2].size() || e.group_id < 0 || e.group_id > 10)
                throw std::invalid_argument("blocklist line " + std::to_string(lineno) + ": bad group id");
        }
        entries.push_back(std::move(e));
    }
    return Blocklist(std::move(entries));
}

Blocklist load_blocklist(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open blocklist " + path);
    return read_blocklist(in);
}

void write_blocklist(std::ostream& out, const Blocklist& list)
{
    for (const auto& e : list.entries())
        out << e.base << '\t' << to_string(e.rule_class) << '\t' << e.group_id << '\n';
}

std::string instantiate_template(int rule, std::string_view base, Rng& rng, std::size_t random_len)
{
    auto rnd = [&] { return random_label(rng, random_len); };
    const std::string b(base);
    switch (rule) {
    case 0: return b;
    case 1: return b + "." + rnd();
    case 2: return b + rnd();
    case 3: return rnd() + "." + b;
    case 4: return rnd() + b;
    case 5: { auto l = rnd(); return l + "." + b + "." + rnd(); }
    case 6: { auto l = rnd(); return l + "." + b + rnd(); }
    case 7: { auto l = rnd(); return l + b + "." + rnd(); }
    case 8: { auto l = rnd(); return l + b + rnd(); }
    default: throw std::out_of_range("template index must be 0..8");
    }
}

std::array<std::string, template_count> gen_permutations(std::string_view base, Rng& rng, std::size_t random_len)
{
    if (base.empty())
        throw std::invalid_argument("empty base");
    std::array<std::string, template_count> out;
    for (int i = 0; i < template_count; ++i) {
        out[static_cast<std::size_t>(i)] = instantiate_template(i, base, rng, random_len);
        if (!Fqdn::try_parse(out[static_cast<std::size_t>(i)]))
            throw std::invalid_argument("base '" + std::string(base) + "' cannot host template "
                                        + std::to_string(i) + " as a valid name");
    }
    return out;
}

std::array<bool, template_count> template_signature(RuleClass cls) noexcept
{
    using R = RuleClass;
    switch (cls) {
    case R::R0: return {true, false, false, false, false, false, false, false, false};
    case R::R2: return {true, true, true, false, false, false, false, false, false};
    case R::R3: return {true, false, false, true, false, false, false, false, false};
    case R::R4: return {true, false, false, true, true, false, false, false, false};
    case R::R6: return {true, true, true, true, false, true, true, false, false};
    case R::R8: return {true, true, true, true, true, true, true, true, true};
    }
    return {};
}

bool classify_overblocked(std::string_view domain, std::string_view base)
{
    if (base.empty() || domain.find(base) == std::string_view::npos)
        throw std::invalid_argument("'" + std::string(domain) + "' does not contain base '" + std::string(base) + "'");
    if (domain == base)
        return false;
    const bool subdomain = domain.size() > base.size() && domain.ends_with(base)
                           && domain[domain.size() - base.size() - 1] == '.';
    return !subdomain;
}

} // namespace gfwlab
