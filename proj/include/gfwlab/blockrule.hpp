#pragma once

#include "gfwlab/rng.hpp"
#include "gfwlab/wire.hpp"

#include <array>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gfwlab {

/// Populated rule classes. Rules 1, 5 and 7 exist only as probe templates.
enum class RuleClass : std::uint8_t { R0, R2, R3, R4, R6, R8 };

inline constexpr std::array<RuleClass, 6> all_rule_classes{
    RuleClass::R0, RuleClass::R2, RuleClass::R3, RuleClass::R4, RuleClass::R6, RuleClass::R8};

std::string_view to_string(RuleClass c) noexcept;
RuleClass rule_class_from_string(std::string_view s);

/// Generality partial order: true iff every name matched under `narrow`
/// is also matched under `broad` for the same base.
///   R0 <= R2 <= R6 <= R8,  R0 <= R3 <= R4 <= R8,  R3 <= R6
bool at_least_as_general(RuleClass broad, RuleClass narrow) noexcept;

struct BlockEntry {
    std::string base;
    RuleClass rule_class = RuleClass::R3;
    int group_id = 10;

    friend bool operator==(const BlockEntry& a, const BlockEntry& b) noexcept
    {
        return a.base == b.base && a.rule_class == b.rule_class;
    }
    /// Ordered by (base, class); group_id is payload, not identity.
    friend auto operator<=>(const BlockEntry& a, const BlockEntry& b) noexcept
    {
        if (auto c = a.base <=> b.base; c != 0)
            return c;
        return a.rule_class <=> b.rule_class;
    }
};

/// Predicate on canonical text. See the class table in blockrule.cpp.
bool matches(std::string_view name, const BlockEntry& entry) noexcept;
inline bool matches(const Fqdn& name, const BlockEntry& entry) noexcept
{
    return matches(std::string_view(name.str()), entry);
}

/// Immutable blocklist with a multi-pattern (Aho-Corasick) index over bases.
class Blocklist {
public:
    Blocklist() = default;
    /// Throws std::invalid_argument on empty/uppercase bases or duplicate (base, class).
    explicit Blocklist(std::vector<BlockEntry> entries);

    /// The matching entry preferring the longest base, then the least general
    /// class (enum order). Absent if nothing matches.
    std::optional<BlockEntry> match(const Fqdn& qname) const;
    std::optional<BlockEntry> match(std::string_view name) const;

    /// Every entry matching `name`, in no particular order.
    std::vector<BlockEntry> all_matches(std::string_view name) const;

    const std::vector<BlockEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

private:
    struct Automaton;

    std::vector<BlockEntry> entries_;
    std::shared_ptr<const Automaton> index_;
};

inline std::optional<BlockEntry> match_blocklist(const Fqdn& qname, const Blocklist& list)
{
    return list.match(qname);
}

/// Blocklist file: `<base>\t<rule_class>\t<group_id>` per line, '#' comments.
Blocklist read_blocklist(std::istream& in);
Blocklist load_blocklist(const std::string& path);
void write_blocklist(std::ostream& out, const Blocklist& list);

/// Probe templates Rule 0 .. Rule 8.
inline constexpr int template_count = 9;

/// The nine template instantiations of `base`, index i = Rule i.
/// Throws std::invalid_argument if the results would not be valid names.
std::array<std::string, template_count> gen_permutations(std::string_view base, Rng& rng,
                                                         std::size_t random_len = 8);

/// Instantiates a single template.
std::string instantiate_template(int rule, std::string_view base, Rng& rng, std::size_t random_len = 8);

/// Which template indices a name built for `cls` would trigger, derived
/// from the class predicate.
std::array<bool, template_count> template_signature(RuleClass cls) noexcept;

/// True iff `domain` contains `base` but is neither `base` nor a subdomain of
/// it. Throws std::invalid_argument if `domain` does not contain `base`.
bool classify_overblocked(std::string_view domain, std::string_view base);

} // namespace gfwlab
