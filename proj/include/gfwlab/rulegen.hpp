#pragma once

#include "gfwlab/blockrule.hpp"
#include "gfwlab/prober.hpp"

#include <array>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace gfwlab {

class RulegenError : public std::runtime_error {
public:
    enum class Kind { PathDown, StaleInput, Inconsistent };
    RulegenError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct TemplateProbe {
    std::array<bool, template_count> triggered{};
    RuleClass assigned = RuleClass::R0;
    std::size_t probes = 0;
};

struct BaseDomainResult {
    std::string base;
    RuleClass rule_class = RuleClass::R0;
    std::set<std::string> derived_from;
    std::size_t probes_used = 0;
};

/// Picks the most general class whose defining template triggered. Ties
/// between incomparable maximal classes go to the one whose template
/// signature agrees best with `triggered`.
RuleClass most_general_class(const std::array<bool, template_count>& triggered);

/// Reverse-engineers base domains and rule classes through a Prober bound to one path.
class RuleGen {
public:
    struct Options {
        int trials = 3;
        std::size_t random_len = 8;
        std::uint64_t seed = 11;
    };

    RuleGen(Prober& prober, Options options);

    /// Each of the nine templates is instantiated `trials` times; a template
    /// triggers iff every instance probes Censored.
    TemplateProbe probe_rule_classes(std::string_view candidate);

    /// Shortest censored substring of `censored`, classified. Trims whole
    /// leading labels, then characters of the first label, then the tail;
    /// each step is a binary search plus a linear check at the boundary.
    BaseDomainResult find_base(const Fqdn& censored);

private:
    bool censored(std::string_view candidate);

    Prober& prober_;
    Options options_;
    Rng rng_;
    std::size_t probes_ = 0;
    std::size_t inconclusive_ = 0;
};

/// Merges results sharing (base, class) and returns the blocklist estimate.
struct BlocklistEstimate {
    std::vector<BaseDomainResult> merged; // sorted by (base, class)
    Blocklist blocklist() const;
};
BlocklistEstimate dedupe_bases(std::span<const BaseDomainResult> results);

struct OverblockingRow {
    std::string base;
    RuleClass rule_class = RuleClass::R0;
    std::size_t n_derived = 0;
    std::size_t n_overblocked = 0;
};

struct OverblockingReport {
    std::vector<Fqdn> intended;
    std::vector<Fqdn> overblocked;
    /// Sorted by n_overblocked descending, then base.
    std::vector<OverblockingRow> per_base;
    /// Domains matched by more than one entry (attributed to the tie-break winner).
    std::vector<Fqdn> ambiguous;
};

/// Throws RulegenError(Inconsistent) if a domain matches no entry.
OverblockingReport overblocking_report(const Blocklist& blocklist, std::span<const Fqdn> censored);

/// CSV `base,rule_class,n_derived,n_overblocked`.
void write_overblocking_csv(std::ostream& out, const OverblockingReport& report);

} // namespace gfwlab
