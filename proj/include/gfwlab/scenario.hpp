#pragma once

#include "gfwlab/blockrule.hpp"
#include "gfwlab/rng.hpp"

#include <vector>

namespace gfwlab {

/// Per-class weights for planted blocklists, in all_rule_classes order.
/// Shaped after the observed base-domain counts, with every class present.
inline constexpr std::array<double, 6> planted_class_weights{0.085, 0.01, 0.82, 0.08, 0.01, 0.005};

/// `n` entries with random, mutually unrelated bases. Each class gets at
/// least max(1, n/40) entries; the rest follow planted_class_weights.
/// Groups are drawn from `group_ids` uniformly (default: all dynamic).
std::vector<BlockEntry> plant_blocklist(std::size_t n, Rng& rng, const std::vector<int>& group_ids = {10});

/// Names censored because of `entry` (built from the class's own template,
/// plus, for classes wider than R0, extra labels around it).
std::vector<Fqdn> censored_examples(const BlockEntry& entry, Rng& rng, std::size_t count);

/// Names that contain `base` as a plain suffix but are neither `base` nor a subdomain of it.
std::vector<Fqdn> overblocked_examples(std::string_view base, Rng& rng, std::size_t count);

/// Random names under reserved-looking labels that no planted base can hit.
std::vector<Fqdn> nonexistent_domains(Rng& rng, std::size_t count);

/// Bases of the overblocking fixture (planted under R4).
std::vector<std::string> overblocking_fixture_bases();

} // namespace gfwlab
