#include "gfwlab/blockrule.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace gfwlab;

namespace {

// Reference predicate written from the class definitions, one position at a time.
bool oracle_matches(const std::string& s, const std::string& b, RuleClass c)
{
    for (std::size_t i = 0; i + b.size() <= s.size(); ++i) {
        if (s.compare(i, b.size(), b) != 0)
            continue;
        const bool start = i == 0;
        const bool end = i + b.size() == s.size();
        const bool dot = i > 0 && s[i - 1] == '.';
        bool ok = false;
        switch (c) {
        case RuleClass::R0: ok = start && end; break;
        case RuleClass::R2: ok = start; break;
        case RuleClass::R3: ok = end && (start || dot); break;
        case RuleClass::R4: ok = end; break;
        case RuleClass::R6: ok = start || dot; break;
        case RuleClass::R8: ok = true; break;
        }
        if (ok)
            return true;
    }
    return false;
}

std::string small_name(Rng& rng)
{
    static constexpr std::string_view alphabet = "ab.";
    std::string s;
    const auto n = 1 + rng.below(9);
    for (std::uint64_t i = 0; i < n; ++i)
        s += alphabet[rng.below(alphabet.size())];
    return s;
}

RuleClass random_class(Rng& rng) { return all_rule_classes[rng.below(all_rule_classes.size())]; }

} // namespace

TEST_CASE("matches agrees with the brute-force oracle")
{
    Rng rng(10);
    for (int i = 0; i < 200000; ++i) {
        const auto s = small_name(rng);
        auto b = small_name(rng).substr(0, 1 + rng.below(3));
        const auto c = random_class(rng);
        CHECK(matches(std::string_view(s), BlockEntry{b, c, 10}) == oracle_matches(s, b, c));
    }
}

TEST_CASE("worked examples")
{
    const BlockEntry r3{"google.com", RuleClass::R3, 10};
    CHECK(matches("google.com", r3));
    CHECK(matches("www.google.com", r3));
    CHECK_FALSE(matches("mygoogle.com", r3));
    const BlockEntry r4{"919.com", RuleClass::R4, 10};
    CHECK(matches("abc919.com", r4));
    CHECK_FALSE(matches("919.com.cn", r4));
    const BlockEntry r8{"twitter", RuleClass::R8, 10};
    CHECK(matches("xtwitterx.org", r8));
}

TEST_CASE("partial order is sound and complete")
{
    Rng rng(11);
    // Soundness: the broader class matches whenever the narrower one does.
    for (int i = 0; i < 100000; ++i) {
        const auto s = small_name(rng);
        const auto b = small_name(rng).substr(0, 1 + rng.below(3));
        for (auto narrow : all_rule_classes)
            for (auto broad : all_rule_classes)
                if (at_least_as_general(broad, narrow) && matches(std::string_view(s), BlockEntry{b, narrow, 10}))
                    CHECK(matches(std::string_view(s), BlockEntry{b, broad, 10}));
    }
    // Completeness: every non-ordered pair has a witness.
    for (auto narrow : all_rule_classes)
        for (auto broad : all_rule_classes) {
            if (at_least_as_general(broad, narrow))
                continue;
            bool witness = false;
            for (int t = 0; t < template_count && !witness; ++t) {
                Rng r(static_cast<std::uint64_t>(t));
                const auto name = instantiate_template(t, "base.com", r, 5);
                witness = matches(std::string_view(name), BlockEntry{"base.com", narrow, 10})
                          && !matches(std::string_view(name), BlockEntry{"base.com", broad, 10});
            }
            CHECK_MESSAGE(witness, to_string(broad), " vs ", to_string(narrow));
        }
    CHECK(at_least_as_general(RuleClass::R6, RuleClass::R3));
    CHECK_FALSE(at_least_as_general(RuleClass::R6, RuleClass::R4));
    CHECK_FALSE(at_least_as_general(RuleClass::R4, RuleClass::R2));
}

TEST_CASE("template signature equals the predicate on every template")
{
    Rng rng(12);
    for (auto c : all_rule_classes) {
        const auto sig = template_signature(c);
        for (int trial = 0; trial < 50; ++trial) {
            const auto names = gen_permutations("base-x.com", rng);
            for (int t = 0; t < template_count; ++t)
                CHECK(matches(std::string_view(names[static_cast<std::size_t>(t)]), BlockEntry{"base-x.com", c, 10})
                      == sig[static_cast<std::size_t>(t)]);
        }
    }
}

TEST_CASE("gen_permutations rejects bases that make invalid names")
{
    Rng rng(13);
    CHECK_THROWS_AS(gen_permutations("", rng), std::invalid_argument);
    CHECK_THROWS_AS(gen_permutations(std::string(60, 'a'), rng), std::invalid_argument);
}

TEST_CASE("Blocklist::match equals the linear scan with tie-break")
{
    Rng rng(14);
    for (int round = 0; round < 200; ++round) {
        std::vector<BlockEntry> entries;
        std::set<std::pair<std::string, RuleClass>> seen;
        const auto n = 1 + rng.below(12);
        while (entries.size() < n) {
            auto b = small_name(rng).substr(0, 1 + rng.below(4));
            const auto c = random_class(rng);
            if (seen.insert({b, c}).second)
                entries.push_back({b, c, 10});
        }
        const Blocklist list(entries);
        for (int q = 0; q < 200; ++q) {
            const auto s = small_name(rng);
            std::optional<BlockEntry> best;
            std::size_t count = 0;
            for (const auto& e : entries) {
                if (!oracle_matches(s, e.base, e.rule_class))
                    continue;
                ++count;
                if (!best || e.base.size() > best->base.size()
                    || (e.base.size() == best->base.size() && e.rule_class < best->rule_class)
                    || (e.base.size() == best->base.size() && e.rule_class == best->rule_class && e.base < best->base))
                    best = e;
            }
            const auto got = list.match(std::string_view(s));
            REQUIRE(got.has_value() == best.has_value());
            if (best)
                CHECK(*got == *best);
            CHECK(list.all_matches(s).size() == count);
        }
    }
}

TEST_CASE("Blocklist construction errors")
{
    CHECK_THROWS_AS(Blocklist({BlockEntry{"", RuleClass::R3, 10}}), std::invalid_argument);
    CHECK_THROWS_AS(Blocklist({BlockEntry{"Abc.com", RuleClass::R3, 10}}), std::invalid_argument);
    CHECK_THROWS_AS(Blocklist({BlockEntry{"a.com", RuleClass::R3, 10}, BlockEntry{"a.com", RuleClass::R3, 4}}),
                    std::invalid_argument);
    CHECK_NOTHROW(Blocklist({BlockEntry{"a.com", RuleClass::R3, 10}, BlockEntry{"a.com", RuleClass::R4, 4}}));
}

TEST_CASE("classify_overblocked")
{
    CHECK_FALSE(classify_overblocked("919.com", "919.com"));
    CHECK_FALSE(classify_overblocked("www.919.com", "919.com"));
    CHECK(classify_overblocked("abc919.com", "919.com"));
    CHECK(classify_overblocked("x.abc919.com", "919.com"));
    CHECK_THROWS_AS(classify_overblocked("example.com", "919.com"), std::invalid_argument);
}

TEST_CASE("blocklist TSV round trip")
{
    const Blocklist list({{"a.com", RuleClass::R0, 1}, {"b.net", RuleClass::R4, 10}, {"c", RuleClass::R8, 3},
                          {"d.org", RuleClass::R6, 7}});
    std::stringstream ss;
    write_blocklist(ss, list);
    const auto back = read_blocklist(ss);
    REQUIRE(back.size() == list.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
        CHECK(back.entries()[i] == list.entries()[i]);
        CHECK(back.entries()[i].group_id == list.entries()[i].group_id);
    }
    std::istringstream bad("a.com\tR5\t10\n");
    CHECK_THROWS(read_blocklist(bad));
    for (auto c : all_rule_classes)
        CHECK(rule_class_from_string(to_string(c)) == c);
}
