#include "gfwlab/injector.hpp"

#include <doctest.h>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <set>

using namespace gfwlab;

namespace {

PathConfig single_entry_path(BlockEntry entry)
{
    PathConfig cfg;
    cfg.blocklist = Blocklist({std::move(entry)});
    cfg.dynamic_pool = uniform_dynamic_pool(50, 5);
    return cfg;
}

DnsQuery query(std::string_view name, QType t = QType::A, std::uint16_t txid = 1)
{
    return {txid, Fqdn(name), t, {}};
}

} // namespace

TEST_CASE("fit_lognormal passes through both anchors")
{
    const auto d = DelayDist::fit_lognormal(0.01, 36, 0.999, 400);
    CHECK(d.cdf(36) == doctest::Approx(0.01).epsilon(1e-9));
    CHECK(d.cdf(400) == doctest::Approx(0.999).epsilon(1e-9));
    CHECK(d.quantile(0.01) == doctest::Approx(36));
    CHECK(d.quantile(0.999) == doctest::Approx(400));
    CHECK_THROWS_AS(DelayDist::fit_lognormal(0.5, 10, 0.4, 20), std::invalid_argument);

    const auto us = us_race();
    CHECK(us.forged.cdf(150) == doctest::Approx(0.89).epsilon(1e-9));
    CHECK(us.legit.quantile(0.5) == 150);
    CHECK(150 - us.forged.quantile(0.11) == doctest::Approx(94));
    const auto cn = cn_race();
    CHECK(400 - cn.forged.quantile(0.01) == doctest::Approx(364));
}

TEST_CASE("sampled delays follow the fitted quantiles")
{
    const auto d = cn_race().forged;
    Rng rng(3);
    std::vector<double> xs(200000);
    for (auto& x : xs)
        x = d.sample(rng);
    std::sort(xs.begin(), xs.end());
    CHECK(xs[xs.size() / 100] == doctest::Approx(36).epsilon(0.05));
    CHECK(xs[xs.size() / 2] == doctest::Approx(d.quantile(0.5)).epsilon(0.02));
}

TEST_CASE("injector assignment reproduces the domain shares")
{
    PathConfig cfg;
    cfg.dynamic_pool = uniform_dynamic_pool(10, 1);
    const InjectorSim sim(cfg);
    constexpr int n = 200000;
    int c1 = 0, c2 = 0, c3 = 0;
    for (int i = 0; i < n; ++i) {
        const auto ids = sim.injectors_for({"d" + std::to_string(i) + ".com", RuleClass::R3, 10});
        REQUIRE_FALSE(ids.empty());
        const bool has2 = std::count(ids.begin(), ids.end(), 2) > 0;
        const bool has3 = std::count(ids.begin(), ids.end(), 3) > 0;
        if (has3)
            CHECK(has2);
        c1 += std::count(ids.begin(), ids.end(), 1) > 0;
        c2 += has2;
        c3 += has3;
    }
    CHECK(c1 / double(n) == doctest::Approx(0.0064).epsilon(0.08));
    CHECK(c2 / double(n) == doctest::Approx(0.9945).epsilon(0.002));
    CHECK(c3 / double(n) == doctest::Approx(0.64).epsilon(0.01));
}

TEST_CASE("inconsistent profiles are rejected")
{
    PathConfig cfg;
    cfg.dynamic_pool = uniform_dynamic_pool(10, 1);
    cfg.profiles = {{2, false, true, 0.5}, {3, false, false, 0.6}};
    CHECK_THROWS_AS(InjectorSim{cfg}, ConfigError);
    cfg.profiles = {{2, true, true, 1.0}};
    CHECK_THROWS_AS(InjectorSim{cfg}, ConfigError);
    auto bad = single_entry_path({"a.com", RuleClass::R3, 42});
    CHECK_THROWS_AS(InjectorSim{bad}, ConfigError);
}

TEST_CASE("per-query miss rate is binomial")
{
    auto cfg = single_entry_path({"a.com", RuleClass::R3, 10});
    cfg.profiles = {{2, false, true, 1.0}};
    cfg.miss_rate = 0.1;
    InjectorSim sim(cfg);
    constexpr int n = 20000;
    int silent = 0;
    for (int i = 0; i < n; ++i)
        silent += sim.on_query(query("www.a.com", QType::A, static_cast<std::uint16_t>(i))).empty();
    const boost::math::binomial_distribution<double> dist(n, 0.1);
    CHECK(silent >= boost::math::quantile(dist, 0.0001));
    CHECK(silent <= boost::math::quantile(dist, 0.9999));
}

TEST_CASE("responses carry the injector fingerprints")
{
    auto cfg = single_entry_path({"a.com", RuleClass::R3, 10});
    InjectorSim sim(cfg);
    std::set<std::pair<bool, bool>> prints;
    for (int i = 0; i < 500; ++i)
        for (const auto& r : InjectorSim(cfg).on_query(query("a.com"))) {
            CHECK(r.ground_truth_forged == true);
            prints.insert({r.aa_flag, r.df_flag.value()});
        }
    for (const auto& [aa, df] : prints)
        CHECK((aa ? !df : true));
    const auto ids = sim.injectors_for(cfg.blocklist.entries()[0]);
    CHECK(sim.on_query(query("a.com")).size() == ids.size());
    CHECK(sim.on_query(query("b.com")).empty());
}

TEST_CASE("dynamic group covers the pool uniformly")
{
    auto cfg = single_entry_path({"a.com", RuleClass::R3, 10});
    cfg.profiles = {{2, false, true, 1.0}};
    InjectorSim sim(cfg);
    std::map<std::string, int> counts;
    constexpr int n = 50000;
    for (int i = 0; i < n; ++i)
        for (const auto& r : sim.on_query(query("a.com")))
            ++counts[r.answers.at(0).value()];
    REQUIRE(counts.size() == 50);
    double chi2 = 0;
    const double expected = n / 50.0;
    for (const auto& [ip, c] : counts)
        chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < boost::math::quantile(boost::math::chi_squared(49), 0.999));
}

TEST_CASE("AAAA injections are Teredo addresses")
{
    auto cfg = single_entry_path({"a.com", RuleClass::R3, 4});
    InjectorSim sim(cfg);
    for (int i = 0; i < 1000; ++i)
        for (const auto& r : sim.on_query(query("a.com", QType::AAAA))) {
            REQUIRE(r.answers.size() == 1);
            const auto* v6 = std::get_if<Ipv6>(&r.answers[0].rr);
            REQUIRE(v6);
            CHECK(v6->in_teredo());
        }
}

TEST_CASE("static per-domain group always returns the assigned address")
{
    auto cfg = single_entry_path({"qcc.com.tw", RuleClass::R3, 3});
    for (std::uint64_t seed = 1; seed < 50; ++seed) {
        cfg.seed = seed;
        InjectorSim sim(cfg);
        for (const auto& r : sim.on_query(query("qcc.com.tw"))) {
            REQUIRE(r.answers.size() == 1);
            CHECK(r.answers[0].value() == "89.31.55.106");
        }
    }
}

TEST_CASE("static sets draw only from their own members")
{
    const auto groups = paper_groups();
    REQUIRE(groups.size() == 11);
    auto cfg = single_entry_path({"x.com", RuleClass::R3, 7});
    InjectorSim sim(cfg);
    const auto catalog = static_set_catalog(groups);
    const auto g7 = std::find_if(catalog.begin(), catalog.end(), [](const auto& d) { return d.group_id == 7; });
    REQUIRE(g7 != catalog.end());
    std::set<std::string> seen;
    for (int i = 0; i < 2000; ++i)
        for (const auto& r : sim.on_query(query("x.com")))
            seen.insert(sample_unit(r.answers));
    CHECK(seen == std::set<std::string>(g7->units.begin(), g7->units.end()));

    // Set unions from the group table.
    auto units = [&](int id) {
        const auto it = std::find_if(catalog.begin(), catalog.end(), [&](const auto& d) { return d.group_id == id; });
        return std::set<std::string>(it->units.begin(), it->units.end());
    };
    auto join = [](std::set<std::string> a, const std::set<std::string>& b) {
        a.insert(b.begin(), b.end());
        return a;
    };
    CHECK(units(7) == join(units(4), units(6)));
    CHECK(units(8) == join(units(4), units(5)));
    CHECK(units(0).size() == 4);
}

TEST_CASE("reference dynamic pool profile")
{
    const auto pool = paper_dynamic_pool();
    REQUIRE(pool.size() == 1781);
    const auto& w = pool.weights();
    CHECK(std::is_sorted(w.rbegin(), w.rend()));
    CHECK(std::adjacent_find(w.begin(), w.end(), [](double a, double b) { return a <= b; }) == w.end());
    double head = 0, mid = 0;
    for (std::size_t i = 0; i < 200; ++i)
        head += w[i];
    for (std::size_t i = 200; i < 600; ++i)
        mid += w[i];
    CHECK(head == doctest::Approx(0.54));
    CHECK(mid == doctest::Approx(0.4509));
    std::set<std::uint32_t> statics;
    for (const auto& a : static_answers(paper_groups()))
        if (const auto* v4 = std::get_if<Ipv4>(&a.rr))
            statics.insert(v4->value);
    for (const auto& ip : pool.addresses()) {
        CHECK_FALSE(statics.contains(ip.value));
        CHECK((ip.value & 0xFFFE0000u) != 0xC6120000u);
    }
}

TEST_CASE("same seed, same transcript")
{
    auto cfg = paper_path(Blocklist({{"a.com", RuleClass::R4, 10}}), cn_race(), 9);
    InjectorSim x(cfg), y(cfg);
    for (int i = 0; i < 100; ++i) {
        const auto rx = x.on_query(query("za.com"));
        const auto ry = y.on_query(query("za.com"));
        REQUIRE(rx.size() == ry.size());
        for (std::size_t k = 0; k < rx.size(); ++k) {
            CHECK(rx[k].received_at == ry[k].received_at);
            CHECK(rx[k].answers == ry[k].answers);
        }
    }
}
