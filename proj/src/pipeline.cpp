#include "gfwlab/pipeline.hpp"

#include "gfwlab/pool.hpp"
#include "gfwlab/prober.hpp"
#include "gfwlab/rulegen.hpp"
#include "gfwlab/scenario.hpp"
#include "gfwlab/sentry.hpp"
#include "gfwlab/transport.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace gfwlab {

namespace fs = std::filesystem;
using nlohmann::json;

LabConfig parse_config(std::string_view json_text)
{
    LabConfig c;
    try {
        const json j = json::parse(json_text);
        if (!j.is_object())
            throw ConfigError("config must be a JSON object");
        static const std::set<std::string> known{"seed",     "start_date", "days",          "rounds",
                                                 "qps",      "blocklist",  "planted",       "group_ids",
                                                 "names_per_entry", "negatives", "churn",   "miss_rate",
                                                 "race",     "pool",       "rulegen",       "rulegen_trials"};
        for (const auto& [key, value] : j.items())
            if (!known.contains(key))
                throw ConfigError("unknown config key '" + key + "'");
        c.seed = j.value("seed", c.seed);
        if (j.contains("start_date"))
            c.start_date = Date::parse(j.at("start_date").get<std::string>());
        c.days = j.value("days", c.days);
        c.rounds = j.value("rounds", c.rounds);
        c.qps = j.value("qps", c.qps);
        if (j.contains("blocklist") && !j.at("blocklist").is_null())
            c.blocklist_file = j.at("blocklist").get<std::string>();
        c.planted = j.value("planted", c.planted);
        c.group_ids = j.value("group_ids", c.group_ids);
        c.names_per_entry = j.value("names_per_entry", c.names_per_entry);
        c.negatives = j.value("negatives", c.negatives);
        c.churn = j.value("churn", c.churn);
        c.miss_rate = j.value("miss_rate", c.miss_rate);
        c.race = j.value("race", c.race);
        c.pool = j.value("pool", c.pool);
        c.rulegen = j.value("rulegen", c.rulegen);
        c.rulegen_trials = j.value("rulegen_trials", c.rulegen_trials);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (c.days < 1 || c.rounds < 1 || !(c.qps > 0) || c.rulegen_trials < 1)
        throw ConfigError("config: days, rounds, qps and rulegen_trials must be positive");
    if (!(c.churn >= 0 && c.churn < 1) || !(c.miss_rate >= 0 && c.miss_rate < 1))
        throw ConfigError("config: churn and miss_rate must be in [0, 1)");
    if (c.group_ids.empty())
        throw ConfigError("config: group_ids must not be empty");
    if (c.race != "none" && !race_preset(c.race))
        throw ConfigError("config: unknown race preset '" + c.race + "'");
    make_dynamic_pool(c);
    return c;
}

LabConfig load_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::optional<RacePreset> race_preset(std::string_view name)
{
    if (name == "cn")
        return cn_race();
    if (name == "us")
        return us_race();
    return std::nullopt;
}

DynamicPool make_dynamic_pool(const LabConfig& cfg)
{
    if (cfg.pool == "paper")
        return paper_dynamic_pool();
    if (cfg.pool.starts_with("uniform:")) {
        try {
            const auto n = std::stoul(cfg.pool.substr(8));
            if (n > 0)
                return uniform_dynamic_pool(n, cfg.seed);
        } catch (const std::exception&) {
        }
    }
    throw ConfigError("config: pool must be 'paper' or 'uniform:N'");
}

Blocklist lab_blocklist(const LabConfig& cfg)
{
    if (cfg.blocklist_file)
        return load_blocklist(*cfg.blocklist_file);
    Rng rng(mix64(cfg.seed ^ 0x706c616e74ULL));
    return Blocklist(plant_blocklist(cfg.planted, rng, cfg.group_ids));
}

Blocklist active_blocklist(const LabConfig& cfg, const Blocklist& full, int day)
{
    if (cfg.churn == 0.0 || day == 0)
        return full;
    std::vector<BlockEntry> active;
    for (const auto& e : full.entries()) {
        const double u = static_cast<double>(hash_str(e.base, mix64(cfg.seed + static_cast<std::uint64_t>(day))) >> 11)
                         * 0x1.0p-53;
        if (u >= cfg.churn)
            active.push_back(e);
    }
    return Blocklist(std::move(active));
}

namespace {

PathConfig lab_path(const LabConfig& cfg, const Blocklist& active, int day, std::optional<RacePreset> race)
{
    auto p = paper_path(active, race, mix64(cfg.seed ^ (static_cast<std::uint64_t>(day) << 20) ^ (race ? 0x72 : 0)));
    p.assignment_seed = cfg.seed;
    p.dynamic_pool = make_dynamic_pool(cfg);
    p.miss_rate = cfg.miss_rate;
    return p;
}

} // namespace

PathConfig sink_path(const LabConfig& cfg, const Blocklist& active, int day)
{
    return lab_path(cfg, active, day, std::nullopt);
}

std::optional<PathConfig> race_path(const LabConfig& cfg, const Blocklist& active, int day)
{
    auto race = race_preset(cfg.race);
    if (!race)
        return std::nullopt;
    return lab_path(cfg, active, day, race);
}

std::vector<Fqdn> test_list(const LabConfig& cfg, const Blocklist& full)
{
    Rng rng(mix64(cfg.seed ^ 0x746573744cULL));
    std::set<Fqdn> names;
    for (const auto& e : full.entries())
        for (auto& n : censored_examples(e, rng, cfg.names_per_entry))
            names.insert(std::move(n));
    for (auto& n : nonexistent_domains(rng, cfg.negatives))
        names.insert(std::move(n));
    return {names.begin(), names.end()};
}

namespace {

struct Writer {
    PipelineSummary& summary;

    std::ofstream open(const fs::path& p)
    {
        fs::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::binary);
        if (!out)
            throw DataError("cannot write " + p.string());
        summary.files.push_back(p);
        return out;
    }
};

std::vector<std::pair<double, double>> churn_points(std::span<const ChurnRow> rows, bool cumulative)
{
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < rows.size(); ++i)
        pts.emplace_back(static_cast<double>(i), static_cast<double>(cumulative ? rows[i].cumulative : rows[i].added));
    return pts;
}

std::string text_of(const auto& write)
{
    std::ostringstream ss;
    write(ss);
    return ss.str();
}

DailySnapshot day_snapshot(Date date, std::span<const ProbeRecord> records, const Blocklist& estimate,
                           const ForgedPool& pool)
{
    // The day's base set: estimated entries that account for a domain censored that day.
    std::set<BlockEntry> used;
    for (const auto& r : records)
        if (r.verdict == ProbeVerdict::Censored)
            if (auto e = estimate.match(r.qname))
                used.insert(*e);
    return snapshot(date, records, Blocklist(std::vector<BlockEntry>(used.begin(), used.end())), pool);
}

} // namespace

PipelineSummary run_pipeline(const LabConfig& cfg, const fs::path& out, bool svg)
{
    PipelineSummary summary;
    Writer w{summary};
    const Blocklist truth = lab_blocklist(cfg);
    const auto domains = test_list(cfg, truth);

    ForgedPool pool;
    SnapshotChain chain;
    std::vector<ProbeRecord> all_records;
    std::vector<ProbeRecord> race_records;
    std::vector<BaseDomainResult> rulegen_results;
    Blocklist estimate;
    std::set<Fqdn> ever_censored;

    for (int day = 0; day < cfg.days; ++day) {
        const Date date = cfg.start_date + day;
        const Blocklist active = active_blocklist(cfg, truth, day);

        // simulate + probe
        SimTransport sink(sink_path(cfg, active, day));
        ProbePlan plan;
        plan.domains = domains;
        plan.rounds = cfg.rounds;
        plan.pacing_qps = cfg.qps;
        plan.seed = mix64(cfg.seed + static_cast<std::uint64_t>(day));
        plan.date = date;
        Transport* paths[] = {&sink};
        auto records = probe_domains(plan, paths);

        // rulegen on names the estimate does not yet explain
        const auto censored = censored_domains(records);
        ever_censored.insert(censored.begin(), censored.end());
        if (cfg.rulegen) {
            SimTransport rg_path(sink_path(cfg, active, day));
            Prober prober(rg_path, {cfg.rounds, plan.window, QType::A, mix64(cfg.seed ^ 0x7072)});
            RuleGen gen(prober, {cfg.rulegen_trials, 8, mix64(cfg.seed ^ 0x7267 ^ static_cast<std::uint64_t>(day))});
            for (const auto& name : censored) {
                if (estimate.match(name))
                    continue;
                rulegen_results.push_back(gen.find_base(name));
                estimate = dedupe_bases(rulegen_results).blocklist();
            }
        }

        // resolver-side race, for the delta-time analysis
        if (auto rp = race_path(cfg, active, day)) {
            std::vector<DnsQuery> traffic;
            Rng rng(mix64(cfg.seed ^ 0x72616365ULL ^ static_cast<std::uint64_t>(day)));
            Timestamp t{0};
            for (const auto& name : censored) {
                traffic.push_back({static_cast<std::uint16_t>(rng.below(65536)), name, QType::A, t});
                t += std::chrono::milliseconds(1);
            }
            auto rr = run_path(traffic, *rp, date);
            race_records.insert(race_records.end(), rr.begin(), rr.end());
        }

        pool.ingest(records);
        chain.append(day_snapshot(date, records, estimate, pool));

        const fs::path dir = day_dir(out, date);
        {
            auto f = w.open(dir / "probes.jsonl");
            write_jsonl(f, records);
        }
        {
            auto f = w.open(dir / "blocklist.tsv");
            write_blocklist(f, estimate);
        }
        {
            auto f = w.open(dir / "pool.csv");
            pool.write_csv(f);
        }
        {
            auto f = w.open(dir / "churn.csv");
            write_churn_csv(f, censored_churn(chain.snapshots()));
        }
        summary.records += records.size();
        all_records.insert(all_records.end(), std::make_move_iterator(records.begin()),
                           std::make_move_iterator(records.end()));
    }

    // analyze + report
    const fs::path rep = out / "reports";
    const auto& snaps = chain.snapshots();
    const auto cchurn = censored_churn(snaps);
    const auto bchurn = base_churn(snaps);
    {
        auto f = w.open(rep / "snapshots.csv");
        f << "date,censored,bases,pool_digest\n";
        for (const auto& s : snaps)
            f << s.date.str() << ',' << s.censored.size() << ',' << s.bases.size() << ',' << s.pool_digest << '\n';
    }
    {
        auto f = w.open(rep / "churn_censored.csv");
        write_churn_csv(f, cchurn);
    }
    {
        auto f = w.open(rep / "churn_bases.csv");
        write_churn_csv(f, bchurn);
    }
    const std::string pool_hash = pool_digest(pool);
    if (svg) {
        auto f = w.open(rep / "churn.svg");
        write_svg(f,
                  {"Censored and base domains over time", "day", "cumulative",
                   {{"censored", churn_points(cchurn, true)}, {"bases", churn_points(bchurn, true)}}},
                  pool_hash);
    }
    {
        auto f = w.open(rep / "pool_daily.csv");
        write_pool_daily_csv(f, pool);
    }
    if (svg) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& d : pool.daily())
            pts.emplace_back(static_cast<double>(d.date.days() - cfg.start_date.days()), static_cast<double>(d.cumulative));
        auto f = w.open(rep / "pool_growth.svg");
        write_svg(f, {"Forged answers discovered over time", "day", "unique answers", {{"cumulative", pts}}},
                  pool_hash);
    }
    if (!pool.empty()) {
        const auto cdf = frequency_cdf(pool);
        {
            auto f = w.open(rep / "cdf.csv");
            cdf.write_csv(f);
        }
        {
            auto f = w.open(rep / "cdf_anchors.csv");
            f << "threshold,k\n";
            for (double th : {0.5, 0.9, 0.99, 1.0})
                f << th << ',' << cdf.rank_for(th) << '\n';
        }
        if (svg) {
            std::vector<std::pair<double, double>> pts;
            for (std::size_t i = 0; i < cdf.cumulative.size(); ++i)
                pts.emplace_back(static_cast<double>(i + 1), cdf.cumulative[i]);
            auto f = w.open(rep / "cdf.svg");
            write_svg(f, {"Injection frequency CDF", "forged IPv4 rank", "fraction of responses", {{"cdf", pts}}},
                      pool_hash);
        }
    }
    const auto catalog = static_set_catalog(paper_groups());
    const auto groups = infer_groups(all_records, catalog);
    {
        auto f = w.open(rep / "groups.csv");
        f << "domain,kind,group,samples,distinct\n";
        for (const auto& [name, v] : groups.domains)
            f << name.str() << ',' << to_string(v.kind) << ',' << v.group_id << ',' << v.samples << ','
              << v.units.size() << '\n';
    }
    const auto injectors = fingerprint_injectors(all_records);
    {
        auto f = w.open(rep / "injectors.csv");
        injectors.write_csv(f);
    }
    {
        std::vector<Fqdn> explained;
        for (const auto& name : ever_censored)
            if (estimate.match(name))
                explained.push_back(name);
        auto f = w.open(rep / "overblocking.csv");
        write_overblocking_csv(f, overblocking_report(estimate, explained));
    }
    if (!race_records.empty()) {
        const auto stats = delta_stats(race_records);
        {
            auto f = w.open(rep / "delta_summary.csv");
            stats.write_summary_csv(f);
        }
        {
            auto f = w.open(rep / "delta_cdf.csv");
            stats.write_cdf_csv(f);
        }
        if (svg) {
            std::vector<std::pair<double, double>> pts;
            const double n = static_cast<double>(stats.deltas_ms.size());
            for (std::size_t i = 0; i < stats.deltas_ms.size(); ++i)
                pts.emplace_back(stats.deltas_ms[i], static_cast<double>(i + 1) / n);
            auto f = w.open(rep / "delta_cdf.svg");
            write_svg(f,
                      {"Delta time between forged and legitimate responses", "delta (ms)", "CDF", {{cfg.race, pts}}},
                      sha256_hex(text_of([&](std::ostream& o) { stats.write_cdf_csv(o); })));
        }
    }

    summary.censored_domains = ever_censored.size();
    summary.bases = estimate.size();
    summary.pool_size = pool.size();
    return summary;
}

std::vector<Fqdn> load_domain_list(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open " + path.string());
    std::vector<Fqdn> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos)
            continue;
        const auto e = line.find_last_not_of(" \t\r");
        auto name = Fqdn::try_parse(std::string_view(line).substr(b, e - b + 1));
        if (!name)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": invalid domain name");
        out.push_back(std::move(*name));
    }
    return out;
}

std::vector<DailySnapshot> replay_snapshots(const fs::path& out)
{
    std::vector<fs::path> days;
    for (const auto& entry : fs::directory_iterator(out / "data"))
        if (entry.is_directory())
            days.push_back(entry.path());
    std::sort(days.begin(), days.end());
    ForgedPool pool;
    SnapshotChain chain;
    for (const auto& dir : days) {
        const Date date = Date::parse(dir.filename().string());
        const auto records = load_jsonl(dir / "probes.jsonl");
        const auto estimate = load_blocklist((dir / "blocklist.tsv").string());
        pool.ingest(records);
        chain.append(day_snapshot(date, records, estimate, pool));
    }
    return chain.snapshots();
}

} // namespace gfwlab
