#include "gfwlab/datastore.hpp"
#include "gfwlab/pipeline.hpp"
#include "gfwlab/pool.hpp"
#include "gfwlab/prober.hpp"
#include "gfwlab/rulegen.hpp"
#include "gfwlab/sentry.hpp"
#include "gfwlab/transport.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

namespace fs = std::filesystem;
using namespace gfwlab;

namespace {

enum Exit { ok = 0, usage = 1, data_error = 2, transport_error = 3 };

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";

    LabConfig lab() const
    {
        LabConfig c = config.empty() ? LabConfig{} : load_config(config);
        if (seed)
            c.seed = *seed;
        return c;
    }
};

void add_common(CLI::App* app, Common& c)
{
    app->add_option("--config", c.config, "JSON lab configuration");
    app->add_option("--seed", c.seed, "Override the configured seed");
    app->add_option("--out", c.out, "Output directory")->capture_default_str();
}

std::ofstream open_out(const fs::path& p)
{
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f)
        throw DataError("cannot write " + p.string());
    return f;
}

std::vector<ProbeRecord> load_all(const std::vector<std::string>& inputs)
{
    std::vector<ProbeRecord> out;
    for (const auto& p : inputs) {
        auto r = load_jsonl(p);
        out.insert(out.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    }
    return out;
}

ForgedPool load_pool(const std::string& path)
{
    if (path.empty())
        return {};
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open " + path);
    return ForgedPool::read_csv(in);
}

std::unique_ptr<Transport> target_or_sim(const std::string& target, PathConfig sim)
{
    if (!target.empty())
        return std::make_unique<UdpTransport>(Endpoint::parse(target));
    return std::make_unique<SimTransport>(std::move(sim));
}

UdpInjectorServer* g_server = nullptr;

void on_signal(int)
{
    if (g_server)
        g_server->stop();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"gfwlab: DNS injection lab"};
    app.require_subcommand(1);

    // simulate
    Common sim_c;
    std::string listen;
    auto* simulate = app.add_subcommand("simulate", "Run the injector simulator over the configured test list");
    add_common(simulate, sim_c);
    simulate->add_option("--listen", listen, "Serve the simulator on HOST:PORT over UDP instead");

    // probe
    Common probe_c;
    std::string probe_domains_file, probe_target, probe_date;
    auto* probe = app.add_subcommand("probe", "Probe a domain list and write probes.jsonl");
    add_common(probe, probe_c);
    probe->add_option("--domains", probe_domains_file, "Domain list, one per line")->required();
    probe->add_option("--target", probe_target, "UDP HOST:PORT (default: the simulated sink path)");
    probe->add_option("--date", probe_date, "Record date YYYY-MM-DD (default: config start date)");

    // rulegen
    Common rg_c;
    std::vector<std::string> rg_in;
    std::string rg_target;
    auto* rulegen = app.add_subcommand("rulegen", "Recover base domains and rule classes from censored names");
    add_common(rulegen, rg_c);
    rulegen->add_option("--in", rg_in, "probes.jsonl files")->required();
    rulegen->add_option("--target", rg_target, "UDP HOST:PORT (default: the simulated sink path)");

    // analyze
    Common an_c;
    std::string what;
    std::vector<std::string> an_in;
    bool preset = false;
    auto* analyze = app.add_subcommand("analyze", "Pool, CDF, group and injector analytics");
    add_common(analyze, an_c);
    analyze->add_option("what", what, "pool | cdf | groups | injectors")
        ->required()
        ->check(CLI::IsMember({"pool", "cdf", "groups", "injectors"}));
    analyze->add_option("--in", an_in, "probes.jsonl files");
    analyze->add_flag("--preset", preset, "cdf: use the configured dynamic pool weights instead of --in");

    // resolve
    Common rs_c;
    std::string rs_domain, rs_pool, rs_target, rs_race = "cn";
    double rs_window = 400.0;
    bool b2b = false;
    auto* resolve = app.add_subcommand("resolve", "Hold-on resolution of one name");
    add_common(resolve, rs_c);
    resolve->add_option("--domain", rs_domain, "Name to resolve")->required();
    resolve->add_option("--window", rs_window, "Hold-on window in ms")->capture_default_str();
    resolve->add_flag("--back-to-back", b2b, "Issue a second query when candidates remain ambiguous");
    resolve->add_option("--pool", rs_pool, "pool.csv of known forged answers");
    resolve->add_option("--target", rs_target, "UDP HOST:PORT (default: simulated resolver path)");
    resolve->add_option("--race", rs_race, "Simulated race preset: cn | us")->capture_default_str();

    // audit
    Common au_c;
    std::string au_resolver, au_domains, au_pool;
    auto* audit = app.add_subcommand("audit", "Check a resolver's cache for poisoned records");
    add_common(audit, au_c);
    audit->add_option("--resolver", au_resolver, "Resolver HOST:PORT")->required();
    audit->add_option("--domains", au_domains, "Censored domain list")->required();
    audit->add_option("--pool", au_pool, "pool.csv of known forged answers");

    // calibrate
    Common ca_c;
    std::string ca_known, ca_target, ca_pool, ca_race = "cn";
    auto* calibrate = app.add_subcommand("calibrate", "Derive a hold-on window from known-censored names");
    add_common(calibrate, ca_c);
    calibrate->add_option("--known-censored", ca_known, "Known-censored domain list")->required();
    calibrate->add_option("--target", ca_target, "UDP HOST:PORT (default: simulated resolver path)");
    calibrate->add_option("--pool", ca_pool, "pool.csv used to label forged responses on a real target");
    calibrate->add_option("--race", ca_race, "Simulated race preset: cn | us")->capture_default_str();

    // report
    Common rp_c;
    std::string format = "svg";
    auto* report = app.add_subcommand("report", "Run the full pipeline and write data and reports");
    add_common(report, rp_c);
    report->add_option("--format", format, "csv | svg (svg also writes CSV)")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : usage;
    }

    try {
        if (*simulate) {
            const auto cfg = sim_c.lab();
            const auto truth = lab_blocklist(cfg);
            if (!listen.empty()) {
                UdpInjectorServer server(sink_path(cfg, truth, 0), Endpoint::parse(listen));
                g_server = &server;
                std::signal(SIGINT, on_signal);
                std::signal(SIGTERM, on_signal);
                std::fprintf(stderr, "serving on port %u\n", server.port());
                server.run();
                std::fprintf(stderr, "%zu queries served\n", server.queries_seen());
                return ok;
            }
            const auto domains = test_list(cfg, truth);
            for (int day = 0; day < cfg.days; ++day) {
                SimTransport sink(sink_path(cfg, active_blocklist(cfg, truth, day), day));
                ProbePlan plan;
                plan.domains = domains;
                plan.rounds = cfg.rounds;
                plan.pacing_qps = cfg.qps;
                plan.seed = mix64(cfg.seed + static_cast<std::uint64_t>(day));
                plan.date = cfg.start_date + day;
                Transport* paths[] = {&sink};
                const auto records = probe_domains(plan, paths);
                auto f = open_out(day_dir(sim_c.out, plan.date) / "probes.jsonl");
                write_jsonl(f, records);
            }
            {
                auto f = open_out(fs::path(sim_c.out) / "truth.tsv");
                write_blocklist(f, truth);
            }
            return ok;
        }

        if (*probe) {
            const auto cfg = probe_c.lab();
            ProbePlan plan;
            plan.domains = load_domain_list(probe_domains_file);
            plan.rounds = cfg.rounds;
            plan.pacing_qps = cfg.qps;
            plan.seed = cfg.seed;
            plan.date = probe_date.empty() ? cfg.start_date : Date::parse(probe_date);
            auto t = target_or_sim(probe_target, sink_path(cfg, lab_blocklist(cfg), 0));
            Transport* paths[] = {t.get()};
            const auto records = probe_domains(plan, paths);
            auto f = open_out(fs::path(probe_c.out) / "probes.jsonl");
            write_jsonl(f, records);
            std::size_t censored = censored_domains(records).size();
            std::printf("%zu records, %zu censored domains\n", records.size(), censored);
            return ok;
        }

        if (*rulegen) {
            const auto cfg = rg_c.lab();
            const auto records = load_all(rg_in);
            const auto censored = censored_domains(records);
            auto t = target_or_sim(rg_target, sink_path(cfg, lab_blocklist(cfg), 0));
            Prober prober(*t, {cfg.rounds, std::chrono::milliseconds(2000), QType::A, mix64(cfg.seed ^ 0x7072)});
            RuleGen gen(prober, {cfg.rulegen_trials, 8, mix64(cfg.seed ^ 0x7267)});
            std::vector<BaseDomainResult> results;
            Blocklist estimate;
            std::size_t stale = 0;
            for (const auto& name : censored) {
                if (estimate.match(name))
                    continue;
                try {
                    results.push_back(gen.find_base(name));
                    estimate = dedupe_bases(results).blocklist();
                } catch (const RulegenError& e) {
                    if (e.kind() != RulegenError::Kind::StaleInput)
                        throw;
                    ++stale;
                }
            }
            {
                auto f = open_out(fs::path(rg_c.out) / "blocklist.tsv");
                write_blocklist(f, estimate);
            }
            std::vector<Fqdn> explained;
            for (const auto& n : censored)
                if (estimate.match(n))
                    explained.push_back(n);
            const auto ob = overblocking_report(estimate, explained);
            {
                auto f = open_out(fs::path(rg_c.out) / "overblocking.csv");
                write_overblocking_csv(f, ob);
            }
            std::printf("%zu censored names, %zu bases, %zu overblocked, %zu stale\n", censored.size(),
                        estimate.size(), ob.overblocked.size(), stale);
            return ok;
        }

        if (*analyze) {
            const auto cfg = an_c.lab();
            const fs::path out(an_c.out);
            if (what == "cdf" && preset) {
                const auto cdf = frequency_cdf(make_dynamic_pool(cfg));
                auto f = open_out(out / "cdf.csv");
                cdf.write_csv(f);
                std::printf("k@0.50=%zu k@0.99=%zu of %zu\n", cdf.rank_for(0.5), cdf.rank_for(0.99), cdf.answers.size());
                return ok;
            }
            if (an_in.empty())
                throw DataError("analyze " + what + " needs --in");
            const auto records = load_all(an_in);
            if (what == "pool" || what == "cdf") {
                ForgedPool pool;
                pool.ingest(records);
                if (what == "pool") {
                    auto f = open_out(out / "pool.csv");
                    pool.write_csv(f);
                    auto g = open_out(out / "pool_daily.csv");
                    write_pool_daily_csv(g, pool);
                    std::printf("%zu unique forged answers\n", pool.size());
                } else {
                    const auto cdf = frequency_cdf(pool);
                    auto f = open_out(out / "cdf.csv");
                    cdf.write_csv(f);
                    std::printf("k@0.50=%zu k@0.99=%zu of %zu\n", cdf.rank_for(0.5), cdf.rank_for(0.99),
                                cdf.answers.size());
                }
            } else if (what == "groups") {
                const auto inf = infer_groups(records, static_set_catalog(paper_groups()));
                auto f = open_out(out / "groups.csv");
                f << "domain,kind,group,samples,distinct\n";
                for (const auto& [name, v] : inf.domains)
                    f << name.str() << ',' << to_string(v.kind) << ',' << v.group_id << ',' << v.samples << ','
                      << v.units.size() << '\n';
                std::printf("%zu domains\n", inf.domains.size());
            } else {
                const auto rep = fingerprint_injectors(records);
                if (rep.degraded)
                    std::fprintf(stderr, "warning: DF flag absent; injectors 2 and 3 merged\n");
                auto f = open_out(out / "injectors.csv");
                rep.write_csv(f);
                std::printf("shares: 1=%.4f 2=%.4f 3=%.4f subset=%s\n", rep.share(1), rep.share(2), rep.share(3),
                            rep.subset_holds ? "yes" : "no");
            }
            return ok;
        }

        if (*resolve) {
            const auto cfg = rs_c.lab();
            const Fqdn domain(rs_domain);
            auto race = race_preset(rs_race);
            if (!race)
                throw DataError("unknown race preset '" + rs_race + "'");
            auto p = paper_path(lab_blocklist(cfg), race, cfg.seed);
            auto t = target_or_sim(rs_target, std::move(p));
            const Detector detector(load_pool(rs_pool));
            HoldOnPolicy policy;
            policy.window_ms = rs_window;
            policy.force = true;
            policy.backtoback = b2b;
            const auto res = holdon_resolve(domain, policy, *t, detector);
            for (const auto& r : res.transcript)
                std::printf("  %-8s %s aa=%d\n", to_string(detector.classify(r)).c_str(), sample_unit(r.answers).c_str(),
                            r.aa_flag ? 1 : 0);
            std::printf("%s %s", domain.str().c_str(), std::string(to_string(res.status)).c_str());
            for (const auto& a : res.answers)
                std::printf(" %s", a.value().c_str());
            std::printf("\n");
            if (res.status == HoldOnResult::Status::NoResponse)
                return transport_error;
            return res.ok() ? ok : data_error;
        }

        if (*audit) {
            const auto domains = load_domain_list(au_domains);
            const Detector detector(load_pool(au_pool));
            UdpTransport t(Endpoint::parse(au_resolver));
            const auto rep = audit_resolver(t, domains, detector);
            auto f = open_out(fs::path(au_c.out) / "pollution.csv");
            rep.write_csv(f);
            rep.write_csv(std::cout);
            for (const auto& [name, ans] : rep.examples)
                std::printf("  %s -> %s\n", name.str().c_str(), ans.c_str());
            return ok;
        }

        if (*calibrate) {
            const auto cfg = ca_c.lab();
            const auto domains = load_domain_list(ca_known);
            std::vector<ProbeRecord> records;
            if (ca_target.empty()) {
                auto race = race_preset(ca_race);
                if (!race)
                    throw DataError("unknown race preset '" + ca_race + "'");
                std::vector<DnsQuery> traffic;
                Rng rng(cfg.seed);
                Timestamp t{0};
                for (const auto& d : domains) {
                    traffic.push_back({static_cast<std::uint16_t>(rng.below(65536)), d, QType::A, t});
                    t += std::chrono::milliseconds(1);
                }
                records = run_path(traffic, paper_path(lab_blocklist(cfg), race, cfg.seed), cfg.start_date);
                const auto stats = delta_stats(records);
                std::printf("window_ms=%.1f (q99 delta %.1f ms over %zu names, %zu skipped)\n", calibrate_window(stats),
                            stats.quantile(0.99), stats.deltas_ms.size(), stats.skipped);
            } else {
                ProbePlan plan;
                plan.domains = domains;
                plan.rounds = 1;
                plan.qtypes = {QType::A};
                plan.seed = cfg.seed;
                plan.date = cfg.start_date;
                UdpTransport t(Endpoint::parse(ca_target));
                Transport* paths[] = {&t};
                records = probe_domains(plan, paths);
                const Detector detector(load_pool(ca_pool));
                const auto stats =
                    delta_stats(records, [&](const WireResponse& r) { return detector.classify(r).is_poisoned(); });
                std::printf("window_ms=%.1f (q99 delta %.1f ms over %zu names, %zu skipped)\n", calibrate_window(stats),
                            stats.quantile(0.99), stats.deltas_ms.size(), stats.skipped);
            }
            return ok;
        }

        if (*report) {
            const auto fmt = report_format_from_string(format);
            const auto cfg = rp_c.lab();
            const auto s = run_pipeline(cfg, rp_c.out, fmt == ReportFormat::Svg);
            std::printf("%zu records, %zu censored domains, %zu bases, %zu forged answers, %zu files\n", s.records,
                        s.censored_domains, s.bases, s.pool_size, s.files.size());
            return ok;
        }
    } catch (const RulegenError& e) {
        std::fprintf(stderr, "rulegen: %s\n", e.what());
        return e.kind() == RulegenError::Kind::PathDown ? transport_error : data_error;
    } catch (const TransportError& e) {
        std::fprintf(stderr, "transport error: %s\n", e.what());
        return transport_error;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return data_error;
    }
    return usage;
}
