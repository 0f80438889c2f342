#include "gfwlab/datastore.hpp"
#include "gfwlab/pipeline.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace gfwlab;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

ProbeRecord sample_record()
{
    ProbeRecord rec;
    rec.date = Date::parse("2024-02-29");
    rec.path = "sink";
    rec.qname = Fqdn("www.example.com");
    rec.qtype = QType::AAAA;
    rec.round = 2;
    rec.txid = 4242;
    rec.sent_at = 1234567890ns;
    rec.verdict = ProbeVerdict::Censored;
    WireResponse a;
    a.txid = rec.txid;
    a.qname = rec.qname;
    a.qtype = rec.qtype;
    a.answers = {DnsAnswer{Ipv6::parse("2001::1a2b:3c4d"), 300}};
    a.df_flag = false;
    a.received_at = rec.sent_at + 36'123'457ns;
    a.ground_truth_forged = true;
    WireResponse b = a;
    b.answers = {DnsAnswer{Cname{Fqdn("why.cc")}, 60}, DnsAnswer{Ipv4::parse("216.139.213.144"), 60}};
    b.aa_flag = true;
    b.df_flag.reset();
    b.rcode = 3;
    b.received_at = rec.sent_at + 400ms;
    b.ground_truth_forged.reset();
    rec.responses = {a, b};
    return rec;
}

fs::path temp_dir(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("gfwlab_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("JSONL round trip")
{
    const auto rec = sample_record();
    const auto line = to_jsonl(rec);
    CHECK(line.find('\n') == std::string::npos);
    CHECK(line.find("\"v\":1") != std::string::npos);
    const auto back = record_from_jsonl(line);
    CHECK(back.date == rec.date);
    CHECK(back.path == rec.path);
    CHECK(back.qname == rec.qname);
    CHECK(back.qtype == rec.qtype);
    CHECK(back.round == rec.round);
    CHECK(back.txid == rec.txid);
    CHECK(back.sent_at == rec.sent_at);
    CHECK(back.verdict == rec.verdict);
    REQUIRE(back.responses.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto& x = back.responses[i];
        const auto& y = rec.responses[i];
        CHECK(x.answers == y.answers);
        CHECK(x.aa_flag == y.aa_flag);
        CHECK(x.rcode == y.rcode);
        CHECK(x.df_flag == y.df_flag);
        CHECK(x.ground_truth_forged == y.ground_truth_forged);
        CHECK(x.received_at == y.received_at);
    }
    CHECK(to_jsonl(back) == line);

    std::stringstream ss;
    const std::vector<ProbeRecord> records{rec, rec};
    write_jsonl(ss, records);
    CHECK(read_jsonl(ss).size() == 2);
}

TEST_CASE("JSONL errors carry the line number")
{
    std::istringstream in(to_jsonl(sample_record()) + "\n{\"v\":1,\"qname\":\n");
    try {
        read_jsonl(in);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    std::istringstream future("{\"v\":2}\n");
    CHECK_THROWS_AS(read_jsonl(future), DataError);
}

TEST_CASE("digests are stable")
{
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    ForgedPool a, b;
    auto rec = sample_record();
    a.ingest(rec);
    b.ingest(rec);
    CHECK(pool_digest(a) == pool_digest(b));
    rec.txid = 1;
    b.ingest(rec);
    CHECK(pool_digest(a) != pool_digest(b));
}

TEST_CASE("churn examples")
{
    const std::vector<std::pair<Date, std::set<std::string>>> sets{
        {Date::parse("2024-01-01"), {"a", "b"}},
        {Date::parse("2024-01-02"), {"b", "c"}},
        {Date::parse("2024-01-04"), {"a"}},
    };
    const auto rows = churn(sets);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == ChurnRow{Date::parse("2024-01-01"), 2, 0, 2, 2});
    CHECK(rows[1] == ChurnRow{Date::parse("2024-01-02"), 1, 1, 3, 2});
    CHECK(rows[2] == ChurnRow{Date::parse("2024-01-04"), 1, 2, 3, 1});

    std::ostringstream csv;
    write_churn_csv(csv, rows);
    CHECK(csv.str().rfind("date,added,removed,cumulative,current\n2024-01-01,2,0,2,2\n", 0) == 0);

    auto regress = sets;
    regress[2].first = Date::parse("2024-01-02");
    CHECK_THROWS_AS(churn(regress), DataError);
}

TEST_CASE("churn agrees with a brute-force recount over 100 days")
{
    Rng rng(31);
    std::vector<std::pair<Date, std::set<std::string>>> sets;
    Date d = Date::parse("2023-12-30");
    for (int day = 0; day < 100; ++day) {
        d = d + static_cast<int>(1 + rng.below(3));
        std::set<std::string> s;
        for (int i = 0; i < 40; ++i)
            if (rng.bernoulli(0.4))
                s.insert("x" + std::to_string(i));
        sets.push_back({d, s});
    }
    const auto rows = churn(sets);
    REQUIRE(rows.size() == 100);
    for (std::size_t t = 0; t < rows.size(); ++t) {
        std::size_t added = 0, removed = 0;
        std::set<std::string> ever;
        for (std::size_t u = 0; u <= t; ++u)
            for (const auto& x : sets[u].second)
                ever.insert(x);
        for (const auto& x : sets[t].second)
            if (t == 0 || !sets[t - 1].second.count(x))
                ++added;
        if (t > 0)
            for (const auto& x : sets[t - 1].second)
                if (!sets[t].second.count(x))
                    ++removed;
        CHECK(rows[t].added == added);
        CHECK(rows[t].removed == removed);
        CHECK(rows[t].cumulative == ever.size());
        CHECK(rows[t].current == sets[t].second.size());
        if (t > 0)
            CHECK(rows[t].current == rows[t - 1].current + added - removed);
    }
}

TEST_CASE("snapshot chain refuses date regression")
{
    SnapshotChain chain;
    chain.append({Date::parse("2024-01-02"), {}, {}, ""});
    CHECK_THROWS_AS(chain.append({Date::parse("2024-01-02"), {}, {}, ""}), DataError);
    CHECK_THROWS_AS(chain.append({Date::parse("2024-01-01"), {}, {}, ""}), DataError);
    chain.append({Date::parse("2024-01-03"), {}, {}, ""});
    CHECK(chain.snapshots().size() == 2);

    const std::vector<ProbeRecord> wrong_day{sample_record()};
    CHECK_THROWS_AS(snapshot(Date::parse("2024-01-01"), wrong_day, Blocklist{}, ForgedPool{}), DataError);
}

TEST_CASE("report formats and SVG output")
{
    CHECK(report_format_from_string("csv") == ReportFormat::Csv);
    CHECK(report_format_from_string("svg") == ReportFormat::Svg);
    CHECK_THROWS_AS(report_format_from_string("pdf"), DataError);

    const SvgPlot plot{"Pool growth", "day", "unique answers", {{"pool", {{0, 1}, {1, 5}, {2, 7}}}}};
    std::ostringstream a, b;
    write_svg(a, plot, "deadbeef");
    write_svg(b, plot, "deadbeef");
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("<svg", 0) == 0);
    CHECK(a.str().find("<metadata>source-sha256:deadbeef</metadata>") != std::string::npos);
    CHECK(a.str().find("unique answers") != std::string::npos);
    CHECK(day_dir("/x", Date::parse("2024-03-05")) == fs::path("/x/data/2024-03-05"));
}

TEST_CASE("replay_snapshots reproduces the pipeline chain")
{
    LabConfig cfg;
    cfg.days = 3;
    cfg.planted = 40;
    cfg.negatives = 30;
    cfg.rounds = 2;
    cfg.churn = 0.2;
    const auto dir = temp_dir("replay");
    const auto summary = run_pipeline(cfg, dir, false);
    CHECK(summary.bases > 0);

    const auto replay = replay_snapshots(dir);
    REQUIRE(replay.size() == 3);
    std::ostringstream snaps;
    snaps << "date,censored,bases,pool_digest\n";
    for (const auto& s : replay)
        snaps << s.date.str() << ',' << s.censored.size() << ',' << s.bases.size() << ',' << s.pool_digest << '\n';
    CHECK(snaps.str() == slurp(dir / "reports" / "snapshots.csv"));

    std::ostringstream cc;
    write_churn_csv(cc, censored_churn(replay));
    CHECK(cc.str() == slurp(dir / "reports" / "churn_censored.csv"));
    std::ostringstream bc;
    write_churn_csv(bc, base_churn(replay));
    CHECK(bc.str() == slurp(dir / "reports" / "churn_bases.csv"));
    fs::remove_all(dir);
}
