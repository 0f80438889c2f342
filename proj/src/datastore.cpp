#include "gfwlab/datastore.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace gfwlab {

using nlohmann::json;

namespace {

json response_json(const WireResponse& r, Timestamp sent_at)
{
    json answers = json::array();
    for (const auto& a : r.answers)
        answers.push_back({{"type", a.type()}, {"value", a.value()}, {"ttl", a.ttl}});
    json j = {
        {"answers", std::move(answers)},
        {"aa", r.aa_flag},
        {"rcode", r.rcode},
        {"df", r.df_flag ? json(*r.df_flag) : json(nullptr)},
        {"delta_ms", to_ms(r.received_at - sent_at)},
    };
    if (r.ground_truth_forged)
        j["forged"] = *r.ground_truth_forged;
    return j;
}

WireResponse response_from_json(const json& j, const ProbeRecord& rec)
{
    WireResponse r;
    r.txid = rec.txid;
    r.qname = rec.qname;
    r.qtype = rec.qtype;
    for (const auto& a : j.at("answers")) {
        auto ans = DnsAnswer::parse(a.at("type").get<std::string>(), a.at("value").get<std::string>());
        ans.ttl = a.value("ttl", 300u);
        r.answers.push_back(std::move(ans));
    }
    r.aa_flag = j.at("aa").get<bool>();
    r.rcode = j.value("rcode", std::uint8_t{0});
    if (const auto& df = j.at("df"); !df.is_null())
        r.df_flag = df.get<bool>();
    const double ms = j.at("delta_ms").get<double>();
    r.received_at = rec.sent_at + Timestamp(std::llround(ms * 1e6));
    if (j.contains("forged"))
        r.ground_truth_forged = j.at("forged").get<bool>();
    return r;
}

} // namespace

std::string to_jsonl(const ProbeRecord& record)
{
    json responses = json::array();
    for (const auto& r : record.responses)
        responses.push_back(response_json(r, record.sent_at));
    json j = {
        {"v", jsonl_version},
        {"date", record.date.str()},
        {"path", record.path},
        {"qname", record.qname.str()},
        {"qtype", to_string(record.qtype)},
        {"round", record.round},
        {"txid", record.txid},
        {"sent_ns", record.sent_at.count()},
        {"verdict", to_string(record.verdict)},
        {"responses", std::move(responses)},
    };
    if (!record.error.empty())
        j["error"] = record.error;
    return j.dump();
}

ProbeRecord record_from_jsonl(std::string_view line)
{
    const json j = json::parse(line);
    if (j.at("v").get<int>() != jsonl_version)
        throw DataError("unsupported record version " + j.at("v").dump());
    ProbeRecord rec;
    rec.date = Date::parse(j.at("date").get<std::string>());
    rec.path = j.at("path").get<std::string>();
    rec.qname = Fqdn(j.at("qname").get<std::string>());
    rec.qtype = qtype_from_string(j.at("qtype").get<std::string>());
    rec.round = j.at("round").get<int>();
    rec.txid = j.at("txid").get<std::uint16_t>();
    rec.sent_at = Timestamp(j.at("sent_ns").get<std::int64_t>());
    rec.verdict = probe_verdict_from_string(j.at("verdict").get<std::string>());
    rec.error = j.value("error", std::string{});
    for (const auto& r : j.at("responses"))
        rec.responses.push_back(response_from_json(r, rec));
    return rec;
}

void write_jsonl(std::ostream& out, std::span<const ProbeRecord> records)
{
    for (const auto& r : records)
        out << to_jsonl(r) << '\n';
}

std::vector<ProbeRecord> read_jsonl(std::istream& in)
{
    std::vector<ProbeRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        try {
            out.push_back(record_from_jsonl(line));
        } catch (const std::exception& e) {
            throw DataError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<ProbeRecord> load_jsonl(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open " + path.string());
    try {
        return read_jsonl(in);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::string sha256_hex(std::string_view data)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

std::string pool_digest(const ForgedPool& pool)
{
    std::ostringstream csv;
    pool.write_csv(csv);
    return sha256_hex(csv.str());
}

DailySnapshot snapshot(Date date, std::span<const ProbeRecord> records, const Blocklist& bases,
                       const ForgedPool& pool)
{
    DailySnapshot s;
    s.date = date;
    for (const auto& r : records) {
        if (r.date != date)
            throw DataError("record for " + r.date.str() + " in snapshot of " + date.str());
        if (r.verdict == ProbeVerdict::Censored)
            s.censored.insert(r.qname);
    }
    s.bases = bases.entries();
    std::sort(s.bases.begin(), s.bases.end());
    s.pool_digest = pool_digest(pool);
    return s;
}

void SnapshotChain::append(DailySnapshot s)
{
    if (!chain_.empty() && s.date <= chain_.back().date)
        throw DataError("snapshot for " + s.date.str() + " does not follow " + chain_.back().date.str());
    chain_.push_back(std::move(s));
}

std::vector<ChurnRow> churn(std::span<const std::pair<Date, std::set<std::string>>> sets)
{
    std::vector<ChurnRow> out;
    std::set<std::string> ever;
    const std::set<std::string>* prev = nullptr;
    static const std::set<std::string> none;
    for (const auto& [date, cur] : sets) {
        if (!out.empty() && date <= out.back().date)
            throw DataError("churn dates must be strictly increasing");
        const auto& before = prev ? *prev : none;
        ChurnRow row;
        row.date = date;
        for (const auto& x : cur)
            row.added += before.contains(x) ? 0 : 1;
        for (const auto& x : before)
            row.removed += cur.contains(x) ? 0 : 1;
        ever.insert(cur.begin(), cur.end());
        row.cumulative = ever.size();
        row.current = cur.size();
        out.push_back(row);
        prev = &cur;
    }
    return out;
}

std::vector<ChurnRow> censored_churn(std::span<const DailySnapshot> snapshots)
{
    std::vector<std::pair<Date, std::set<std::string>>> sets;
    for (const auto& s : snapshots) {
        std::set<std::string> names;
        for (const auto& f : s.censored)
            names.insert(f.str());
        sets.emplace_back(s.date, std::move(names));
    }
    return churn(sets);
}

std::vector<ChurnRow> base_churn(std::span<const DailySnapshot> snapshots)
{
    std::vector<std::pair<Date, std::set<std::string>>> sets;
    for (const auto& s : snapshots) {
        std::set<std::string> keys;
        for (const auto& e : s.bases)
            keys.insert(e.base + "\t" + std::string(to_string(e.rule_class)));
        sets.emplace_back(s.date, std::move(keys));
    }
    return churn(sets);
}

void write_churn_csv(std::ostream& out, std::span<const ChurnRow> rows)
{
    out << "date,added,removed,cumulative,current\n";
    for (const auto& r : rows)
        out << r.date.str() << ',' << r.added << ',' << r.removed << ',' << r.cumulative << ',' << r.current << '\n';
}

void write_pool_daily_csv(std::ostream& out, const ForgedPool& pool)
{
    out << "date,unique,added,cumulative\n";
    for (const auto& d : pool.daily())
        out << d.date.str() << ',' << d.unique << ',' << d.added << ',' << d.cumulative << '\n';
}

ReportFormat report_format_from_string(std::string_view s)
{
    if (s == "csv")
        return ReportFormat::Csv;
    if (s == "svg")
        return ReportFormat::Svg;
    throw DataError("unknown report format '" + std::string(s) + "'");
}

namespace {

std::string xml_escape(std::string_view s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

} // namespace

void write_svg(std::ostream& out, const SvgPlot& plot, std::string_view source_digest)
{
    constexpr double width = 640, height = 400, left = 70, right = 20, top = 40, bottom = 60;
    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    bool first = true;
    for (const auto& s : plot.series) {
        for (auto [x, y] : s.points) {
            if (first) {
                x0 = x1 = x;
                y0 = y1 = y;
                first = false;
            }
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    }
    y0 = std::min(y0, 0.0);
    if (x1 == x0)
        x1 = x0 + 1;
    if (y1 == y0)
        y1 = y0 + 1;
    const double pw = width - left - right, ph = height - top - bottom;
    auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto sy = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<metadata>source-sha256:" << xml_escape(source_digest) << "</metadata>\n";
    out << "<title>" << xml_escape(plot.title) << "</title>\n";
    out << "<text x=\"" << num(width / 2) << "\" y=\"20\" text-anchor=\"middle\">" << xml_escape(plot.title)
        << "</text>\n";
    out << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\""
        << num(ph) << "\" fill=\"none\" stroke=\"#000\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
        out << "<text x=\"" << num(sx(fx)) << "\" y=\"" << num(top + ph + 16) << "\" text-anchor=\"middle\">"
            << tick(fx) << "</text>\n";
        out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(sy(fy) + 4) << "\" text-anchor=\"end\">"
            << tick(fy) << "</text>\n";
    }
    out << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(height - 16) << "\" text-anchor=\"middle\">"
        << xml_escape(plot.x_label) << "</text>\n";
    out << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << num(top + ph / 2) << ")\">" << xml_escape(plot.y_label) << "</text>\n";
    for (std::size_t i = 0; i < plot.series.size(); ++i) {
        const auto& s = plot.series[i];
        const char* color = palette[i % std::size(palette)];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
        for (std::size_t k = 0; k < s.points.size(); ++k)
            out << (k ? " " : "") << num(sx(s.points[k].first)) << ',' << num(sy(s.points[k].second));
        out << "\"/>\n";
        out << "<text x=\"" << num(left + 8) << "\" y=\"" << num(top + 16 + 14.0 * static_cast<double>(i))
            << "\" fill=\"" << color << "\">" << xml_escape(s.name) << "</text>\n";
    }
    out << "</svg>\n";
}

std::filesystem::path day_dir(const std::filesystem::path& root, Date date)
{
    return root / "data" / date.str();
}

} // namespace gfwlab
