#pragma once

#include "gfwlab/blockrule.hpp"
#include "gfwlab/pool.hpp"
#include "gfwlab/records.hpp"

#include <filesystem>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace gfwlab {

inline constexpr int jsonl_version = 1;

/// One JSON object per line, `"v":1`. Responses carry delta_ms relative to sent_at.
std::string to_jsonl(const ProbeRecord& record);
ProbeRecord record_from_jsonl(std::string_view line);
void write_jsonl(std::ostream& out, std::span<const ProbeRecord> records);
/// Throws DataError with the offending line number.
std::vector<ProbeRecord> read_jsonl(std::istream& in);
std::vector<ProbeRecord> load_jsonl(const std::filesystem::path& path);

std::string sha256_hex(std::string_view data);
std::string pool_digest(const ForgedPool& pool);

struct DailySnapshot {
    Date date;
    std::set<Fqdn> censored;
    std::vector<BlockEntry> bases; // sorted by (base, class)
    std::string pool_digest;
};

DailySnapshot snapshot(Date date, std::span<const ProbeRecord> records, const Blocklist& bases,
                       const ForgedPool& pool);

/// Append-only chain of snapshots.
class SnapshotChain {
public:
    /// Throws DataError unless `s` is strictly later than the last snapshot.
    void append(DailySnapshot s);
    const std::vector<DailySnapshot>& snapshots() const noexcept { return chain_; }

private:
    std::vector<DailySnapshot> chain_;
};

struct ChurnRow {
    Date date;
    std::size_t added = 0;
    std::size_t removed = 0;
    std::size_t cumulative = 0;
    std::size_t current = 0;
    friend bool operator==(const ChurnRow&, const ChurnRow&) = default;
};

/// Dates must be strictly increasing; throws DataError otherwise.
std::vector<ChurnRow> churn(std::span<const std::pair<Date, std::set<std::string>>> sets);
std::vector<ChurnRow> censored_churn(std::span<const DailySnapshot> snapshots);
std::vector<ChurnRow> base_churn(std::span<const DailySnapshot> snapshots);

void write_churn_csv(std::ostream& out, std::span<const ChurnRow> rows);
void write_pool_daily_csv(std::ostream& out, const ForgedPool& pool);

enum class ReportFormat { Csv, Svg };
/// "csv" or "svg"; throws DataError otherwise.
ReportFormat report_format_from_string(std::string_view s);

struct SvgSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

struct SvgPlot {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<SvgSeries> series;
};

/// Deterministic line plot; `source_digest` goes into the <metadata> element.
void write_svg(std::ostream& out, const SvgPlot& plot, std::string_view source_digest);

/// `root/data/YYYY-MM-DD`.
std::filesystem::path day_dir(const std::filesystem::path& root, Date date);

} // namespace gfwlab
