#pragma once

#include "gfwlab/datastore.hpp"
#include "gfwlab/injector.hpp"
#include "gfwlab/records.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gfwlab {

/// Lab configuration, read from JSON. Every key is optional.
struct LabConfig {
    std::uint64_t seed = 1;
    Date start_date = Date::parse("2024-01-01");
    int days = 3;
    int rounds = 3;
    double qps = 10000.0;

    std::optional<std::string> blocklist_file; // otherwise planted
    std::size_t planted = 200;
    std::vector<int> group_ids{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

    std::size_t names_per_entry = 2;
    std::size_t negatives = 200;
    double churn = 0.02; // daily probability an entry is switched off
    double miss_rate = 0.0;
    std::string race = "cn"; // cn | us | none
    std::string pool = "paper"; // paper | uniform:N

    bool rulegen = true;
    int rulegen_trials = 3;
};

/// Throws ConfigError on malformed JSON or bad values.
LabConfig parse_config(std::string_view json_text);
LabConfig load_config(const std::filesystem::path& path);

std::optional<RacePreset> race_preset(std::string_view name);
DynamicPool make_dynamic_pool(const LabConfig& cfg);

/// The planted (or loaded) ground-truth blocklist.
Blocklist lab_blocklist(const LabConfig& cfg);
/// Entries active on `day` (index from start_date).
Blocklist active_blocklist(const LabConfig& cfg, const Blocklist& full, int day);
/// Measurement path (no legitimate responder) for one day.
PathConfig sink_path(const LabConfig& cfg, const Blocklist& active, int day);
/// Resolver path with the configured race preset, or nullopt when race is "none".
std::optional<PathConfig> race_path(const LabConfig& cfg, const Blocklist& active, int day);
/// Daily test list: censored examples of every entry plus nonexistent names.
std::vector<Fqdn> test_list(const LabConfig& cfg, const Blocklist& full);

struct PipelineSummary {
    std::size_t records = 0;
    std::size_t censored_domains = 0;
    std::size_t bases = 0;
    std::size_t pool_size = 0;
    std::vector<std::filesystem::path> files;
};

/// simulate -> probe -> rulegen -> analyze -> report, writing `out/data/DATE/*`
/// and `out/reports/*`. SVG plots are skipped unless `svg`.
PipelineSummary run_pipeline(const LabConfig& cfg, const std::filesystem::path& out, bool svg = true);

/// One name per line; blank lines and '#' comments ignored. Throws DataError.
std::vector<Fqdn> load_domain_list(const std::filesystem::path& path);

/// Replays the snapshot chain from the probes.jsonl files under `out/data`.
std::vector<DailySnapshot> replay_snapshots(const std::filesystem::path& out);

} // namespace gfwlab
