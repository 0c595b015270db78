#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mnige {

// One long-format observation. group carries the within-experiment stratum
// (a gain band, a numerology, a sweep point); metric names the quantity.
struct MetricRow {
    std::string experiment;
    std::uint64_t seed = 0;
    std::string group;
    std::string metric;
    double value = 0.0;
};

// A named pass/fail invariant evaluated over the pooled rows.
struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct MetricsReport {
    std::string experiment;
    std::uint64_t scenario_hash = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<MetricRow> rows;
    std::vector<CheckResult> checks;

    bool all_pass() const {
        for (const auto& c : checks) {
            if (!c.pass) {
                return false;
            }
        }
        return true;
    }
};

// values printed with %.17g so re-ingesting reproduces aggregates bit-exactly
std::string to_csv(const MetricsReport& report);
std::vector<MetricRow> read_csv_rows(const std::string& csv);

std::string to_json(const MetricsReport& report);

// run provenance: scenario hash, seeds, checks, library version
std::string manifest_json(const MetricsReport& report, const std::string& version);

void write_file(const std::string& path, const std::string& content);

}  // namespace mnige
