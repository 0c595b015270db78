#include "mnige/report.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mnige {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string to_csv(const MetricsReport& report) {
    std::string out = "experiment,seed,group,metric,value\n";
    for (const MetricRow& r : report.rows) {
        out += r.experiment + "," + std::to_string(r.seed) + "," + r.group + "," + r.metric +
               "," + fmt(r.value) + "\n";
    }
    return out;
}

std::vector<MetricRow> read_csv_rows(const std::string& csv) {
    std::vector<MetricRow> rows;
    std::stringstream ss(csv);
    std::string line;
    bool header = true;
    while (std::getline(ss, line)) {
        if (line.empty()) {
            continue;
        }
        if (header) {
            if (line != "experiment,seed,group,metric,value") {
                throw std::invalid_argument("unexpected CSV header: " + line);
            }
            header = false;
            continue;
        }
        std::stringstream ls(line);
        std::string field;
        MetricRow r;
        std::getline(ls, r.experiment, ',');
        std::getline(ls, field, ',');
        r.seed = std::stoull(field);
        std::getline(ls, r.group, ',');
        std::getline(ls, r.metric, ',');
        std::getline(ls, field, ',');
        r.value = std::stod(field);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string to_json(const MetricsReport& report) {
    nlohmann::json j;
    j["experiment"] = report.experiment;
    j["scenario_hash"] = report.scenario_hash;
    j["seeds"] = report.seeds;
    j["rows"] = nlohmann::json::array();
    for (const MetricRow& r : report.rows) {
        j["rows"].push_back({{"experiment", r.experiment},
                             {"seed", r.seed},
                             {"group", r.group},
                             {"metric", r.metric},
                             {"value", r.value}});
    }
    j["checks"] = nlohmann::json::array();
    for (const CheckResult& c : report.checks) {
        j["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    }
    return j.dump(2) + "\n";
}

std::string manifest_json(const MetricsReport& report, const std::string& version) {
    nlohmann::json j;
    j["experiment"] = report.experiment;
    j["scenario_hash"] = report.scenario_hash;
    j["seeds"] = report.seeds;
    j["version"] = version;
    j["all_pass"] = report.all_pass();
    nlohmann::json checks = nlohmann::json::array();
    for (const CheckResult& c : report.checks) {
        checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    }
    j["checks"] = checks;
    return j.dump(2) + "\n";
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    out << content;
    if (!out) {
        throw std::runtime_error("write failed: " + path);
    }
}

}  // namespace mnige
