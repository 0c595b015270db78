// command line front end: one subcommand per experiment, reports go to
// stdout and optionally to --out as csv/json plus a provenance manifest.
#include "mnige/experiments.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#ifndef MNIGE_VERSION
#define MNIGE_VERSION "0.0.0"
#endif

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t comma = text.find(',', pos);
        if (comma == std::string::npos) {
            comma = text.size();
        }
        const std::string tok = text.substr(pos, comma - pos);
        pos = comma + 1;
        if (tok.empty()) {
            continue;
        }
        const size_t dots = tok.find("..");
        try {
            if (dots == std::string::npos) {
                seeds.push_back(std::stoull(tok));
            } else {
                const std::uint64_t lo = std::stoull(tok.substr(0, dots));
                const std::uint64_t hi = std::stoull(tok.substr(dots + 2));
                if (hi < lo) {
                    throw std::invalid_argument("range");
                }
                for (std::uint64_t s = lo; s <= hi; ++s) {
                    seeds.push_back(s);
                }
            }
        } catch (const std::exception&) {
            throw CLI::ValidationError("--seeds", "expected N, N..M, or a comma list: '" + tok +
                                                      "'");
        }
    }
    if (seeds.empty()) {
        throw CLI::ValidationError("--seeds", "need at least one seed");
    }
    return seeds;
}

struct RunArgs {
    std::string scenario_path;
    std::string seeds = "1..5";
    std::string out_dir;
    std::string format = "csv";
    int workers = 0;
};

int run(const std::string& name, const RunArgs& args) {
    mnige::ScenarioConfig cfg;
    if (!args.scenario_path.empty()) {
        cfg = mnige::load_scenario(args.scenario_path);
    }
    const auto seeds = parse_seeds(args.seeds);
    const mnige::MetricsReport rep = mnige::run_experiment(cfg, name, seeds, args.workers);
    for (const auto& c : rep.checks) {
        std::printf("[%s] %s: %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(),
                    c.detail.c_str());
    }
    std::printf("%s: %zu rows, %zu seeds, scenario %016llx\n", name.c_str(), rep.rows.size(),
                seeds.size(), static_cast<unsigned long long>(rep.scenario_hash));
    if (!args.out_dir.empty()) {
        const std::filesystem::path dir(args.out_dir);
        std::filesystem::create_directories(dir);
        const std::string body = args.format == "json" ? mnige::to_json(rep)
                                                       : mnige::to_csv(rep);
        const auto data_path = dir / (name + "." + args.format);
        mnige::write_file(data_path.string(), body);
        mnige::write_file((dir / (name + ".manifest.json")).string(),
                          mnige::manifest_json(rep, MNIGE_VERSION));
        std::printf("wrote %s\n", data_path.string().c_str());
    }
    return rep.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"interference graph estimation testbed"};
    app.set_version_flag("--version", MNIGE_VERSION);
    app.require_subcommand(1);

    RunArgs args;
    std::string chosen;
    for (const std::string& name : mnige::experiment_names()) {
        CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->add_option("--scenario", args.scenario_path,
                        "scenario file (key = value lines or .json)")
            ->check(CLI::ExistingFile);
        sub->add_option("--seeds", args.seeds, "seed list: N, N..M, or comma separated");
        sub->add_option("--out", args.out_dir, "directory for the report and manifest");
        sub->add_option("--format", args.format, "report format")
            ->check(CLI::IsMember({"csv", "json"}));
        sub->add_option("--workers", args.workers, "worker threads (0 = hardware count)");
        sub->callback([&chosen, name] { chosen = name; });
    }

    CLI11_PARSE(app, argc, argv);
    try {
        return run(chosen, args);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
