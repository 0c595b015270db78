#pragma once

#include "mnige/report.hpp"
#include "mnige/scenario.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mnige {

// The figure-analog experiments. Each composes public module operations only,
// runs deterministically per (config, seed), and carries built-in pass/fail
// checks over the pooled rows.
const std::vector<std::string>& experiment_names();

// Seeds fan out to a worker pool (workers <= 0 picks the hardware count);
// rows are merged in seed order so reports are byte-stable regardless of
// scheduling.
MetricsReport run_experiment(const ScenarioConfig& cfg, const std::string& name,
                             const std::vector<std::uint64_t>& seeds, int workers = 0);

}  // namespace mnige
