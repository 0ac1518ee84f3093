#pragma once

// Batch entry points. Subcommands: simulate, invert, fit-direction, synthesize, train-face,
// train-gait, train-fusion, evaluate, compare, report.
//
// Every command writes its artifacts, the effective configuration (config.json) and a run
// log (run_<command>.json with seed, config hash and timings) into the output directory.
// Failures print a one-line JSON error record to `err` and return a nonzero status:
// 2 for usage and configuration errors, 1 otherwise.
//
// Output directory and worker count may come from MMPD_OUTPUT_DIR and MMPD_WORKERS;
// command-line flags take precedence over the environment, which takes precedence over
// the config file.

#include <iosfwd>
#include <string>
#include <vector>

namespace mmpd {

// `args` excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace mmpd
