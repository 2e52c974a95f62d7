#pragma once

#include <string>
#include <vector>

#include "msreid/config.hpp"
#include "msreid/synthgen.hpp"

namespace msreid {

// Train/test views with working groups resolved. Scenarios without an
// observable session tag (clothing change) get their training groups from a
// seeded 2-means division; test records then join the nearest division
// center. Other kinds keep the capture tag they arrived with.
struct SplitViews {
    DataView train;
    DataView test;
    std::vector<long> train_truth;  // aligned with train
    std::vector<long> test_truth;   // aligned with test
    // Per scenario: the two division centers (empty for tag-carrying kinds).
    std::vector<std::vector<Vec>> division_centers;
};

SplitViews split_and_divide(const Dataset& ds, double test_fraction, std::uint64_t seed);

// Runs the configured stage list end to end, writing every artifact under
// cfg.output_dir. Earlier stages may be skipped when their checkpoints
// already exist there. Returns a process exit code; on error a FAILED marker
// with the reason is left in the run directory.
int run_pipeline(RunConfig cfg);

// Joins eval reports from several run directories into one comparison table.
// Human-readable table to stdout; CSV to csv_path, or stdout when empty.
// Unfinished runs appear as INCOMPLETE rows. Always returns 0.
int emit_report(const std::vector<std::string>& run_dirs, const std::string& csv_path);

}  // namespace msreid
