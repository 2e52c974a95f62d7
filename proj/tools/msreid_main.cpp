#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msreid/pipeline.hpp"
#include "msreid/util.hpp"

namespace {

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"three-stage unsupervised multi-scenario re-id pipeline"};
    app.require_subcommand(1);

    std::string config_path, profile, stages_arg;
    std::uint64_t seed = 0;
    CLI::App* run = app.add_subcommand("run", "execute the configured stages");
    run->add_option("--config", config_path, "run configuration file (INI)")->required();
    run->add_option("--profile", profile, "preset overrides: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    CLI::Option* stages_opt =
        run->add_option("--stages", stages_arg, "comma-separated subset of s1,s2,s3,eval");
    CLI::Option* seed_opt = run->add_option("--seed", seed, "override the run seed");

    std::vector<std::string> run_dirs;
    std::string csv_out;
    CLI::App* report = app.add_subcommand("report", "join eval reports from finished runs");
    report->add_option("--runs", run_dirs, "run directories to compare")->required()->expected(-1);
    report->add_option("--out", csv_out, "write the CSV here instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            msreid::RunConfig cfg = msreid::RunConfig::from_ini(msreid::read_text_file(config_path));
            if (!profile.empty()) cfg.apply_profile(profile);
            if (stages_opt->count() > 0) cfg.stages = split_commas(stages_arg);
            if (seed_opt->count() > 0) cfg.seed = seed;
            return msreid::run_pipeline(cfg);
        }
        return msreid::emit_report(run_dirs, csv_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
