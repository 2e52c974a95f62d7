#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msreid/stage1.hpp"
#include "msreid/stage2.hpp"
#include "msreid/stage3.hpp"
#include "msreid/synthgen.hpp"

namespace msreid {

struct DatasetConfig {
    std::string path;  // when set, load this dataset directory instead of generating
    std::vector<ScenarioKind> kinds = {ScenarioKind::modality, ScenarioKind::clothing_change,
                                       ScenarioKind::resolution};
    int identities_per_scenario = 40;
    int images_per_group = 8;
    double noise_sigma = 0.15;
    GenDims dims;
};

struct EncoderConfig {
    int hidden = 32;
    int d_out = 64;
};

struct EvalConfig {
    double test_fraction = 0.25;
};

// Everything a run needs, serializable to one INI-style file. Defaults are
// the full-scale values; the desk profile shrinks runtime-heavy knobs.
struct RunConfig {
    std::string output_dir = "runs/out";
    std::uint64_t seed = 1;
    std::vector<std::string> stages = {"s1", "s2", "s3", "eval"};

    DatasetConfig dataset;
    EncoderConfig encoder;
    ClusteringConfig clustering;
    Stage1Config stage1;
    Stage2Config stage2;
    std::string stage2_image_source = "snapshot";  // snapshot | stage1
    Stage3Config stage3;
    AblationFlags ablation;
    EvalConfig eval;

    void validate() const;

    // Canonical INI text: fixed section and key order, lossless doubles.
    std::string to_ini() const;
    static RunConfig from_ini(const std::string& text);

    void apply_profile(const std::string& name);  // "paper" (no-op) or "desk"
};

}  // namespace msreid
