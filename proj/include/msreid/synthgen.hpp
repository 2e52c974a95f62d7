#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msreid/numerics.hpp"
#include "msreid/rng.hpp"

namespace msreid {

enum class ScenarioKind { modality, clothing_change, resolution };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& s);

struct GenDims {
    int d_id = 24;
    int d_attr = 8;
    int d_in = 56;
};

struct ScenarioSpec {
    int scenario_id = 0;
    ScenarioKind kind = ScenarioKind::modality;
    int num_identities = 40;
    int images_per_group = 8;
    double noise_sigma = 0.15;
};

// One synthetic image: a raw feature vector plus bookkeeping. truth_identity
// exists for evaluation only; training code works on RecordView, which does
// not carry it.
struct ImageRecord {
    long record_id = 0;
    int scenario_id = 0;
    int group = 0;  // 0 = a, 1 = b
    long truth_identity = 0;
    Vec raw;
};

struct Dataset {
    std::vector<ImageRecord> records;
    std::vector<ScenarioSpec> specs;
    GenDims dims;
    std::uint64_t seed = 0;
};

// Truth-free view handed to the training stages.
struct RecordView {
    long record_id = 0;
    int scenario_id = 0;
    int group = 0;  // working group: generator tag or k-means division outcome
    const Vec* raw = nullptr;
};
using DataView = std::vector<RecordView>;

// Fixed per-scenario structure drawn before any record: the orthonormal lift
// into raw space, the group-b identity drift, the rank-r subspace used by the
// resolution transform, and the session offset used by the clothing transform.
struct ScenarioTransforms {
    Mat lift;            // d_in x d_in, orthonormal columns
    Mat id_drift;        // d_id x d_id rotation applied to group-b latents
    Mat res_basis;       // d_in x r (resolution kind only)
    Vec clothing_shift;  // d_attr (clothing kind only)
};

// Generator constants. The attribute block of a group-a image stays near its
// identity anchor (jitter below); a clothing-change image additionally carries
// its session's mean offset: +shift for session a, -shift for session b, with
// the b-side anchor replaced by a fresh per-image draw. The symmetric +/-
// placement gives 2-means a between-session separation of twice the offset
// while each record only carries a shared component of |shift|^2 -- keeping
// different identities outside the density-clustering radius.
constexpr double kAttrJitter = 0.2;
constexpr double kClothingShiftNorm = 1.2;    // per-session offset norm
constexpr double kClothingResample = 0.4;     // scale of the per-image b-side draw
constexpr double kResolutionRankFraction = 0.85;  // r = ceil(0.85 d_in)

// Cross-group heterogeneity gap: group b sees each identity through a drifted
// latent whose cosine to the group-a latent is this value. Same-group
// structure is untouched (drifted latents are packed like the originals), but
// naive cross-group retrieval degrades, which is the gap the cross-scenario
// matching stages exist to close. Drift needs d_id >= 2; below that it is the
// identity.
constexpr double kGroupDriftCos = 0.50;
// Fraction of images whose identity cue is destroyed (heavy occlusion, motion
// blur): the identity block is replaced by a random direction of equal norm.
// Such images cap naive cross-group retrieval, but density clustering
// sidelines them as outliers, so cluster centroids and the matching built on
// them stay clean.
constexpr double kOcclusionRate = 0.25;

// n seeded low-coherence unit vectors in d dims (p-frame descent). Identity
// latents and attribute anchors are drawn this way so worst-pair cosines stay
// near the frame bound instead of Gaussian tails.
std::vector<Vec> spread_unit_vectors(int n, int d, RandomStream& rng);

// d x d orthogonal matrix whose principal angles all equal acos(cos_angle):
// cos(z, Rz) == cos_angle for every nonzero z (for odd d the leftover basis
// direction is fixed, so the cosine rises slightly for vectors leaning into
// it). cos_angle in [-1, 1]; d == 1 yields identity.
Mat principal_rotation(int d, double cos_angle, RandomStream& rng);

// Heterogeneity transform in latent layout [identity | attribute | pad]:
//   modality        -> b: attribute block zeroed (a unchanged)
//   clothing_change -> a: attribute block shifted by +session offset;
//                      b: attribute block = -session offset + fresh draw
//   resolution      -> b: whole vector projected onto the rank-r subspace
// Group a passes through unchanged except for the clothing offset.
Vec apply_heterogeneity(const Vec& base, ScenarioKind kind, int group, const GenDims& dims,
                        const ScenarioTransforms& transforms, RandomStream& rng);

// Optional insight into the generator for tests that verify separability
// directly on the latents.
struct GeneratorTrace {
    std::vector<ScenarioTransforms> transforms;          // per scenario
    std::vector<std::vector<Vec>> identity_latents;      // [scenario][identity] -> d_id (group a)
    std::vector<std::vector<Vec>> drifted_latents;       // [scenario][identity] -> d_id (group b)
    std::vector<std::vector<Vec>> attribute_anchors;     // [scenario][identity] -> d_attr
    std::vector<char> occluded;                          // per record, emission order
};

Dataset generate_dataset(const std::vector<ScenarioSpec>& specs, const GenDims& dims,
                         std::uint64_t seed, GeneratorTrace* trace = nullptr);

// Directory layout: spec.json + records.csv. Round-trips exactly.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace msreid
