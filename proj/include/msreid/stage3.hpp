#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "msreid/stage1.hpp"
#include "msreid/stage2.hpp"

namespace msreid {

struct Stage3Config {
    int epochs = 50;
    int batch_size = 64;  // records per scenario per step, split evenly across groups
    double tau = 0.05;
    double eta = 0.8;    // trimmed-mean proportion for cluster text reps
    double alpha = 0.8;  // instance text rep update rate
    double beta = 0.5;   // retention probability for inconsistent cluster pairs
    int k = 200;         // neighbor set size; clamped to opposite-group size
    double lambda_tgc = 1.0;
    double lr = 3.5e-4;
    std::uint64_t seed = 0;
};

// Component toggles reproducing the ablation ladder. scenario_emb and mss are
// consumed upstream (encoder construction; stage2's lambda_mss); the rest act
// here: dru off freezes instance text reps (cluster text reps become plain
// member means), chm_consistency off retains every image-matched pair, ihm
// off empties every instance positive set.
struct AblationFlags {
    bool scenario_emb = true;
    bool mss = true;
    bool dru = true;
    bool chm_consistency = true;
    bool ihm = true;
};

// Online text representations: per-record instance reps seeded from the
// Stage-II bank, plus per-cluster reps recomputed each epoch.
struct TextState {
    std::vector<Vec> instance;                             // aligned with grouped.items
    std::vector<std::array<std::vector<Vec>, 2>> cluster;  // [scenario][group][cluster]
};

TextState init_text_state(const GroupedView& grouped, const OfflineTextBank& bank);

// DRU: per cluster, take the mean of member instance text reps, keep the
// ceil(eta * N) members closest to it (at least one), average those into the
// new cluster rep (renormalized), then pull every member instance rep toward
// it at rate alpha (renormalized). alpha = 0 leaves instance reps untouched
// while still recomputing cluster reps. Outlier records are never touched.
void dru_update(TextState& text, const GroupedView& grouped, const ClusterState& clusters,
                double eta, double alpha);

struct ChmPair {
    int a = 0, b = 0;          // cluster ids in groups a and b
    bool consistent = false;   // same pair found by the text-space matching
    bool retained = false;
};

// Minimum-cost assignment (cost 1 - cosine) between the two groups' cluster
// image centroids, a second assignment on cluster text reps, and consistency
// gating: consistent pairs always retained, inconsistent ones retained with
// probability beta (one uniform draw per matched pair, in pair order).
// always_retain bypasses the gate. Scenarios missing clusters on either side
// yield no pairs.
std::vector<std::vector<ChmPair>> chm_match(const GroupedView& grouped,
                                            const ClusterState& clusters, const TextState& text,
                                            double beta, bool always_retain, RandomStream& rng);

// Per record: top-k opposite-group neighbors by image cosine intersected with
// top-k by instance text cosine (ties broken by lower record_id). Returns
// sorted item indices per item.
std::vector<std::vector<int>> ihm_match(const GroupedView& grouped,
                                        const std::vector<Vec>& image_reps, const TextState& text,
                                        int k);

struct PairSets {
    std::vector<std::vector<std::pair<int, int>>> chm_pairs;  // per scenario: retained (a, b)
    std::vector<std::vector<int>> ihm_sets;                   // per item: opposite item indices
    std::vector<std::vector<ChmPair>> chm_diag;               // every matched pair, with flags
};

PairSets compute_pair_sets(const GroupedView& grouped, const ClusterState& clusters,
                           const TextState& text, const std::vector<Vec>& image_reps,
                           const Stage3Config& cfg, const AblationFlags& flags,
                           RandomStream& retention_rng);

struct Stage3PairStats {
    double chc = 0.0;
    double ihc = 0.0;
};

// L_chc + L_ihc over one minibatch. Anchors are re-encoded with the current
// encoder and receive gradients; opposite-group centroids and instance image
// reps (block_reps, the epoch-start encodings per block) are constants.
// Anchors without a retained cluster pair or with an empty instance positive
// set contribute zero. Both terms are means over all batch records.
GradPack heterogeneous_losses(const GroupedView& grouped,
                              const std::vector<std::vector<int>>& batch,
                              const ImageEncoder& encoder, const ClusterState& clusters,
                              const PairSets& pairs,
                              const std::vector<std::array<std::vector<Vec>, 2>>& block_reps,
                              double tau, bool want_grads = true,
                              Stage3PairStats* stats = nullptr);

// Text-guided loss: image anchor vs the batch's instance text reps (per
// scenario), positive = the record's own text rep, no temperature. Text reps
// are constants; the encoder receives gradients. Mean over batch records.
GradPack text_guided_loss(const GroupedView& grouped, const std::vector<std::vector<int>>& batch,
                          const ImageEncoder& encoder, const TextState& text,
                          bool want_grads = true);

struct Stage3EpochStats {
    double mean_hc = 0.0;
    double mean_chc = 0.0;
    double mean_ihc = 0.0;
    double mean_tgc = 0.0;
    double mean_total = 0.0;
    ClusterState clusters;
    std::vector<std::vector<ChmPair>> chm_diag;
    int retained_pairs = 0;
    double mean_u = 0.0;  // mean instance positive set size over all records
};

struct Stage3Result {
    std::vector<Stage3EpochStats> epochs;
    TextState final_text;
};

// Per epoch: encode all, cluster per block, DRU, CHM, IHM, then minibatch
// Adam on L = L_hc + L_chc + L_ihc + lambda_tgc * L_tgc.
Stage3Result run_stage3(const GroupedView& grouped, ImageEncoder& encoder,
                        const OfflineTextBank& bank, const Stage3Config& cfg,
                        const ClusteringConfig& ccfg, const AblationFlags& flags);

}  // namespace msreid
