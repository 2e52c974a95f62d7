#pragma once

#include <cstdint>
#include <vector>

#include "msreid/clustering.hpp"
#include "msreid/encoders.hpp"
#include "msreid/grouping.hpp"

namespace msreid {

struct ClusteringConfig {
    double eps = 0.6;
    int min_samples = 4;
};

struct Stage1Config {
    int epochs = 50;
    int batch_size = 64;  // records per scenario per step, split evenly across groups
    double tau = 0.05;
    double lr = 3.5e-4;
    int warmup_epochs = 10;
    std::uint64_t seed = 0;
};

// Encodes every item of the view with the given encoder (thread-safe: params
// immutable during the pass). Output aligns with grouped.items.
std::vector<Vec> encode_view(const GroupedView& grouped, const ImageEncoder& encoder);

// DBSCAN + centroids per (scenario, group) block. Blocks whose records are
// all outliers keep an empty centroid set; if every block degenerates that
// way the clustering parameters cannot support this data and we abort.
ClusterState cluster_view(const GroupedView& grouped, const std::vector<Vec>& reps,
                          const ClusteringConfig& ccfg);

// Homogeneous contrastive loss over one minibatch (per-scenario lists of item
// indices, groups mixed). Each record anchors a softmax over its own block's
// centroids at temperature tau, positive = its cluster; centroids are
// constants. Loss is the mean over all batch records. Records must carry
// non-outlier labels (caller filters). Gradients land in grads["encoder"].
GradPack homogeneous_loss(const GroupedView& grouped,
                          const std::vector<std::vector<int>>& batch,
                          const ImageEncoder& encoder, const ClusterState& clusters, double tau,
                          bool want_grads = true);

struct Stage1EpochStats {
    double mean_loss = 0.0;
    ClusterState clusters;  // the epoch-start clustering the steps trained against
};

struct Stage1Result {
    std::vector<Stage1EpochStats> epochs;
    ClusterState final_clusters;  // fresh re-clustering after the last step
};

// Per epoch: encode all, cluster per block, then minibatch Adam on the
// homogeneous loss with a linear lr warmup. Pseudo-labels handed downstream
// come from one final re-clustering after training.
Stage1Result run_stage1(const GroupedView& grouped, ImageEncoder& encoder,
                        const Stage1Config& cfg, const ClusteringConfig& ccfg);

}  // namespace msreid
