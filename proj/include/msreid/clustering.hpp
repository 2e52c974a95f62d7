#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "msreid/numerics.hpp"

namespace msreid {

// DBSCAN over unit vectors with distance 1 - cosine. A core point has at
// least min_samples neighbors within eps, itself included. Clusters are the
// connected components of core points plus their border points; noise is -1.
// Cluster ids follow first-touch order (ascending scan over core indices) and
// a border point joins the lowest-index core neighbor, so the labeling is a
// pure function of the input.
std::vector<int> dbscan(const std::vector<Vec>& reps, double eps, int min_samples);

struct ClusterCentroids {
    std::vector<Vec> centroids;   // unit-normalized means
    std::vector<Vec> raw_means;   // plain member means, kept for diagnostics
    std::vector<double> prenorm;  // |raw_mean|, the renormalization scale
    std::vector<int> sizes;
};

// Per-cluster mean of member representations, renormalized to unit length.
// Outliers are excluded. Labels must use the contiguous ids 0..K-1.
ClusterCentroids centroids(const std::vector<Vec>& reps, const std::vector<int>& labels);

// Lloyd's K=2 under cosine geometry: centers renormalized each round,
// farthest-point init from a seeded uniform pick, at most 100 rounds or
// assignment fixpoint. Identical inputs collapse to one cluster; that case
// sets *degenerate and assigns everything to cluster 0.
std::vector<int> kmeans2_division(const std::vector<Vec>& reps, std::uint64_t seed,
                                  bool* degenerate = nullptr);

// Pairwise precision/recall F-score between a pseudo-labeling and truth ids.
// Pseudo outliers (-1) count as singletons. Fewer than 2 records scores 1.0;
// zero precision+recall scores 0.
double pairwise_fscore(const std::vector<int>& pseudo, const std::vector<long>& truth);

// Clustering outcome for one homogeneous block; labels align with the block's
// item index list in GroupedView.
struct BlockClusters {
    std::vector<int> labels;
    ClusterCentroids cents;

    int cluster_count() const { return static_cast<int>(cents.centroids.size()); }
    int non_outlier_count() const {
        int n = 0;
        for (int l : labels) n += l >= 0;
        return n;
    }
};

// Full pseudo-label state: one BlockClusters per (scenario_index, group).
struct ClusterState {
    std::vector<std::array<BlockClusters, 2>> blocks;
};

}  // namespace msreid
