#include "msreid/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "msreid/errors.hpp"
#include "msreid/parallel.hpp"
#include "msreid/rng.hpp"

namespace msreid {

std::vector<int> dbscan(const std::vector<Vec>& reps, double eps, int min_samples) {
    if (eps < 0.0) throw ParameterError("dbscan: negative eps");
    if (min_samples < 1) throw ParameterError("dbscan: min_samples < 1");
    const int n = static_cast<int>(reps.size());
    if (n == 0) return {};

    std::vector<std::vector<int>> neigh(n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            for (int j = 0; j < n; ++j) {
                if (1.0 - dot(reps[i], reps[j]) <= eps) neigh[i].push_back(j);
            }
        }
    });

    std::vector<char> core(n, 0);
    for (int i = 0; i < n; ++i) core[i] = static_cast<int>(neigh[i].size()) >= min_samples;

    std::vector<int> labels(n, -1);
    std::vector<char> seen(n, 0);
    int next_cluster = 0;
    for (int i = 0; i < n; ++i) {
        if (!core[i] || seen[i]) continue;
        const int cid = next_cluster++;
        std::deque<int> queue{i};
        seen[i] = 1;
        while (!queue.empty()) {
            const int u = queue.front();
            queue.pop_front();
            labels[u] = cid;
            for (int v : neigh[u]) {
                if (core[v] && !seen[v]) {
                    seen[v] = 1;
                    queue.push_back(v);
                }
            }
        }
    }
    // Border points: non-core with a core in reach joins its lowest-index
    // core neighbor (neighbor lists are ascending by construction).
    for (int i = 0; i < n; ++i) {
        if (core[i]) continue;
        for (int v : neigh[i]) {
            if (core[v]) {
                labels[i] = labels[v];
                break;
            }
        }
    }
    return labels;
}

ClusterCentroids centroids(const std::vector<Vec>& reps, const std::vector<int>& labels) {
    if (reps.size() != labels.size()) throw ShapeError("centroids: reps/labels size mismatch");
    int k = 0;
    for (int l : labels) {
        if (l < -1) throw ParameterError("centroids: label < -1");
        k = std::max(k, l + 1);
    }
    ClusterCentroids out;
    out.sizes.assign(k, 0);
    out.raw_means.assign(k, Vec());
    for (std::size_t i = 0; i < reps.size(); ++i) {
        const int l = labels[i];
        if (l < 0) continue;
        if (out.raw_means[l].empty()) out.raw_means[l].assign(reps[i].size(), 0.0);
        add_scaled(out.raw_means[l], reps[i], 1.0);
        out.sizes[l] += 1;
    }
    out.centroids.resize(k);
    out.prenorm.resize(k);
    for (int c = 0; c < k; ++c) {
        if (out.sizes[c] == 0)
            throw ContractViolation("centroids: cluster id " + std::to_string(c) + " has no members");
        for (double& v : out.raw_means[c]) v /= out.sizes[c];
        out.prenorm[c] = norm(out.raw_means[c]);
        out.centroids[c] = normalized(out.raw_means[c]);
    }
    return out;
}

std::vector<int> kmeans2_division(const std::vector<Vec>& reps, std::uint64_t seed,
                                  bool* degenerate) {
    const int n = static_cast<int>(reps.size());
    if (n < 2) throw ParameterError("kmeans2_division: need at least 2 records");
    if (degenerate) *degenerate = false;

    std::vector<Vec> unit(n);
    for (int i = 0; i < n; ++i) unit[i] = normalized(reps[i]);

    RandomStream rng(seed);
    const int first = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    int second = -1;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
        const double d = 1.0 - dot(unit[first], unit[i]);
        if (d > best + 1e-15) {
            best = d;
            second = i;
        }
    }
    if (best < 1e-15) {
        if (degenerate) *degenerate = true;
        return std::vector<int>(n, 0);
    }

    std::vector<Vec> centers = {unit[first], unit[second]};
    std::vector<int> assign(n, 0);
    for (int round = 0; round < 100; ++round) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            const double s0 = dot(unit[i], centers[0]);
            const double s1 = dot(unit[i], centers[1]);
            const int a = s1 > s0 ? 1 : 0;
            if (a != assign[i]) {
                assign[i] = a;
                changed = true;
            }
        }
        if (!changed && round > 0) break;
        for (int c = 0; c < 2; ++c) {
            Vec mean(unit[0].size(), 0.0);
            int count = 0;
            for (int i = 0; i < n; ++i) {
                if (assign[i] == c) {
                    add_scaled(mean, unit[i], 1.0);
                    ++count;
                }
            }
            if (count == 0) {
                // Refill an emptied cluster with the point farthest from the
                // surviving center (lowest index on ties).
                const int other = 1 - c;
                int far = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double d = 1.0 - dot(unit[i], centers[other]);
                    if (d > far_d + 1e-15) {
                        far_d = d;
                        far = i;
                    }
                }
                centers[c] = unit[far];
            } else {
                centers[c] = normalized(mean);
            }
        }
    }
    return assign;
}

double pairwise_fscore(const std::vector<int>& pseudo, const std::vector<long>& truth) {
    if (pseudo.size() != truth.size()) throw ShapeError("pairwise_fscore: size mismatch");
    const std::size_t n = pseudo.size();
    if (n < 2) return 1.0;
    long long pred_pairs = 0, true_pairs = 0, hit_pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool same_p = pseudo[i] >= 0 && pseudo[i] == pseudo[j];
            const bool same_t = truth[i] == truth[j];
            pred_pairs += same_p;
            true_pairs += same_t;
            hit_pairs += same_p && same_t;
        }
    }
    if (pred_pairs == 0 || true_pairs == 0) return 0.0;
    const double p = static_cast<double>(hit_pairs) / static_cast<double>(pred_pairs);
    const double r = static_cast<double>(hit_pairs) / static_cast<double>(true_pairs);
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

}  // namespace msreid
