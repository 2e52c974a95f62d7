#include "msreid/stage1.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "msreid/errors.hpp"
#include "msreid/parallel.hpp"
#include "msreid/rng.hpp"
#include "msreid/sampler.hpp"

namespace msreid {

std::vector<Vec> encode_view(const GroupedView& grouped, const ImageEncoder& encoder) {
    std::vector<Vec> reps(grouped.items.size());
    parallel_for(grouped.items.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto& it = grouped.items[i];
            reps[i] = encoder.forward(*it.raw, grouped.loc[i].scenario_index, it.group).rep;
        }
    });
    return reps;
}

ClusterState cluster_view(const GroupedView& grouped, const std::vector<Vec>& reps,
                          const ClusteringConfig& ccfg) {
    if (reps.size() != grouped.items.size()) throw ShapeError("cluster_view: reps size mismatch");
    ClusterState state;
    state.blocks.resize(grouped.blocks.size());
    bool any_cluster = false;
    for (std::size_t s = 0; s < grouped.blocks.size(); ++s) {
        for (int g = 0; g < 2; ++g) {
            const auto& idx = grouped.blocks[s][g];
            if (idx.empty()) continue;
            std::vector<Vec> block_reps;
            block_reps.reserve(idx.size());
            for (int i : idx) block_reps.push_back(reps[i]);
            auto& bc = state.blocks[s][g];
            bc.labels = dbscan(block_reps, ccfg.eps, ccfg.min_samples);
            if (bc.non_outlier_count() > 0) {
                bc.cents = centroids(block_reps, bc.labels);
                any_cluster = true;
            } else {
                std::fprintf(stderr,
                             "warning: scenario %d group %c produced only outliers this epoch\n",
                             grouped.scenario_ids[s], g == 0 ? 'a' : 'b');
            }
        }
    }
    if (!any_cluster)
        throw DegenerateInputError(
            "clustering found no clusters in any block; eps/min_samples unsuitable for this data");
    return state;
}

GradPack homogeneous_loss(const GroupedView& grouped,
                          const std::vector<std::vector<int>>& batch,
                          const ImageEncoder& encoder, const ClusterState& clusters, double tau,
                          bool want_grads) {
    if (batch.size() != grouped.blocks.size())
        throw ShapeError("homogeneous_loss: batch must list every scenario");
    std::size_t total = 0;
    for (const auto& b : batch) total += b.size();
    if (total == 0) throw ParameterError("homogeneous_loss: empty batch");

    GradPack pack;
    Vec* grad = nullptr;
    if (want_grads) {
        pack.grads["encoder"].assign(encoder.param_count(), 0.0);
        grad = &pack.grads["encoder"];
    }
    const double inv_total = 1.0 / static_cast<double>(total);

    for (std::size_t s = 0; s < batch.size(); ++s) {
        for (int item : batch[s]) {
            const auto& loc = grouped.loc[item];
            if (loc.scenario_index != static_cast<int>(s))
                throw ParameterError("homogeneous_loss: item listed under wrong scenario");
            const auto& bc = clusters.blocks[s][loc.group];
            if (bc.labels.empty() || bc.labels[loc.pos] < 0)
                throw ContractViolation("homogeneous_loss: batch record has outlier label");
            const int label = bc.labels[loc.pos];
            auto f = encoder.forward(*grouped.items[item].raw, loc.scenario_index, loc.group);
            auto res = softmax_xent_contrastive(f.rep, bc.cents.centroids, {label}, tau,
                                                want_grads, false);
            pack.loss += res.loss * inv_total;
            if (want_grads) {
                for (double& v : res.anchor_grad) v *= inv_total;
                encoder.backward(f, res.anchor_grad, *grad);
            }
        }
    }
    return pack;
}

Stage1Result run_stage1(const GroupedView& grouped, ImageEncoder& encoder,
                        const Stage1Config& cfg, const ClusteringConfig& ccfg) {
    if (cfg.epochs < 0) throw ParameterError("run_stage1: negative epochs");
    if (cfg.batch_size < 2) throw ParameterError("run_stage1: batch_size < 2");
    if (cfg.tau <= 0.0) throw ParameterError("run_stage1: tau must be positive");

    Stage1Result result;
    RandomStream rng(derive_seed(cfg.seed, seed_tag::stage1));
    AdamState adam(encoder.param_count());
    const int half = cfg.batch_size / 2;
    const std::size_t num_scen = grouped.blocks.size();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto reps = encode_view(grouped, encoder);
        Stage1EpochStats stats;
        stats.clusters = cluster_view(grouped, reps, ccfg);

        // Pools hold item indices with a non-outlier label this epoch.
        std::vector<std::array<BlockSampler, 2>> samplers;
        samplers.reserve(num_scen);
        long max_scen_pool = 0;
        for (std::size_t s = 0; s < num_scen; ++s) {
            long scen_pool = 0;
            std::array<std::vector<int>, 2> pools;
            for (int g = 0; g < 2; ++g) {
                const auto& bc = stats.clusters.blocks[s][g];
                for (std::size_t p = 0; p < bc.labels.size(); ++p)
                    if (bc.labels[p] >= 0) pools[g].push_back(grouped.blocks[s][g][p]);
                scen_pool += static_cast<long>(pools[g].size());
            }
            samplers.push_back({BlockSampler(std::move(pools[0]), rng),
                                BlockSampler(std::move(pools[1]), rng)});
            max_scen_pool = std::max(max_scen_pool, scen_pool);
        }
        const int steps =
            static_cast<int>((max_scen_pool + cfg.batch_size - 1) / cfg.batch_size);

        const double ramp = cfg.warmup_epochs > 0
                                ? std::min(1.0, static_cast<double>(epoch + 1) / cfg.warmup_epochs)
                                : 1.0;
        const double lr = cfg.lr * ramp;

        double loss_sum = 0.0;
        for (int step = 0; step < steps; ++step) {
            std::vector<std::vector<int>> batch(num_scen);
            for (std::size_t s = 0; s < num_scen; ++s) {
                samplers[s][0].draw(half, rng, batch[s]);
                samplers[s][1].draw(half, rng, batch[s]);
            }
            auto pack = homogeneous_loss(grouped, batch, encoder, stats.clusters, cfg.tau, true);
            loss_sum += pack.loss;
            adam_step(encoder.params(), pack.grads["encoder"], adam, lr);
        }
        stats.mean_loss = steps > 0 ? loss_sum / steps : 0.0;
        int n_clusters = 0, n_labeled = 0;
        for (const auto& blocks : stats.clusters.blocks) {
            for (int g = 0; g < 2; ++g) {
                n_clusters += blocks[g].cluster_count();
                n_labeled += blocks[g].non_outlier_count();
            }
        }
        std::fprintf(stderr, "[stage1] epoch %d/%d loss=%.6f clusters=%d labeled=%d/%zu lr=%.3g\n",
                     epoch + 1, cfg.epochs, stats.mean_loss, n_clusters, n_labeled,
                     grouped.items.size(), lr);
        result.epochs.push_back(std::move(stats));
    }

    auto reps = encode_view(grouped, encoder);
    result.final_clusters = cluster_view(grouped, reps, ccfg);
    return result;
}

}  // namespace msreid
