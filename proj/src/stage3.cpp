#include "msreid/stage3.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "msreid/assignment.hpp"
#include "msreid/errors.hpp"
#include "msreid/sampler.hpp"

namespace msreid {

TextState init_text_state(const GroupedView& grouped, const OfflineTextBank& bank) {
    std::map<long, const Vec*> by_record;
    for (const auto& [rid, rep] : bank.instance_reps) by_record[rid] = &rep;
    TextState text;
    text.instance.reserve(grouped.items.size());
    for (const auto& item : grouped.items) {
        auto it = by_record.find(item.record_id);
        if (it == by_record.end())
            throw ContractViolation("init_text_state: record " + std::to_string(item.record_id) +
                                    " missing from text bank");
        text.instance.push_back(*it->second);
    }
    text.cluster.assign(grouped.blocks.size(), {});
    return text;
}

void dru_update(TextState& text, const GroupedView& grouped, const ClusterState& clusters,
                double eta, double alpha) {
    if (eta <= 0.0 || eta > 1.0) throw ParameterError("dru_update: eta must be in (0, 1]");
    if (alpha < 0.0 || alpha > 1.0) throw ParameterError("dru_update: alpha must be in [0, 1]");
    if (text.instance.size() != grouped.items.size())
        throw ShapeError("dru_update: text state misaligned with view");

    text.cluster.assign(grouped.blocks.size(), {});
    for (std::size_t s = 0; s < grouped.blocks.size(); ++s) {
        for (int g = 0; g < 2; ++g) {
            const auto& bc = clusters.blocks[s][g];
            auto& creps = text.cluster[s][g];
            creps.assign(bc.cluster_count(), Vec());
            if (bc.cluster_count() == 0) continue;

            std::vector<std::vector<int>> members(bc.cluster_count());
            for (std::size_t p = 0; p < bc.labels.size(); ++p)
                if (bc.labels[p] >= 0) members[bc.labels[p]].push_back(grouped.blocks[s][g][p]);

            for (int u = 0; u < bc.cluster_count(); ++u) {
                const auto& mem = members[u];
                if (mem.empty()) throw ContractViolation("dru_update: empty cluster");
                const int n = static_cast<int>(mem.size());

                Vec pseudo(text.instance[mem[0]].size(), 0.0);
                for (int item : mem) add_scaled(pseudo, text.instance[item], 1.0 / n);
                const Vec dir = normalized(pseudo);

                // ceil(eta * n) with a nudge against representations of exact
                // products landing epsilon above an integer.
                const int keep = std::max(1, static_cast<int>(std::ceil(eta * n - 1e-9)));
                std::vector<int> order(mem.size());
                std::iota(order.begin(), order.end(), 0);
                std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
                    return dot(text.instance[mem[x]], dir) > dot(text.instance[mem[y]], dir);
                });

                Vec mean(pseudo.size(), 0.0);
                for (int r = 0; r < keep; ++r)
                    add_scaled(mean, text.instance[mem[order[r]]], 1.0 / keep);
                const Vec crep = normalized(mean);
                creps[u] = crep;

                if (alpha > 0.0) {
                    for (int item : mem) {
                        Vec blended = text.instance[item];
                        for (std::size_t d = 0; d < blended.size(); ++d)
                            blended[d] = (1.0 - alpha) * blended[d] + alpha * crep[d];
                        text.instance[item] = normalized(blended);
                    }
                }
            }
        }
    }
}

std::vector<std::vector<ChmPair>> chm_match(const GroupedView& grouped,
                                            const ClusterState& clusters, const TextState& text,
                                            double beta, bool always_retain, RandomStream& rng) {
    if (beta < 0.0 || beta > 1.0) throw ParameterError("chm_match: beta must be in [0, 1]");
    std::vector<std::vector<ChmPair>> out(grouped.blocks.size());
    for (std::size_t s = 0; s < grouped.blocks.size(); ++s) {
        const auto& ca = clusters.blocks[s][0].cents.centroids;
        const auto& cb = clusters.blocks[s][1].cents.centroids;
        if (ca.empty() || cb.empty()) {
            if (!grouped.blocks[s][0].empty() || !grouped.blocks[s][1].empty())
                std::fprintf(stderr,
                             "warning: scenario %d has a clusterless group; no cluster pairs\n",
                             grouped.scenario_ids[s]);
            continue;
        }
        const auto& ta = text.cluster[s][0];
        const auto& tb = text.cluster[s][1];
        if (ta.size() != ca.size() || tb.size() != cb.size())
            throw ShapeError("chm_match: text cluster reps misaligned with clustering");

        auto cost_of = [](const std::vector<Vec>& rows, const std::vector<Vec>& cols) {
            Mat cost(rows.size(), cols.size());
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (std::size_t j = 0; j < cols.size(); ++j)
                    cost.at(i, j) = 1.0 - dot(rows[i], cols[j]);
            return cost;
        };
        const auto image_match = linear_assignment(cost_of(ca, cb));
        const auto text_match = linear_assignment(cost_of(ta, tb));

        for (std::size_t u = 0; u < ca.size(); ++u) {
            const int v = image_match.row_to_col[u];
            if (v < 0) continue;
            ChmPair pair;
            pair.a = static_cast<int>(u);
            pair.b = v;
            pair.consistent = text_match.row_to_col[u] == v;
            const double draw = rng.uniform();  // one draw per pair keeps the stream stable
            pair.retained = always_retain || pair.consistent || draw < beta;
            out[s].push_back(pair);
        }
    }
    return out;
}

std::vector<std::vector<int>> ihm_match(const GroupedView& grouped,
                                        const std::vector<Vec>& image_reps, const TextState& text,
                                        int k) {
    if (k < 1) throw ParameterError("ihm_match: k < 1");
    if (image_reps.size() != grouped.items.size()) throw ShapeError("ihm_match: reps misaligned");
    if (text.instance.size() != grouped.items.size())
        throw ShapeError("ihm_match: text state misaligned");

    std::vector<std::vector<int>> sets(grouped.items.size());
    for (std::size_t s = 0; s < grouped.blocks.size(); ++s) {
        for (int g = 0; g < 2; ++g) {
            const auto& own = grouped.blocks[s][g];
            const auto& opp = grouped.blocks[s][1 - g];
            if (own.empty() || opp.empty()) continue;
            const int kk = std::min<int>(k, static_cast<int>(opp.size()));

            auto top_k = [&](const std::vector<Vec>& space, int anchor_item) {
                std::vector<int> order(opp.size());
                std::iota(order.begin(), order.end(), 0);
                std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
                    const double sx = dot(space[anchor_item], space[opp[x]]);
                    const double sy = dot(space[anchor_item], space[opp[y]]);
                    if (sx != sy) return sx > sy;
                    return grouped.items[opp[x]].record_id < grouped.items[opp[y]].record_id;
                });
                std::vector<int> top(order.begin(), order.begin() + kk);
                for (int& t : top) t = opp[t];
                std::sort(top.begin(), top.end());
                return top;
            };

            for (int item : own) {
                const auto psi_i = top_k(image_reps, item);
                const auto psi_t = top_k(text.instance, item);
                std::set_intersection(psi_i.begin(), psi_i.end(), psi_t.begin(), psi_t.end(),
                                      std::back_inserter(sets[item]));
            }
        }
    }
    return sets;
}

PairSets compute_pair_sets(const GroupedView& grouped, const ClusterState& clusters,
                           const TextState& text, const std::vector<Vec>& image_reps,
                           const Stage3Config& cfg, const AblationFlags& flags,
                           RandomStream& retention_rng) {
    PairSets pairs;
    pairs.chm_diag =
        chm_match(grouped, clusters, text, cfg.beta, !flags.chm_consistency, retention_rng);
    pairs.chm_pairs.assign(grouped.blocks.size(), {});
    for (std::size_t s = 0; s < pairs.chm_diag.size(); ++s)
        for (const auto& p : pairs.chm_diag[s])
            if (p.retained) pairs.chm_pairs[s].push_back({p.a, p.b});
    if (flags.ihm) {
        pairs.ihm_sets = ihm_match(grouped, image_reps, text, cfg.k);
    } else {
        pairs.ihm_sets.assign(grouped.items.size(), {});
    }
    return pairs;
}

GradPack heterogeneous_losses(const GroupedView& grouped,
                              const std::vector<std::vector<int>>& batch,
                              const ImageEncoder& encoder, const ClusterState& clusters,
                              const PairSets& pairs,
                              const std::vector<std::array<std::vector<Vec>, 2>>& block_reps,
                              double tau, bool want_grads, Stage3PairStats* stats) {
    if (batch.size() != grouped.blocks.size())
        throw ShapeError("heterogeneous_losses: batch must list every scenario");
    std::size_t total = 0;
    for (const auto& b : batch) total += b.size();
    if (total == 0) throw ParameterError("heterogeneous_losses: empty batch");
    const double inv_total = 1.0 / static_cast<double>(total);

    // Retained-pair lookup per block: cluster id -> opposite cluster id.
    std::vector<std::array<std::vector<int>, 2>> matched(grouped.blocks.size());
    for (std::size_t s = 0; s < grouped.blocks.size(); ++s) {
        matched[s][0].assign(clusters.blocks[s][0].cluster_count(), -1);
        matched[s][1].assign(clusters.blocks[s][1].cluster_count(), -1);
        for (const auto& [a, b] : pairs.chm_pairs[s]) {
            matched[s][0][a] = b;
            matched[s][1][b] = a;
        }
    }

    GradPack pack;
    Vec* grad = nullptr;
    if (want_grads) {
        pack.grads["encoder"].assign(encoder.param_count(), 0.0);
        grad = &pack.grads["encoder"];
    }
    double chc_sum = 0.0, ihc_sum = 0.0;

    for (std::size_t s = 0; s < batch.size(); ++s) {
        for (int item : batch[s]) {
            const auto& loc = grouped.loc[item];
            if (loc.scenario_index != static_cast<int>(s))
                throw ParameterError("heterogeneous_losses: item listed under wrong scenario");
            const auto& bc = clusters.blocks[s][loc.group];
            if (bc.labels.empty() || bc.labels[loc.pos] < 0)
                throw ContractViolation("heterogeneous_losses: batch record has outlier label");
            const int label = bc.labels[loc.pos];
            const int opp = 1 - loc.group;
            const auto& opp_cents = clusters.blocks[s][opp].cents.centroids;
            const int pos_cluster = matched[s][loc.group][label];
            const auto& u_set = pairs.ihm_sets[item];

            if (pos_cluster < 0 && u_set.empty()) continue;
            auto f = encoder.forward(*grouped.items[item].raw, loc.scenario_index, loc.group);
            Vec rep_grad(encoder.d_out(), 0.0);
            bool have_grad = false;

            if (pos_cluster >= 0 && !opp_cents.empty()) {
                auto res = softmax_xent_contrastive(f.rep, opp_cents, {pos_cluster}, tau,
                                                    want_grads, false);
                chc_sum += res.loss * inv_total;
                if (want_grads) {
                    add_scaled(rep_grad, res.anchor_grad, inv_total);
                    have_grad = true;
                }
            }

            if (!u_set.empty()) {
                std::vector<int> positives;
                positives.reserve(u_set.size());
                for (int v : u_set) positives.push_back(grouped.loc[v].pos);
                auto res = softmax_xent_contrastive(f.rep, block_reps[s][opp], positives, tau,
                                                    want_grads, false);
                ihc_sum += res.loss * inv_total;
                if (want_grads) {
                    add_scaled(rep_grad, res.anchor_grad, inv_total);
                    have_grad = true;
                }
            }

            if (want_grads && have_grad) encoder.backward(f, rep_grad, *grad);
        }
    }
    pack.loss = chc_sum + ihc_sum;
    if (stats) {
        stats->chc = chc_sum;
        stats->ihc = ihc_sum;
    }
    return pack;
}

GradPack text_guided_loss(const GroupedView& grouped, const std::vector<std::vector<int>>& batch,
                          const ImageEncoder& encoder, const TextState& text, bool want_grads) {
    if (batch.size() != grouped.blocks.size())
        throw ShapeError("text_guided_loss: batch must list every scenario");
    if (text.instance.size() != grouped.items.size())
        throw ShapeError("text_guided_loss: text state misaligned");
    std::size_t total = 0;
    for (const auto& b : batch) total += b.size();
    if (total == 0) throw ParameterError("text_guided_loss: empty batch");
    const double inv_total = 1.0 / static_cast<double>(total);

    GradPack pack;
    Vec* grad = nullptr;
    if (want_grads) {
        pack.grads["encoder"].assign(encoder.param_count(), 0.0);
        grad = &pack.grads["encoder"];
    }

    for (std::size_t s = 0; s < batch.size(); ++s) {
        const auto& items = batch[s];
        if (items.empty()) continue;
        std::vector<Vec> candidates;
        candidates.reserve(items.size());
        for (int item : items) {
            if (text.instance[item].empty())
                throw ContractViolation("text_guided_loss: record lacks an instance text rep");
            candidates.push_back(text.instance[item]);
        }
        for (std::size_t m = 0; m < items.size(); ++m) {
            const auto& loc = grouped.loc[items[m]];
            if (loc.scenario_index != static_cast<int>(s))
                throw ParameterError("text_guided_loss: item listed under wrong scenario");
            auto f = encoder.forward(*grouped.items[items[m]].raw, loc.scenario_index, loc.group);
            auto res = softmax_xent_contrastive(f.rep, candidates, {static_cast<int>(m)}, 1.0,
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

Stage3Result run_stage3(const GroupedView& grouped, ImageEncoder& encoder,
                        const OfflineTextBank& bank, const Stage3Config& cfg,
                        const ClusteringConfig& ccfg, const AblationFlags& flags) {
    if (cfg.epochs < 0) throw ParameterError("run_stage3: negative epochs");
    if (cfg.batch_size < 2) throw ParameterError("run_stage3: batch_size < 2");
    if (cfg.tau <= 0.0) throw ParameterError("run_stage3: tau must be positive");

    Stage3Result result;
    result.final_text = init_text_state(grouped, bank);
    auto& text = result.final_text;

    RandomStream rng(derive_seed(cfg.seed, seed_tag::stage3));
    RandomStream retention_rng(derive_seed(cfg.seed, seed_tag::retention));
    AdamState adam(encoder.param_count());
    const int half = cfg.batch_size / 2;
    const std::size_t num_scen = grouped.blocks.size();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto reps = encode_view(grouped, encoder);
        Stage3EpochStats stats;
        stats.clusters = cluster_view(grouped, reps, ccfg);

        if (flags.dru) {
            dru_update(text, grouped, stats.clusters, cfg.eta, cfg.alpha);
        } else {
            dru_update(text, grouped, stats.clusters, 1.0, 0.0);
        }

        auto pairs = compute_pair_sets(grouped, stats.clusters, text, reps, cfg, flags,
                                       retention_rng);
        stats.chm_diag = pairs.chm_diag;
        for (const auto& sp : pairs.chm_pairs) stats.retained_pairs += static_cast<int>(sp.size());
        std::size_t u_total = 0;
        for (const auto& u : pairs.ihm_sets) u_total += u.size();
        stats.mean_u = grouped.items.empty()
                           ? 0.0
                           : static_cast<double>(u_total) / static_cast<double>(grouped.items.size());

        std::vector<std::array<std::vector<Vec>, 2>> block_reps(num_scen);
        for (std::size_t s = 0; s < num_scen; ++s)
            for (int g = 0; g < 2; ++g)
                for (int item : grouped.blocks[s][g]) block_reps[s][g].push_back(reps[item]);

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

        for (int step = 0; step < steps; ++step) {
            std::vector<std::vector<int>> batch(num_scen);
            for (std::size_t s = 0; s < num_scen; ++s) {
                samplers[s][0].draw(half, rng, batch[s]);
                samplers[s][1].draw(half, rng, batch[s]);
            }

            auto hc = homogeneous_loss(grouped, batch, encoder, stats.clusters, cfg.tau, true);
            Stage3PairStats pair_stats;
            auto het = heterogeneous_losses(grouped, batch, encoder, stats.clusters, pairs,
                                            block_reps, cfg.tau, true, &pair_stats);
            auto tgc = text_guided_loss(grouped, batch, encoder, text, true);

            auto& g = hc.grads["encoder"];
            add_scaled(g, het.grads["encoder"], 1.0);
            add_scaled(g, tgc.grads["encoder"], cfg.lambda_tgc);
            adam_step(encoder.params(), g, adam, cfg.lr);

            stats.mean_hc += hc.loss;
            stats.mean_chc += pair_stats.chc;
            stats.mean_ihc += pair_stats.ihc;
            stats.mean_tgc += tgc.loss;
            stats.mean_total += hc.loss + pair_stats.chc + pair_stats.ihc +
                                cfg.lambda_tgc * tgc.loss;
        }
        if (steps > 0) {
            stats.mean_hc /= steps;
            stats.mean_chc /= steps;
            stats.mean_ihc /= steps;
            stats.mean_tgc /= steps;
            stats.mean_total /= steps;
        }
        std::fprintf(stderr,
                     "[stage3] epoch %d/%d total=%.6f hc=%.6f chc=%.6f ihc=%.6f tgc=%.6f "
                     "retained=%d mean_u=%.2f\n",
                     epoch + 1, cfg.epochs, stats.mean_total, stats.mean_hc, stats.mean_chc,
                     stats.mean_ihc, stats.mean_tgc, stats.retained_pairs, stats.mean_u);
        result.epochs.push_back(std::move(stats));
    }
    return result;
}

}  // namespace msreid
