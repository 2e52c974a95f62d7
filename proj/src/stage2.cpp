#include "msreid/stage2.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "msreid/binio.hpp"
#include "msreid/errors.hpp"
#include "msreid/rng.hpp"
#include "msreid/sampler.hpp"
#include "msreid/util.hpp"

namespace msreid {

namespace {
constexpr std::uint32_t kBankMagic = 0x4D534231;  // "MSB1"
constexpr double kTokenInitStd = 0.02;
}

int PromptTokenStore::add(const Key& key) {
    if (index_.count(key)) throw ParameterError("PromptTokenStore::add: duplicate key");
    const int slot = static_cast<int>(keys_.size());
    index_[key] = slot;
    keys_.push_back(key);
    flat_.resize(flat_.size() + per_slot(), 0.0);
    return slot;
}

int PromptTokenStore::slot(const Key& key) const {
    auto it = index_.find(key);
    return it == index_.end() ? -1 : it->second;
}

std::vector<Vec> PromptTokenStore::tokens_of(int slot) const {
    if (slot < 0 || slot >= slot_count()) throw ParameterError("tokens_of: bad slot");
    std::vector<Vec> out(num_tokens_, Vec(d_token_));
    const std::size_t base = flat_offset(slot);
    for (int m = 0; m < num_tokens_; ++m)
        for (int i = 0; i < d_token_; ++i)
            out[m][i] = flat_[base + static_cast<std::size_t>(m) * d_token_ + i];
    return out;
}

std::size_t PromptTokenStore::flat_offset(int slot) const {
    return static_cast<std::size_t>(slot) * per_slot();
}

GradPack stage2_loss(const GroupedView& grouped, const std::vector<std::vector<int>>& batch,
                     const std::vector<Vec>& image_reps, const TextEncoder& text_encoder,
                     const PromptTokenStore& tokens, const ClusterState& labels,
                     const Stage2Config& cfg, bool want_grads, Stage2LossStats* stats) {
    if (batch.size() != grouped.blocks.size())
        throw ShapeError("stage2_loss: batch must list every scenario");
    if (image_reps.size() != grouped.items.size())
        throw ShapeError("stage2_loss: image_reps size mismatch");

    std::size_t total = 0;
    for (const auto& b : batch) total += b.size();
    if (total == 0) throw ParameterError("stage2_loss: empty batch");
    const double inv_total = 1.0 / static_cast<double>(total);

    GradPack pack;
    Vec* flat_grad = nullptr;
    if (want_grads) {
        pack.grads["tokens"].assign(tokens.flat().size(), 0.0);
        flat_grad = &pack.grads["tokens"];
    }

    // Forward each distinct prompt slot once; rep-space gradients accumulate
    // per slot and flow through the text encoder at the end.
    std::map<int, TextEncoder::Forward> fwd;
    std::map<int, Vec> slot_grad;
    auto slot_rep = [&](int slot) -> const Vec& {
        auto it = fwd.find(slot);
        if (it == fwd.end()) it = fwd.emplace(slot, text_encoder.forward(tokens.tokens_of(slot))).first;
        return it->second.rep;
    };
    auto add_slot_grad = [&](int slot, const Vec& g, double scale) {
        auto& buf = slot_grad[slot];
        if (buf.empty()) buf.assign(text_encoder.d_out(), 0.0);
        add_scaled(buf, g, scale);
    };

    std::vector<Vec> scen_mean;          // batch-mean text rep per contributing scenario
    std::vector<std::size_t> scen_size;  // its record count
    std::vector<std::vector<int>> scen_slots;  // per-record slot list per contributing scenario
    std::vector<std::size_t> scen_of;          // contributing index -> scenario index

    for (std::size_t s = 0; s < batch.size(); ++s) {
        const auto& items = batch[s];
        if (items.empty()) continue;
        const std::size_t bs = items.size();

        std::vector<int> slots(bs);
        std::vector<Vec> text_list(bs), image_list(bs);
        for (std::size_t m = 0; m < bs; ++m) {
            const int item = items[m];
            const auto& loc = grouped.loc[item];
            if (loc.scenario_index != static_cast<int>(s))
                throw ParameterError("stage2_loss: item listed under wrong scenario");
            const auto& bc = labels.blocks[s][loc.group];
            if (bc.labels.empty() || bc.labels[loc.pos] < 0)
                throw ContractViolation("stage2_loss: batch record has outlier label");
            const int slot =
                tokens.slot({static_cast<int>(s), loc.group, bc.labels[loc.pos]});
            if (slot < 0) throw ContractViolation("stage2_loss: no tokens for batch label");
            slots[m] = slot;
            text_list[m] = slot_rep(slot);
            image_list[m] = image_reps[item];
        }

        for (std::size_t m = 0; m < bs; ++m) {
            // Image-to-text: anchor is the frozen image rep, candidates are
            // the batch's text reps, positive is the record's own.
            auto it_res = softmax_xent_contrastive(image_list[m], text_list,
                                                   {static_cast<int>(m)}, cfg.tau, false,
                                                   want_grads);
            pack.loss += it_res.loss * inv_total;
            if (want_grads)
                for (std::size_t v = 0; v < bs; ++v)
                    add_slot_grad(slots[v], it_res.candidate_grads[v], inv_total);

            // Text-to-image: anchor is the text rep, candidates the frozen
            // image reps, positives every batch record sharing the label.
            std::vector<int> positives;
            for (std::size_t v = 0; v < bs; ++v)
                if (slots[v] == slots[m]) positives.push_back(static_cast<int>(v));
            auto ti_res = softmax_xent_contrastive(text_list[m], image_list, positives, cfg.tau,
                                                   want_grads, false);
            pack.loss += ti_res.loss * inv_total;
            if (want_grads) add_slot_grad(slots[m], ti_res.anchor_grad, inv_total);
        }

        Vec mean(text_encoder.d_out(), 0.0);
        for (const auto& t : text_list) add_scaled(mean, t, 1.0 / static_cast<double>(bs));
        scen_mean.push_back(std::move(mean));
        scen_size.push_back(bs);
        scen_slots.push_back(std::move(slots));
        scen_of.push_back(s);
    }

    // Multi-scenario separation: hinge on squared distance between batch-mean
    // text reps, summed over ordered scenario pairs.
    double mss = 0.0;
    double min_d2 = std::numeric_limits<double>::infinity();
    int pair_count = 0;
    std::vector<Vec> mean_grad(scen_mean.size(), Vec(text_encoder.d_out(), 0.0));
    for (std::size_t g = 0; g < scen_mean.size(); ++g) {
        for (std::size_t h = 0; h < scen_mean.size(); ++h) {
            if (g == h) continue;
            Vec diff = scen_mean[g];
            add_scaled(diff, scen_mean[h], -1.0);
            const double d2 = dot(diff, diff);
            if (g < h) {
                min_d2 = std::min(min_d2, d2);
                ++pair_count;
            }
            const double hinge = cfg.kappa - d2;
            if (hinge > 0.0) {
                mss += hinge;
                if (want_grads) {
                    add_scaled(mean_grad[g], diff, -2.0);
                    add_scaled(mean_grad[h], diff, 2.0);
                }
            }
        }
    }
    pack.loss += cfg.lambda_mss * mss;
    if (want_grads) {
        for (std::size_t g = 0; g < scen_slots.size(); ++g) {
            const double scale = cfg.lambda_mss / static_cast<double>(scen_size[g]);
            for (int slot : scen_slots[g]) add_slot_grad(slot, mean_grad[g], scale);
        }
    }
    if (stats) {
        stats->mss_loss = mss;
        stats->pair_count = pair_count;
        stats->min_pair_dist2 = pair_count > 0 ? min_d2 : 0.0;
    }

    if (want_grads) {
        for (auto& [slot, g] : slot_grad) {
            std::vector<Vec> token_grads(text_encoder.num_tokens(), Vec(text_encoder.d_token(), 0.0));
            text_encoder.backward(fwd.at(slot), g, token_grads);
            const std::size_t base = tokens.flat_offset(slot);
            for (int m = 0; m < text_encoder.num_tokens(); ++m)
                for (int i = 0; i < text_encoder.d_token(); ++i)
                    (*flat_grad)[base + static_cast<std::size_t>(m) * text_encoder.d_token() + i] +=
                        token_grads[m][i];
        }
    }
    return pack;
}

namespace {

// Outlier records take the text rep of the nearest cluster in the space that
// produced the labels: own block first, then the scenario, then anywhere.
int nearest_cluster_slot(const GroupedView& grouped, const ClusterState& labels,
                         const PromptTokenStore& tokens, const Vec& rep, int scenario_index,
                         int group) {
    struct Scan {
        int s, g;
    };
    std::vector<std::vector<Scan>> passes;
    passes.push_back({{scenario_index, group}});
    passes.push_back({{scenario_index, 0}, {scenario_index, 1}});
    std::vector<Scan> all;
    for (std::size_t s = 0; s < grouped.blocks.size(); ++s)
        for (int g = 0; g < 2; ++g) all.push_back({static_cast<int>(s), g});
    passes.push_back(all);

    for (const auto& pass : passes) {
        int best_slot = -1;
        double best = -2.0;
        for (const auto& scan : pass) {
            const auto& bc = labels.blocks[scan.s][scan.g];
            for (int u = 0; u < bc.cluster_count(); ++u) {
                const double sim = dot(rep, bc.cents.centroids[u]);
                if (sim > best + 1e-15) {
                    best = sim;
                    best_slot = tokens.slot({scan.s, scan.g, u});
                }
            }
        }
        if (best_slot >= 0) return best_slot;
    }
    throw ContractViolation("nearest_cluster_slot: no clusters exist anywhere");
}

}  // namespace

Stage2Result run_stage2(const GroupedView& grouped, const std::vector<Vec>& image_reps,
                        const std::vector<Vec>& label_reps, const ClusterState& stage1_labels,
                        const TextEncoder& text_encoder, const Stage2Config& cfg) {
    if (cfg.epochs < 0) throw ParameterError("run_stage2: negative epochs");
    if (cfg.batch_size < 1) throw ParameterError("run_stage2: batch_size < 1");
    if (cfg.kappa <= 0.0) throw ParameterError("run_stage2: kappa must be positive");
    if (cfg.num_tokens != text_encoder.num_tokens() || cfg.d_token != text_encoder.d_token())
        throw ParameterError("run_stage2: token shape disagrees with text encoder");
    if (image_reps.size() != grouped.items.size() || label_reps.size() != grouped.items.size())
        throw ShapeError("run_stage2: rep array size mismatch");

    Stage2Result result{OfflineTextBank{}, PromptTokenStore(cfg.num_tokens, cfg.d_token), {}};
    auto& tokens = result.tokens;

    RandomStream rng(derive_seed(cfg.seed, seed_tag::stage2));
    for (std::size_t s = 0; s < grouped.blocks.size(); ++s) {
        for (int g = 0; g < 2; ++g) {
            const auto& bc = stage1_labels.blocks[s][g];
            for (int u = 0; u < bc.cluster_count(); ++u)
                tokens.add({static_cast<int>(s), g, u});
        }
    }
    for (double& v : tokens.flat()) v = kTokenInitStd * rng.normal();

    // One sampler per scenario, both groups mixed.
    std::vector<BlockSampler> samplers;
    long max_pool = 0;
    for (std::size_t s = 0; s < grouped.blocks.size(); ++s) {
        std::vector<int> pool;
        for (int g = 0; g < 2; ++g) {
            const auto& bc = stage1_labels.blocks[s][g];
            for (std::size_t p = 0; p < bc.labels.size(); ++p)
                if (bc.labels[p] >= 0) pool.push_back(grouped.blocks[s][g][p]);
        }
        max_pool = std::max(max_pool, static_cast<long>(pool.size()));
        samplers.emplace_back(std::move(pool), rng);
    }
    const int steps = static_cast<int>((max_pool + cfg.batch_size - 1) / cfg.batch_size);

    AdamState adam(tokens.flat().size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Stage2EpochStats es;
        double min_d2 = std::numeric_limits<double>::infinity();
        bool saw_pairs = false;
        for (int step = 0; step < steps; ++step) {
            std::vector<std::vector<int>> batch(grouped.blocks.size());
            for (std::size_t s = 0; s < samplers.size(); ++s)
                samplers[s].draw(cfg.batch_size, rng, batch[s]);
            Stage2LossStats stats;
            auto pack = stage2_loss(grouped, batch, image_reps, text_encoder, tokens,
                                    stage1_labels, cfg, true, &stats);
            es.mean_loss += pack.loss;
            es.mean_mss += stats.mss_loss;
            if (stats.pair_count > 0) {
                min_d2 = std::min(min_d2, stats.min_pair_dist2);
                saw_pairs = true;
            }
            adam_step(tokens.flat(), pack.grads["tokens"], adam, cfg.lr);
        }
        if (steps > 0) {
            es.mean_loss /= steps;
            es.mean_mss /= steps;
        }
        es.min_pair_dist2 = saw_pairs ? min_d2 : 0.0;
        std::fprintf(stderr, "[stage2] epoch %d/%d loss=%.6f mss=%.6f min_pair_dist2=%.4f\n",
                     epoch + 1, cfg.epochs, es.mean_loss, es.mean_mss, es.min_pair_dist2);
        result.epochs.push_back(es);
    }

    auto& bank = result.bank;
    bank.d_out = text_encoder.d_out();
    std::vector<Vec> slot_reps(tokens.slot_count());
    for (int slot = 0; slot < tokens.slot_count(); ++slot) {
        slot_reps[slot] = text_encoder.forward(tokens.tokens_of(slot)).rep;
        const auto& key = tokens.key_of(slot);
        bank.cluster_reps.push_back(
            {grouped.scenario_ids[key.scenario_index], key.group, key.label, slot_reps[slot]});
    }
    for (std::size_t i = 0; i < grouped.items.size(); ++i) {
        const auto& loc = grouped.loc[i];
        const auto& bc = stage1_labels.blocks[loc.scenario_index][loc.group];
        int slot;
        if (!bc.labels.empty() && bc.labels[loc.pos] >= 0) {
            slot = tokens.slot({loc.scenario_index, loc.group, bc.labels[loc.pos]});
            if (slot < 0) throw ContractViolation("run_stage2: labeled record without tokens");
        } else {
            slot = nearest_cluster_slot(grouped, stage1_labels, tokens, label_reps[i],
                                        loc.scenario_index, loc.group);
        }
        bank.instance_reps.push_back({grouped.items[i].record_id, slot_reps[slot]});
    }
    return result;
}

void OfflineTextBank::save(const std::string& dir) const {
    ByteWriter w;
    w.put_u32(kBankMagic);
    w.put_u32(1);
    w.put_i32(d_out);
    w.put_u64(cluster_reps.size());
    for (const auto& e : cluster_reps) {
        w.put_i32(e.scenario_id);
        w.put_i32(e.group);
        w.put_i32(e.label);
        if (static_cast<int>(e.rep.size()) != d_out) throw ShapeError("text bank: bad cluster rep dim");
        for (double v : e.rep) w.put_f64(v);
    }
    w.put_u64(instance_reps.size());
    for (const auto& [rid, rep] : instance_reps) {
        w.put_i64(rid);
        if (static_cast<int>(rep.size()) != d_out) throw ShapeError("text bank: bad instance rep dim");
        for (double v : rep) w.put_f64(v);
    }
    write_text_file(dir + "/text_bank.bin", w.bytes());

    std::ostringstream csv;
    csv << "kind,scenario_id,group,label,record_id\n";
    for (const auto& e : cluster_reps)
        csv << "cluster," << e.scenario_id << "," << (e.group == 0 ? 'a' : 'b') << "," << e.label
            << ",\n";
    for (const auto& [rid, rep] : instance_reps) csv << "instance,,,," << rid << "\n";
    write_text_file(dir + "/text_bank_index.csv", csv.str());
}

OfflineTextBank OfflineTextBank::load(const std::string& dir) {
    ByteReader r(read_text_file(dir + "/text_bank.bin"));
    if (r.get_u32() != kBankMagic) throw DecodeError("text bank: bad magic");
    if (r.get_u32() != 1) throw DecodeError("text bank: unsupported version");
    OfflineTextBank bank;
    bank.d_out = r.get_i32();
    if (bank.d_out < 1) throw DecodeError("text bank: bad dimension");
    const std::uint64_t nc = r.get_u64();
    for (std::uint64_t i = 0; i < nc; ++i) {
        TextBankEntry e;
        e.scenario_id = r.get_i32();
        e.group = r.get_i32();
        e.label = r.get_i32();
        e.rep.resize(bank.d_out);
        for (int d = 0; d < bank.d_out; ++d) e.rep[d] = r.get_f64();
        bank.cluster_reps.push_back(std::move(e));
    }
    const std::uint64_t ni = r.get_u64();
    for (std::uint64_t i = 0; i < ni; ++i) {
        const long rid = static_cast<long>(r.get_i64());
        Vec rep(bank.d_out);
        for (int d = 0; d < bank.d_out; ++d) rep[d] = r.get_f64();
        bank.instance_reps.push_back({rid, std::move(rep)});
    }
    if (!r.exhausted()) throw DecodeError("text bank: trailing bytes");
    return bank;
}

}  // namespace msreid
