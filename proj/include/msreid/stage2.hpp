#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "msreid/clustering.hpp"
#include "msreid/encoders.hpp"
#include "msreid/grouping.hpp"

namespace msreid {

struct Stage2Config {
    int epochs = 50;
    int batch_size = 64;  // records per scenario per step, groups mixed
    double lambda_mss = 2.0;
    double kappa = 1.0;  // separation margin; see config for sensitivity notes
    int num_tokens = 4;
    int d_token = 16;
    double lr = 3.5e-4;
    double tau = 1.0;  // the image-text losses carry no temperature; override for experiments
    std::uint64_t seed = 0;
};

// Learnable prompt tokens, one set of num_tokens vectors per
// (scenario_index, group, pseudo_label). Token values live in one flat vector
// so the optimizer treats them uniformly; slots are fixed once created.
class PromptTokenStore {
public:
    struct Key {
        int scenario_index = 0;
        int group = 0;
        int label = 0;
        bool operator<(const Key& o) const {
            return std::tie(scenario_index, group, label) < std::tie(o.scenario_index, o.group, o.label);
        }
    };

    PromptTokenStore(int num_tokens, int d_token) : num_tokens_(num_tokens), d_token_(d_token) {}

    int add(const Key& key);              // new slot, zero-initialized
    int slot(const Key& key) const;       // -1 when absent
    int slot_count() const { return static_cast<int>(keys_.size()); }
    const Key& key_of(int slot) const { return keys_.at(slot); }

    std::vector<Vec> tokens_of(int slot) const;
    std::size_t flat_offset(int slot) const;
    std::size_t per_slot() const { return static_cast<std::size_t>(num_tokens_) * d_token_; }

    Vec& flat() { return flat_; }
    const Vec& flat() const { return flat_; }
    int num_tokens() const { return num_tokens_; }
    int d_token() const { return d_token_; }

private:
    int num_tokens_, d_token_;
    std::map<Key, int> index_;
    std::vector<Key> keys_;
    Vec flat_;
};

// Stage-II exports: one text representation per pseudo-label cluster, plus a
// per-record copy ready for Stage III's dynamic updates. Instance reps start
// bit-equal to their cluster rep.
struct TextBankEntry {
    int scenario_id = 0;
    int group = 0;
    int label = 0;
    Vec rep;
};

struct OfflineTextBank {
    int d_out = 0;
    std::vector<TextBankEntry> cluster_reps;           // sorted (scenario_id, group, label)
    std::vector<std::pair<long, Vec>> instance_reps;   // sorted by record_id

    void save(const std::string& dir) const;  // text_bank.bin + text_bank_index.csv
    static OfflineTextBank load(const std::string& dir);
};

struct Stage2LossStats {
    double mss_loss = 0.0;
    double min_pair_dist2 = 0.0;  // min over scenario pairs of |mean_g - mean_h|^2
    int pair_count = 0;
};

// L = (1/T) sum_s sum_m (L_it + L_ti) + lambda_mss * L_mss, T = total batch
// records. Per scenario the candidate set for both directions is the batch's
// B records (text side indexed by each record's pseudo-label). Image reps are
// frozen constants; gradients land in grads["tokens"], aligned with
// tokens.flat().
GradPack stage2_loss(const GroupedView& grouped, const std::vector<std::vector<int>>& batch,
                     const std::vector<Vec>& image_reps, const TextEncoder& text_encoder,
                     const PromptTokenStore& tokens, const ClusterState& labels,
                     const Stage2Config& cfg, bool want_grads = true,
                     Stage2LossStats* stats = nullptr);

struct Stage2EpochStats {
    double mean_loss = 0.0;
    double mean_mss = 0.0;
    double min_pair_dist2 = 0.0;  // min over the epoch's steps
};

struct Stage2Result {
    OfflineTextBank bank;
    PromptTokenStore tokens;
    std::vector<Stage2EpochStats> epochs;
};

// Minibatch Adam on the prompt tokens against frozen encoders. image_reps are
// the frozen loss-side encodings (pre-Stage-I snapshot by default);
// label_reps are the encodings that produced stage1_labels, used only to give
// outlier records a nearest-cluster instance rep at export.
Stage2Result run_stage2(const GroupedView& grouped, const std::vector<Vec>& image_reps,
                        const std::vector<Vec>& label_reps, const ClusterState& stage1_labels,
                        const TextEncoder& text_encoder, const Stage2Config& cfg);

}  // namespace msreid
