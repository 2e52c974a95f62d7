#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msreid/numerics.hpp"

namespace msreid {

// Toy differentiable image encoder:
//   rep = normalize(trunk_w * tanh(front_w[g] * x + front_b[g] + e_s) + trunk_b)
// Exactly two front-ends, selected by the record's working group; scenario
// identity enters only through the additive embedding e_s, which is the lever
// the scenario-embedding ablation toggles. Parameters live in one flat vector
// so the optimizer and checkpoints treat them uniformly.
class ImageEncoder {
public:
    ImageEncoder(int d_in, int hidden, int d_out, int num_scenarios, bool scenario_emb_enabled);

    // Seeded "pretrained" init: both front-ends share one scaled
    // orthonormal-row draw (tanh stays near-linear) and the trunk gets
    // orthonormal columns, so initial rep cosines track input cosines. Biases
    // and scenario embeddings start at zero; the embeddings only move during
    // training when scenario_emb_enabled (gradient-masked otherwise, so they
    // stay exactly 0).
    void init(std::uint64_t seed);

    struct Forward {
        Vec rep;  // unit norm
        Vec h;    // tanh activations
        double prenorm = 0.0;
        int scenario_index = 0;
        int group = 0;
        Vec x;
    };

    Forward forward(const Vec& x, int scenario_index, int group) const;

    // Accumulates d loss / d params into grad (same length as params), given
    // d loss / d rep. The untouched front-end receives zero gradient.
    void backward(const Forward& f, const Vec& rep_grad, Vec& grad) const;

    Vec& params() { return params_; }
    const Vec& params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }

    int d_in() const { return d_in_; }
    int hidden() const { return hidden_; }
    int d_out() const { return d_out_; }
    int num_scenarios() const { return num_scenarios_; }
    bool scenario_emb_enabled() const { return scenario_emb_enabled_; }

    // Flat-vector offsets, exposed so tests can pin down per-tensor behavior.
    std::size_t front_w_offset(int group) const;
    std::size_t front_b_offset(int group) const;
    std::size_t scenario_emb_offset(int scenario_index) const;
    std::size_t trunk_w_offset() const;
    std::size_t trunk_b_offset() const;

    std::string snapshot() const;
    static ImageEncoder restore(const std::string& bytes);

private:
    int d_in_, hidden_, d_out_, num_scenarios_;
    bool scenario_emb_enabled_;
    Vec params_;
};

// Frozen random-projection text encoder:
//   rep = normalize(proj^T (concat(tokens) + context))
// proj and context are fixed at construction; gradients flow only into the
// learnable prompt tokens.
class TextEncoder {
public:
    TextEncoder(int num_tokens, int d_token, int d_out, std::uint64_t seed);

    struct Forward {
        Vec rep;  // unit norm
        double prenorm = 0.0;
    };

    Forward forward(const std::vector<Vec>& tokens) const;

    // Accumulates d loss / d tokens given d loss / d rep.
    void backward(const Forward& f, const Vec& rep_grad, std::vector<Vec>& token_grads) const;

    int num_tokens() const { return num_tokens_; }
    int d_token() const { return d_token_; }
    int d_out() const { return d_out_; }
    const Mat& proj() const { return proj_; }
    const Vec& context() const { return context_; }

private:
    int num_tokens_, d_token_, d_out_;
    Mat proj_;     // (num_tokens * d_token) x d_out
    Vec context_;  // num_tokens * d_token
};

}  // namespace msreid
