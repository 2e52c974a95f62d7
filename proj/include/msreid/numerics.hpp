#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "msreid/errors.hpp"

namespace msreid {

using Vec = std::vector<double>;

// Row-major dense matrix.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

double dot(const Vec& a, const Vec& b);
double norm(const Vec& v);
void add_scaled(Vec& dst, const Vec& src, double scale);  // dst += scale * src

// Returns v / ||v||; throws DegenerateInputError below the norm floor.
Vec normalized(const Vec& v, double floor = 1e-12);

// Pairwise cosine similarities, entry (i, j) = <A_i, B_j> / (|A_i| |B_j|).
Mat cosine_sim_matrix(const std::vector<Vec>& a, const std::vector<Vec>& b);

Vec mat_vec(const Mat& m, const Vec& x);    // m * x
Vec mat_t_vec(const Mat& m, const Vec& x);  // m^T * x

class RandomStream;

// Orthonormalizes a matrix of i.i.d. normal draws (modified Gram-Schmidt,
// positive diagonal scale), so the result is deterministic under a fixed
// stream. Requires cols <= rows.
Mat orthonormal_columns(int rows, int cols, RandomStream& rng);

// Loss plus analytic gradients of the softmax cross-entropy contrastive kernel
//   loss = -(1/|P|) sum_{p in P} log softmax_p(anchor . candidates / temperature).
// Similarities are raw dot products; callers normalize their representations.
struct ContrastiveResult {
    double loss = 0.0;
    Vec anchor_grad;                  // empty unless requested
    std::vector<Vec> candidate_grads; // empty unless requested
};

ContrastiveResult softmax_xent_contrastive(const Vec& anchor,
                                           const std::vector<Vec>& candidates,
                                           const std::vector<int>& positive_indices,
                                           double temperature,
                                           bool want_anchor_grad = true,
                                           bool want_candidate_grads = false);

// Adam with bias correction. step_count increments by exactly one per step.
struct AdamState {
    long step_count = 0;
    std::vector<double> m;
    std::vector<double> v;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state, double lr);

// Max over coordinates of |analytic - central difference| / max(1, |central difference|).
// Reports, never throws.
double finite_diff_check(const std::function<double(const std::vector<double>&)>& loss_fn,
                         const std::vector<double>& analytic_grad,
                         std::vector<double> params,
                         double eps);

// Loss value plus gradients keyed by parameter-tensor id.
struct GradPack {
    double loss = 0.0;
    std::map<std::string, std::vector<double>> grads;
};

}  // namespace msreid
