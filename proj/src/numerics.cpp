#include "msreid/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "msreid/rng.hpp"

namespace msreid {

double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) {
        throw ShapeError("dot: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const Vec& v) {
    return std::sqrt(dot(v, v));
}

void add_scaled(Vec& dst, const Vec& src, double scale) {
    if (dst.size() != src.size()) {
        throw ShapeError("add_scaled: " + std::to_string(dst.size()) + " vs " + std::to_string(src.size()));
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

Vec normalized(const Vec& v, double floor) {
    const double n = norm(v);
    if (n < floor) {
        throw DegenerateInputError("cannot normalize vector with norm " + std::to_string(n));
    }
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

Mat cosine_sim_matrix(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    if (a.empty() || b.empty()) throw ShapeError("cosine_sim_matrix: empty input");
    const std::size_t d = a[0].size();
    std::vector<double> na(a.size()), nb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].size() != d) throw ShapeError("cosine_sim_matrix: ragged rows in A");
        na[i] = norm(a[i]);
        if (na[i] < 1e-12) throw DegenerateInputError("cosine_sim_matrix: zero-norm row in A");
    }
    for (std::size_t j = 0; j < b.size(); ++j) {
        if (b[j].size() != d) throw ShapeError("cosine_sim_matrix: dim mismatch between A and B");
        nb[j] = norm(b[j]);
        if (nb[j] < 1e-12) throw DegenerateInputError("cosine_sim_matrix: zero-norm row in B");
    }
    Mat out(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            out.at(i, j) = dot(a[i], b[j]) / (na[i] * nb[j]);
        }
    }
    return out;
}

Vec mat_vec(const Mat& m, const Vec& x) {
    if (x.size() != m.cols) throw ShapeError("mat_vec: size mismatch");
    Vec y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) s += m.at(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

Vec mat_t_vec(const Mat& m, const Vec& x) {
    if (x.size() != m.rows) throw ShapeError("mat_t_vec: size mismatch");
    Vec y(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double xi = x[i];
        for (std::size_t j = 0; j < m.cols; ++j) y[j] += m.at(i, j) * xi;
    }
    return y;
}

Mat orthonormal_columns(int rows, int cols, RandomStream& rng) {
    if (rows < 1 || cols < 1) throw ParameterError("orthonormal_columns: empty shape");
    if (cols > rows) throw ParameterError("orthonormal_columns: cols > rows");
    Mat q(rows, cols);
    for (int j = 0; j < cols; ++j) {
        Vec col(rows);
        for (int i = 0; i < rows; ++i) col[i] = rng.normal();
        for (int k = 0; k < j; ++k) {
            double proj = 0.0;
            for (int i = 0; i < rows; ++i) proj += q.at(i, k) * col[i];
            for (int i = 0; i < rows; ++i) col[i] -= proj * q.at(i, k);
        }
        const double n = norm(col);
        if (n < 1e-9) throw DegenerateInputError("orthonormal_columns: rank collapse");
        for (int i = 0; i < rows; ++i) q.at(i, j) = col[i] / n;
    }
    return q;
}

ContrastiveResult softmax_xent_contrastive(const Vec& anchor,
                                           const std::vector<Vec>& candidates,
                                           const std::vector<int>& positive_indices,
                                           double temperature,
                                           bool want_anchor_grad,
                                           bool want_candidate_grads) {
    if (temperature <= 0.0) throw ParameterError("temperature must be > 0");
    if (positive_indices.empty()) throw ContractViolation("empty positive set");
    if (candidates.empty()) throw ContractViolation("no candidates");
    const std::size_t d = anchor.size();
    const std::size_t n = candidates.size();
    for (const auto& c : candidates) {
        if (c.size() != d) throw ShapeError("candidate dim mismatch");
    }
    std::vector<char> is_pos(n, 0);
    for (int p : positive_indices) {
        if (p < 0 || static_cast<std::size_t>(p) >= n) {
            throw ContractViolation("positive index out of range");
        }
        is_pos[static_cast<std::size_t>(p)] = 1;
    }

    // logits s_j = anchor . c_j / tau, shifted by max for stability
    std::vector<double> s(n);
    double smax = -HUGE_VAL;
    for (std::size_t j = 0; j < n; ++j) {
        s[j] = dot(anchor, candidates[j]) / temperature;
        smax = std::max(smax, s[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(s[j] - smax);
    const double logz = std::log(z) + smax;

    const double inv_p = 1.0 / static_cast<double>(positive_indices.size());
    double loss = 0.0;
    for (int p : positive_indices) loss += logz - s[static_cast<std::size_t>(p)];
    loss *= inv_p;

    ContrastiveResult res;
    res.loss = loss;
    if (!want_anchor_grad && !want_candidate_grads) return res;

    // dloss/ds_j = softmax_j - [j in P]/|P|  (multiple positives average)
    std::vector<double> ds(n);
    for (std::size_t j = 0; j < n; ++j) {
        ds[j] = std::exp(s[j] - logz) - (is_pos[j] ? inv_p : 0.0);
    }
    if (want_anchor_grad) {
        res.anchor_grad.assign(d, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double w = ds[j] / temperature;
            for (std::size_t k = 0; k < d; ++k) res.anchor_grad[k] += w * candidates[j][k];
        }
    }
    if (want_candidate_grads) {
        res.candidate_grads.assign(n, Vec(d, 0.0));
        for (std::size_t j = 0; j < n; ++j) {
            const double w = ds[j] / temperature;
            for (std::size_t k = 0; k < d; ++k) res.candidate_grads[j][k] = w * anchor[k];
        }
    }
    return res;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state, double lr) {
    if (params.size() != grad.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
        throw ShapeError("adam_step: parameter/gradient/state size mismatch");
    }
    state.step_count += 1;
    const double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / b1t;
        const double vhat = state.v[i] / b2t;
        params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

double finite_diff_check(const std::function<double(const std::vector<double>&)>& loss_fn,
                         const std::vector<double>& analytic_grad,
                         std::vector<double> params,
                         double eps) {
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + eps;
        const double up = loss_fn(params);
        params[i] = saved - eps;
        const double down = loss_fn(params);
        params[i] = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double err = std::abs(analytic_grad[i] - fd) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace msreid
