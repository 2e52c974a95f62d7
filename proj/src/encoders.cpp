#include "msreid/encoders.hpp"

#include <cmath>

#include "msreid/binio.hpp"
#include "msreid/errors.hpp"
#include "msreid/rng.hpp"

namespace msreid {

namespace {
constexpr std::uint32_t kImageCkptMagic = 0x4D534931;  // "MSI1"
}

ImageEncoder::ImageEncoder(int d_in, int hidden, int d_out, int num_scenarios,
                           bool scenario_emb_enabled)
    : d_in_(d_in),
      hidden_(hidden),
      d_out_(d_out),
      num_scenarios_(num_scenarios),
      scenario_emb_enabled_(scenario_emb_enabled) {
    if (d_in < 1 || hidden < 1 || d_out < 1 || num_scenarios < 1)
        throw ParameterError("ImageEncoder: non-positive dimension");
    const std::size_t n = 2 * (static_cast<std::size_t>(hidden) * d_in + hidden) +
                          static_cast<std::size_t>(num_scenarios) * hidden +
                          static_cast<std::size_t>(d_out) * hidden + d_out;
    params_.assign(n, 0.0);
}

std::size_t ImageEncoder::front_w_offset(int group) const {
    if (group != 0 && group != 1) throw ParameterError("front_w_offset: group not in {0,1}");
    return static_cast<std::size_t>(group) * (static_cast<std::size_t>(hidden_) * d_in_ + hidden_);
}

std::size_t ImageEncoder::front_b_offset(int group) const {
    return front_w_offset(group) + static_cast<std::size_t>(hidden_) * d_in_;
}

std::size_t ImageEncoder::scenario_emb_offset(int scenario_index) const {
    if (scenario_index < 0 || scenario_index >= num_scenarios_)
        throw ParameterError("scenario_emb_offset: index out of range");
    return 2 * (static_cast<std::size_t>(hidden_) * d_in_ + hidden_) +
           static_cast<std::size_t>(scenario_index) * hidden_;
}

std::size_t ImageEncoder::trunk_w_offset() const {
    return 2 * (static_cast<std::size_t>(hidden_) * d_in_ + hidden_) +
           static_cast<std::size_t>(num_scenarios_) * hidden_;
}

std::size_t ImageEncoder::trunk_b_offset() const {
    return trunk_w_offset() + static_cast<std::size_t>(d_out_) * hidden_;
}

void ImageEncoder::init(std::uint64_t seed) {
    RandomStream rng(derive_seed(seed, seed_tag::encoder_init));
    // The "pretrained" starting point must expose the input geometry, not
    // scramble it: the front-end is a scaled near-isometry kept inside tanh's
    // linear region and the trunk has orthonormal columns, so initial rep
    // cosines track raw-feature cosines closely enough for density clustering
    // to see identity structure before any training. Both groups start from
    // the same front-end weights (one shared pretrained copy) and only
    // diverge through their own gradients.
    const double front_gain = 0.5;
    Mat front(hidden_, d_in_);
    if (hidden_ <= d_in_) {
        Mat cols = orthonormal_columns(d_in_, hidden_, rng);  // transposed: orthonormal rows
        for (int r = 0; r < hidden_; ++r)
            for (int c = 0; c < d_in_; ++c) front.at(r, c) = front_gain * cols.at(c, r);
    } else {
        const double s = front_gain / std::sqrt(static_cast<double>(d_in_));
        for (double& v : front.data) v = s * rng.normal();
    }
    Mat trunk(d_out_, hidden_);
    if (hidden_ <= d_out_) {
        trunk = orthonormal_columns(d_out_, hidden_, rng);
    } else {
        const double s = 1.0 / std::sqrt(static_cast<double>(hidden_));
        for (double& v : trunk.data) v = s * rng.normal();
    }

    for (int g = 0; g < 2; ++g) {
        const std::size_t w = front_w_offset(g);
        for (int i = 0; i < hidden_ * d_in_; ++i) params_[w + i] = front.data[i];
        const std::size_t b = front_b_offset(g);
        for (int i = 0; i < hidden_; ++i) params_[b + i] = 0.0;
    }
    for (int s = 0; s < num_scenarios_; ++s) {
        const std::size_t e = scenario_emb_offset(s);
        for (int i = 0; i < hidden_; ++i) params_[e + i] = 0.0;
    }
    const std::size_t tw = trunk_w_offset();
    for (int i = 0; i < d_out_ * hidden_; ++i) params_[tw + i] = trunk.data[i];
    const std::size_t tb = trunk_b_offset();
    for (int i = 0; i < d_out_; ++i) params_[tb + i] = 0.0;
}

ImageEncoder::Forward ImageEncoder::forward(const Vec& x, int scenario_index, int group) const {
    if (static_cast<int>(x.size()) != d_in_) throw ShapeError("encode_image: input size != d_in");
    if (scenario_index < 0 || scenario_index >= num_scenarios_)
        throw ParameterError("encode_image: scenario index out of range");
    if (group != 0 && group != 1) throw ParameterError("encode_image: group not in {0,1}");

    Forward f;
    f.scenario_index = scenario_index;
    f.group = group;
    f.x = x;

    const std::size_t w = front_w_offset(group);
    const std::size_t b = front_b_offset(group);
    const std::size_t e = scenario_emb_offset(scenario_index);
    f.h.resize(hidden_);
    for (int i = 0; i < hidden_; ++i) {
        double s = params_[b + i] + params_[e + i];
        const std::size_t row = w + static_cast<std::size_t>(i) * d_in_;
        for (int j = 0; j < d_in_; ++j) s += params_[row + j] * x[j];
        f.h[i] = std::tanh(s);
    }

    const std::size_t tw = trunk_w_offset();
    const std::size_t tb = trunk_b_offset();
    Vec y(d_out_);
    for (int i = 0; i < d_out_; ++i) {
        double s = params_[tb + i];
        const std::size_t row = tw + static_cast<std::size_t>(i) * hidden_;
        for (int j = 0; j < hidden_; ++j) s += params_[row + j] * f.h[j];
        y[i] = s;
    }
    f.prenorm = norm(y);
    if (f.prenorm < 1e-12)
        throw DegenerateInputError("encode_image: pre-normalization output is degenerate");
    f.rep.resize(d_out_);
    for (int i = 0; i < d_out_; ++i) f.rep[i] = y[i] / f.prenorm;
    return f;
}

void ImageEncoder::backward(const Forward& f, const Vec& rep_grad, Vec& grad) const {
    if (static_cast<int>(rep_grad.size()) != d_out_) throw ShapeError("backward: rep_grad size");
    if (grad.size() != params_.size()) throw ShapeError("backward: grad buffer size");

    // Through rep = y / |y|:  dy = (g - rep (rep . g)) / |y|
    const double rg = dot(f.rep, rep_grad);
    Vec dy(d_out_);
    for (int i = 0; i < d_out_; ++i) dy[i] = (rep_grad[i] - f.rep[i] * rg) / f.prenorm;

    const std::size_t tw = trunk_w_offset();
    const std::size_t tb = trunk_b_offset();
    Vec dh(hidden_, 0.0);
    for (int i = 0; i < d_out_; ++i) {
        const std::size_t row = tw + static_cast<std::size_t>(i) * hidden_;
        for (int j = 0; j < hidden_; ++j) {
            grad[row + j] += dy[i] * f.h[j];
            dh[j] += params_[row + j] * dy[i];
        }
        grad[tb + i] += dy[i];
    }

    const std::size_t w = front_w_offset(f.group);
    const std::size_t b = front_b_offset(f.group);
    const std::size_t e = scenario_emb_offset(f.scenario_index);
    for (int i = 0; i < hidden_; ++i) {
        const double dpre = dh[i] * (1.0 - f.h[i] * f.h[i]);
        const std::size_t row = w + static_cast<std::size_t>(i) * d_in_;
        for (int j = 0; j < d_in_; ++j) grad[row + j] += dpre * f.x[j];
        grad[b + i] += dpre;
        if (scenario_emb_enabled_) grad[e + i] += dpre;
    }
}

std::string ImageEncoder::snapshot() const {
    ByteWriter w;
    w.put_u32(kImageCkptMagic);
    w.put_u32(1);
    w.put_i32(d_in_);
    w.put_i32(hidden_);
    w.put_i32(d_out_);
    w.put_i32(num_scenarios_);
    w.put_u8(scenario_emb_enabled_ ? 1 : 0);
    w.put_f64_array(params_);
    return w.bytes();
}

ImageEncoder ImageEncoder::restore(const std::string& bytes) {
    ByteReader r(bytes);
    if (r.get_u32() != kImageCkptMagic) throw DecodeError("image checkpoint: bad magic");
    if (r.get_u32() != 1) throw DecodeError("image checkpoint: unsupported version");
    const int d_in = r.get_i32();
    const int hidden = r.get_i32();
    const int d_out = r.get_i32();
    const int num_scenarios = r.get_i32();
    const bool emb = r.get_u8() != 0;
    if (d_in < 1 || hidden < 1 || d_out < 1 || num_scenarios < 1)
        throw DecodeError("image checkpoint: bad dimensions");
    ImageEncoder enc(d_in, hidden, d_out, num_scenarios, emb);
    Vec p = r.get_f64_array();
    if (p.size() != enc.params_.size()) throw DecodeError("image checkpoint: parameter count mismatch");
    if (!r.exhausted()) throw DecodeError("image checkpoint: trailing bytes");
    enc.params_ = std::move(p);
    return enc;
}

TextEncoder::TextEncoder(int num_tokens, int d_token, int d_out, std::uint64_t seed)
    : num_tokens_(num_tokens), d_token_(d_token), d_out_(d_out) {
    if (num_tokens < 1 || d_token < 1 || d_out < 1)
        throw ParameterError("TextEncoder: non-positive dimension");
    const int flat = num_tokens * d_token;
    RandomStream rng(derive_seed(seed, seed_tag::text_encoder_init));
    if (d_out <= flat) {
        proj_ = orthonormal_columns(flat, d_out, rng);
    } else {
        proj_ = Mat(flat, d_out);
        const double scale = 1.0 / std::sqrt(static_cast<double>(flat));
        for (auto& v : proj_.data) v = scale * rng.normal();
    }
    context_ = rng.normals(flat);
}

TextEncoder::Forward TextEncoder::forward(const std::vector<Vec>& tokens) const {
    if (static_cast<int>(tokens.size()) != num_tokens_)
        throw ShapeError("encode_text: expected " + std::to_string(num_tokens_) + " tokens");
    Vec v = context_;
    for (int m = 0; m < num_tokens_; ++m) {
        if (static_cast<int>(tokens[m].size()) != d_token_)
            throw ShapeError("encode_text: token dim != d_token");
        for (int i = 0; i < d_token_; ++i) v[static_cast<std::size_t>(m) * d_token_ + i] += tokens[m][i];
    }
    Vec y = mat_t_vec(proj_, v);
    Forward f;
    f.prenorm = norm(y);
    if (f.prenorm < 1e-12)
        throw DegenerateInputError("encode_text: pre-normalization output is degenerate");
    f.rep.resize(d_out_);
    for (int i = 0; i < d_out_; ++i) f.rep[i] = y[i] / f.prenorm;
    return f;
}

void TextEncoder::backward(const Forward& f, const Vec& rep_grad, std::vector<Vec>& token_grads) const {
    if (static_cast<int>(rep_grad.size()) != d_out_) throw ShapeError("encode_text backward: rep_grad size");
    if (static_cast<int>(token_grads.size()) != num_tokens_)
        throw ShapeError("encode_text backward: token_grads size");
    const double rg = dot(f.rep, rep_grad);
    Vec dy(d_out_);
    for (int i = 0; i < d_out_; ++i) dy[i] = (rep_grad[i] - f.rep[i] * rg) / f.prenorm;
    Vec dv = mat_vec(proj_, dy);
    for (int m = 0; m < num_tokens_; ++m) {
        if (static_cast<int>(token_grads[m].size()) != d_token_)
            throw ShapeError("encode_text backward: token grad dim");
        for (int i = 0; i < d_token_; ++i)
            token_grads[m][i] += dv[static_cast<std::size_t>(m) * d_token_ + i];
    }
}

}  // namespace msreid
