#include <cmath>
#include <limits>

#include "naclip/error.hpp"
#include "naclip/reference.hpp"

namespace naclip::reference {

Tensor matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) throw DimensionError("reference matmul: inner dims disagree");
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += static_cast<double>(a.at(i, p)) * b.at(p, j);
            c.at(i, j) = static_cast<float>(acc);
        }
    return c;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    const std::size_t in = weight.dim(0), out = weight.dim(1), rows = x.size() / in;
    Tensor y({rows, out});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out; ++o) {
            double acc = 0.0;
            for (std::size_t p = 0; p < in; ++p) acc += static_cast<double>(x[r * in + p]) * weight.at(p, o);
            y.at(r, o) = static_cast<float>(acc) + bias[o];
        }
    Shape shape = x.shape();
    shape.back() = out;
    return y.reshaped(shape);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    const std::size_t d = x.shape().back();
    Tensor y(x.shape());
    for (std::size_t r = 0; r < x.size() / d; ++r) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += x[r * d + j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (x[r * d + j] - mean) * (x[r * d + j] - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        for (std::size_t j = 0; j < d; ++j)
            y[r * d + j] = static_cast<float>((x[r * d + j] - mean) * inv) * gamma[j] + beta[j];
    }
    return y;
}

Tensor quick_gelu(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / (1.0f + std::exp(-1.702f * x[i]));
    return y;
}

namespace {

// Softmax over entries [0, n) of one row; entries past `valid` get 0.
void softmax_row(const float* in, float* out, std::size_t n, std::size_t valid) {
    float mx = in[0];
    for (std::size_t j = 1; j < valid; ++j) mx = in[j] > mx ? in[j] : mx;
    double sum = 0.0;
    for (std::size_t j = 0; j < valid; ++j) {
        out[j] = std::exp(in[j] - mx);
        sum += out[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < valid; ++j) out[j] = static_cast<float>(out[j] * inv);
    for (std::size_t j = valid; j < n; ++j) out[j] = 0.0f;
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
    const std::size_t n = x.shape().back();
    Tensor y(x.shape());
    for (std::size_t r = 0; r < x.size() / n; ++r) softmax_row(x.data() + r * n, y.data() + r * n, n, n);
    return y;
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor y({c, out_h, out_w});
    const float sy = static_cast<float>(h) / static_cast<float>(out_h);
    const float sx = static_cast<float>(w) / static_cast<float>(out_w);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < out_h; ++oy)
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                float fy = sy * (static_cast<float>(oy) + 0.5f) - 0.5f;
                float fx = sx * (static_cast<float>(ox) + 0.5f) - 0.5f;
                if (fy < 0.0f) fy = 0.0f;
                if (fx < 0.0f) fx = 0.0f;
                std::size_t y0 = static_cast<std::size_t>(fy), x0 = static_cast<std::size_t>(fx);
                if (y0 > h - 1) y0 = h - 1;
                if (x0 > w - 1) x0 = w - 1;
                const std::size_t y1 = y0 + 1 < h ? y0 + 1 : y0;
                const std::size_t x1 = x0 + 1 < w ? x0 + 1 : x0;
                const float ly = fy - static_cast<float>(y0), lx = fx - static_cast<float>(x0);
                auto px = [&](std::size_t yy, std::size_t xx) { return x[(ch * h + yy) * w + xx]; };
                y[(ch * out_h + oy) * out_w + ox] = (1.0f - ly) * ((1.0f - lx) * px(y0, x0) + lx * px(y0, x1)) +
                                                    ly * ((1.0f - lx) * px(y1, x0) + lx * px(y1, x1));
            }
    return y;
}

float prior_value(std::size_t i, std::size_t j, std::size_t m, std::size_t n, double sigma) {
    const double dy = static_cast<double>(m) - static_cast<double>(i);
    const double dx = static_cast<double>(n) - static_cast<double>(j);
    return static_cast<float>(std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)));
}

Tensor self_attention(const Tensor& tokens, const AttentionWeights& w, const AttentionConfig& cfg, GridSize grid) {
    const std::size_t n = tokens.dim(0), width = tokens.dim(1), heads = cfg.num_heads, d = width / heads;
    const bool use_prior = needs_prior(cfg.variant);
    if (use_prior && grid.cells() != n) throw DimensionError("reference attention: grid does not match tokens");
    const Tensor qkv = linear(tokens, w.qkv_weight, w.qkv_bias);
    const float scale = 1.0f / std::sqrt(static_cast<float>(d));

    Tensor concat({n, width});
    std::vector<float> logit(n), prob(n);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t q_off = h * d, k_off = width + h * d, v_off = 2 * width + h * d;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t valid = cfg.causal ? i + 1 : n;
            for (std::size_t j = 0; j < valid; ++j) {
                float sim = 0.0f;
                if (cfg.variant != AttentionVariant::neighbourhood_only) {
                    const std::size_t lhs = cfg.variant == AttentionVariant::vanilla ? q_off : k_off;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < d; ++c)
                        dot += static_cast<double>(qkv.at(i, lhs + c)) * qkv.at(j, k_off + c);
                    sim = static_cast<float>(dot) * scale;
                }
                if (use_prior) {
                    const float om = prior_value(i / grid.w, i % grid.w, j / grid.w, j % grid.w, cfg.sigma);
                    sim = cfg.variant == AttentionVariant::neighbourhood_only ? om : sim + om;
                }
                logit[j] = sim;
            }
            softmax_row(logit.data(), prob.data(), n, valid);
            for (std::size_t c = 0; c < d; ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += static_cast<double>(prob[j]) * qkv.at(j, v_off + c);
                concat.at(i, h * d + c) = static_cast<float>(acc);
            }
        }
    }
    return linear(concat, w.out_weight, w.out_bias);
}

Tensor encoder_block(const Tensor& tokens, const EncoderBlockWeights& w, const AttentionConfig& cfg, GridSize grid) {
    const Tensor attn = self_attention(layer_norm(tokens, w.ln_1.gamma, w.ln_1.beta), w.attn, cfg, grid);
    Tensor z = tokens;
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += attn[i];
    const Tensor hidden = quick_gelu(linear(layer_norm(z, w.ln_2.gamma, w.ln_2.beta), w.fc1_weight, w.fc1_bias));
    const Tensor ff = linear(hidden, w.fc2_weight, w.fc2_bias);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += ff[i];
    return z;
}

}  // namespace naclip::reference
