#include <algorithm>
#include <cmath>

#include "naclip/error.hpp"
#include "naclip/reference.hpp"

namespace naclip::reference {

namespace {

Tensor drop_first_row(const Tensor& z) {
    const std::size_t n = z.dim(0), d = z.dim(1);
    Tensor out({n - 1, d});
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out.at(i - 1, j) = z.at(i, j);
    return out;
}

}  // namespace

FeatureGrid forward_features(const Tensor& image, const VisionWeights& weights, const VisionConfig& cfg,
                             const EncoderOptions& options) {
    const std::size_t s = cfg.image_size, p = cfg.patch_size, g = s / p, d = cfg.width;
    const GridSize grid{g, g};

    // Patchify + project, one token at a time.
    Tensor z({1 + g * g, d});
    for (std::size_t j = 0; j < d; ++j) z.at(0, j) = weights.class_embedding[j];
    for (std::size_t gi = 0; gi < g; ++gi)
        for (std::size_t gj = 0; gj < g; ++gj) {
            Tensor patch({1, 3 * p * p});
            std::size_t idx = 0;
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t y = 0; y < p; ++y)
                    for (std::size_t x = 0; x < p; ++x) patch[idx++] = image[(c * s + gi * p + y) * s + gj * p + x];
            const Tensor tok = linear(patch, weights.patch_weight, weights.patch_bias);
            for (std::size_t j = 0; j < d; ++j) z.at(1 + gi * g + gj, j) = tok[j];
        }
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += weights.positional_embedding[i];
    z = layer_norm(z, weights.ln_pre.gamma, weights.ln_pre.beta);

    bool has_cls = true;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const bool last = l + 1 == cfg.layers;
        AttentionConfig attn;
        attn.variant = (last || options.modify_all_blocks) ? options.variant : AttentionVariant::vanilla;
        attn.sigma = options.sigma;
        attn.num_heads = cfg.heads;
        const EncoderBlockWeights& b = weights.blocks[l];
        if (last && options.arch == ArchMode::reduced) {
            if (has_cls) z = drop_first_row(z);
            has_cls = false;
            z = self_attention(layer_norm(z, b.ln_1.gamma, b.ln_1.beta), b.attn, attn, grid);
            continue;
        }
        if (has_cls && attn.variant != AttentionVariant::vanilla) {
            z = drop_first_row(z);
            has_cls = false;
        }
        z = encoder_block(z, b, attn, grid);
    }
    if (has_cls) z = drop_first_row(z);
    z = layer_norm(z, weights.ln_post.gamma, weights.ln_post.beta);
    return FeatureGrid{g, g, matmul(z, weights.proj)};
}

Tensor text_forward(const TokenSequence& tokens, const TextWeights& weights, const TextConfig& cfg) {
    const std::size_t n = cfg.context_length, d = cfg.width;
    Tensor x({n, d});
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < d; ++j)
            x.at(t, j) = weights.token_embedding.at(static_cast<std::size_t>(tokens.ids[t]), j) +
                         weights.positional_embedding.at(t, j);
    AttentionConfig attn;
    attn.num_heads = cfg.heads;
    attn.causal = true;
    for (const auto& b : weights.blocks) x = encoder_block(x, b, attn, {});
    x = layer_norm(x, weights.ln_final.gamma, weights.ln_final.beta);
    Tensor eot({1, d});
    for (std::size_t j = 0; j < d; ++j) eot[j] = x.at(tokens.eot_index, j);
    return matmul(eot, weights.projection).reshaped({cfg.output_dim});
}

Tensor pamr_refine(const Tensor& image, const Tensor& probs, const PamrConfig& cfg) {
    if (!cfg.enabled || cfg.iterations == 0) return probs;
    const std::size_t kc = image.dim(0), h = image.dim(1), w = image.dim(2), cc = probs.dim(0);
    auto clampi = [](long v, std::size_t n) {
        return v < 0 ? std::size_t{0} : std::min(static_cast<std::size_t>(v), n - 1);
    };
    auto px = [&](const Tensor& t, std::size_t ch, long y, long x, std::size_t hh, std::size_t ww) {
        return t[(ch * hh + clampi(y, hh)) * ww + clampi(x, ww)];
    };

    // (dy, dx) of the 8 outer taps per dilation, in stencil order.
    std::vector<std::pair<long, long>> taps;
    for (std::size_t dil : cfg.dilations)
        for (long ky = -1; ky <= 1; ++ky)
            for (long kx = -1; kx <= 1; ++kx)
                if (ky || kx) taps.emplace_back(ky * static_cast<long>(dil), kx * static_cast<long>(dil));

    std::vector<std::vector<float>> aff(h * w, std::vector<float>(taps.size()));
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            std::vector<double> logit(taps.size(), 0.0);
            const long iy = static_cast<long>(y), ix = static_cast<long>(x);
            for (std::size_t k = 0; k < kc; ++k) {
                double sum = 0.0, sq = 0.0, count = 0.0;
                for (std::size_t dil : cfg.dilations)
                    for (long ky = -1; ky <= 1; ++ky)
                        for (long kx = -1; kx <= 1; ++kx) {
                            const double v = px(image, k, iy + ky * static_cast<long>(dil),
                                                ix + kx * static_cast<long>(dil), h, w);
                            sum += v;
                            sq += v * v;
                            count += 1.0;
                        }
                const double sd = std::sqrt(std::max(0.0, (sq - sum * sum / count) / (count - 1.0)));
                const double centre = image[(k * h + y) * w + x];
                for (std::size_t p = 0; p < taps.size(); ++p) {
                    const double v = px(image, k, iy + taps[p].first, ix + taps[p].second, h, w);
                    logit[p] -= std::fabs(centre - v) / (1e-8 + 0.1 * sd);
                }
            }
            double mx = -INFINITY, z = 0.0;
            for (auto& l : logit) mx = std::max(mx, l /= static_cast<double>(kc));
            for (auto& l : logit) z += (l = std::exp(l - mx));
            for (std::size_t p = 0; p < taps.size(); ++p) aff[y * w + x][p] = static_cast<float>(logit[p] / z);
        }

    Tensor cur = probs;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        Tensor next(probs.shape());
        for (std::size_t c = 0; c < cc; ++c)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (std::size_t p = 0; p < taps.size(); ++p)
                        acc += static_cast<double>(aff[y * w + x][p]) *
                               px(cur, c, static_cast<long>(y) + taps[p].first, static_cast<long>(x) + taps[p].second,
                                  h, w);
                    next[(c * h + y) * w + x] = static_cast<float>(acc);
                }
        cur = std::move(next);
    }
    return cur;
}

LabelMap segment(const Tensor& image, const VisionModel& model, const ClassEmbeddingSet& classes,
                 const SegmentOptions& options) {
    const VisionConfig& vc = model.config;
    const std::size_t C = classes.embeddings.dim(0), D = classes.embeddings.dim(1);
    const std::size_t H = image.dim(1), W = image.dim(2);
    const std::size_t win = options.sliding.window, stride = options.sliding.stride;

    Tensor norm = image;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < H * W; ++i) norm[c * H * W + i] = (image[c * H * W + i] - vc.mean[c]) / vc.std[c];

    const std::size_t ss = options.sliding.short_side;
    std::size_t rh, rw;
    if (H <= W) {
        rh = ss;
        rw = static_cast<std::size_t>(std::lround(static_cast<double>(W) * ss / H));
    } else {
        rw = ss;
        rh = static_cast<std::size_t>(std::lround(static_cast<double>(H) * ss / W));
    }
    const Tensor resized = bilinear_resize(norm, rh, rw);

    Tensor sum({C, rh, rw});
    std::vector<float> count(rh * rw, 0.0f);
    for (std::size_t iy = 0;; ++iy) {
        const std::size_t y = std::min(iy * stride, rh - win);
        for (std::size_t ix = 0;; ++ix) {
            const std::size_t x = std::min(ix * stride, rw - win);
            Tensor crop({3, win, win});
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t r = 0; r < win; ++r)
                    for (std::size_t q = 0; q < win; ++q)
                        crop[(c * win + r) * win + q] = resized[(c * rh + y + r) * rw + x + q];
            const FeatureGrid fg = reference::forward_features(crop, model.weights, vc, options.encoder);

            Tensor logits({C, fg.h, fg.w});
            for (std::size_t t = 0; t < fg.h * fg.w; ++t) {
                double pn = 0.0;
                for (std::size_t j = 0; j < D; ++j) pn += static_cast<double>(fg.embeddings.at(t, j)) * fg.embeddings.at(t, j);
                pn = std::max(std::sqrt(pn), 1e-12);
                for (std::size_t k = 0; k < C; ++k) {
                    double cn = 0.0, dot = 0.0;
                    for (std::size_t j = 0; j < D; ++j) {
                        cn += static_cast<double>(classes.embeddings.at(k, j)) * classes.embeddings.at(k, j);
                        dot += static_cast<double>(fg.embeddings.at(t, j)) * classes.embeddings.at(k, j);
                    }
                    cn = std::max(std::sqrt(cn), 1e-12);
                    logits[k * fg.h * fg.w + t] = static_cast<float>(dot / (pn * cn)) * options.temperature;
                }
            }
            const Tensor up = bilinear_resize(logits, win, win);
            for (std::size_t k = 0; k < C; ++k)
                for (std::size_t r = 0; r < win; ++r)
                    for (std::size_t q = 0; q < win; ++q) sum[(k * rh + y + r) * rw + x + q] += up[(k * win + r) * win + q];
            for (std::size_t r = 0; r < win; ++r)
                for (std::size_t q = 0; q < win; ++q) count[(y + r) * rw + x + q] += 1.0f;
            if (ix * stride + win >= rw) break;
        }
        if (iy * stride + win >= rh) break;
    }
    for (std::size_t k = 0; k < C; ++k)
        for (std::size_t i = 0; i < rh * rw; ++i) sum[k * rh * rw + i] /= count[i];

    Tensor scores = sum;
    if (options.pamr.enabled && options.pamr.iterations > 0) {
        Tensor probs({C, rh, rw});
        for (std::size_t i = 0; i < rh * rw; ++i) {
            float mx = sum[i];
            for (std::size_t k = 1; k < C; ++k) mx = std::max(mx, sum[k * rh * rw + i]);
            double z = 0.0;
            for (std::size_t k = 0; k < C; ++k) z += (probs[k * rh * rw + i] = std::exp(sum[k * rh * rw + i] - mx));
            for (std::size_t k = 0; k < C; ++k) probs[k * rh * rw + i] = static_cast<float>(probs[k * rh * rw + i] / z);
        }
        scores = reference::pamr_refine(resized, probs, options.pamr);
    }

    LabelMap small{rw, rh, std::vector<std::uint16_t>(rh * rw)};
    for (std::size_t i = 0; i < rh * rw; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < C; ++k)
            if (scores[k * rh * rw + i] > scores[best * rh * rw + i]) best = k;
        small.labels[i] = static_cast<std::uint16_t>(best);
    }
    LabelMap out{W, H, std::vector<std::uint16_t>(H * W)};
    const float sy = static_cast<float>(rh) / static_cast<float>(H), sx = static_cast<float>(rw) / static_cast<float>(W);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            const std::size_t iy = std::min(static_cast<std::size_t>(std::floor(static_cast<float>(y) * sy)), rh - 1);
            const std::size_t ix = std::min(static_cast<std::size_t>(std::floor(static_cast<float>(x) * sx)), rw - 1);
            out.labels[y * W + x] = small.labels[iy * rw + ix];
        }
    return out;
}

}  // namespace naclip::reference
