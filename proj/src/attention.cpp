#include "naclip/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "naclip/error.hpp"
#include "naclip/numerics.hpp"

namespace naclip {

std::string_view to_string(AttentionVariant v) noexcept {
    switch (v) {
        case AttentionVariant::vanilla: return "vanilla";
        case AttentionVariant::key_key: return "kk";
        case AttentionVariant::neighbourhood_only: return "n-only";
        case AttentionVariant::naclip: return "naclip";
    }
    return "?";
}

AttentionVariant parse_attention_variant(std::string_view s) {
    if (s == "vanilla") return AttentionVariant::vanilla;
    if (s == "kk" || s == "key_key" || s == "kk-sim") return AttentionVariant::key_key;
    if (s == "n-only" || s == "neighbourhood_only" || s == "neighbourhood-only") return AttentionVariant::neighbourhood_only;
    if (s == "naclip") return AttentionVariant::naclip;
    throw ConfigError("unknown attention variant '" + std::string(s) + "' (expected vanilla, n-only, kk, naclip)");
}

bool needs_prior(AttentionVariant v) noexcept {
    return v == AttentionVariant::neighbourhood_only || v == AttentionVariant::naclip;
}

std::size_t AttentionConfig::head_dim(std::size_t width) const {
    if (num_heads == 0 || width % num_heads != 0)
        throw ConfigError("width " + std::to_string(width) + " not divisible by " + std::to_string(num_heads) +
                          " heads");
    return width / num_heads;
}

void AttentionWeights::check_shapes(std::size_t width) const {
    const std::size_t d = width;
    if (qkv_weight.shape() != Shape{d, 3 * d} || qkv_bias.shape() != Shape{3 * d} ||
        out_weight.shape() != Shape{d, d} || out_bias.shape() != Shape{d})
        throw DimensionError("attention weights do not match width " + std::to_string(d) + ": qkv " +
                             shape_str(qkv_weight.shape()) + ", out " + shape_str(out_weight.shape()));
}

HeadProjections project_qkv(const Tensor& tokens, const AttentionWeights& w, std::size_t num_heads) {
    if (tokens.rank() != 2) throw DimensionError("attention input must be [N x D], got " + shape_str(tokens.shape()));
    const std::size_t width = tokens.dim(1);
    w.check_shapes(width);
    const AttentionConfig probe{.num_heads = num_heads};
    const std::size_t d = probe.head_dim(width);
    const std::size_t n = tokens.dim(0);

    const Tensor qkv = linear(tokens, w.qkv_weight, w.qkv_bias);  // [N x 3D]
    HeadProjections out;
    for (auto* dst : {&out.q, &out.k, &out.v}) dst->reserve(num_heads);
    for (std::size_t h = 0; h < num_heads; ++h) {
        Tensor q({n, d}), k({n, d}), v({n, d});
        for (std::size_t t = 0; t < n; ++t) {
            auto src = qkv.row(t);
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(h * d), d, q.row(t).begin());
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(width + h * d), d, k.row(t).begin());
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(2 * width + h * d), d, v.row(t).begin());
        }
        out.q.push_back(std::move(q));
        out.k.push_back(std::move(k));
        out.v.push_back(std::move(v));
    }
    return out;
}

Tensor attention_logits(const Tensor& q, const Tensor& k, const PriorTensor* prior, const AttentionConfig& cfg) {
    if (q.rank() != 2 || k.shape() != q.shape())
        throw DimensionError("q/k shape mismatch " + shape_str(q.shape()) + " vs " + shape_str(k.shape()));
    const std::size_t n = q.dim(0), d = q.dim(1);
    if (needs_prior(cfg.variant)) {
        if (prior == nullptr)
            throw ConfigError(std::string("attention variant '") + std::string(to_string(cfg.variant)) +
                              "' needs a neighbourhood prior");
        if (prior->grid().cells() != n)
            throw DimensionError("prior grid has " + std::to_string(prior->grid().cells()) + " cells but " +
                                 std::to_string(n) + " tokens attend");
    }

    Tensor logits;
    if (cfg.variant == AttentionVariant::neighbourhood_only) {
        logits = prior->matrix();
        return logits;
    }
    const Tensor& lhs = cfg.variant == AttentionVariant::vanilla ? q : k;
    logits = matmul(lhs, transpose(k));
    const float scale = 1.0f / std::sqrt(static_cast<float>(d));
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] *= scale;
    if (cfg.variant == AttentionVariant::naclip) add_inplace(logits, prior->matrix());
    return logits;
}

Tensor attend(const Tensor& logits, const Tensor& v, bool causal) {
    if (logits.rank() != 2 || logits.dim(0) != logits.dim(1) || v.rank() != 2 || v.dim(0) != logits.dim(1))
        throw DimensionError("attend shapes disagree: logits " + shape_str(logits.shape()) + ", v " +
                             shape_str(v.shape()));
    if (!causal) return matmul(softmax_rows(logits), v);

    const std::size_t n = logits.dim(0);
    Tensor masked = logits;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) masked.at(i, j) = -std::numeric_limits<float>::infinity();
    return matmul(softmax_rows(masked), v);
}

Tensor self_attention(const Tensor& tokens, const AttentionWeights& w, const AttentionConfig& cfg,
                      const PriorTensor* prior, AttentionMaps* maps) {
    const std::size_t width = tokens.rank() == 2 ? tokens.dim(1) : 0;
    const std::size_t d = cfg.head_dim(width);
    const std::size_t n = tokens.dim(0);
    const std::size_t heads = cfg.num_heads;
    const HeadProjections proj = project_qkv(tokens, w, heads);

    std::vector<Tensor> head_out(heads);
    std::vector<Tensor> head_maps(maps ? heads : 0);
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) if (heads > 1 && n * n * d >= (1 << 14))
    for (std::ptrdiff_t hh = 0; hh < static_cast<std::ptrdiff_t>(heads); ++hh) {
        const auto h = static_cast<std::size_t>(hh);
        try {
            Tensor logits = attention_logits(proj.q[h], proj.k[h], prior, cfg);
            if (maps) {
                Tensor masked = logits;
                if (cfg.causal)
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = i + 1; j < n; ++j)
                            masked.at(i, j) = -std::numeric_limits<float>::infinity();
                head_maps[h] = softmax_rows(masked);
                head_out[h] = matmul(head_maps[h], proj.v[h]);
            } else {
                head_out[h] = attend(logits, proj.v[h], cfg.causal);
            }
        } catch (...) {
#pragma omp critical(naclip_attention_error)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    Tensor concat({n, width});
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < n; ++t)
            std::copy_n(head_out[h].row(t).begin(), d, concat.row(t).begin() + static_cast<std::ptrdiff_t>(h * d));
    if (maps) maps->heads = std::move(head_maps);
    Tensor out = linear(concat, w.out_weight, w.out_bias);
    out.check_finite("self_attention output");
    return out;
}

}  // namespace naclip
