#include "naclip/pamr.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "naclip/error.hpp"

namespace naclip {
namespace {

struct Offset {
    std::ptrdiff_t dy, dx;
};

std::vector<Offset> neighbour_offsets(const std::vector<std::size_t>& dilations, bool with_centre) {
    std::vector<Offset> out;
    for (std::size_t d : dilations) {
        const auto s = static_cast<std::ptrdiff_t>(d);
        for (std::ptrdiff_t ky = -1; ky <= 1; ++ky)
            for (std::ptrdiff_t kx = -1; kx <= 1; ++kx)
                if (with_centre || ky != 0 || kx != 0) out.push_back({ky * s, kx * s});
    }
    return out;
}

std::size_t clamp_index(std::ptrdiff_t v, std::size_t n) {
    if (v < 0) return 0;
    return std::min(static_cast<std::size_t>(v), n - 1);
}

}  // namespace

Tensor pamr_refine(const Tensor& image, const Tensor& probs, const PamrConfig& cfg) {
    if (!cfg.enabled || cfg.iterations == 0) return probs;
    if (image.rank() != 3 || probs.rank() != 3 || image.dim(1) != probs.dim(1) || image.dim(2) != probs.dim(2))
        throw DimensionError("PAMR image " + shape_str(image.shape()) + " and scores " + shape_str(probs.shape()) +
                             " disagree spatially");
    if (cfg.dilations.empty()) throw ConfigError("PAMR needs at least one dilation");

    const std::size_t k_ch = image.dim(0), h = image.dim(1), w = image.dim(2), c_ch = probs.dim(0);
    const auto taps = neighbour_offsets(cfg.dilations, false);
    const auto stencil = neighbour_offsets(cfg.dilations, true);
    const std::size_t p_count = taps.size();
    const std::size_t hw = h * w;

    // aff[p * hw + pixel]
    std::vector<float> aff(p_count * hw);
#pragma omp parallel for schedule(static) if (hw >= 4096)
    for (std::ptrdiff_t yy = 0; yy < static_cast<std::ptrdiff_t>(h); ++yy) {
        const auto y = static_cast<std::size_t>(yy);
        std::vector<double> logit(p_count);
        for (std::size_t x = 0; x < w; ++x) {
            std::fill(logit.begin(), logit.end(), 0.0);
            for (std::size_t k = 0; k < k_ch; ++k) {
                const float* plane = image.data() + k * hw;
                double sum = 0.0, sq = 0.0;
                for (const auto& o : stencil) {
                    const double v = plane[clamp_index(static_cast<std::ptrdiff_t>(y) + o.dy, h) * w +
                                           clamp_index(static_cast<std::ptrdiff_t>(x) + o.dx, w)];
                    sum += v;
                    sq += v * v;
                }
                const double n = static_cast<double>(stencil.size());
                const double var = std::max(0.0, (sq - sum * sum / n) / (n - 1.0));
                const double denom = 1e-8 + 0.1 * std::sqrt(var);
                const double centre = plane[y * w + x];
                for (std::size_t p = 0; p < p_count; ++p) {
                    const double v = plane[clamp_index(static_cast<std::ptrdiff_t>(y) + taps[p].dy, h) * w +
                                           clamp_index(static_cast<std::ptrdiff_t>(x) + taps[p].dx, w)];
                    logit[p] -= std::fabs(centre - v) / denom;
                }
            }
            double mx = -INFINITY;
            for (auto& l : logit) {
                l /= static_cast<double>(k_ch);
                mx = std::max(mx, l);
            }
            double z = 0.0;
            for (auto& l : logit) {
                l = std::exp(l - mx);
                z += l;
            }
            for (std::size_t p = 0; p < p_count; ++p) aff[p * hw + y * w + x] = static_cast<float>(logit[p] / z);
        }
    }

    Tensor cur = probs;
    Tensor next(probs.shape());
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
#pragma omp parallel for collapse(2) schedule(static) if (hw * c_ch >= 4096)
        for (std::ptrdiff_t cc = 0; cc < static_cast<std::ptrdiff_t>(c_ch); ++cc) {
            for (std::ptrdiff_t yy = 0; yy < static_cast<std::ptrdiff_t>(h); ++yy) {
                const auto c = static_cast<std::size_t>(cc);
                const auto y = static_cast<std::size_t>(yy);
                const float* src = cur.data() + c * hw;
                float* dst = next.data() + c * hw;
                for (std::size_t x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (std::size_t p = 0; p < p_count; ++p)
                        acc += static_cast<double>(aff[p * hw + y * w + x]) *
                               src[clamp_index(static_cast<std::ptrdiff_t>(y) + taps[p].dy, h) * w +
                                   clamp_index(static_cast<std::ptrdiff_t>(x) + taps[p].dx, w)];
                    dst[y * w + x] = static_cast<float>(acc);
                }
            }
        }
        std::swap(cur, next);
    }
    return cur;
}

}  // namespace naclip
