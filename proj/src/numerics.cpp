#include "naclip/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "naclip/error.hpp"

namespace naclip {
namespace {

// Below this many multiply-adds the OpenMP fork costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

void require_rank2(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw DimensionError(std::string(what) + " must be rank 2, got " + shape_str(t.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul lhs");
    require_rank2(b, "matmul rhs");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw DimensionError("matmul inner dims disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));

    Tensor c({m, n});
    const float* pa = a.data();
    const float* pb = b.data();
    float* pc = c.data();
    const bool parallel = m * n * k >= kParallelWork;

#pragma omp parallel if (parallel)
    {
        std::vector<double> acc(n);
#pragma omp for schedule(static)
        for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t p = 0; p < k; ++p) {
                const double av = pa[i * k + p];
                const float* brow = pb + p * n;
                for (std::size_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
            }
            for (std::size_t j = 0; j < n; ++j) pc[i * n + j] = static_cast<float>(acc[j]);
        }
    }
    return c;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank2(weight, "linear weight");
    const std::size_t in = weight.dim(0), out = weight.dim(1);
    if (x.rank() == 0 || x.shape().back() != in)
        throw DimensionError("linear input " + shape_str(x.shape()) + " does not match weight " +
                             shape_str(weight.shape()));
    if (bias.rank() != 1 || bias.dim(0) != out)
        throw DimensionError("linear bias " + shape_str(bias.shape()) + " does not match weight " +
                             shape_str(weight.shape()));
    Tensor y = matmul(x.reshaped({x.rows(), in}), weight);
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        for (std::size_t j = 0; j < out; ++j) row[j] += bias[j];
    }
    Shape shape = x.shape();
    shape.back() = out;
    return y.reshaped(std::move(shape));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    if (x.rank() == 0 || x.shape().back() == 0) throw DimensionError("layer_norm on zero-length vectors");
    const std::size_t d = x.shape().back();
    if (gamma.size() != d || beta.size() != d)
        throw DimensionError("layer_norm affine params do not match last dim " + std::to_string(d));
    if (!(eps > 0.0f)) throw ParameterError("layer_norm eps must be positive");

    Tensor y(x.shape());
    const std::size_t rows = x.rows();
#pragma omp parallel for schedule(static) if (rows * d >= kParallelWork)
    for (std::ptrdiff_t rr = 0; rr < static_cast<std::ptrdiff_t>(rows); ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        auto in = x.row(r);
        auto out = y.row(r);
        double mean = 0.0;
        for (float v : in) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (float v : in) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        for (std::size_t j = 0; j < d; ++j)
            out[j] = static_cast<float>((in[j] - mean) * inv) * gamma[j] + beta[j];
    }
    return y;
}

float quick_gelu(float x) noexcept {
    return x / (1.0f + std::exp(-1.702f * x));
}

Tensor quick_gelu(const Tensor& x) {
    Tensor y(x.shape());
    const std::size_t n = x.size();
#pragma omp parallel for schedule(static) if (n >= kParallelWork)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) y[i] = quick_gelu(x[i]);
    return y;
}

Tensor softmax_rows(const Tensor& x) {
    if (x.rank() == 0 || x.shape().back() == 0) throw DimensionError("softmax over an empty axis");
    Tensor y(x.shape());
    const std::size_t rows = x.rows(), n = x.shape().back();
#pragma omp parallel for schedule(static) if (rows * n >= kParallelWork)
    for (std::ptrdiff_t rr = 0; rr < static_cast<std::ptrdiff_t>(rows); ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        auto in = x.row(r);
        auto out = y.row(r);
        const float mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out[j] = std::exp(in[j] - mx);
            sum += out[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < n; ++j) out[j] = static_cast<float>(out[j] * inv);
    }
    return y;
}

namespace {

struct Tap {
    std::size_t lo, hi;
    float w_hi;
};

std::vector<Tap> resize_taps(std::size_t in, std::size_t out) {
    std::vector<Tap> taps(out);
    const float scale = static_cast<float>(in) / static_cast<float>(out);
    for (std::size_t d = 0; d < out; ++d) {
        float src = scale * (static_cast<float>(d) + 0.5f) - 0.5f;
        if (src < 0.0f) src = 0.0f;
        const auto lo = std::min(static_cast<std::size_t>(src), in - 1);
        const std::size_t hi = lo + 1 < in ? lo + 1 : lo;
        taps[d] = {lo, hi, src - static_cast<float>(lo)};
    }
    return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    if (x.rank() != 3) throw DimensionError("bilinear_resize expects [C x h x w], got " + shape_str(x.shape()));
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h == 0 || w == 0 || out_h == 0 || out_w == 0) throw DimensionError("bilinear_resize with empty extent");
    if (h == out_h && w == out_w) return x;

    const auto ty = resize_taps(h, out_h);
    const auto tx = resize_taps(w, out_w);
    Tensor y({c, out_h, out_w});
    const float* src = x.data();
    float* dst = y.data();
#pragma omp parallel for collapse(2) schedule(static) if (c * out_h * out_w >= kParallelWork)
    for (std::ptrdiff_t ch = 0; ch < static_cast<std::ptrdiff_t>(c); ++ch) {
        for (std::ptrdiff_t oy = 0; oy < static_cast<std::ptrdiff_t>(out_h); ++oy) {
            const float* plane = src + static_cast<std::size_t>(ch) * h * w;
            const Tap& vy = ty[static_cast<std::size_t>(oy)];
            const float* r0 = plane + vy.lo * w;
            const float* r1 = plane + vy.hi * w;
            float* out = dst + (static_cast<std::size_t>(ch) * out_h + static_cast<std::size_t>(oy)) * out_w;
            const float wy1 = vy.w_hi, wy0 = 1.0f - vy.w_hi;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const Tap& vx = tx[ox];
                const float wx1 = vx.w_hi, wx0 = 1.0f - vx.w_hi;
                out[ox] = wy0 * (wx0 * r0[vx.lo] + wx1 * r0[vx.hi]) + wy1 * (wx0 * r1[vx.lo] + wx1 * r1[vx.hi]);
            }
        }
    }
    return y;
}

Tensor transpose(const Tensor& x) {
    require_rank2(x, "transpose input");
    const std::size_t r = x.dim(0), c = x.dim(1);
    Tensor y({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) y.at(j, i) = x.at(i, j);
    return y;
}

void add_inplace(Tensor& dst, const Tensor& src) {
    if (dst.shape() != src.shape())
        throw DimensionError("add shape mismatch " + shape_str(dst.shape()) + " vs " + shape_str(src.shape()));
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor l2_normalize_rows(const Tensor& x, float eps) {
    Tensor y = x;
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = y.row(r);
        double sq = 0.0;
        for (float v : row) sq += static_cast<double>(v) * v;
        const double norm = std::max(std::sqrt(sq), static_cast<double>(eps));
        for (float& v : row) v = static_cast<float>(v / norm);
    }
    return y;
}

}  // namespace naclip
