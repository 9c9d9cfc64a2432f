#include "naclip/gaussian_prior.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <tuple>

#include "naclip/error.hpp"

namespace naclip {
namespace {

void require_sigma(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw ParameterError("sigma must be positive and finite, got " + std::to_string(sigma));
}

}  // namespace

GaussianPrior::GaussianPrior(double sigma) : sigma_(sigma) {
    require_sigma(sigma);
}

double GaussianPrior::operator()(double dx, double dy) const noexcept {
    return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_ * sigma_));
}

double phi(std::span<const double, 2> x, std::span<const double, 2> mu, double sigma) {
    return GaussianPrior(sigma)(x[0] - mu[0], x[1] - mu[1]);
}

Tensor omega(GridPos center, GridSize grid, double sigma) {
    const GaussianPrior kernel(sigma);
    if (center.row >= grid.h || center.col >= grid.w)
        throw ParameterError("centre (" + std::to_string(center.row) + ", " + std::to_string(center.col) +
                             ") outside " + std::to_string(grid.h) + "x" + std::to_string(grid.w) + " grid");
    Tensor win({grid.h, grid.w});
    for (std::size_t m = 0; m < grid.h; ++m) {
        for (std::size_t n = 0; n < grid.w; ++n) {
            const double dy = static_cast<double>(m) - static_cast<double>(center.row);
            const double dx = static_cast<double>(n) - static_cast<double>(center.col);
            win.at(m, n) = static_cast<float>(kernel(dx, dy));
        }
    }
    return win;
}

PriorTensor::PriorTensor(GridSize grid, double sigma) : grid_(grid), sigma_(sigma) {
    require_sigma(sigma);
    if (grid.h == 0 || grid.w == 0) throw ParameterError("prior grid must be at least 1x1");
    const GaussianPrior kernel(sigma);
    const std::size_t cells = grid.cells();
    values_ = Tensor({cells, cells});
    // The kernel depends only on (|di|, |dj|); tabulate once.
    Tensor table({grid.h, grid.w});
    for (std::size_t di = 0; di < grid.h; ++di)
        for (std::size_t dj = 0; dj < grid.w; ++dj)
            table.at(di, dj) = static_cast<float>(kernel(static_cast<double>(dj), static_cast<double>(di)));

#pragma omp parallel for schedule(static) if (cells >= 256)
    for (std::ptrdiff_t cc = 0; cc < static_cast<std::ptrdiff_t>(cells); ++cc) {
        const auto c = static_cast<std::size_t>(cc);
        const std::size_t i = c / grid.w, j = c % grid.w;
        auto row = values_.row(c);
        for (std::size_t m = 0; m < grid.h; ++m) {
            const std::size_t di = m > i ? m - i : i - m;
            for (std::size_t n = 0; n < grid.w; ++n) {
                const std::size_t dj = n > j ? n - j : j - n;
                row[m * grid.w + n] = table.at(di, dj);
            }
        }
    }
}

PriorTensor prior_tensor(std::size_t h, std::size_t w, double sigma) {
    return PriorTensor({h, w}, sigma);
}

std::shared_ptr<const PriorTensor> cached_prior_tensor(GridSize grid, double sigma) {
    static std::mutex mu;
    static std::map<std::tuple<std::size_t, std::size_t, double>, std::shared_ptr<const PriorTensor>> cache;
    const auto key = std::make_tuple(grid.h, grid.w, sigma);
    std::lock_guard lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto prior = std::make_shared<const PriorTensor>(grid, sigma);
    cache.emplace(key, prior);
    return prior;
}

double neighbourhood_radius(double sigma, double tau) {
    require_sigma(sigma);
    if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("tau must lie in (0, 1), got " + std::to_string(tau));
    return sigma * std::sqrt(-2.0 * std::log(tau));
}

std::size_t count_boosted_patches(double sigma, double tau) {
    const double radius = neighbourhood_radius(sigma, tau);
    const double r2 = radius * radius;
    const auto reach = static_cast<long>(std::ceil(radius));
    std::size_t count = 0;
    // Count per row: column offsets with dx^2 < r2 - dy^2.
    for (long dy = -reach; dy <= reach; ++dy) {
        for (long dx = 0; dx <= reach; ++dx) {
            if (static_cast<double>(dx * dx + dy * dy) < r2) count += dx == 0 ? 1 : 2;
            else break;
        }
    }
    return count;
}

}  // namespace naclip
