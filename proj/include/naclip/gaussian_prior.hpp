#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "naclip/tensor.hpp"

namespace naclip {

struct GridPos {
    std::size_t row = 0;
    std::size_t col = 0;
};

struct GridSize {
    std::size_t h = 0;
    std::size_t w = 0;
    std::size_t cells() const noexcept { return h * w; }
    friend bool operator==(const GridSize&, const GridSize&) = default;
};

// Isotropic, unnormalized Gaussian kernel exp(-|x - mu|^2 / (2 sigma^2)).
// Coordinates are in patch units.
class GaussianPrior {
public:
    static constexpr double kDefaultSigma = 5.0;

    explicit GaussianPrior(double sigma = kDefaultSigma);

    double sigma() const noexcept { return sigma_; }
    double operator()(double dx, double dy) const noexcept;

private:
    double sigma_;
};

double phi(std::span<const double, 2> x, std::span<const double, 2> mu, double sigma);

// Window of kernel values over an h x w grid centred on `center`, no
// renormalization at the borders. Shape [h x w].
Tensor omega(GridPos center, GridSize grid, double sigma);

// Every centre's window, values[i,j,m,n] = omega((i,j))[m,n]. Stored as a
// [hw x hw] matrix whose row i*w+j is the flattened window of centre (i,j),
// which is the layout the attention logits use.
class PriorTensor {
public:
    PriorTensor(GridSize grid, double sigma);

    GridSize grid() const noexcept { return grid_; }
    double sigma() const noexcept { return sigma_; }
    const Tensor& matrix() const noexcept { return values_; }
    float at(GridPos center, GridPos cell) const noexcept {
        return values_.at(center.row * grid_.w + center.col, cell.row * grid_.w + cell.col);
    }

private:
    GridSize grid_;
    double sigma_;
    Tensor values_;
};

PriorTensor prior_tensor(std::size_t h, std::size_t w, double sigma);

// Process-wide cache keyed by (h, w, sigma); returned tensors are immutable
// and shared.
std::shared_ptr<const PriorTensor> cached_prior_tensor(GridSize grid, double sigma);

// Radius of the disc where the kernel exceeds tau: sigma * sqrt(-2 ln tau).
double neighbourhood_radius(double sigma, double tau);

// Lattice points of an infinite grid strictly inside that disc.
std::size_t count_boosted_patches(double sigma, double tau);

}  // namespace naclip
