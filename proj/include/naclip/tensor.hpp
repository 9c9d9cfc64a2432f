#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace naclip {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense, contiguous, row-major fp32 array. No strides, no views: every
// operation produces a fresh Tensor.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor from_rows(std::initializer_list<std::initializer_list<float>> rows);
    static Tensor from_values(std::initializer_list<float> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }
    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }

    float& operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }

    // 2-D access for rank-2 tensors.
    float& at(std::size_t r, std::size_t c) noexcept { return data_[r * shape_.back() + c]; }
    float at(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_.back() + c]; }

    // Row r of the tensor viewed as [numel/last_dim, last_dim].
    std::span<float> row(std::size_t r) noexcept;
    std::span<const float> row(std::size_t r) const noexcept;
    std::size_t rows() const noexcept;

    Tensor reshaped(Shape shape) const;
    // Rows [begin, end) of the leading axis.
    Tensor slice_rows(std::size_t begin, std::size_t end) const;

    bool all_finite() const noexcept;
    // Throws NumericError naming `what` when a NaN/Inf is present.
    void check_finite(const char* what) const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace naclip
