#include "naclip/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "naclip/error.hpp"

namespace naclip {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
        throw DimensionError("tensor shape " + shape_str(shape_) + " does not match " +
                             std::to_string(data_.size()) + " values");
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<float> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::from_values(std::initializer_list<float> values) {
    return Tensor({values.size()}, std::vector<float>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size())
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
    return shape_[axis];
}

std::size_t Tensor::rows() const noexcept {
    if (shape_.empty() || shape_.back() == 0) return 0;
    return data_.size() / shape_.back();
}

std::span<float> Tensor::row(std::size_t r) noexcept {
    const std::size_t n = shape_.back();
    return {data_.data() + r * n, n};
}

std::span<const float> Tensor::row(std::size_t r) const noexcept {
    const std::size_t n = shape_.back();
    return {data_.data() + r * n, n};
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
    if (shape_.empty() || begin > end || end > shape_[0])
        throw DimensionError("row slice out of range for shape " + shape_str(shape_));
    const std::size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
    Shape out_shape = shape_;
    out_shape[0] = end - begin;
    return Tensor(std::move(out_shape),
                  std::vector<float>(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                     data_.begin() + static_cast<std::ptrdiff_t>(end * stride)));
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void Tensor::check_finite(const char* what) const {
    if (!all_finite()) throw NumericError(std::string("non-finite value in ") + what);
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("max_abs_diff shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    float m = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace naclip
