#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "naclip/image_io.hpp"

namespace naclip {

inline constexpr std::uint16_t kIgnoreIndex = 255;

// Rows are ground truth, columns prediction.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes);

    std::size_t classes() const noexcept { return n_; }
    std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * n_ + pred]; }
    std::uint64_t total() const noexcept;

    // Pixels whose ground truth equals `ignore_index` are skipped. Any other
    // label >= classes() is an error.
    void accumulate(const LabelMap& pred, const LabelMap& gt, std::uint16_t ignore_index = kIgnoreIndex);
    void merge(const ConfusionMatrix& other);

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t n_;
    std::vector<std::uint64_t> counts_;
};

struct ClassIoU {
    std::string name;
    std::uint64_t intersection = 0;
    std::uint64_t union_pixels = 0;
    std::uint64_t gt_pixels = 0;
    std::uint64_t pred_pixels = 0;
    std::optional<double> iou;  // empty when the union is zero
    bool counted = false;       // contributes to the mean
};

struct MetricsReport {
    std::vector<ClassIoU> per_class;
    double miou = 0.0;
    std::uint64_t scored_pixels = 0;
};

// IoU_c = tp / (gt_c + pred_c - tp). The mean runs over classes with
// `include[c]` set and a nonzero union; throws if none qualifies.
MetricsReport compute_miou(const ConfusionMatrix& cm, const std::vector<std::string>& names,
                           const std::vector<bool>& include = {});

nlohmann::json to_json(const MetricsReport& report);

}  // namespace naclip
