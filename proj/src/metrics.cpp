#include "naclip/metrics.hpp"

#include <numeric>

#include "naclip/error.hpp"

namespace naclip {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : n_(classes), counts_(classes * classes, 0) {
    if (classes == 0) throw ConfigError("confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::total() const noexcept {
    return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& gt, std::uint16_t ignore_index) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw DimensionError("prediction " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                             " and ground truth " + std::to_string(gt.width) + "x" + std::to_string(gt.height) +
                             " differ in size");
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
        const auto g = gt.labels[i];
        if (g == ignore_index) continue;
        const auto p = pred.labels[i];
        if (g >= n_) throw ConfigError("ground-truth label " + std::to_string(g) + " outside " + std::to_string(n_) + " classes");
        if (p >= n_) throw ConfigError("predicted label " + std::to_string(p) + " outside " + std::to_string(n_) + " classes");
        ++counts_[g * n_ + p];
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.n_ != n_) throw DimensionError("cannot merge confusion matrices of different class counts");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

MetricsReport compute_miou(const ConfusionMatrix& cm, const std::vector<std::string>& names,
                           const std::vector<bool>& include) {
    const std::size_t n = cm.classes();
    if (!names.empty() && names.size() != n) throw ConfigError("class name count differs from the matrix size");
    if (!include.empty() && include.size() != n) throw ConfigError("class mask size differs from the matrix size");

    MetricsReport report;
    report.scored_pixels = cm.total();
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t c = 0; c < n; ++c) {
        ClassIoU r;
        r.name = names.empty() ? std::to_string(c) : names[c];
        r.intersection = cm.at(c, c);
        for (std::size_t k = 0; k < n; ++k) {
            r.gt_pixels += cm.at(c, k);
            r.pred_pixels += cm.at(k, c);
        }
        r.union_pixels = r.gt_pixels + r.pred_pixels - r.intersection;
        if (r.union_pixels > 0) r.iou = static_cast<double>(r.intersection) / static_cast<double>(r.union_pixels);
        r.counted = r.iou.has_value() && (include.empty() || include[c]);
        if (r.counted) {
            sum += *r.iou;
            ++counted;
        }
        report.per_class.push_back(std::move(r));
    }
    if (counted == 0) throw ConfigError("no class has a nonzero union; nothing was scored");
    report.miou = sum / static_cast<double>(counted);
    return report;
}

nlohmann::json to_json(const MetricsReport& report) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : report.per_class) {
        classes.push_back({{"name", c.name},
                           {"iou", c.iou ? nlohmann::json(*c.iou) : nlohmann::json(nullptr)},
                           {"intersection", c.intersection},
                           {"union", c.union_pixels},
                           {"gt_pixels", c.gt_pixels},
                           {"pred_pixels", c.pred_pixels},
                           {"counted", c.counted}});
    }
    return {{"miou", report.miou}, {"scored_pixels", report.scored_pixels}, {"per_class", std::move(classes)}};
}

}  // namespace naclip
