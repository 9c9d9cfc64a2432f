#include "naclip/attention_dump.hpp"

#include <algorithm>
#include <cmath>

#include "naclip/error.hpp"
#include "naclip/image_io.hpp"

namespace naclip {

void write_attention_grid(const std::filesystem::path& path, const AttentionMaps& maps, GridSize grid) {
    if (maps.heads.empty()) throw ConfigError("no attention maps captured");
    const std::size_t cells = grid.cells();
    const std::size_t n = maps.heads.front().dim(0);
    if (n != cells && n != cells + 1)
        throw DimensionError("attention maps over " + std::to_string(n) + " tokens do not fit a " +
                             std::to_string(grid.h) + "x" + std::to_string(grid.w) + " grid");
    const std::size_t skip = n - cells;

    const std::size_t img_w = grid.w * grid.w, img_h = grid.h * grid.h;
    std::vector<std::uint8_t> pixels(img_w * img_h, 0);
    std::vector<double> tile(cells);
    for (std::size_t q = 0; q < cells; ++q) {
        std::fill(tile.begin(), tile.end(), 0.0);
        for (const auto& head : maps.heads)
            for (std::size_t k = 0; k < cells; ++k) tile[k] += head.at(q + skip, k + skip);
        const double mx = *std::max_element(tile.begin(), tile.end());
        const std::size_t ti = q / grid.w, tj = q % grid.w;
        for (std::size_t k = 0; k < cells; ++k) {
            const std::size_t m = k / grid.w, c = k % grid.w;
            const double v = mx > 0.0 ? tile[k] / mx : 0.0;
            pixels[(ti * grid.h + m) * img_w + tj * grid.w + c] = static_cast<std::uint8_t>(std::lround(255.0 * v));
        }
    }
    write_gray_png(path, img_w, img_h, pixels);
}

}  // namespace naclip
