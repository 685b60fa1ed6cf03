#pragma once

#include <algorithm>
#include <cmath>

#include "grid.hpp"
#include "grid_io.hpp"

namespace etch {

// Error visualization over a grayscale base: hits black, false positives
// green, misses red, everything else the base image.
inline RgbImage render_overlay(const BinaryMask& pred, const BinaryMask& gt,
                               const ScalarGrid& base) {
    require_same_dims(pred.width(), pred.height(), gt.width(), gt.height(), "overlay masks");
    require_same_dims(pred.width(), pred.height(), base.width(), base.height(), "overlay base");
    RgbImage img(base.width(), base.height());
    for (int y = 0; y < base.height(); ++y) {
        for (int x = 0; x < base.width(); ++x) {
            bool p = pred.get(x, y), g = gt.get(x, y);
            if (p && g) {
                img.set(x, y, 0, 0, 0);
            } else if (p) {
                img.set(x, y, 0, 255, 0);
            } else if (g) {
                img.set(x, y, 255, 0, 0);
            } else {
                double v = std::clamp(base.at(x, y), 0.0, 1.0);
                auto b = static_cast<std::uint8_t>(std::lround(v * 255.0));
                img.set(x, y, b, b, b);
            }
        }
    }
    return img;
}

}  // namespace etch
