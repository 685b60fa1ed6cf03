#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "error.hpp"
#include "grid.hpp"

namespace etch {

// Normalized 1D Gaussian taps, truncated at radius ceil(4*sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw ConfigError("gaussian sigma must be positive and finite");
    }
    int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) {
        v /= sum;
    }
    return k;
}

inline ScalarGrid convolve_rows_reflect(const ScalarGrid& in, const std::vector<double>& kernel) {
    if (kernel.empty() || kernel.size() % 2 == 0) {
        throw ConfigError("kernel must have odd length");
    }
    int radius = static_cast<int>(kernel.size() / 2);
    ScalarGrid out(in.width(), in.height());
    for (int y = 0; y < in.height(); ++y) {
        for (int x = 0; x < in.width(); ++x) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t) {
                acc += kernel[static_cast<std::size_t>(t + radius)] *
                       in.at(reflect_index(x + t, in.width()), y);
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

inline ScalarGrid convolve_cols_reflect(const ScalarGrid& in, const std::vector<double>& kernel) {
    if (kernel.empty() || kernel.size() % 2 == 0) {
        throw ConfigError("kernel must have odd length");
    }
    int radius = static_cast<int>(kernel.size() / 2);
    ScalarGrid out(in.width(), in.height());
    for (int y = 0; y < in.height(); ++y) {
        for (int x = 0; x < in.width(); ++x) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t) {
                acc += kernel[static_cast<std::size_t>(t + radius)] *
                       in.at(x, reflect_index(y + t, in.height()));
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

inline ScalarGrid gaussian_blur(const ScalarGrid& in, double sigma) {
    std::vector<double> k = gaussian_kernel(sigma);
    return convolve_cols_reflect(convolve_rows_reflect(in, k), k);
}

// Summed-area table with one cell of zero padding: sum over the half-open
// rectangle [x0,x1) x [y0,y1) comes out of four lookups.
class IntegralImage {
public:
    explicit IntegralImage(const ScalarGrid& g, bool squared = false)
        : width_(g.width()), height_(g.height()) {
        table_.assign(static_cast<std::size_t>(width_ + 1) * (height_ + 1), 0.0);
        for (int y = 0; y < height_; ++y) {
            double row = 0.0;
            for (int x = 0; x < width_; ++x) {
                double v = g.at(x, y);
                row += squared ? v * v : v;
                tab(x + 1, y + 1) = tab(x + 1, y) + row;
            }
        }
    }

    double sum(int x0, int y0, int x1, int y1) const {  // exclusive upper bounds
        return tab(x1, y1) - tab(x0, y1) - tab(x1, y0) + tab(x0, y0);
    }

private:
    double& tab(int x, int y) { return table_[static_cast<std::size_t>(y) * (width_ + 1) + x]; }
    double tab(int x, int y) const {
        return table_[static_cast<std::size_t>(y) * (width_ + 1) + x];
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> table_;
};

// Copy of the grid with a reflected border of the given margin on all sides.
inline ScalarGrid pad_reflect(const ScalarGrid& in, int margin) {
    if (margin < 0) {
        throw ConfigError("padding margin must be non-negative");
    }
    ScalarGrid out(in.width() + 2 * margin, in.height() + 2 * margin);
    for (int y = 0; y < out.height(); ++y) {
        int sy = reflect_index(y - margin, in.height());
        for (int x = 0; x < out.width(); ++x) {
            out.at(x, y) = in.at(reflect_index(x - margin, in.width()), sy);
        }
    }
    return out;
}

// Value at the given quantile (0..100) using linear interpolation between
// order statistics, matching the common "linear" definition.
inline double percentile(std::vector<double> values, double pct) {
    if (values.empty()) {
        throw ConfigError("percentile of empty set");
    }
    if (!(pct >= 0.0 && pct <= 100.0)) {
        throw ConfigError("percentile must be in [0,100]");
    }
    std::sort(values.begin(), values.end());
    double pos = (pct / 100.0) * static_cast<double>(values.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= values.size()) {
        return values.back();
    }
    double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

}  // namespace etch
