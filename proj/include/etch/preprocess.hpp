#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "error.hpp"
#include "filters.hpp"
#include "grid.hpp"

namespace etch {

// Reference scan density; sigma scales linearly with actual density so the
// filter support covers the same physical footprint on any scan.
inline constexpr double kReferencePpm = 38.5;

inline double scaled_sigma(double base_sigma, std::optional<double> resolution_ppm,
                           double reference_ppm = kReferencePpm) {
    if (!(base_sigma > 0.0)) {
        throw ConfigError("sigma must be positive");
    }
    if (!resolution_ppm) {
        return base_sigma;
    }
    if (!(*resolution_ppm > 0.0)) {
        throw ConfigError("resolution must be positive");
    }
    return base_sigma * (*resolution_ppm / reference_ppm);
}

// Removes the slow shape component: output = depth - gaussian(depth, sigma).
// Low frequencies vanish, features much shorter than sigma pass through.
inline ScalarGrid highpass_depth(const ScalarGrid& depth, double sigma) {
    if (depth.empty()) {
        throw ConfigError("highpass of empty grid");
    }
    if (!(sigma >= 1.0)) {
        throw ConfigError("highpass sigma must be at least 1 pixel");
    }
    int limit = std::min(depth.width(), depth.height()) / 2;
    if (sigma > static_cast<double>(limit)) {
        throw ConfigError("highpass sigma exceeds half the smaller image side");
    }
    ScalarGrid low = gaussian_blur(depth, sigma);
    ScalarGrid out(depth.width(), depth.height());
    for (std::size_t i = 0; i < depth.size(); ++i) {
        out.samples()[i] = depth.samples()[i] - low.samples()[i];
    }
    return out;
}

struct ChannelStats {
    double mean = 0.0;
    double stddev = 0.0;  // population
    std::uint64_t count = 0;
    bool degenerate = false;  // zero spread, affine map undefined
};

// Population mean and stddev pooled over the masked pixels of every grid.
// Grids and masks pair up elementwise; an empty mask list pools everything.
inline ChannelStats pooled_stats(const std::vector<ScalarGrid>& grids,
                                 const std::vector<BinaryMask>& masks) {
    if (grids.empty()) {
        throw ConfigError("pooled_stats: no grids");
    }
    if (!masks.empty() && masks.size() != grids.size()) {
        throw ConfigError("pooled_stats: mask count does not match grid count");
    }
    double sum = 0.0;
    std::uint64_t n = 0;
    for (std::size_t k = 0; k < grids.size(); ++k) {
        const ScalarGrid& g = grids[k];
        if (!masks.empty()) {
            require_same_dims(g.width(), g.height(), masks[k].width(), masks[k].height(),
                              "pooled_stats");
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (masks.empty() || masks[k].bits()[i]) {
                sum += g.samples()[i];
                ++n;
            }
        }
    }
    if (n == 0) {
        throw DataError("pooled_stats: empty pooled region");
    }
    double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t k = 0; k < grids.size(); ++k) {
        const ScalarGrid& g = grids[k];
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (masks.empty() || masks[k].bits()[i]) {
                double d = g.samples()[i] - mean;
                sq += d * d;
            }
        }
    }
    ChannelStats s;
    s.mean = mean;
    s.stddev = std::sqrt(sq / static_cast<double>(n));
    s.count = n;
    s.degenerate = s.stddev == 0.0;
    return s;
}

// One pooled statistic per channel, for multi-channel model inputs stored as
// parallel scalar grids.
inline std::vector<ChannelStats> channel_stats(const std::vector<std::vector<ScalarGrid>>& channels,
                                               const std::vector<BinaryMask>& masks) {
    std::vector<ChannelStats> out;
    out.reserve(channels.size());
    for (const auto& grids : channels) {
        out.push_back(pooled_stats(grids, masks));
    }
    return out;
}

struct ClipResult {
    ScalarGrid grid;
    ChannelStats stats;
    double lo = 0.0;
    double hi = 0.0;
};

// Clamp to mean +- k stddev (statistics over the masked region only), then
// map that interval affinely onto [0,1]. The whole grid is transformed, so
// off-mask pixels land on the clamp rails at 0 or 1.
inline ClipResult clip_and_rescale(const ScalarGrid& g, const BinaryMask& mask, double k = 3.0) {
    require_same_dims(g.width(), g.height(), mask.width(), mask.height(), "clip_and_rescale");
    if (!(k > 0.0)) {
        throw ConfigError("clip factor must be positive");
    }
    if (mask.count() < 2) {
        throw DataError("clip_and_rescale: mask selects fewer than two pixels");
    }
    ChannelStats st = pooled_stats({g}, {mask});
    if (st.degenerate) {
        throw DataError("clip_and_rescale: zero spread inside mask");
    }
    ClipResult r;
    r.stats = st;
    r.lo = st.mean - k * st.stddev;
    r.hi = st.mean + k * st.stddev;
    double span = r.hi - r.lo;
    r.grid = ScalarGrid(g.width(), g.height());
    for (std::size_t i = 0; i < g.size(); ++i) {
        double v = g.samples()[i];
        v = v < r.lo ? r.lo : (v > r.hi ? r.hi : v);
        r.grid.samples()[i] = (v - r.lo) / span;
    }
    return r;
}

// Unit-normalizes every valid pixel; pixels with (near) zero vectors become
// invalid sentinels. Idempotent.
inline VectorGrid normalize_normals(const VectorGrid& in) {
    VectorGrid out(in.width(), in.height());
    for (int y = 0; y < in.height(); ++y) {
        for (int x = 0; x < in.width(); ++x) {
            const Vec3& v = in.at(x, y);
            double n = v.norm();
            if (!in.valid(x, y) || n < 1e-12) {
                out.at(x, y) = Vec3{0.0, 0.0, 1.0};
                out.set_valid(x, y, false);
            } else {
                out.at(x, y) = Vec3{v.x / n, v.y / n, v.z / n};
                out.set_valid(x, y, true);
            }
        }
    }
    return out;
}

}  // namespace etch
