#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"

namespace etch {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }

    Vec3 normalized() const {
        double n = norm();
        if (n <= 0.0) {
            throw ConfigError("cannot normalize zero vector");
        }
        return {x / n, y / n, z / n};
    }
};

// Reflection pattern abc|cba with the edge sample repeated, defined for any
// index by folding over the period 2n.
inline int reflect_index(int i, int n) {
    if (n <= 0) {
        throw ConfigError("reflect_index: empty axis");
    }
    if (n == 1) {
        return 0;
    }
    int period = 2 * n;
    int m = i % period;
    if (m < 0) {
        m += period;
    }
    return m < n ? m : period - 1 - m;
}

inline int clamp_index(int i, int n) {
    if (n <= 0) {
        throw ConfigError("clamp_index: empty axis");
    }
    return i < 0 ? 0 : (i >= n ? n - 1 : i);
}

inline void check_grid_dims(int width, int height) {
    if (width <= 0 || height <= 0) {
        throw ConfigError("grid dimensions must be positive, got " +
                          std::to_string(width) + "x" + std::to_string(height));
    }
    // Keeps width*height*channels*sizeof(float) well inside 32 bits.
    const int limit = 1 << 20;
    if (width > limit || height > limit ||
        static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height) >
            (std::uint64_t{1} << 31)) {
        throw CapacityError("grid dimensions too large: " + std::to_string(width) +
                            "x" + std::to_string(height));
    }
}

// Single-channel raster of doubles, row major. All samples are finite after
// construction through any of the factories below.
class ScalarGrid {
public:
    ScalarGrid() = default;

    ScalarGrid(int width, int height, double fill = 0.0)
        : width_(width), height_(height) {
        check_grid_dims(width, height);
        if (!std::isfinite(fill)) {
            throw ConfigError("grid fill value must be finite");
        }
        samples_.assign(static_cast<std::size_t>(width) * height, fill);
    }

    static ScalarGrid from_samples(int width, int height, std::vector<double> samples) {
        check_grid_dims(width, height);
        if (samples.size() != static_cast<std::size_t>(width) * height) {
            throw ConfigError("sample count does not match grid dimensions");
        }
        for (double v : samples) {
            if (!std::isfinite(v)) {
                throw DataError("grid sample is not finite");
            }
        }
        ScalarGrid g;
        g.width_ = width;
        g.height_ = height;
        g.samples_ = std::move(samples);
        return g;
    }

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return samples_.empty(); }
    std::size_t size() const { return samples_.size(); }

    double& at(int x, int y) { return samples_[static_cast<std::size_t>(y) * width_ + x]; }
    double at(int x, int y) const { return samples_[static_cast<std::size_t>(y) * width_ + x]; }

    double at_reflect(int x, int y) const {
        return at(reflect_index(x, width_), reflect_index(y, height_));
    }
    double at_clamp(int x, int y) const {
        return at(clamp_index(x, width_), clamp_index(y, height_));
    }

    std::vector<double>& samples() { return samples_; }
    const std::vector<double>& samples() const { return samples_; }

    // Physical sampling density, when known. Not persisted by the raster
    // container format; carried only in memory and via sidecar metadata.
    std::optional<double> resolution_ppm;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> samples_;
};

// Three-channel raster of unit (or sentinel) vectors with a validity bit per
// pixel. Invalid pixels hold the sentinel (0,0,1).
class VectorGrid {
public:
    VectorGrid() = default;

    VectorGrid(int width, int height)
        : width_(width), height_(height) {
        check_grid_dims(width, height);
        samples_.assign(static_cast<std::size_t>(width) * height, Vec3{0.0, 0.0, 1.0});
        validity_.assign(samples_.size(), 1);
    }

    static VectorGrid from_samples(int width, int height, std::vector<Vec3> samples) {
        check_grid_dims(width, height);
        if (samples.size() != static_cast<std::size_t>(width) * height) {
            throw ConfigError("sample count does not match grid dimensions");
        }
        for (const Vec3& v : samples) {
            if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z)) {
                throw DataError("grid sample is not finite");
            }
        }
        VectorGrid g;
        g.width_ = width;
        g.height_ = height;
        g.samples_ = std::move(samples);
        g.validity_.assign(g.samples_.size(), 1);
        return g;
    }

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return samples_.empty(); }
    std::size_t size() const { return samples_.size(); }

    Vec3& at(int x, int y) { return samples_[static_cast<std::size_t>(y) * width_ + x]; }
    const Vec3& at(int x, int y) const {
        return samples_[static_cast<std::size_t>(y) * width_ + x];
    }

    bool valid(int x, int y) const {
        return validity_[static_cast<std::size_t>(y) * width_ + x] != 0;
    }
    void set_valid(int x, int y, bool v) {
        validity_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
    }

    std::vector<Vec3>& samples() { return samples_; }
    const std::vector<Vec3>& samples() const { return samples_; }
    std::vector<std::uint8_t>& validity() { return validity_; }
    const std::vector<std::uint8_t>& validity() const { return validity_; }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<Vec3> samples_;
    std::vector<std::uint8_t> validity_;
};

class BinaryMask {
public:
    BinaryMask() = default;

    BinaryMask(int width, int height, bool fill = false)
        : width_(width), height_(height) {
        check_grid_dims(width, height);
        bits_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
    }

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return bits_.empty(); }
    std::size_t size() const { return bits_.size(); }

    bool get(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    void set(int x, int y, bool v) {
        bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (std::uint8_t b : bits_) {
            n += b;
        }
        return n;
    }

    std::vector<std::uint8_t>& bits() { return bits_; }
    const std::vector<std::uint8_t>& bits() const { return bits_; }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

inline ScalarGrid mask_to_grid(const BinaryMask& m) {
    ScalarGrid g(m.width(), m.height());
    for (std::size_t i = 0; i < m.size(); ++i) {
        g.samples()[i] = m.bits()[i] ? 1.0 : 0.0;
    }
    return g;
}

inline BinaryMask grid_to_mask(const ScalarGrid& g, double threshold = 0.5) {
    BinaryMask m(g.width(), g.height());
    for (std::size_t i = 0; i < g.size(); ++i) {
        m.bits()[i] = g.samples()[i] >= threshold ? 1 : 0;
    }
    return m;
}

inline void require_same_dims(int wa, int ha, int wb, int hb, const char* what) {
    if (wa != wb || ha != hb) {
        throw DataError(std::string(what) + ": dimension mismatch, " +
                        std::to_string(wa) + "x" + std::to_string(ha) + " vs " +
                        std::to_string(wb) + "x" + std::to_string(hb));
    }
}

struct Rect {
    int x = 0, y = 0, w = 0, h = 0;
};

}  // namespace etch
