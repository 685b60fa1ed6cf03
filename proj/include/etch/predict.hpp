#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "error.hpp"
#include "filters.hpp"
#include "grid.hpp"
#include "grid_io.hpp"
#include "patchwork.hpp"

namespace etch {

// Marks are recessed in the relief maps, so foreground sits below the
// threshold. Probability-like responses use the opposite convention.
enum class Polarity { valleys, ridges };

// Global threshold maximizing between-class variance on a 256 bin histogram.
// Candidate thresholds are bin edges t/256; ties resolve to the lowest.
inline double otsu_threshold(const ScalarGrid& g) {
    if (g.empty()) {
        throw ConfigError("otsu_threshold: empty grid");
    }
    constexpr int kBins = 256;
    std::vector<std::uint64_t> hist(kBins, 0);
    for (double v : g.samples()) {
        if (v < 0.0 || v > 1.0) {
            throw DataError("otsu_threshold: values outside [0,1]");
        }
        int bin = std::min(kBins - 1, static_cast<int>(v * kBins));
        ++hist[static_cast<std::size_t>(bin)];
    }
    int nonempty = 0;
    for (std::uint64_t c : hist) {
        nonempty += c != 0;
    }
    if (nonempty < 2) {
        throw DataError("otsu_threshold: degenerate single-bin histogram");
    }

    std::uint64_t total = g.size();
    double total_mean = 0.0;
    for (int b = 0; b < kBins; ++b) {
        total_mean += static_cast<double>(b) * static_cast<double>(hist[static_cast<std::size_t>(b)]);
    }
    total_mean /= static_cast<double>(total);

    double best = -1.0;
    int best_edge = 1;
    std::uint64_t w0 = 0;
    double sum0 = 0.0;
    // edge t splits bins [0,t) vs [t,256)
    for (int t = 1; t < kBins; ++t) {
        w0 += hist[static_cast<std::size_t>(t - 1)];
        sum0 += static_cast<double>(t - 1) * static_cast<double>(hist[static_cast<std::size_t>(t - 1)]);
        std::uint64_t w1 = total - w0;
        if (w0 == 0 || w1 == 0) {
            continue;
        }
        double mu0 = sum0 / static_cast<double>(w0);
        double mu1 = (total_mean * static_cast<double>(total) - sum0) / static_cast<double>(w1);
        double between = static_cast<double>(w0) * static_cast<double>(w1) * (mu0 - mu1) * (mu0 - mu1);
        if (between > best) {
            best = between;
            best_edge = t;
        }
    }
    return static_cast<double>(best_edge) / kBins;
}

struct SauvolaConfig {
    int window = 25;
    double k = 0.2;
    double r = 0.5;  // dynamic range of the standard deviation
};

// Local threshold surface t = mean * (1 + k * (stddev / r - 1)) over a
// square window with reflected borders, via two integral images.
inline ScalarGrid sauvola_map(const ScalarGrid& g, const SauvolaConfig& cfg = {}) {
    if (g.empty()) {
        throw ConfigError("sauvola_map: empty grid");
    }
    if (cfg.window < 3 || cfg.window % 2 == 0) {
        throw ConfigError("sauvola_map: window must be odd and at least 3");
    }
    if (cfg.window > std::min(g.width(), g.height())) {
        throw ConfigError("sauvola_map: window does not fit in grid");
    }
    if (!(cfg.r > 0.0)) {
        throw ConfigError("sauvola_map: dynamic range must be positive");
    }
    int half = cfg.window / 2;
    ScalarGrid padded = pad_reflect(g, half);
    IntegralImage sums(padded);
    IntegralImage squares(padded, true);
    double area = static_cast<double>(cfg.window) * cfg.window;

    ScalarGrid out(g.width(), g.height());
    for (int y = 0; y < g.height(); ++y) {
        for (int x = 0; x < g.width(); ++x) {
            // window [x, x+window) in padded coordinates is centered on (x,y)
            double s = sums.sum(x, y, x + cfg.window, y + cfg.window);
            double sq = squares.sum(x, y, x + cfg.window, y + cfg.window);
            double mean = s / area;
            double var = sq / area - mean * mean;
            double sd = var > 0.0 ? std::sqrt(var) : 0.0;
            out.at(x, y) = mean * (1.0 + cfg.k * (sd / cfg.r - 1.0));
        }
    }
    return out;
}

struct RidgeConfig {
    std::vector<double> scales = {2.0, 4.0, 8.0};
    double normalize_percentile = 99.5;
};

// Scale-normalized second-derivative response. At each scale the image is
// smoothed, the Hessian taken by central differences, and the response is
// sigma^2 * max(lambda_max, 0) for valleys (a dark line has a strongly
// positive curvature across it) or sigma^2 * max(-lambda_min, 0) for ridges.
// The per-pixel maximum over scales is normalized by its 99.5th percentile
// and clamped to [0,1]; an all-zero response stays all zero.
inline ScalarGrid ridge_response(const ScalarGrid& g, const RidgeConfig& cfg = {},
                                 Polarity polarity = Polarity::valleys) {
    if (g.empty()) {
        throw ConfigError("ridge_response: empty grid");
    }
    if (cfg.scales.empty()) {
        throw ConfigError("ridge_response: no scales");
    }
    for (std::size_t i = 0; i < cfg.scales.size(); ++i) {
        if (!(cfg.scales[i] > 0.0)) {
            throw ConfigError("ridge_response: scales must be positive");
        }
        if (i > 0 && cfg.scales[i] <= cfg.scales[i - 1]) {
            throw ConfigError("ridge_response: scales must be strictly increasing");
        }
    }
    ScalarGrid best(g.width(), g.height(), 0.0);
    for (double sigma : cfg.scales) {
        ScalarGrid b = gaussian_blur(g, sigma);
        double s2 = sigma * sigma;
        for (int y = 0; y < g.height(); ++y) {
            for (int x = 0; x < g.width(); ++x) {
                double c = b.at(x, y);
                double hxx = b.at_reflect(x + 1, y) + b.at_reflect(x - 1, y) - 2.0 * c;
                double hyy = b.at_reflect(x, y + 1) + b.at_reflect(x, y - 1) - 2.0 * c;
                double hxy = 0.25 * (b.at_reflect(x + 1, y + 1) + b.at_reflect(x - 1, y - 1) -
                                     b.at_reflect(x + 1, y - 1) - b.at_reflect(x - 1, y + 1));
                double mean = 0.5 * (hxx + hyy);
                double disc = std::sqrt(0.25 * (hxx - hyy) * (hxx - hyy) + hxy * hxy);
                double lambda = polarity == Polarity::valleys ? mean + disc : -(mean - disc);
                double r = s2 * std::max(lambda, 0.0);
                if (r > best.at(x, y)) {
                    best.at(x, y) = r;
                }
            }
        }
    }
    double p = percentile(best.samples(), cfg.normalize_percentile);
    if (p <= 0.0) {
        return best;  // flat input, nothing to normalize
    }
    for (double& v : best.samples()) {
        v = std::min(v / p, 1.0);
    }
    return best;
}

// Scalar threshold. Valleys: foreground strictly below. Ridges: at or above.
inline BinaryMask binarize(const ScalarGrid& g, double threshold, Polarity polarity) {
    if (!std::isfinite(threshold)) {
        throw ConfigError("binarize: threshold must be finite");
    }
    BinaryMask out(g.width(), g.height());
    for (std::size_t i = 0; i < g.size(); ++i) {
        double v = g.samples()[i];
        out.bits()[i] = (polarity == Polarity::valleys ? v < threshold : v >= threshold) ? 1 : 0;
    }
    return out;
}

// Threshold surface variant, one threshold per pixel.
inline BinaryMask binarize(const ScalarGrid& g, const ScalarGrid& thresholds, Polarity polarity) {
    require_same_dims(g.width(), g.height(), thresholds.width(), thresholds.height(), "binarize");
    BinaryMask out(g.width(), g.height());
    for (std::size_t i = 0; i < g.size(); ++i) {
        double v = g.samples()[i];
        double t = thresholds.samples()[i];
        out.bits()[i] = (polarity == Polarity::valleys ? v < t : v >= t) ? 1 : 0;
    }
    return out;
}

// Per-patch probability maps produced elsewhere, one file per manifest entry
// named <name>.etgr. Every entry must resolve; values must be probabilities.
inline std::map<std::string, ScalarGrid> load_external_probs(const std::filesystem::path& dir,
                                                             const Manifest& manifest) {
    std::map<std::string, ScalarGrid> out;
    for (const ManifestEntry& e : manifest.entries) {
        std::filesystem::path p = dir / (e.name + ".etgr");
        if (!std::filesystem::exists(p)) {
            throw DataError("missing probability map for patch " + e.name + ": " + p.string());
        }
        ScalarGrid g = read_scalar(p.string());
        bool full = g.width() == e.ref.w && g.height() == e.ref.h;
        bool half = g.width() * 2 == e.ref.w && g.height() * 2 == e.ref.h;
        if (!full && !half) {
            throw DataError("probability map for patch " + e.name +
                            " matches neither full nor half patch size");
        }
        for (double v : g.samples()) {
            if (v < -1e-6 || v > 1.0 + 1e-6) {
                throw DataError("probability outside [0,1] in patch " + e.name);
            }
        }
        for (double& v : g.samples()) {
            v = std::clamp(v, 0.0, 1.0);
        }
        out.emplace(e.name, std::move(g));
    }
    return out;
}

}  // namespace etch
