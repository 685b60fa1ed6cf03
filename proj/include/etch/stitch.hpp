#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "error.hpp"
#include "grid.hpp"
#include "metrics.hpp"
#include "patchwork.hpp"
#include "predict.hpp"
#include "rng.hpp"

namespace etch {

// Separable raised-cosine blending weights with a floor, so overlapping
// patches fade into each other and corners still contribute a little:
//   h(t) = 0.5 * (1 - cos(2 pi (t + 0.5) / size)),  w(i,j) = max(h(i) h(j), 1e-3)
struct WeightMap {
    int size = 0;
    std::vector<double> w;

    double at(int x, int y) const { return w[static_cast<std::size_t>(y) * size + x]; }
};

inline WeightMap make_weight_map(int size) {
    if (size < 2) {
        throw ConfigError("weight map needs at least 2 pixels");
    }
    WeightMap m;
    m.size = size;
    m.w.resize(static_cast<std::size_t>(size) * size);
    std::vector<double> h(static_cast<std::size_t>(size));
    for (int t = 0; t < size; ++t) {
        h[static_cast<std::size_t>(t)] = 0.5 * (1.0 - std::cos(2.0 * kPi * (t + 0.5) / size));
    }
    const double floor = 1e-3;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            m.w[static_cast<std::size_t>(y) * size + x] =
                std::max(h[static_cast<std::size_t>(x)] * h[static_cast<std::size_t>(y)], floor);
        }
    }
    return m;
}

// Weighted average of overlapping patch predictions on the full canvas.
// Patches at half resolution are upsampled first. Pixels no patch covers
// stay zero.
inline ScalarGrid stitch(const std::map<std::string, ScalarGrid>& probs, const Manifest& manifest,
                         const WeightMap& weights, int full_w, int full_h) {
    check_grid_dims(full_w, full_h);
    ScalarGrid num(full_w, full_h, 0.0);
    ScalarGrid den(full_w, full_h, 0.0);
    for (const ManifestEntry& e : manifest.entries) {
        auto it = probs.find(e.name);
        if (it == probs.end()) {
            throw DataError("stitch: no probability map for patch " + e.name);
        }
        if (e.ref.w != weights.size || e.ref.h != weights.size) {
            throw DataError("stitch: patch " + e.name + " does not match the weight map size");
        }
        const ScalarGrid* patch = &it->second;
        ScalarGrid upsampled;
        if (patch->width() * 2 == e.ref.w && patch->height() * 2 == e.ref.h) {
            upsampled = upsample_double(*patch);
            patch = &upsampled;
        } else if (patch->width() != e.ref.w || patch->height() != e.ref.h) {
            throw DataError("stitch: patch " + e.name + " has unexpected dimensions");
        }
        for (int y = 0; y < e.ref.h; ++y) {
            int gy = e.ref.y + y;
            if (gy < 0 || gy >= full_h) {
                continue;
            }
            for (int x = 0; x < e.ref.w; ++x) {
                int gx = e.ref.x + x;
                if (gx < 0 || gx >= full_w) {
                    continue;
                }
                double v = patch->at(x, y);
                if (v < -1e-9 || v > 1.0 + 1e-9) {
                    throw DataError("stitch: probability outside [0,1] in patch " + e.name);
                }
                double w = weights.at(x, y);
                num.at(gx, gy) += w * v;
                den.at(gx, gy) += w;
            }
        }
    }
    ScalarGrid out(full_w, full_h, 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (den.samples()[i] > 0.0) {
            out.samples()[i] = num.samples()[i] / den.samples()[i];
        }
    }
    return out;
}

// Zeroes all probability outside the object. False positives on the
// surrounding plane and rim cannot survive this.
inline ScalarGrid apply_object_mask(const ScalarGrid& prob, const BinaryMask& object) {
    require_same_dims(prob.width(), prob.height(), object.width(), object.height(),
                      "apply_object_mask");
    ScalarGrid out = prob;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!object.bits()[i]) {
            out.samples()[i] = 0.0;
        }
    }
    return out;
}

namespace detail {

// Largest 4-connected foreground component, in place.
inline void keep_largest_component(BinaryMask& m) {
    std::vector<int> label(m.size(), 0);
    int next = 0;
    std::vector<std::size_t> best_px;
    std::vector<std::size_t> stack, current;
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            std::size_t i = static_cast<std::size_t>(y) * m.width() + x;
            if (!m.bits()[i] || label[i] != 0) {
                continue;
            }
            ++next;
            current.clear();
            stack.assign(1, i);
            label[i] = next;
            while (!stack.empty()) {
                std::size_t c = stack.back();
                stack.pop_back();
                current.push_back(c);
                int cx = static_cast<int>(c % m.width());
                int cy = static_cast<int>(c / m.width());
                const int d[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
                for (auto& dd : d) {
                    int nx = cx + dd[0], ny = cy + dd[1];
                    if (nx < 0 || ny < 0 || nx >= m.width() || ny >= m.height()) {
                        continue;
                    }
                    std::size_t n = static_cast<std::size_t>(ny) * m.width() + nx;
                    if (m.bits()[n] && label[n] == 0) {
                        label[n] = next;
                        stack.push_back(n);
                    }
                }
            }
            if (current.size() > best_px.size()) {
                best_px = current;
            }
        }
    }
    std::fill(m.bits().begin(), m.bits().end(), 0);
    for (std::size_t i : best_px) {
        m.bits()[i] = 1;
    }
}

// Background connected to the border survives; enclosed pockets become
// foreground.
inline void fill_holes(BinaryMask& m) {
    BinaryMask outside(m.width(), m.height(), false);
    std::vector<std::size_t> stack;
    auto push = [&](int x, int y) {
        if (x < 0 || y < 0 || x >= m.width() || y >= m.height()) {
            return;
        }
        if (m.get(x, y) || outside.get(x, y)) {
            return;
        }
        outside.set(x, y, true);
        stack.push_back(static_cast<std::size_t>(y) * m.width() + x);
    };
    for (int x = 0; x < m.width(); ++x) {
        push(x, 0);
        push(x, m.height() - 1);
    }
    for (int y = 0; y < m.height(); ++y) {
        push(0, y);
        push(m.width() - 1, y);
    }
    while (!stack.empty()) {
        std::size_t c = stack.back();
        stack.pop_back();
        int cx = static_cast<int>(c % m.width());
        int cy = static_cast<int>(c / m.width());
        push(cx + 1, cy);
        push(cx - 1, cy);
        push(cx, cy + 1);
        push(cx, cy - 1);
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!outside.bits()[i]) {
            m.bits()[i] = 1;
        }
    }
}

}  // namespace detail

// Fallback object segmentation when no curated mask is available: global
// threshold on albedo keeping the bright side, largest component, holes
// filled. Engraved lines inside the object vanish with the hole fill.
inline BinaryMask estimate_object_mask(const ScalarGrid& albedo) {
    double t = otsu_threshold(albedo);
    BinaryMask m = binarize(albedo, t, Polarity::ridges);
    if (m.count() == 0) {
        throw DataError("estimate_object_mask: nothing above the threshold");
    }
    detail::keep_largest_component(m);
    detail::fill_holes(m);
    return m;
}

struct SweepRow {
    double threshold = 0.0;
    MetricsReport raw;     // scored on the stitched probability as-is
    MetricsReport masked;  // scored after object masking
};

struct SweepTable {
    std::vector<SweepRow> rows;
    int best_raw = -1;     // index of the best defined pseudo F-measure
    int best_masked = -1;
};

// Scores the binarized probability at thresholds i/20, i = 1..19, with and
// without object masking. Rows whose metrics are undefined stay in the table
// flagged by the missing values.
inline SweepTable threshold_sweep(const ScalarGrid& prob, const BinaryMask& gt,
                                  const BinaryMask& object) {
    require_same_dims(prob.width(), prob.height(), gt.width(), gt.height(), "threshold_sweep");
    ScalarGrid masked_prob = apply_object_mask(prob, object);
    SweepTable table;
    table.rows.reserve(19);
    for (int i = 1; i <= 19; ++i) {
        SweepRow row;
        row.threshold = static_cast<double>(i) / 20.0;
        row.raw = score(binarize(prob, row.threshold, Polarity::ridges), gt);
        row.masked = score(binarize(masked_prob, row.threshold, Polarity::ridges), gt);
        table.rows.push_back(std::move(row));
    }
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const SweepRow& r = table.rows[i];
        if (r.raw.pfm &&
            (table.best_raw < 0 || *r.raw.pfm > *table.rows[static_cast<std::size_t>(table.best_raw)].raw.pfm)) {
            table.best_raw = static_cast<int>(i);
        }
        if (r.masked.pfm &&
            (table.best_masked < 0 ||
             *r.masked.pfm > *table.rows[static_cast<std::size_t>(table.best_masked)].masked.pfm)) {
            table.best_masked = static_cast<int>(i);
        }
    }
    return table;
}

inline nlohmann::json sweep_to_json(const SweepTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const SweepRow& r = t.rows[i];
        rows.push_back({{"threshold", r.threshold},
                        {"raw", metrics_to_json(r.raw)},
                        {"masked", metrics_to_json(r.masked)},
                        {"best_raw", static_cast<int>(i) == t.best_raw},
                        {"best_masked", static_cast<int>(i) == t.best_masked}});
    }
    return nlohmann::json{{"rows", rows},
                          {"best_raw", t.best_raw},
                          {"best_masked", t.best_masked}};
}

}  // namespace etch
