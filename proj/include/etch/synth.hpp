#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "error.hpp"
#include "filters.hpp"
#include "grid.hpp"
#include "photometric.hpp"
#include "rng.hpp"

namespace etch {

// An engraved polyline. The cut cross-section is Gaussian with the given
// full width at half depth, so the mark boundary (half-depth contour) sits
// at distance width_px / 2 from the centerline.
struct Stroke {
    std::vector<std::pair<double, double>> points;
    double width_px = 4.0;
    double depth = 1.0;  // height units (same scale as pixel spacing)
};

struct SynthSpec {
    int width = 1024;
    int height = 1024;
    double disk_radius = 480.0;
    double disk_height = 30.0;    // plateau above the surround
    double bow = 6.0;             // center-to-rim sag of the plateau
    double albedo_object = 0.75;
    double albedo_background = 0.10;
    // band-limited height texture on the plateau (tarnish, wear); its
    // correlation length sits between stroke width and the high-pass scale,
    // so it survives preprocessing the way real surface wander does
    double waviness = 0.0;          // RMS amplitude, height units
    double waviness_scale = 45.0;   // correlation length in px
    std::uint64_t texture_seed = 1;
    std::vector<Stroke> strokes;  // annotated engravings
    std::vector<Stroke> cracks;   // unannotated clutter: thinner, shallower
};

struct SynthSurface {
    ScalarGrid depth;
    ScalarGrid albedo;
    BinaryMask object;  // the disk
    BinaryMask gt;      // stroke marks, subset of object
};

namespace detail {

inline double dist_to_segment(double px, double py, double ax, double ay, double bx, double by) {
    double dx = bx - ax, dy = by - ay;
    double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    double ex = px - (ax + t * dx), ey = py - (ay + t * dy);
    return std::sqrt(ex * ex + ey * ey);
}

// Stamp one stroke: deepest cut wins where strokes cross, so the carve
// grid keeps the max depression. Only pixels near a segment are visited.
inline void stamp_stroke(const Stroke& s, ScalarGrid& carve, BinaryMask* gt) {
    if (s.points.size() < 2) {
        throw ConfigError("stroke needs at least 2 points");
    }
    if (!(s.width_px > 0.0) || !(s.depth > 0.0)) {
        throw ConfigError("stroke width and depth must be positive");
    }
    // full width at half maximum -> Gaussian sigma
    double sigma = s.width_px / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    double reach = std::max(s.width_px / 2.0, 4.0 * sigma);
    int w = carve.width(), h = carve.height();
    for (std::size_t i = 0; i + 1 < s.points.size(); ++i) {
        auto [ax, ay] = s.points[i];
        auto [bx, by] = s.points[i + 1];
        int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - reach)));
        int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(ax, bx) + reach)));
        int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - reach)));
        int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(ay, by) + reach)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                double d = dist_to_segment(x, y, ax, ay, bx, by);
                double dep = s.depth * std::exp(-d * d / (2.0 * sigma * sigma));
                double& c = carve.at(x, y);
                c = std::max(c, dep);
                if (gt != nullptr && d <= s.width_px / 2.0) {
                    gt->set(x, y, true);
                }
            }
        }
    }
}

}  // namespace detail

// Height field of an engraved disk: a bowed plateau carved by the stroke
// and crack depressions, flat surround. The annotation covers the strokes
// only and is guaranteed to stay inside the object.
inline SynthSurface generate_surface(const SynthSpec& spec) {
    check_grid_dims(spec.width, spec.height);
    if (!(spec.disk_radius > 0.0) || !(spec.disk_height >= 0.0) || !(spec.bow >= 0.0)) {
        throw ConfigError("invalid disk geometry");
    }
    if (spec.albedo_object < 0.0 || spec.albedo_object > 1.0 || spec.albedo_background < 0.0 ||
        spec.albedo_background > 1.0) {
        throw ConfigError("albedo must lie in [0,1]");
    }
    double cx = 0.5 * (spec.width - 1), cy = 0.5 * (spec.height - 1);

    SynthSurface out;
    out.depth = ScalarGrid(spec.width, spec.height, 0.0);
    out.albedo = ScalarGrid(spec.width, spec.height, spec.albedo_background);
    out.object = BinaryMask(spec.width, spec.height, false);
    out.gt = BinaryMask(spec.width, spec.height, false);

    ScalarGrid carve(spec.width, spec.height, 0.0);
    for (const Stroke& s : spec.strokes) {
        detail::stamp_stroke(s, carve, &out.gt);
    }
    for (const Stroke& s : spec.cracks) {
        detail::stamp_stroke(s, carve, nullptr);
    }

    ScalarGrid wavy(spec.width, spec.height, 0.0);
    if (spec.waviness > 0.0) {
        if (!(spec.waviness_scale > 0.0)) {
            throw ConfigError("waviness scale must be positive");
        }
        Rng rng(spec.texture_seed);
        for (double& v : wavy.samples()) {
            v = rng.normal();
        }
        wavy = gaussian_blur(wavy, spec.waviness_scale / 2.0);
        double rms = 0.0;
        for (double v : wavy.samples()) {
            rms += v * v;
        }
        rms = std::sqrt(rms / static_cast<double>(wavy.size()));
        if (rms > 0.0) {
            for (double& v : wavy.samples()) {
                v *= spec.waviness / rms;
            }
        }
    }

    double r2 = spec.disk_radius * spec.disk_radius;
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            double dx = x - cx, dy = y - cy;
            double rr = dx * dx + dy * dy;
            if (rr > r2) {
                continue;
            }
            out.object.set(x, y, true);
            out.albedo.at(x, y) = spec.albedo_object;
            double plateau = spec.disk_height - spec.bow * (rr / r2) + wavy.at(x, y);
            out.depth.at(x, y) = plateau - carve.at(x, y);
        }
    }
    for (std::size_t i = 0; i < out.gt.size(); ++i) {
        if (out.gt.bits()[i] && !out.object.bits()[i]) {
            throw ConfigError("stroke leaves the object disk");
        }
    }
    return out;
}

// A deterministic engraved-disk scene: wandering polyline strokes well
// inside the disk plus thinner, much shallower cracks as clutter. A radius
// larger than half the frame diagonal gives a rimless scene, the regime of
// an interior tile cut from a large scan.
inline SynthSpec default_synth_spec(int width = 1024, int height = 1024, std::uint64_t seed = 7,
                                    double disk_radius = 0.0) {
    SynthSpec spec;
    spec.width = width;
    spec.height = height;
    double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
    double scale = std::min(width, height) / 1024.0;
    spec.disk_radius = disk_radius > 0.0 ? disk_radius : 480.0 * scale;
    spec.disk_height = 30.0 * scale;
    spec.bow = 6.0 * scale;
    spec.waviness = 0.35 * scale;
    spec.waviness_scale = 45.0 * scale;
    spec.texture_seed = seed * 0x9e3779b97f4a7c15ULL + 1;

    Rng rng(seed);
    auto wander = [&](double max_r, int segments, double seg_len, double seg_jitter) {
        std::vector<std::pair<double, double>> pts;
        double ang = rng.uniform(0.0, 2.0 * kPi);
        double rad = rng.uniform(0.15, 0.8) * max_r;
        double px = cx + rad * std::cos(ang), py = cy + rad * std::sin(ang);
        double heading = rng.uniform(0.0, 2.0 * kPi);
        pts.emplace_back(px, py);
        for (int i = 0; i < segments; ++i) {
            heading += rng.uniform(-0.7, 0.7);
            double len = seg_len * rng.uniform(1.0 - seg_jitter, 1.0 + seg_jitter);
            px += len * std::cos(heading);
            py += len * std::sin(heading);
            // fold back toward the center if the walk drifts out
            double dx = px - cx, dy = py - cy, r = std::sqrt(dx * dx + dy * dy);
            if (r > max_r) {
                px = cx + dx / r * (2.0 * max_r - r);
                py = cy + dy / r * (2.0 * max_r - r);
            }
            pts.emplace_back(px, py);
        }
        return pts;
    };

    // keep strokes both inside the disk and comfortably inside the frame
    double safe_r = std::min(spec.disk_radius * 0.82, 0.45 * std::min(width, height));
    for (int i = 0; i < 8; ++i) {
        Stroke s;
        s.points = wander(safe_r, 2 + static_cast<int>(rng.below(4)), 90.0 * scale, 0.4);
        s.width_px = rng.uniform(4.5, 7.5) * scale;
        // a mix of deep and shallow cuts: the shallow ones overlap the
        // height range of the surface texture, which is what defeats a
        // single global threshold
        s.depth = (i % 2 == 0 ? rng.uniform(2.2, 3.5) : rng.uniform(1.0, 1.5)) * scale;
        spec.strokes.push_back(std::move(s));
    }
    for (int i = 0; i < 14; ++i) {
        Stroke s;
        s.points = wander(safe_r, 1 + static_cast<int>(rng.below(3)), 60.0 * scale, 0.5);
        s.width_px = rng.uniform(1.2, 2.0) * scale;
        s.depth = rng.uniform(0.25, 0.45) * scale;
        spec.cracks.push_back(std::move(s));
    }
    return spec;
}

// The usual capture rig: four oblique sources at compass points plus one
// overhead, all unit length.
inline std::vector<Vec3> default_light_rig() {
    double c = std::cos(kPi / 4.0), s = std::sin(kPi / 4.0);
    return {Vec3{c, 0.0, s},  Vec3{-c, 0.0, s}, Vec3{0.0, c, s},
            Vec3{0.0, -c, s}, Vec3{0.0, 0.0, 1.0}};
}

// Additive Gaussian pixel noise on every capture, clamped back to [0,1].
inline CaptureStack noisy_captures(CaptureStack stack, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) {
        throw ConfigError("noise sigma must be non-negative");
    }
    Rng rng(seed);
    for (ScalarGrid& g : stack.captures) {
        for (double& v : g.samples()) {
            v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
        }
    }
    return stack;
}

}  // namespace etch
