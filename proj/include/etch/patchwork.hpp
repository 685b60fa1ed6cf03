#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "grid.hpp"
#include "rng.hpp"

namespace etch {

enum class Split { train, val, test, unsplit };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
        default: return "unsplit";
    }
}

inline Split split_from_name(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    if (s == "unsplit") return Split::unsplit;
    throw FormatError("unknown split name: " + s);
}

// A rectangle in full-resolution coordinates. Tiles may reach into the
// padded border, so origins can be negative.
struct PatchRef {
    int x = 0, y = 0;
    int w = 0, h = 0;
    Split split = Split::unsplit;

    bool operator==(const PatchRef&) const = default;
};

struct PatchLayout {
    int full_w = 0, full_h = 0;
    int padded_w = 0, padded_h = 0;
    int pad_left = 0, pad_top = 0;  // full coords + pad offset = padded coords
    int tile_w = 0, tile_h = 0;
    int stride_x = 0, stride_y = 0;
    int tiles_x = 0, tiles_y = 0;
    int patch = 512;

    bool operator==(const PatchLayout&) const = default;
};

// Overlapping tile plan at half-tile stride. The image is padded by the
// minimal amount that makes (padded - tile) divisible by the stride, and the
// padding is split evenly between the two sides of each axis.
inline std::pair<PatchLayout, std::vector<PatchRef>> plan_tiles(int full_w, int full_h,
                                                                int tile_w = 2988,
                                                                int tile_h = 2240) {
    if (full_w <= 0 || full_h <= 0) {
        throw ConfigError("plan_tiles: image dimensions must be positive");
    }
    if (tile_w < 2 || tile_h < 2 || tile_w % 2 != 0 || tile_h % 2 != 0) {
        throw ConfigError("plan_tiles: tile dimensions must be even and at least 2");
    }
    if (full_w < tile_w || full_h < tile_h) {
        throw ConfigError("plan_tiles: image smaller than one tile");
    }
    PatchLayout lay;
    lay.full_w = full_w;
    lay.full_h = full_h;
    lay.tile_w = tile_w;
    lay.tile_h = tile_h;
    lay.stride_x = tile_w / 2;
    lay.stride_y = tile_h / 2;

    int rem_x = (full_w - tile_w) % lay.stride_x;
    int rem_y = (full_h - tile_h) % lay.stride_y;
    int pad_x = rem_x == 0 ? 0 : lay.stride_x - rem_x;
    int pad_y = rem_y == 0 ? 0 : lay.stride_y - rem_y;
    lay.padded_w = full_w + pad_x;
    lay.padded_h = full_h + pad_y;
    lay.pad_left = pad_x / 2;
    lay.pad_top = pad_y / 2;
    lay.tiles_x = (lay.padded_w - tile_w) / lay.stride_x + 1;
    lay.tiles_y = (lay.padded_h - tile_h) / lay.stride_y + 1;

    std::vector<PatchRef> tiles;
    tiles.reserve(static_cast<std::size_t>(lay.tiles_x) * lay.tiles_y);
    for (int ty = 0; ty < lay.tiles_y; ++ty) {
        for (int tx = 0; tx < lay.tiles_x; ++tx) {
            PatchRef r;
            r.x = tx * lay.stride_x - lay.pad_left;
            r.y = ty * lay.stride_y - lay.pad_top;
            r.w = tile_w;
            r.h = tile_h;
            r.split = Split::train;
            tiles.push_back(r);
        }
    }
    return {lay, tiles};
}

// Non-overlapping evaluation patches anchored at the origin; the ragged
// remainder on the right and bottom is not evaluated.
inline std::vector<PatchRef> plan_eval_patches(int full_w, int full_h, int patch = 512) {
    if (full_w <= 0 || full_h <= 0) {
        throw ConfigError("plan_eval_patches: image dimensions must be positive");
    }
    if (patch < 1) {
        throw ConfigError("plan_eval_patches: patch size must be positive");
    }
    int nx = full_w / patch;
    int ny = full_h / patch;
    std::vector<PatchRef> out;
    out.reserve(static_cast<std::size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            out.push_back(PatchRef{i * patch, j * patch, patch, patch, Split::unsplit});
        }
    }
    return out;
}

// Seeded shuffle, first half (rounded up) becomes validation, the rest test.
// Patch order in the result is the original raster order.
inline std::vector<PatchRef> split_eval(std::vector<PatchRef> patches, std::uint64_t seed) {
    std::vector<std::size_t> order(patches.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    Rng rng(seed);
    rng.shuffle(order);
    std::size_t n_val = (patches.size() + 1) / 2;
    for (std::size_t i = 0; i < order.size(); ++i) {
        patches[order[i]].split = i < n_val ? Split::val : Split::test;
    }
    return patches;
}

// Uniformly random patch origins inside one tile. Tiles whose in-image part
// carries no annotated pixel yield nothing; the caller skips them.
inline std::vector<PatchRef> sample_train_patches(const PatchRef& tile,
                                                  const BinaryMask& annotation, int patch,
                                                  int count, Rng& rng) {
    if (patch < 1 || patch > tile.w || patch > tile.h) {
        throw ConfigError("sample_train_patches: patch does not fit in tile");
    }
    if (count < 0) {
        throw ConfigError("sample_train_patches: negative count");
    }
    int x0 = std::max(tile.x, 0);
    int y0 = std::max(tile.y, 0);
    int x1 = std::min(tile.x + tile.w, annotation.width());
    int y1 = std::min(tile.y + tile.h, annotation.height());
    bool any = false;
    for (int y = y0; y < y1 && !any; ++y) {
        for (int x = x0; x < x1; ++x) {
            if (annotation.get(x, y)) {
                any = true;
                break;
            }
        }
    }
    if (!any) {
        return {};
    }
    std::vector<PatchRef> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        PatchRef r;
        r.x = tile.x + static_cast<int>(rng.below(static_cast<std::uint64_t>(tile.w - patch) + 1));
        r.y = tile.y + static_cast<int>(rng.below(static_cast<std::uint64_t>(tile.h - patch) + 1));
        r.w = patch;
        r.h = patch;
        r.split = Split::train;
        out.push_back(r);
    }
    return out;
}

enum class PadMode { reflect, zero };

inline ScalarGrid extract(const ScalarGrid& g, const PatchRef& ref,
                          PadMode mode = PadMode::reflect) {
    if (ref.w < 1 || ref.h < 1) {
        throw ConfigError("extract: empty patch");
    }
    ScalarGrid out(ref.w, ref.h);
    for (int y = 0; y < ref.h; ++y) {
        for (int x = 0; x < ref.w; ++x) {
            int sx = ref.x + x, sy = ref.y + y;
            if (sx >= 0 && sy >= 0 && sx < g.width() && sy < g.height()) {
                out.at(x, y) = g.at(sx, sy);
            } else if (mode == PadMode::reflect) {
                out.at(x, y) = g.at_reflect(sx, sy);
            }
        }
    }
    return out;
}

inline VectorGrid extract(const VectorGrid& g, const PatchRef& ref,
                          PadMode mode = PadMode::reflect) {
    if (ref.w < 1 || ref.h < 1) {
        throw ConfigError("extract: empty patch");
    }
    VectorGrid out(ref.w, ref.h);
    for (int y = 0; y < ref.h; ++y) {
        for (int x = 0; x < ref.w; ++x) {
            int sx = ref.x + x, sy = ref.y + y;
            if (sx >= 0 && sy >= 0 && sx < g.width() && sy < g.height()) {
                out.at(x, y) = g.at(sx, sy);
                out.set_valid(x, y, g.valid(sx, sy));
            } else if (mode == PadMode::reflect) {
                int rx = reflect_index(sx, g.width()), ry = reflect_index(sy, g.height());
                out.at(x, y) = g.at(rx, ry);
                out.set_valid(x, y, g.valid(rx, ry));
            } else {
                out.at(x, y) = Vec3{0.0, 0.0, 1.0};
                out.set_valid(x, y, false);
            }
        }
    }
    return out;
}

inline BinaryMask extract(const BinaryMask& m, const PatchRef& ref,
                          PadMode mode = PadMode::zero) {
    if (ref.w < 1 || ref.h < 1) {
        throw ConfigError("extract: empty patch");
    }
    BinaryMask out(ref.w, ref.h);
    for (int y = 0; y < ref.h; ++y) {
        for (int x = 0; x < ref.w; ++x) {
            int sx = ref.x + x, sy = ref.y + y;
            if (sx >= 0 && sy >= 0 && sx < m.width() && sy < m.height()) {
                out.set(x, y, m.get(sx, sy));
            } else if (mode == PadMode::reflect) {
                out.set(x, y, m.get(reflect_index(sx, m.width()), reflect_index(sy, m.height())));
            }
        }
    }
    return out;
}

// 2x2 block mean; both dimensions must be even.
inline ScalarGrid resize_half(const ScalarGrid& g) {
    if (g.empty() || g.width() % 2 != 0 || g.height() % 2 != 0) {
        throw ConfigError("resize_half: dimensions must be even");
    }
    ScalarGrid out(g.width() / 2, g.height() / 2);
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            out.at(x, y) = 0.25 * (g.at(2 * x, 2 * y) + g.at(2 * x + 1, 2 * y) +
                                   g.at(2 * x, 2 * y + 1) + g.at(2 * x + 1, 2 * y + 1));
        }
    }
    return out;
}

// Bilinear x2 with half-pixel centers: output pixel i samples the input at
// i/2 - 1/4, clamped at the borders. Constants stay constant and the output
// range never exceeds the input range.
inline ScalarGrid upsample_double(const ScalarGrid& g) {
    if (g.empty()) {
        throw ConfigError("upsample_double: empty grid");
    }
    ScalarGrid out(2 * g.width(), 2 * g.height());
    for (int y = 0; y < out.height(); ++y) {
        double v = 0.5 * y - 0.25;
        int y0 = static_cast<int>(std::floor(v));
        double fy = v - y0;
        int ya = clamp_index(y0, g.height());
        int yb = clamp_index(y0 + 1, g.height());
        for (int x = 0; x < out.width(); ++x) {
            double u = 0.5 * x - 0.25;
            int x0 = static_cast<int>(std::floor(u));
            double fx = u - x0;
            int xa = clamp_index(x0, g.width());
            int xb = clamp_index(x0 + 1, g.width());
            out.at(x, y) = (1.0 - fy) * ((1.0 - fx) * g.at(xa, ya) + fx * g.at(xb, ya)) +
                           fy * ((1.0 - fx) * g.at(xa, yb) + fx * g.at(xb, yb));
        }
    }
    return out;
}

inline ScalarGrid flip_h(const ScalarGrid& g) {
    ScalarGrid out(g.width(), g.height());
    for (int y = 0; y < g.height(); ++y) {
        for (int x = 0; x < g.width(); ++x) {
            out.at(x, y) = g.at(g.width() - 1 - x, y);
        }
    }
    return out;
}

inline ScalarGrid flip_v(const ScalarGrid& g) {
    ScalarGrid out(g.width(), g.height());
    for (int y = 0; y < g.height(); ++y) {
        for (int x = 0; x < g.width(); ++x) {
            out.at(x, y) = g.at(x, g.height() - 1 - y);
        }
    }
    return out;
}

// Mirroring flips the corresponding tangential normal component.
inline VectorGrid flip_h(const VectorGrid& g) {
    VectorGrid out(g.width(), g.height());
    for (int y = 0; y < g.height(); ++y) {
        for (int x = 0; x < g.width(); ++x) {
            int sx = g.width() - 1 - x;
            Vec3 v = g.at(sx, y);
            out.at(x, y) = Vec3{-v.x, v.y, v.z};
            out.set_valid(x, y, g.valid(sx, y));
        }
    }
    return out;
}

inline VectorGrid flip_v(const VectorGrid& g) {
    VectorGrid out(g.width(), g.height());
    for (int y = 0; y < g.height(); ++y) {
        for (int x = 0; x < g.width(); ++x) {
            int sy = g.height() - 1 - y;
            Vec3 v = g.at(x, sy);
            out.at(x, y) = Vec3{v.x, -v.y, v.z};
            out.set_valid(x, y, g.valid(x, sy));
        }
    }
    return out;
}

namespace detail {

// One quarter turn: input (x,y) lands on output (y, w-1-x).
inline ScalarGrid rot90_once(const ScalarGrid& g) {
    ScalarGrid out(g.height(), g.width());
    for (int y = 0; y < g.height(); ++y) {
        for (int x = 0; x < g.width(); ++x) {
            out.at(y, g.width() - 1 - x) = g.at(x, y);
        }
    }
    return out;
}

inline VectorGrid rot90_once(const VectorGrid& g) {
    VectorGrid out(g.height(), g.width());
    for (int y = 0; y < g.height(); ++y) {
        for (int x = 0; x < g.width(); ++x) {
            Vec3 v = g.at(x, y);
            // the in-plane frame turns with the raster: (vx,vy) -> (vy,-vx)
            out.at(y, g.width() - 1 - x) = Vec3{v.y, -v.x, v.z};
            out.set_valid(y, g.width() - 1 - x, g.valid(x, y));
        }
    }
    return out;
}

}  // namespace detail

template <typename GridT>
inline GridT rot90(const GridT& g, int turns) {
    int t = ((turns % 4) + 4) % 4;
    GridT out = g;
    for (int i = 0; i < t; ++i) {
        out = detail::rot90_once(out);
    }
    return out;
}

// Translation with reflected fill. The offset is capped at a quarter of the
// smaller side so the reflected content stays marginal.
inline void check_shift(int dx, int dy, int w, int h) {
    int limit = std::min(w, h) / 4;
    if (std::abs(dx) >= limit || std::abs(dy) >= limit) {
        throw ConfigError("shift exceeds a quarter of the patch");
    }
}

inline ScalarGrid shift(const ScalarGrid& g, int dx, int dy) {
    check_shift(dx, dy, g.width(), g.height());
    ScalarGrid out(g.width(), g.height());
    for (int y = 0; y < g.height(); ++y) {
        for (int x = 0; x < g.width(); ++x) {
            out.at(x, y) = g.at_reflect(x - dx, y - dy);
        }
    }
    return out;
}

inline VectorGrid shift(const VectorGrid& g, int dx, int dy) {
    check_shift(dx, dy, g.width(), g.height());
    VectorGrid out(g.width(), g.height());
    for (int y = 0; y < g.height(); ++y) {
        for (int x = 0; x < g.width(); ++x) {
            int sx = reflect_index(x - dx, g.width()), sy = reflect_index(y - dy, g.height());
            out.at(x, y) = g.at(sx, sy);
            out.set_valid(x, y, g.valid(sx, sy));
        }
    }
    return out;
}

// Rectangle transplant between two patch/label pairs.
inline std::pair<ScalarGrid, ScalarGrid> cutmix(const ScalarGrid& a, const ScalarGrid& label_a,
                                                const ScalarGrid& b, const ScalarGrid& label_b,
                                                const Rect& r) {
    require_same_dims(a.width(), a.height(), label_a.width(), label_a.height(), "cutmix");
    require_same_dims(a.width(), a.height(), b.width(), b.height(), "cutmix");
    require_same_dims(b.width(), b.height(), label_b.width(), label_b.height(), "cutmix");
    if (r.w < 1 || r.h < 1) {
        throw ConfigError("cutmix: empty rectangle");
    }
    if (r.x < 0 || r.y < 0 || r.x + r.w > a.width() || r.y + r.h > a.height()) {
        throw ConfigError("cutmix: rectangle outside patch");
    }
    ScalarGrid out = a, label = label_a;
    for (int y = r.y; y < r.y + r.h; ++y) {
        for (int x = r.x; x < r.x + r.w; ++x) {
            out.at(x, y) = b.at(x, y);
            label.at(x, y) = label_b.at(x, y);
        }
    }
    return {out, label};
}

// Convex blend of two patch/label pairs; the mixing weight stays in the
// narrow middle band so neither sample dominates.
inline std::pair<ScalarGrid, ScalarGrid> mixup(const ScalarGrid& a, const ScalarGrid& label_a,
                                               const ScalarGrid& b, const ScalarGrid& label_b,
                                               double lambda) {
    require_same_dims(a.width(), a.height(), label_a.width(), label_a.height(), "mixup");
    require_same_dims(a.width(), a.height(), b.width(), b.height(), "mixup");
    require_same_dims(b.width(), b.height(), label_b.width(), label_b.height(), "mixup");
    if (!(lambda >= 0.4 && lambda <= 0.6)) {
        throw ConfigError("mixup weight must lie in [0.4, 0.6]");
    }
    ScalarGrid out(a.width(), a.height()), label(a.width(), a.height());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.samples()[i] = lambda * a.samples()[i] + (1.0 - lambda) * b.samples()[i];
        label.samples()[i] = lambda * label_a.samples()[i] + (1.0 - lambda) * label_b.samples()[i];
    }
    return {out, label};
}

struct ManifestEntry {
    std::string name;
    PatchRef ref;
};

struct Manifest {
    PatchLayout layout;
    std::vector<ManifestEntry> entries;
};

inline void to_json(nlohmann::json& j, const PatchLayout& l) {
    j = nlohmann::json{{"full_w", l.full_w},     {"full_h", l.full_h},
                       {"padded_w", l.padded_w}, {"padded_h", l.padded_h},
                       {"pad_left", l.pad_left}, {"pad_top", l.pad_top},
                       {"tile_w", l.tile_w},     {"tile_h", l.tile_h},
                       {"stride_x", l.stride_x}, {"stride_y", l.stride_y},
                       {"tiles_x", l.tiles_x},   {"tiles_y", l.tiles_y},
                       {"patch", l.patch}};
}

inline void from_json(const nlohmann::json& j, PatchLayout& l) {
    j.at("full_w").get_to(l.full_w);
    j.at("full_h").get_to(l.full_h);
    j.at("padded_w").get_to(l.padded_w);
    j.at("padded_h").get_to(l.padded_h);
    j.at("pad_left").get_to(l.pad_left);
    j.at("pad_top").get_to(l.pad_top);
    j.at("tile_w").get_to(l.tile_w);
    j.at("tile_h").get_to(l.tile_h);
    j.at("stride_x").get_to(l.stride_x);
    j.at("stride_y").get_to(l.stride_y);
    j.at("tiles_x").get_to(l.tiles_x);
    j.at("tiles_y").get_to(l.tiles_y);
    j.at("patch").get_to(l.patch);
}

inline void to_json(nlohmann::json& j, const PatchRef& r) {
    j = nlohmann::json{{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h},
                       {"split", split_name(r.split)}};
}

inline void from_json(const nlohmann::json& j, PatchRef& r) {
    j.at("x").get_to(r.x);
    j.at("y").get_to(r.y);
    j.at("w").get_to(r.w);
    j.at("h").get_to(r.h);
    r.split = split_from_name(j.at("split").get<std::string>());
}

inline void to_json(nlohmann::json& j, const ManifestEntry& e) {
    to_json(j, e.ref);
    j["name"] = e.name;
}

inline void from_json(const nlohmann::json& j, ManifestEntry& e) {
    from_json(j, e.ref);
    j.at("name").get_to(e.name);
}

inline void to_json(nlohmann::json& j, const Manifest& m) {
    j = nlohmann::json{{"layout", m.layout}, {"patches", m.entries}};
}

inline void from_json(const nlohmann::json& j, Manifest& m) {
    j.at("layout").get_to(m.layout);
    j.at("patches").get_to(m.entries);
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) {
        throw IoError("cannot open for writing: " + path.string());
    }
    f << nlohmann::json(m).dump(2) << "\n";
}

inline Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot open for reading: " + path.string());
    }
    nlohmann::json j;
    try {
        f >> j;
        return j.get<Manifest>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed manifest " + path.string() + ": " + e.what());
    }
}

}  // namespace etch
