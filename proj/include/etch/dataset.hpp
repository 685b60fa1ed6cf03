#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "grid.hpp"
#include "grid_io.hpp"

namespace etch {

struct LightSource {
    Vec3 dir;               // unit vector pointing from surface toward the light
    double intensity = 1.0;
};

/*
 * On-disk layout of one scanned object:
 *
 *   <root>/<id>/captures/           one greyscale image per light, sorted
 *                                   filename order matches lights.json order
 *   <root>/<id>/lights.json         {"lights":[{"dir":[x,y,z],"intensity":1.0},...]}
 *   <root>/<id>/derived/            albedo.etgr normal.etgr depth.etgr prob.etgr ...
 *   <root>/<id>/masks/              object.png annotation_a.png annotation_b.png
 */
struct MirrorRecord {
    std::string id;
    std::filesystem::path dir;
    std::vector<std::filesystem::path> captures;
    std::vector<LightSource> lights;
    int width = 0;
    int height = 0;

    std::filesystem::path derived(const std::string& name) const {
        return dir / "derived" / name;
    }
    std::filesystem::path mask(const std::string& name) const { return dir / "masks" / name; }
};

inline std::vector<LightSource> parse_lights(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot open for reading: " + path.string());
    }
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed lights file " + path.string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("lights") || !j["lights"].is_array()) {
        throw FormatError("lights file must contain a \"lights\" array: " + path.string());
    }
    std::vector<LightSource> out;
    for (const auto& e : j["lights"]) {
        if (!e.is_object() || !e.contains("dir") || !e["dir"].is_array() ||
            e["dir"].size() != 3) {
            throw FormatError("light entry needs a 3-element \"dir\": " + path.string());
        }
        LightSource l;
        l.dir = Vec3{e["dir"][0].get<double>(), e["dir"][1].get<double>(),
                     e["dir"][2].get<double>()};
        if (e.contains("intensity")) {
            l.intensity = e["intensity"].get<double>();
        }
        if (!std::isfinite(l.dir.x) || !std::isfinite(l.dir.y) || !std::isfinite(l.dir.z) ||
            !std::isfinite(l.intensity)) {
            throw FormatError("non-finite light parameters: " + path.string());
        }
        if (l.intensity <= 0.0) {
            throw DataError("light intensity must be positive: " + path.string());
        }
        out.push_back(l);
    }
    return out;
}

inline void write_lights(const std::vector<LightSource>& lights,
                         const std::filesystem::path& path) {
    nlohmann::json j;
    j["lights"] = nlohmann::json::array();
    for (const LightSource& l : lights) {
        j["lights"].push_back({{"dir", {l.dir.x, l.dir.y, l.dir.z}}, {"intensity", l.intensity}});
    }
    std::ofstream f(path);
    if (!f) {
        throw IoError("cannot open for writing: " + path.string());
    }
    f << j.dump(2) << "\n";
}

// Validates the record: at least three unit lights, one capture per light,
// and every referenced raster sharing the same pixel dimensions.
inline MirrorRecord load_mirror(const std::filesystem::path& root, const std::string& id) {
    MirrorRecord rec;
    rec.id = id;
    rec.dir = root / id;
    std::filesystem::path cap_dir = rec.dir / "captures";
    if (!std::filesystem::is_directory(cap_dir)) {
        throw DataError("captures directory missing: " + cap_dir.string());
    }
    for (const auto& entry : std::filesystem::directory_iterator(cap_dir)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".pgm" || ext == ".etgr") {
            rec.captures.push_back(entry.path());
        }
    }
    std::sort(rec.captures.begin(), rec.captures.end());
    if (rec.captures.empty()) {
        throw DataError("no captures found under " + cap_dir.string());
    }

    rec.lights = parse_lights(rec.dir / "lights.json");
    if (rec.lights.size() < 3) {
        throw DataError("need at least 3 lights, got " + std::to_string(rec.lights.size()) +
                        ": " + rec.dir.string());
    }
    if (rec.lights.size() != rec.captures.size()) {
        throw DataError("light count " + std::to_string(rec.lights.size()) +
                        " does not match capture count " + std::to_string(rec.captures.size()) +
                        ": " + rec.dir.string());
    }
    for (const LightSource& l : rec.lights) {
        if (std::abs(l.dir.norm() - 1.0) > 1e-6) {
            throw DataError("light direction is not unit length: " + rec.dir.string());
        }
    }

    auto [w, h] = peek_dims(rec.captures.front().string());
    rec.width = w;
    rec.height = h;
    auto check_dims = [&](const std::filesystem::path& p) {
        auto [pw, ph] = peek_dims(p.string());
        if (pw != rec.width || ph != rec.height) {
            throw DataError("raster dimension mismatch: " + p.string() + " is " +
                            std::to_string(pw) + "x" + std::to_string(ph) + ", expected " +
                            std::to_string(rec.width) + "x" + std::to_string(rec.height));
        }
    };
    for (std::size_t i = 1; i < rec.captures.size(); ++i) {
        check_dims(rec.captures[i]);
    }
    for (const char* name : {"albedo.etgr", "normal.etgr", "depth.etgr", "prob.etgr"}) {
        std::filesystem::path p = rec.derived(name);
        if (std::filesystem::exists(p)) {
            check_dims(p);
        }
    }
    for (const char* name : {"object.png", "annotation_a.png", "annotation_b.png"}) {
        std::filesystem::path p = rec.mask(name);
        if (std::filesystem::exists(p)) {
            check_dims(p);
        }
    }
    return rec;
}

}  // namespace etch
