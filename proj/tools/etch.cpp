// Command line front end for the engraving segmentation pipeline. Every
// subcommand reads and writes one scanned-object directory (see
// dataset.hpp for the layout) and records its effective parameters in
// <root>/config_used.json, so a finished directory documents how it was
// produced. Exit codes: 0 success, 2 bad configuration or usage, 3 bad
// data.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "etch/dataset.hpp"
#include "etch/error.hpp"
#include "etch/grid.hpp"
#include "etch/grid_io.hpp"
#include "etch/metrics.hpp"
#include "etch/overlay.hpp"
#include "etch/patchwork.hpp"
#include "etch/photometric.hpp"
#include "etch/predict.hpp"
#include "etch/preprocess.hpp"
#include "etch/rng.hpp"
#include "etch/stitch.hpp"
#include "etch/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path normalize_dir(const std::string& dir) {
    fs::path d = fs::absolute(fs::path(dir)).lexically_normal();
    if (d.filename().empty()) {
        d = d.parent_path();
    }
    return d;
}

etch::MirrorRecord load_record(const std::string& dir) {
    fs::path d = normalize_dir(dir);
    return etch::load_mirror(d.parent_path(), d.filename().string());
}

void ensure_dirs(const fs::path& root) {
    fs::create_directories(root / "captures");
    fs::create_directories(root / "derived");
    fs::create_directories(root / "masks");
    fs::create_directories(root / "eval");
}

// One growing provenance file per object directory, keyed by stage.
void record_config(const fs::path& root, const std::string& stage, const json& params) {
    fs::path p = root / "config_used.json";
    json j = json::object();
    if (fs::exists(p)) {
        std::ifstream f(p);
        try {
            f >> j;
        } catch (const json::exception&) {
            j = json::object();
        }
        if (!j.is_object()) {
            j = json::object();
        }
    }
    j[stage] = params;
    std::ofstream f(p);
    if (!f) {
        throw etch::IoError("cannot open for writing: " + p.string());
    }
    f << j.dump(2) << "\n";
}

json load_config_section(const std::string& path, const std::string& stage) {
    if (path.empty()) {
        return json::object();
    }
    std::ifstream f(path);
    if (!f) {
        throw etch::IoError("cannot open config: " + path);
    }
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw etch::FormatError("malformed config " + path + ": " + e.what());
    }
    if (!j.is_object()) {
        throw etch::FormatError("config root must be an object: " + path);
    }
    if (!j.contains(stage)) {
        return json::object();
    }
    if (!j[stage].is_object()) {
        throw etch::FormatError("config section \"" + stage + "\" must be an object: " + path);
    }
    return j[stage];
}

// Config values fill in only where the flag was not given on the command
// line; explicit flags always win.
template <typename T>
void cfg_override(const json& sec, const char* key, const CLI::Option* opt, T& var) {
    if (opt->count() == 0 && sec.contains(key)) {
        try {
            var = sec.at(key).get<T>();
        } catch (const json::exception& e) {
            throw etch::ConfigError(std::string("bad config value for \"") + key +
                                    "\": " + e.what());
        }
    }
}

std::string annotation_file(const std::string& which) {
    if (which != "a" && which != "b") {
        throw etch::ConfigError("annotation must be \"a\" or \"b\", got \"" + which + "\"");
    }
    return "annotation_" + which + ".png";
}

etch::BinaryMask object_mask_or_estimate(const etch::MirrorRecord& rec) {
    fs::path p = rec.mask("object.png");
    if (fs::exists(p)) {
        return etch::read_mask(p.string());
    }
    fs::path albedo = rec.derived("albedo.etgr");
    if (!fs::exists(albedo)) {
        throw etch::DataError("no masks/object.png and no derived/albedo.etgr to estimate from: " +
                              rec.dir.string());
    }
    return etch::estimate_object_mask(etch::read_scalar(albedo.string()));
}

// The patch prediction files must all share one square size; that size is
// the stitching window.
int common_patch_size(const etch::Manifest& man) {
    if (man.entries.empty()) {
        throw etch::DataError("manifest has no patches");
    }
    int size = man.entries.front().ref.w;
    for (const etch::ManifestEntry& e : man.entries) {
        if (e.ref.w != size || e.ref.h != size) {
            throw etch::DataError("stitching needs uniform square patches, patch " + e.name +
                                  " is " + std::to_string(e.ref.w) + "x" +
                                  std::to_string(e.ref.h));
        }
    }
    return size;
}

std::string format_threshold(double t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", t);
    return buf;
}

void print_report(const char* label, const etch::MetricsReport& r) {
    auto show = [](const std::optional<double>& v) {
        return v ? std::to_string(*v) : std::string("undefined");
    };
    std::cout << label << " pfm=" << show(r.pfm) << " iou=" << show(r.iou)
              << " precision=" << show(r.precision) << " p_recall=" << show(r.p_recall) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"photometric engraving toolkit"};
    app.require_subcommand(1);

    try {
        // ------------------------------------------------------------ synth
        auto* synth = app.add_subcommand("synth", "generate a synthetic scanned object");
        std::string synth_out, synth_config;
        int synth_size = 1024;
        std::uint64_t synth_seed = 7;
        double synth_noise = 0.0, synth_radius = 0.0;
        synth->add_option("--out", synth_out, "object directory to create")->required();
        auto* o_size = synth->add_option("--size", synth_size, "canvas size in pixels");
        auto* o_seed = synth->add_option("--seed", synth_seed, "stroke layout seed");
        auto* o_noise = synth->add_option("--noise", synth_noise, "capture noise sigma");
        auto* o_radius = synth->add_option(
            "--disk-radius", synth_radius,
            "disk radius in px; above half the diagonal the scene has no rim");
        synth->add_option("--config", synth_config, "JSON config file");
        synth->callback([&] {
            json sec = load_config_section(synth_config, "synth");
            cfg_override(sec, "size", o_size, synth_size);
            cfg_override(sec, "seed", o_seed, synth_seed);
            cfg_override(sec, "noise", o_noise, synth_noise);
            cfg_override(sec, "disk_radius", o_radius, synth_radius);

            etch::SynthSpec spec =
                etch::default_synth_spec(synth_size, synth_size, synth_seed, synth_radius);
            etch::SynthSurface s = etch::generate_surface(spec);
            etch::CaptureStack stack =
                etch::render_captures(s.depth, s.albedo, etch::default_light_rig());
            if (synth_noise > 0.0) {
                stack = etch::noisy_captures(std::move(stack), synth_noise, synth_seed + 1);
            }

            fs::path root = normalize_dir(synth_out);
            ensure_dirs(root);
            std::vector<etch::LightSource> lights;
            for (std::size_t k = 0; k < stack.lights.size(); ++k) {
                char name[32];
                std::snprintf(name, sizeof(name), "capture_%02zu.png", k);
                etch::write_png_gray(stack.captures[k], (root / "captures" / name).string(), 16);
                lights.push_back({stack.lights[k], stack.intensities[k]});
            }
            etch::write_lights(lights, root / "lights.json");
            etch::write_mask(s.object, (root / "masks" / "object.png").string());
            etch::write_mask(s.gt, (root / "masks" / "annotation_a.png").string());
            etch::write_grid(s.depth, (root / "derived" / "depth_true.etgr").string());
            etch::write_grid(s.albedo, (root / "derived" / "albedo_true.etgr").string());
            record_config(root, "synth",
                          json{{"size", synth_size},
                               {"seed", synth_seed},
                               {"noise", synth_noise},
                               {"disk_radius", spec.disk_radius}});
            std::cout << "wrote synthetic object " << root.string() << " ("
                      << stack.captures.size() << " captures, " << s.gt.count()
                      << " annotated px)\n";
        });

        // --------------------------------------------------------- ps-solve
        auto* solve = app.add_subcommand("ps-solve", "recover albedo and normals from captures");
        std::string solve_root, solve_config;
        etch::PsOptions ps_opt;
        solve->add_option("--root", solve_root, "object directory")->required();
        auto* o_shadow = solve->add_option("--shadow-floor", ps_opt.shadow_floor,
                                           "discard captures darker than this");
        auto* o_highlight = solve->add_option("--highlight-ceil", ps_opt.highlight_ceil,
                                              "discard captures brighter than this");
        auto* o_albedo_floor =
            solve->add_option("--albedo-floor", ps_opt.albedo_floor, "minimum usable albedo");
        solve->add_option("--config", solve_config, "JSON config file");
        solve->callback([&] {
            json sec = load_config_section(solve_config, "ps-solve");
            cfg_override(sec, "shadow_floor", o_shadow, ps_opt.shadow_floor);
            cfg_override(sec, "highlight_ceil", o_highlight, ps_opt.highlight_ceil);
            cfg_override(sec, "albedo_floor", o_albedo_floor, ps_opt.albedo_floor);

            etch::MirrorRecord rec = load_record(solve_root);
            std::vector<etch::ScalarGrid> captures;
            captures.reserve(rec.captures.size());
            for (const fs::path& p : rec.captures) {
                captures.push_back(etch::read_image_gray(p.string()));
            }
            std::vector<etch::Vec3> dirs;
            std::vector<double> intensities;
            for (const etch::LightSource& l : rec.lights) {
                dirs.push_back(l.dir);
                intensities.push_back(l.intensity);
            }
            etch::CaptureStack stack = etch::make_capture_stack(
                std::move(captures), std::move(dirs), std::move(intensities));
            etch::PsResult res = etch::solve_ps(stack, ps_opt);

            fs::create_directories(rec.dir / "derived");
            etch::write_grid(res.albedo, rec.derived("albedo.etgr").string());
            etch::write_grid(res.normals, rec.derived("normal.etgr").string());
            etch::write_mask(res.validity, rec.derived("validity.png").string());
            record_config(rec.dir, "ps-solve",
                          json{{"shadow_floor", ps_opt.shadow_floor},
                               {"highlight_ceil", ps_opt.highlight_ceil},
                               {"albedo_floor", ps_opt.albedo_floor},
                               {"condition_number", res.condition_number}});
            std::cout << "solved " << rec.width << "x" << rec.height
                      << " (condition " << res.condition_number << ", valid "
                      << res.validity.count() << "/" << res.validity.size() << ")\n";
        });

        // -------------------------------------------------------- integrate
        auto* integ = app.add_subcommand("integrate", "integrate normals into a height map");
        std::string integ_root;
        integ->add_option("--root", integ_root, "object directory")->required();
        integ->callback([&] {
            etch::MirrorRecord rec = load_record(integ_root);
            fs::path normal_path = rec.derived("normal.etgr");
            if (!fs::exists(normal_path)) {
                throw etch::DataError("no derived/normal.etgr, run ps-solve first: " +
                                      rec.dir.string());
            }
            etch::VectorGrid normals = etch::read_vector(normal_path.string());
            etch::BinaryMask validity(normals.width(), normals.height(), true);
            fs::path validity_path = rec.derived("validity.png");
            if (fs::exists(validity_path)) {
                validity = etch::read_mask(validity_path.string());
            }
            etch::ScalarGrid depth = etch::integrate_normals(normals, validity);
            etch::write_grid(depth, rec.derived("depth.etgr").string());
            record_config(rec.dir, "integrate",
                          json{{"validity", fs::exists(validity_path)}});
            std::cout << "integrated " << depth.width() << "x" << depth.height() << " height map\n";
        });

        // ------------------------------------------------------- preprocess
        auto* prep = app.add_subcommand("preprocess", "high-pass and normalize the height map");
        std::string prep_root, prep_config;
        double prep_sigma = 20.0, prep_k = 3.0;
        double prep_ppm = 0.0;
        prep->add_option("--root", prep_root, "object directory")->required();
        auto* o_sigma = prep->add_option(
            "--sigma", prep_sigma, "high-pass gaussian sigma in px at the reference resolution");
        auto* o_k = prep->add_option("--clip-k", prep_k, "clip at mean +- k stddev");
        auto* o_ppm = prep->add_option("--ppm", prep_ppm,
                                       "resolution in px/mm; scales sigma from the reference");
        prep->add_option("--config", prep_config, "JSON config file");
        prep->callback([&] {
            json sec = load_config_section(prep_config, "preprocess");
            cfg_override(sec, "sigma", o_sigma, prep_sigma);
            cfg_override(sec, "clip_k", o_k, prep_k);
            cfg_override(sec, "ppm", o_ppm, prep_ppm);

            etch::MirrorRecord rec = load_record(prep_root);
            fs::path depth_path = rec.derived("depth.etgr");
            if (!fs::exists(depth_path)) {
                throw etch::DataError("no derived/depth.etgr, run integrate first: " +
                                      rec.dir.string());
            }
            etch::ScalarGrid depth = etch::read_scalar(depth_path.string());
            std::optional<double> ppm;
            if (o_ppm->count() > 0 || sec.contains("ppm")) {
                ppm = prep_ppm;
            }
            double sigma = etch::scaled_sigma(prep_sigma, ppm);
            etch::ScalarGrid hp = etch::highpass_depth(depth, sigma);

            etch::BinaryMask stat_mask(depth.width(), depth.height(), true);
            fs::path object_path = rec.mask("object.png");
            if (fs::exists(object_path)) {
                stat_mask = etch::read_mask(object_path.string());
            }
            etch::ClipResult clip = etch::clip_and_rescale(hp, stat_mask, prep_k);
            etch::write_grid(clip.grid, rec.derived("pre.etgr").string());
            record_config(rec.dir, "preprocess",
                          json{{"sigma", sigma},
                               {"clip_k", prep_k},
                               {"clip_lo", clip.lo},
                               {"clip_hi", clip.hi},
                               {"stats_over_object", fs::exists(object_path)}});
            std::cout << "preprocessed with sigma " << sigma << ", clip [" << clip.lo << ", "
                      << clip.hi << "]\n";
        });

        // ------------------------------------------------------------- tile
        auto* tile = app.add_subcommand("tile", "plan tiles, eval patches and train samples");
        std::string tile_root, tile_config;
        int tile_w = 2988, tile_h = 2240, tile_patch = 512, tile_train = 10;
        std::uint64_t tile_seed = 5;
        tile->add_option("--root", tile_root, "object directory")->required();
        auto* o_tw = tile->add_option("--tile-w", tile_w, "tile width");
        auto* o_th = tile->add_option("--tile-h", tile_h, "tile height");
        auto* o_patch = tile->add_option("--patch", tile_patch, "evaluation patch size");
        auto* o_train = tile->add_option("--train-per-tile", tile_train,
                                         "random training patches per annotated tile");
        auto* o_tseed = tile->add_option("--seed", tile_seed, "split and sampling seed");
        tile->add_option("--config", tile_config, "JSON config file");
        tile->callback([&] {
            json sec = load_config_section(tile_config, "tile");
            cfg_override(sec, "tile_w", o_tw, tile_w);
            cfg_override(sec, "tile_h", o_th, tile_h);
            cfg_override(sec, "patch", o_patch, tile_patch);
            cfg_override(sec, "train_per_tile", o_train, tile_train);
            cfg_override(sec, "seed", o_tseed, tile_seed);

            etch::MirrorRecord rec = load_record(tile_root);
            auto [layout, tiles] = etch::plan_tiles(rec.width, rec.height, tile_w, tile_h);
            layout.patch = tile_patch;
            std::vector<etch::PatchRef> eval =
                etch::split_eval(etch::plan_eval_patches(rec.width, rec.height, tile_patch),
                                 tile_seed);

            etch::Manifest man;
            man.layout = layout;
            char name[48];
            for (std::size_t i = 0; i < tiles.size(); ++i) {
                std::snprintf(name, sizeof(name), "tile_%04zu", i);
                man.entries.push_back({name, tiles[i]});
            }
            for (std::size_t i = 0; i < eval.size(); ++i) {
                std::snprintf(name, sizeof(name), "eval_%04zu", i);
                man.entries.push_back({name, eval[i]});
            }
            std::size_t train_total = 0;
            fs::path ann_path = rec.mask("annotation_a.png");
            if (fs::exists(ann_path) && tile_train > 0) {
                etch::BinaryMask ann = etch::read_mask(ann_path.string());
                etch::Rng rng(tile_seed);
                for (std::size_t i = 0; i < tiles.size(); ++i) {
                    std::vector<etch::PatchRef> samples =
                        etch::sample_train_patches(tiles[i], ann, tile_patch, tile_train, rng);
                    for (std::size_t k = 0; k < samples.size(); ++k) {
                        std::snprintf(name, sizeof(name), "train_%04zu_%02zu", i, k);
                        man.entries.push_back({name, samples[k]});
                        ++train_total;
                    }
                }
            }
            etch::save_manifest(man, rec.derived("manifest.json"));
            record_config(rec.dir, "tile",
                          json{{"tile_w", tile_w},
                               {"tile_h", tile_h},
                               {"patch", tile_patch},
                               {"train_per_tile", tile_train},
                               {"seed", tile_seed}});
            std::cout << "planned " << tiles.size() << " tiles, " << eval.size()
                      << " eval patches, " << train_total << " train patches\n";
        });

        // ---------------------------------------------------------- augment
        auto* aug = app.add_subcommand("augment", "apply one augmentation to a grid file");
        std::string aug_in, aug_in2, aug_label, aug_label2, aug_out, aug_out_label, aug_op;
        int aug_turns = 1, aug_dx = 0, aug_dy = 0;
        std::vector<int> aug_rect;
        double aug_lambda = 0.5;
        aug->add_option("--in", aug_in, "input grid (.etgr)")->required();
        aug->add_option("--op", aug_op, "flip_h | flip_v | rot90 | shift | cutmix | mixup")
            ->required();
        aug->add_option("--out", aug_out, "output grid")->required();
        aug->add_option("--turns", aug_turns, "rot90: quarter turns");
        aug->add_option("--dx", aug_dx, "shift: x offset");
        aug->add_option("--dy", aug_dy, "shift: y offset");
        aug->add_option("--in2", aug_in2, "cutmix/mixup: second input grid");
        aug->add_option("--label", aug_label, "cutmix/mixup: label grid for --in");
        aug->add_option("--label2", aug_label2, "cutmix/mixup: label grid for --in2");
        aug->add_option("--out-label", aug_out_label, "cutmix/mixup: output label grid");
        aug->add_option("--rect", aug_rect, "cutmix: x,y,w,h of the transplanted window")
            ->delimiter(',')
            ->expected(4);
        aug->add_option("--lambda", aug_lambda, "mixup: blend weight in [0.4, 0.6]");
        aug->callback([&] {
            if (aug_op == "cutmix" || aug_op == "mixup") {
                if (aug_in2.empty() || aug_label.empty() || aug_label2.empty() ||
                    aug_out_label.empty()) {
                    throw etch::ConfigError(aug_op +
                                            " needs --in2, --label, --label2 and --out-label");
                }
                etch::ScalarGrid a = etch::read_scalar(aug_in);
                etch::ScalarGrid la = etch::read_scalar(aug_label);
                etch::ScalarGrid b = etch::read_scalar(aug_in2);
                etch::ScalarGrid lb = etch::read_scalar(aug_label2);
                std::pair<etch::ScalarGrid, etch::ScalarGrid> r =
                    aug_op == "cutmix"
                        ? etch::cutmix(a, la, b, lb,
                                       etch::Rect{aug_rect.empty() ? 0 : aug_rect[0],
                                                  aug_rect.empty() ? 0 : aug_rect[1],
                                                  aug_rect.empty() ? a.width() / 2 : aug_rect[2],
                                                  aug_rect.empty() ? a.height() / 2 : aug_rect[3]})
                        : etch::mixup(a, la, b, lb, aug_lambda);
                etch::write_grid(r.first, aug_out);
                etch::write_grid(r.second, aug_out_label);
                std::cout << "wrote " << aug_out << " and " << aug_out_label << "\n";
                return;
            }
            auto apply = [&](auto grid) {
                if (aug_op == "flip_h") {
                    return etch::flip_h(grid);
                }
                if (aug_op == "flip_v") {
                    return etch::flip_v(grid);
                }
                if (aug_op == "rot90") {
                    return etch::rot90(grid, aug_turns);
                }
                if (aug_op == "shift") {
                    return etch::shift(grid, aug_dx, aug_dy);
                }
                throw etch::ConfigError("unknown augmentation op: " + aug_op);
            };
            std::variant<etch::ScalarGrid, etch::VectorGrid> g = etch::read_grid(aug_in);
            if (std::holds_alternative<etch::ScalarGrid>(g)) {
                etch::write_grid(apply(std::get<etch::ScalarGrid>(g)), aug_out);
            } else {
                etch::write_grid(apply(std::get<etch::VectorGrid>(g)), aug_out);
            }
            std::cout << "wrote " << aug_out << "\n";
        });

        // ---------------------------------------------------------- predict
        auto* pred = app.add_subcommand("predict", "probability map from the preprocessed grid");
        std::string pred_root, pred_config, pred_method = "ridge";
        std::string pred_probs_dir, pred_manifest;
        bool pred_tiled = false;
        int pred_tile = 512;
        std::vector<double> pred_scales = {2.0, 4.0, 8.0};
        double pred_percentile = 99.5;
        int pred_window = 25;
        double pred_k = 0.2, pred_r = 0.5;
        pred->add_option("--root", pred_root, "object directory")->required();
        auto* o_method =
            pred->add_option("--method", pred_method, "ridge | otsu | sauvola | external")
                ->check(CLI::IsMember({"ridge", "otsu", "sauvola", "external"}));
        pred->add_flag("--tiled", pred_tiled, "ridge: predict per tile and stitch");
        auto* o_ptile = pred->add_option("--tile", pred_tile, "ridge tiled: square tile size");
        auto* o_scales =
            pred->add_option("--scales", pred_scales, "ridge: gaussian scales")->delimiter(',');
        auto* o_pct =
            pred->add_option("--percentile", pred_percentile, "ridge: normalization percentile");
        auto* o_window = pred->add_option("--window", pred_window, "sauvola: window size");
        auto* o_sk = pred->add_option("--k", pred_k, "sauvola: sensitivity");
        auto* o_sr = pred->add_option("--r", pred_r, "sauvola: dynamic range");
        pred->add_option("--probs", pred_probs_dir, "external: directory of per-patch .etgr maps");
        pred->add_option("--manifest", pred_manifest, "external: manifest of those patches");
        pred->add_option("--config", pred_config, "JSON config file");
        pred->callback([&] {
            json sec = load_config_section(pred_config, "predict");
            cfg_override(sec, "method", o_method, pred_method);
            cfg_override(sec, "tile", o_ptile, pred_tile);
            cfg_override(sec, "scales", o_scales, pred_scales);
            cfg_override(sec, "percentile", o_pct, pred_percentile);
            cfg_override(sec, "window", o_window, pred_window);
            cfg_override(sec, "k", o_sk, pred_k);
            cfg_override(sec, "r", o_sr, pred_r);

            etch::MirrorRecord rec = load_record(pred_root);
            json params{{"method", pred_method}};
            etch::ScalarGrid prob;

            if (pred_method == "external") {
                if (pred_probs_dir.empty()) {
                    throw etch::ConfigError("--method external needs --probs");
                }
                fs::path man_path = pred_manifest.empty()
                                        ? fs::path(pred_probs_dir) / "patches.json"
                                        : fs::path(pred_manifest);
                etch::Manifest man = etch::load_manifest(man_path);
                std::map<std::string, etch::ScalarGrid> probs =
                    etch::load_external_probs(pred_probs_dir, man);
                etch::WeightMap weights = etch::make_weight_map(common_patch_size(man));
                prob = etch::stitch(probs, man, weights, man.layout.full_w, man.layout.full_h);
                params["probs"] = pred_probs_dir;
                params["patches"] = man.entries.size();
            } else {
                fs::path pre_path = rec.derived("pre.etgr");
                if (!fs::exists(pre_path)) {
                    throw etch::DataError("no derived/pre.etgr, run preprocess first: " +
                                          rec.dir.string());
                }
                etch::ScalarGrid pre = etch::read_scalar(pre_path.string());
                if (pred_method == "ridge") {
                    etch::RidgeConfig cfg;
                    cfg.scales = pred_scales;
                    cfg.normalize_percentile = pred_percentile;
                    params["scales"] = pred_scales;
                    params["percentile"] = pred_percentile;
                    params["tiled"] = pred_tiled;
                    if (pred_tiled) {
                        auto [layout, tiles] =
                            etch::plan_tiles(pre.width(), pre.height(), pred_tile, pred_tile);
                        etch::Manifest man;
                        man.layout = layout;
                        man.layout.patch = pred_tile;
                        std::map<std::string, etch::ScalarGrid> probs;
                        char name[32];
                        for (std::size_t i = 0; i < tiles.size(); ++i) {
                            std::snprintf(name, sizeof(name), "tile_%04zu", i);
                            man.entries.push_back({name, tiles[i]});
                            probs.emplace(name,
                                          etch::ridge_response(
                                              etch::extract(pre, tiles[i], etch::PadMode::reflect),
                                              cfg, etch::Polarity::valleys));
                        }
                        etch::WeightMap weights = etch::make_weight_map(pred_tile);
                        prob = etch::stitch(probs, man, weights, pre.width(), pre.height());
                        params["tile"] = pred_tile;
                    } else {
                        prob = etch::ridge_response(pre, cfg, etch::Polarity::valleys);
                    }
                } else if (pred_method == "otsu") {
                    double t = etch::otsu_threshold(pre);
                    prob = etch::mask_to_grid(etch::binarize(pre, t, etch::Polarity::valleys));
                    params["threshold"] = t;
                } else if (pred_method == "sauvola") {
                    etch::SauvolaConfig cfg;
                    cfg.window = pred_window;
                    cfg.k = pred_k;
                    cfg.r = pred_r;
                    etch::ScalarGrid tmap = etch::sauvola_map(pre, cfg);
                    prob = etch::mask_to_grid(etch::binarize(pre, tmap, etch::Polarity::valleys));
                    params["window"] = pred_window;
                    params["k"] = pred_k;
                    params["r"] = pred_r;
                } else {
                    throw etch::ConfigError("unknown method: " + pred_method);
                }
            }
            etch::write_grid(prob, rec.derived("prob.etgr").string());
            record_config(rec.dir, "predict", params);
            std::cout << "predicted " << prob.width() << "x" << prob.height() << " map ("
                      << pred_method << ")\n";
        });

        // ----------------------------------------------------------- stitch
        auto* sti = app.add_subcommand("stitch", "stitch per-patch probability maps");
        std::string sti_root, sti_probs, sti_manifest;
        std::vector<double> sti_thresholds;
        sti->add_option("--root", sti_root, "object directory")->required();
        sti->add_option("--probs", sti_probs, "directory of per-patch .etgr maps")->required();
        sti->add_option("--manifest", sti_manifest,
                        "manifest of those patches (default <probs>/patches.json)");
        sti->add_option("--threshold", sti_thresholds,
                        "also write a binarized png per threshold")
            ->delimiter(',');
        sti->callback([&] {
            etch::MirrorRecord rec = load_record(sti_root);
            fs::path man_path = sti_manifest.empty() ? fs::path(sti_probs) / "patches.json"
                                                     : fs::path(sti_manifest);
            etch::Manifest man = etch::load_manifest(man_path);
            std::map<std::string, etch::ScalarGrid> probs =
                etch::load_external_probs(sti_probs, man);
            etch::WeightMap weights = etch::make_weight_map(common_patch_size(man));
            etch::ScalarGrid prob =
                etch::stitch(probs, man, weights, man.layout.full_w, man.layout.full_h);
            etch::write_grid(prob, rec.derived("prob.etgr").string());
            for (double t : sti_thresholds) {
                if (!(t > 0.0) || !(t < 1.0)) {
                    throw etch::ConfigError("threshold must lie in (0,1)");
                }
                std::string name = "pred_t" + format_threshold(t) + ".png";
                etch::write_mask(etch::binarize(prob, t, etch::Polarity::ridges),
                                 rec.derived(name).string());
            }
            record_config(rec.dir, "stitch",
                          json{{"probs", sti_probs}, {"patches", man.entries.size()}});
            std::cout << "stitched " << man.entries.size() << " patches into " << prob.width()
                      << "x" << prob.height() << "\n";
        });

        // --------------------------------------------------------- evaluate
        auto* eval = app.add_subcommand("evaluate", "score a probability map at one threshold");
        std::string eval_root, eval_ann = "a";
        double eval_t = 0.5;
        bool eval_masked = false, eval_overlay = false;
        eval->add_option("--root", eval_root, "object directory")->required();
        eval->add_option("--threshold", eval_t, "binarization threshold");
        eval->add_option("--annotation", eval_ann, "score against annotation a or b");
        eval->add_flag("--masked", eval_masked, "zero probability outside the object first");
        eval->add_flag("--overlay", eval_overlay, "write an error overlay png");
        eval->callback([&] {
            etch::MirrorRecord rec = load_record(eval_root);
            if (!(eval_t > 0.0) || !(eval_t < 1.0)) {
                throw etch::ConfigError("threshold must lie in (0,1)");
            }
            etch::ScalarGrid prob = etch::read_scalar(rec.derived("prob.etgr").string());
            fs::path gt_path = rec.mask(annotation_file(eval_ann));
            if (!fs::exists(gt_path)) {
                throw etch::DataError("missing annotation: " + gt_path.string());
            }
            etch::BinaryMask gt = etch::read_mask(gt_path.string());
            if (eval_masked) {
                prob = etch::apply_object_mask(prob, object_mask_or_estimate(rec));
            }
            etch::BinaryMask pm = etch::binarize(prob, eval_t, etch::Polarity::ridges);
            etch::MetricsReport rep = etch::score(pm, gt);

            fs::create_directories(rec.dir / "eval");
            json out = etch::metrics_to_json(rep);
            out["threshold"] = eval_t;
            out["annotation"] = eval_ann;
            out["masked"] = eval_masked;
            std::ofstream f(rec.dir / "eval" / "metrics.json");
            if (!f) {
                throw etch::IoError("cannot open for writing: " +
                                    (rec.dir / "eval" / "metrics.json").string());
            }
            f << out.dump(2) << "\n";
            if (eval_overlay) {
                fs::path pre_path = rec.derived("pre.etgr");
                etch::ScalarGrid base = fs::exists(pre_path)
                                            ? etch::read_scalar(pre_path.string())
                                            : prob;
                etch::write_png_rgb(etch::render_overlay(pm, gt, base),
                                    (rec.dir / "eval" / "overlay.png").string());
            }
            print_report("scored", rep);
        });

        // ------------------------------------------------------------ sweep
        auto* swp = app.add_subcommand("sweep", "score thresholds 0.05..0.95 raw and masked");
        std::string swp_root, swp_ann = "a";
        bool swp_overlay = false;
        swp->add_option("--root", swp_root, "object directory")->required();
        swp->add_option("--annotation", swp_ann, "score against annotation a or b");
        swp->add_flag("--overlay", swp_overlay, "write pred and overlay pngs at the best row");
        swp->callback([&] {
            etch::MirrorRecord rec = load_record(swp_root);
            etch::ScalarGrid prob = etch::read_scalar(rec.derived("prob.etgr").string());
            fs::path gt_path = rec.mask(annotation_file(swp_ann));
            if (!fs::exists(gt_path)) {
                throw etch::DataError("missing annotation: " + gt_path.string());
            }
            etch::BinaryMask gt = etch::read_mask(gt_path.string());
            etch::BinaryMask object = object_mask_or_estimate(rec);
            etch::SweepTable table = etch::threshold_sweep(prob, gt, object);

            fs::create_directories(rec.dir / "eval");
            json out = etch::sweep_to_json(table);
            out["annotation"] = swp_ann;
            std::ofstream f(rec.dir / "eval" / "sweep.json");
            if (!f) {
                throw etch::IoError("cannot open for writing: " +
                                    (rec.dir / "eval" / "sweep.json").string());
            }
            f << out.dump(2) << "\n";

            if (table.best_raw >= 0) {
                const etch::SweepRow& r = table.rows[static_cast<std::size_t>(table.best_raw)];
                std::cout << "best raw t=" << format_threshold(r.threshold) << " ";
                print_report("", r.raw);
            }
            if (table.best_masked >= 0) {
                const etch::SweepRow& r =
                    table.rows[static_cast<std::size_t>(table.best_masked)];
                std::cout << "best masked t=" << format_threshold(r.threshold) << " ";
                print_report("", r.masked);
                if (swp_overlay) {
                    etch::ScalarGrid masked_prob = etch::apply_object_mask(prob, object);
                    etch::BinaryMask pm =
                        etch::binarize(masked_prob, r.threshold, etch::Polarity::ridges);
                    fs::path pre_path = rec.derived("pre.etgr");
                    etch::ScalarGrid base = fs::exists(pre_path)
                                                ? etch::read_scalar(pre_path.string())
                                                : prob;
                    etch::write_mask(pm, (rec.dir / "eval" / "pred_best.png").string());
                    etch::write_png_rgb(etch::render_overlay(pm, gt, base),
                                        (rec.dir / "eval" / "overlay_best.png").string());
                }
            } else {
                std::cout << "no defined pseudo F-measure at any threshold\n";
            }
        });

        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const etch::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const etch::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
