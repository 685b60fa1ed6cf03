#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <etch/grid.hpp>
#include <etch/grid_io.hpp>
#include <etch/patchwork.hpp>
#include <nlohmann/json.hpp>

#include "helpers.hpp"

using namespace etch;
namespace fs = std::filesystem;

namespace {

// Runs the installed binary with stdout/stderr discarded; returns the exit
// code, or -1 if the process did not exit normally.
int run_cli(const std::string& args) {
    std::string cmd = std::string(ETCH_CLI_BIN) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json load_json(const fs::path& p) {
    std::ifstream f(p);
    REQUIRE(f.good());
    nlohmann::json j;
    f >> j;
    return j;
}

// Small rimless test object: disk larger than the half diagonal so no rim
// cliff enters the frame, and sigma scaled to the image.
void make_object(const std::string& root) {
    REQUIRE(run_cli("synth --out " + root + " --size 256 --seed 11 --disk-radius 200") == 0);
}

void run_pipeline(const std::string& root) {
    REQUIRE(run_cli("ps-solve --root " + root) == 0);
    REQUIRE(run_cli("integrate --root " + root) == 0);
    REQUIRE(run_cli("preprocess --root " + root + " --sigma 6") == 0);
    REQUIRE(run_cli("predict --root " + root + " --method ridge") == 0);
}

}  // namespace

TEST_CASE("pipeline round trip writes every artifact", "[cli]") {
    TempDir td("cli_pipe");
    std::string root = td.str("obj");
    make_object(root);

    for (const char* name :
         {"captures/capture_00.png", "captures/capture_04.png", "lights.json",
          "masks/object.png", "masks/annotation_a.png", "derived/depth_true.etgr",
          "derived/albedo_true.etgr", "config_used.json"}) {
        INFO(name);
        REQUIRE(fs::exists(fs::path(root) / name));
    }

    run_pipeline(root);
    REQUIRE(run_cli("evaluate --root " + root + " --threshold 0.5 --masked --overlay") == 0);
    REQUIRE(run_cli("sweep --root " + root + " --overlay") == 0);

    for (const char* name :
         {"derived/albedo.etgr", "derived/normal.etgr", "derived/validity.png",
          "derived/depth.etgr", "derived/pre.etgr", "derived/prob.etgr", "eval/metrics.json",
          "eval/overlay.png", "eval/sweep.json", "eval/pred_best.png", "eval/overlay_best.png"}) {
        INFO(name);
        REQUIRE(fs::exists(fs::path(root) / name));
    }

    // The derived maps have the object's dimensions and probabilities stay
    // in range.
    ScalarGrid prob = read_scalar((fs::path(root) / "derived/prob.etgr").string());
    REQUIRE(prob.width() == 256);
    REQUIRE(prob.height() == 256);
    for (double v : prob.samples()) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }

    nlohmann::json metrics = load_json(fs::path(root) / "eval" / "metrics.json");
    REQUIRE(metrics["threshold"].get<double>() == 0.5);
    REQUIRE(metrics["annotation"].get<std::string>() == "a");
    REQUIRE(metrics["masked"].get<bool>() == true);
    REQUIRE(metrics.contains("pfm"));
    REQUIRE(metrics.contains("iou"));

    nlohmann::json sweep = load_json(fs::path(root) / "eval" / "sweep.json");
    REQUIRE(sweep["rows"].size() == 19);
    int best = sweep["best_masked"].get<int>();
    REQUIRE(best >= 0);
    REQUIRE(best < 19);
    // The rimless scene is easy at this size; the ridge detector should not
    // be anywhere near chance.
    REQUIRE(sweep["rows"][best]["masked"]["pfm"].get<double>() > 0.5);

    // Every stage left its section in the provenance record.
    nlohmann::json cfg = load_json(fs::path(root) / "config_used.json");
    for (const char* stage : {"synth", "ps-solve", "integrate", "preprocess", "predict"}) {
        INFO(stage);
        REQUIRE(cfg.contains(stage));
    }
    REQUIRE(cfg["preprocess"]["sigma"].get<double>() == 6.0);
    REQUIRE(cfg["ps-solve"]["condition_number"].get<double>() ==
            Catch::Approx(std::sqrt(3.0)).epsilon(1e-9));
}

TEST_CASE("exit codes distinguish usage errors from data errors", "[cli]") {
    TempDir td("cli_codes");

    REQUIRE(run_cli("--help") == 0);
    REQUIRE(run_cli("synth --help") == 0);
    REQUIRE(run_cli("no-such-command") == 2);
    REQUIRE(run_cli("synth") == 2);                       // missing --out
    REQUIRE(run_cli("predict --root " + td.str("nope")) == 3);
    REQUIRE(run_cli("synth --out " + td.str("bad") + " --size 0") == 2);

    std::string root = td.str("obj");
    make_object(root);
    REQUIRE(run_cli("predict --root " + root + " --method nonsense") == 2);
    REQUIRE(run_cli("integrate --root " + root) == 3);    // no normal map yet
    REQUIRE(run_cli("evaluate --root " + root + " --threshold 1.5") == 2);

    // Unreadable config file is a data problem, not a usage problem.
    std::ofstream(td.str("broken.json")) << "{ not json";
    REQUIRE(run_cli("preprocess --root " + root + " --config " + td.str("broken.json")) == 3);
}

TEST_CASE("config file fills gaps and explicit flags win", "[cli]") {
    TempDir td("cli_cfg");
    std::string root = td.str("obj");
    make_object(root);
    REQUIRE(run_cli("ps-solve --root " + root) == 0);
    REQUIRE(run_cli("integrate --root " + root) == 0);

    std::ofstream(td.str("cfg.json")) << R"({"preprocess": {"sigma": 8, "clip_k": 2.5}})";

    REQUIRE(run_cli("preprocess --root " + root + " --config " + td.str("cfg.json")) == 0);
    nlohmann::json used = load_json(fs::path(root) / "config_used.json");
    REQUIRE(used["preprocess"]["sigma"].get<double>() == 8.0);
    REQUIRE(used["preprocess"]["clip_k"].get<double>() == 2.5);

    REQUIRE(run_cli("preprocess --root " + root + " --sigma 6 --config " + td.str("cfg.json")) ==
            0);
    used = load_json(fs::path(root) / "config_used.json");
    REQUIRE(used["preprocess"]["sigma"].get<double>() == 6.0);   // flag beats file
    REQUIRE(used["preprocess"]["clip_k"].get<double>() == 2.5);  // file still fills the gap
}

TEST_CASE("reruns and fresh runs are byte identical", "[cli]") {
    TempDir td("cli_det");
    std::string a = td.str("a");
    std::string b = td.str("b");
    for (const std::string& root : {a, b}) {
        make_object(root);
        run_pipeline(root);
        REQUIRE(run_cli("sweep --root " + root) == 0);
    }

    const char* artifacts[] = {"captures/capture_00.png", "captures/capture_02.png",
                               "masks/object.png",        "masks/annotation_a.png",
                               "derived/depth_true.etgr", "derived/albedo.etgr",
                               "derived/normal.etgr",     "derived/depth.etgr",
                               "derived/pre.etgr",        "derived/prob.etgr",
                               "eval/sweep.json",         "config_used.json"};
    for (const char* name : artifacts) {
        INFO(name);
        REQUIRE(slurp((fs::path(a) / name).string()) == slurp((fs::path(b) / name).string()));
    }

    // Rerunning a stage in place rewrites the same bytes, including the
    // provenance record (it carries no timestamps).
    auto before = slurp((fs::path(a) / "derived" / "prob.etgr").string());
    auto cfg_before = slurp((fs::path(a) / "config_used.json").string());
    REQUIRE(run_cli("predict --root " + a + " --method ridge") == 0);
    REQUIRE(slurp((fs::path(a) / "derived" / "prob.etgr").string()) == before);
    REQUIRE(slurp((fs::path(a) / "config_used.json").string()) == cfg_before);
}

TEST_CASE("tile plans the patch manifest", "[cli]") {
    TempDir td("cli_tile");
    std::string root = td.str("obj");
    make_object(root);

    REQUIRE(run_cli("tile --root " + root +
                    " --tile-w 128 --tile-h 128 --patch 64 --train-per-tile 2 --seed 5") == 0);
    Manifest man = load_manifest(fs::path(root) / "derived" / "manifest.json");
    REQUIRE(man.layout.full_w == 256);
    REQUIRE(man.layout.full_h == 256);
    REQUIRE(man.layout.tile_w == 128);
    REQUIRE(man.layout.patch == 64);

    int tiles = 0, evals = 0, trains = 0;
    for (const ManifestEntry& e : man.entries) {
        if (e.name.starts_with("tile_")) ++tiles;
        if (e.name.starts_with("eval_")) ++evals;
        if (e.name.starts_with("train_")) ++trains;
    }
    REQUIRE(tiles == man.layout.tiles_x * man.layout.tiles_y);
    REQUIRE(evals == (256 / 64) * (256 / 64));
    REQUIRE(trains > 0);  // the annotation is nonempty, so tiles yield samples

    // Same plan twice is the same file.
    auto bytes = slurp((fs::path(root) / "derived" / "manifest.json").string());
    REQUIRE(run_cli("tile --root " + root +
                    " --tile-w 128 --tile-h 128 --patch 64 --train-per-tile 2 --seed 5") == 0);
    REQUIRE(slurp((fs::path(root) / "derived" / "manifest.json").string()) == bytes);
}

TEST_CASE("augment round trips grid files", "[cli]") {
    TempDir td("cli_aug");
    ScalarGrid ramp = make_ramp(8, 6);
    write_grid(ramp, td.str("a.etgr"));

    REQUIRE(run_cli("augment --in " + td.str("a.etgr") + " --op flip_h --out " +
                    td.str("f1.etgr")) == 0);
    REQUIRE(run_cli("augment --in " + td.str("f1.etgr") + " --op flip_h --out " +
                    td.str("f2.etgr")) == 0);
    REQUIRE(slurp(td.str("f2.etgr")) == slurp(td.str("a.etgr")));
    REQUIRE(slurp(td.str("f1.etgr")) != slurp(td.str("a.etgr")));

    REQUIRE(run_cli("augment --in " + td.str("a.etgr") + " --op rot90 --turns 4 --out " +
                    td.str("r4.etgr")) == 0);
    REQUIRE(slurp(td.str("r4.etgr")) == slurp(td.str("a.etgr")));

    // Vector grids go through the same ops.
    VectorGrid n(4, 4);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            n.at(x, y) = Vec3{0.1 * x, 0.1 * y, 1.0}.normalized();
        }
    }
    write_grid(n, td.str("n.etgr"));
    REQUIRE(run_cli("augment --in " + td.str("n.etgr") + " --op flip_v --out " +
                    td.str("nf.etgr")) == 0);
    VectorGrid nf = read_vector(td.str("nf.etgr"));
    REQUIRE(nf.at(0, 0).y == Catch::Approx(-0.3 / Vec3{0.0, 0.3, 1.0}.norm()).margin(1e-12));

    SECTION("cutmix transplants the window and mixes labels by area") {
        // Values exactly representable in the float32 the file format stores.
        ScalarGrid a(8, 8, 0.25), la(8, 8, 0.0);
        ScalarGrid b(8, 8, 0.75), lb(8, 8, 1.0);
        write_grid(a, td.str("ca.etgr"));
        write_grid(la, td.str("cla.etgr"));
        write_grid(b, td.str("cb.etgr"));
        write_grid(lb, td.str("clb.etgr"));
        REQUIRE(run_cli("augment --op cutmix --in " + td.str("ca.etgr") + " --label " +
                        td.str("cla.etgr") + " --in2 " + td.str("cb.etgr") + " --label2 " +
                        td.str("clb.etgr") + " --rect 2,2,4,4 --out " + td.str("cm.etgr") +
                        " --out-label " + td.str("cml.etgr")) == 0);
        ScalarGrid cm = read_scalar(td.str("cm.etgr"));
        ScalarGrid cml = read_scalar(td.str("cml.etgr"));
        REQUIRE(cm.at(0, 0) == 0.25);
        REQUIRE(cm.at(3, 3) == 0.75);
        REQUIRE(cml.at(3, 3) == 1.0);
        REQUIRE(cml.at(0, 0) == 0.0);
    }
    SECTION("mixup needs its companions") {
        REQUIRE(run_cli("augment --op mixup --in " + td.str("a.etgr") + " --out " +
                        td.str("m.etgr")) == 2);
    }
}

TEST_CASE("stitch consumes per-patch probability files", "[cli]") {
    TempDir td("cli_stitch");
    std::string root = td.str("obj");
    REQUIRE(run_cli("synth --out " + root + " --size 64 --seed 2 --disk-radius 50") == 0);

    // Four abutting patches covering the canvas, written the way an external
    // predictor would hand them back.
    fs::path probs = td.path / "probs";
    fs::create_directories(probs);
    Manifest man;
    man.layout.full_w = 64;
    man.layout.full_h = 64;
    man.layout.patch = 32;
    int idx = 0;
    for (int y = 0; y < 64; y += 32) {
        for (int x = 0; x < 64; x += 32) {
            std::string name = "p" + std::to_string(idx++);
            man.entries.push_back({name, PatchRef{x, y, 32, 32, Split::val}});
            write_grid(ScalarGrid(32, 32, 0.6), (probs / (name + ".etgr")).string());
        }
    }
    save_manifest(man, probs / "patches.json");

    REQUIRE(run_cli("stitch --root " + root + " --probs " + probs.string() +
                    " --threshold 0.5") == 0);
    ScalarGrid out = read_scalar((fs::path(root) / "derived" / "prob.etgr").string());
    REQUIRE(out.width() == 64);
    for (double v : out.samples()) {
        REQUIRE(v == Catch::Approx(0.6).margin(1e-9));
    }
    BinaryMask pred = read_mask((fs::path(root) / "derived" / "pred_t0.50.png").string());
    REQUIRE(pred.count() == 64 * 64);  // 0.6 >= 0.5 everywhere, ridge polarity

    // predict --method external goes through the same path and also records
    // provenance.
    REQUIRE(run_cli("predict --root " + root + " --method external --probs " + probs.string()) ==
            0);
    nlohmann::json cfg = load_json(fs::path(root) / "config_used.json");
    REQUIRE(cfg["predict"]["method"].get<std::string>() == "external");
    REQUIRE(cfg["predict"]["patches"].get<int>() == 4);

    SECTION("missing patch file is a data error") {
        fs::remove(probs / "p3.etgr");
        REQUIRE(run_cli("stitch --root " + root + " --probs " + probs.string()) == 3);
    }
}
