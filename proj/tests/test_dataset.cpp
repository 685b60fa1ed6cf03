#include <catch2/catch_amalgamated.hpp>

#include <etch/dataset.hpp>
#include <etch/grid_io.hpp>

#include "helpers.hpp"

using namespace etch;

namespace {

// Minimal on-disk fixture: n captures of the given size plus a matching rig.
void make_fixture(const std::filesystem::path& root, const std::string& id, int n, int w, int h) {
    std::filesystem::create_directories(root / id / "captures");
    for (int i = 0; i < n; ++i) {
        ScalarGrid g(w, h, 0.25 + 0.1 * i);
        char name[32];
        std::snprintf(name, sizeof(name), "cap%02d.png", i);
        write_png_gray(g, (root / id / "captures" / name).string());
    }
    std::vector<LightSource> lights;
    double s = std::sqrt(0.5);
    std::vector<Vec3> dirs = {{s, 0, s}, {-s, 0, s}, {0, s, s}, {0, -s, s}, {0, 0, 1}};
    for (int i = 0; i < n; ++i) {
        lights.push_back({dirs[static_cast<std::size_t>(i % 5)], 1.0});
    }
    write_lights(lights, root / id / "lights.json");
}

}  // namespace

TEST_CASE("load_mirror assembles a valid record", "[dataset]") {
    TempDir td("ds");
    make_fixture(td.path, "m01", 4, 8, 6);
    MirrorRecord rec = load_mirror(td.path, "m01");
    REQUIRE(rec.captures.size() == 4);
    REQUIRE(rec.lights.size() == 4);
    REQUIRE(rec.width == 8);
    REQUIRE(rec.height == 6);
    // sorted filename order
    REQUIRE(rec.captures.front().filename() == "cap00.png");
    REQUIRE(rec.captures.back().filename() == "cap03.png");
}

TEST_CASE("load_mirror rejects fewer than three lights", "[dataset]") {
    TempDir td("ds");
    make_fixture(td.path, "m02", 2, 4, 4);
    REQUIRE_THROWS_AS(load_mirror(td.path, "m02"), DataError);
}

TEST_CASE("load_mirror rejects capture size mismatch", "[dataset]") {
    TempDir td("ds");
    make_fixture(td.path, "m03", 4, 8, 6);
    ScalarGrid odd(9, 6, 0.5);
    write_png_gray(odd, (td.path / "m03/captures/cap02.png").string());
    REQUIRE_THROWS_AS(load_mirror(td.path, "m03"), DataError);
}

TEST_CASE("load_mirror rejects non-unit light directions", "[dataset]") {
    TempDir td("ds");
    make_fixture(td.path, "m04", 3, 4, 4);
    std::vector<LightSource> lights = {{Vec3{1, 0, 0}, 1.0}, {Vec3{0, 1, 0}, 1.0},
                                       {Vec3{0.5, 0.5, 0.5}, 1.0}};
    write_lights(lights, td.path / "m04/lights.json");
    REQUIRE_THROWS_AS(load_mirror(td.path, "m04"), DataError);
}

TEST_CASE("load_mirror rejects mask with different dimensions", "[dataset]") {
    TempDir td("ds");
    make_fixture(td.path, "m05", 3, 8, 6);
    std::filesystem::create_directories(td.path / "m05/masks");
    write_png_gray(ScalarGrid(4, 4, 1.0), (td.path / "m05/masks/object.png").string());
    REQUIRE_THROWS_AS(load_mirror(td.path, "m05"), DataError);
}

TEST_CASE("load_mirror rejects light and capture count mismatch", "[dataset]") {
    TempDir td("ds");
    make_fixture(td.path, "m06", 4, 4, 4);
    std::vector<LightSource> lights;
    double s = std::sqrt(0.5);
    lights.push_back({Vec3{s, 0, s}, 1.0});
    lights.push_back({Vec3{-s, 0, s}, 1.0});
    lights.push_back({Vec3{0, s, s}, 1.0});
    write_lights(lights, td.path / "m06/lights.json");
    REQUIRE_THROWS_AS(load_mirror(td.path, "m06"), DataError);
}

TEST_CASE("parse_lights validates structure and values", "[dataset]") {
    TempDir td("ds");
    {
        std::ofstream f(td.path / "bad1.json");
        f << "{\"lights\": [{\"dir\": [1, 0]}]}";
    }
    REQUIRE_THROWS_AS(parse_lights(td.path / "bad1.json"), FormatError);
    {
        std::ofstream f(td.path / "bad2.json");
        f << "not json at all";
    }
    REQUIRE_THROWS_AS(parse_lights(td.path / "bad2.json"), FormatError);
    {
        std::ofstream f(td.path / "bad3.json");
        f << "{\"lights\": [{\"dir\": [0, 0, 1], \"intensity\": -2.0}]}";
    }
    REQUIRE_THROWS_AS(parse_lights(td.path / "bad3.json"), DataError);
    {
        std::ofstream f(td.path / "ok.json");
        f << "{\"lights\": [{\"dir\": [0, 0, 1]}, {\"dir\": [1, 0, 0], \"intensity\": 0.5}]}";
    }
    auto lights = parse_lights(td.path / "ok.json");
    REQUIRE(lights.size() == 2);
    REQUIRE(lights[0].intensity == 1.0);
    REQUIRE(lights[1].intensity == 0.5);
    REQUIRE(lights[1].dir.x == 1.0);
}
