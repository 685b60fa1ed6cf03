#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <variant>

#include <etch/grid.hpp>
#include <etch/grid_io.hpp>
#include <etch/rng.hpp>

#include "helpers.hpp"

using namespace etch;

TEST_CASE("scalar grid survives a write read round trip", "[grid_io]") {
    TempDir td("gio");
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        int w = rng.range(1, 40);
        int h = rng.range(1, 40);
        ScalarGrid g(w, h);
        for (double& v : g.samples()) {
            // float32 representable so the round trip is exact
            v = static_cast<float>(rng.uniform(-10.0, 10.0));
        }
        std::string path = td.str("grid_" + std::to_string(trial) + ".etgr");
        write_grid(g, path);
        ScalarGrid back = read_scalar(path);
        REQUIRE(back.width() == w);
        REQUIRE(back.height() == h);
        REQUIRE(back.samples() == g.samples());
    }
}

TEST_CASE("vector grid round trip preserves channel interleaving", "[grid_io]") {
    TempDir td("gio");
    VectorGrid g(2, 2);
    g.at(0, 0) = Vec3{0.125, -0.25, 0.5};
    g.at(1, 0) = Vec3{1.0, 2.0, 3.0};
    g.at(0, 1) = Vec3{-1.5, 0.0, 0.75};
    g.at(1, 1) = Vec3{4.0, -8.0, 16.0};
    std::string path = td.str("vec.etgr");
    write_grid(g, path);

    // 20 byte header plus 2*2*3 float32 channels
    auto bytes = slurp(path);
    REQUIRE(bytes.size() == 20 + 48);

    VectorGrid back = read_vector(path);
    REQUIRE(back.width() == 2);
    REQUIRE(back.at(1, 0).y == 2.0);
    REQUIRE(back.at(1, 1).z == 16.0);
    REQUIRE(back.valid(0, 0));
}

TEST_CASE("one pixel grid produces the minimal file", "[grid_io]") {
    TempDir td("gio");
    ScalarGrid g(1, 1, 0.5);
    std::string path = td.str("one.etgr");
    write_grid(g, path);
    auto bytes = slurp(path);
    REQUIRE(bytes.size() == 24);
    REQUIRE(std::memcmp(bytes.data(), "ETGR", 4) == 0);
    // version 1, little endian
    REQUIRE(bytes[4] == 1);
    REQUIRE(bytes[5] == 0);
    // width 1, height 1, channels 1
    REQUIRE(bytes[8] == 1);
    REQUIRE(bytes[12] == 1);
    REQUIRE(bytes[16] == 1);
    // 0.5f = 0x3f000000 little endian
    REQUIRE(bytes[20] == 0x00);
    REQUIRE(bytes[21] == 0x00);
    REQUIRE(bytes[22] == 0x00);
    REQUIRE(bytes[23] == 0x3f);
}

TEST_CASE("empty grid is rejected before reaching disk", "[grid_io]") {
    TempDir td("gio");
    ScalarGrid g;
    REQUIRE_THROWS_AS(write_grid(g, td.str("nope.etgr")), ConfigError);
    REQUIRE_FALSE(std::filesystem::exists(td.str("nope.etgr")));
}

TEST_CASE("reader rejects malformed containers", "[grid_io]") {
    TempDir td("gio");
    ScalarGrid g(4, 3, 0.25);
    std::string path = td.str("ok.etgr");
    write_grid(g, path);
    auto bytes = slurp(path);

    SECTION("bad magic") {
        auto bad = bytes;
        bad[0] = 'X';
        spit(td.str("badmagic.etgr"), bad);
        REQUIRE_THROWS_AS(read_grid(td.str("badmagic.etgr")), FormatError);
    }
    SECTION("unsupported version") {
        auto bad = bytes;
        bad[4] = 9;
        spit(td.str("badver.etgr"), bad);
        REQUIRE_THROWS_AS(read_grid(td.str("badver.etgr")), FormatError);
    }
    SECTION("bad channel count") {
        auto bad = bytes;
        bad[16] = 2;
        spit(td.str("badchan.etgr"), bad);
        REQUIRE_THROWS_AS(read_grid(td.str("badchan.etgr")), FormatError);
    }
    SECTION("truncated header") {
        auto bad = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 12);
        spit(td.str("shorthdr.etgr"), bad);
        REQUIRE_THROWS_AS(read_grid(td.str("shorthdr.etgr")), FormatError);
    }
    SECTION("payload shorter than declared dimensions") {
        auto bad = std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 8);
        spit(td.str("shortpay.etgr"), bad);
        REQUIRE_THROWS_AS(read_grid(td.str("shortpay.etgr")), CapacityError);
    }
    SECTION("trailing garbage") {
        auto bad = bytes;
        bad.push_back(0);
        spit(td.str("long.etgr"), bad);
        REQUIRE_THROWS_AS(read_grid(td.str("long.etgr")), FormatError);
    }
    SECTION("declared dimensions overflow") {
        auto bad = bytes;
        bad[8] = 0xff;
        bad[9] = 0xff;
        bad[10] = 0xff;
        bad[11] = 0x7f;
        spit(td.str("huge.etgr"), bad);
        REQUIRE_THROWS_AS(read_grid(td.str("huge.etgr")), CapacityError);
    }
    SECTION("non-finite payload") {
        auto bad = bytes;
        // 0x7fc00000 quiet NaN into the first sample
        bad[20] = 0x00;
        bad[21] = 0x00;
        bad[22] = 0xc0;
        bad[23] = 0x7f;
        spit(td.str("nan.etgr"), bad);
        REQUIRE_THROWS_AS(read_grid(td.str("nan.etgr")), FormatError);
    }
    SECTION("missing file") {
        REQUIRE_THROWS_AS(read_grid(td.str("missing.etgr")), IoError);
    }
}

TEST_CASE("png gray 8 bit round trip quantizes to 1/255 steps", "[grid_io]") {
    TempDir td("gio");
    ScalarGrid g = make_ramp(13, 7);
    std::string path = td.str("ramp8.png");
    write_png_gray(g, path, 8);
    ScalarGrid back = read_png_gray(path);
    REQUIRE(back.width() == 13);
    REQUIRE(back.height() == 7);
    for (std::size_t i = 0; i < g.size(); ++i) {
        REQUIRE(std::abs(back.samples()[i] - g.samples()[i]) <= 0.5 / 255.0 + 1e-12);
    }
}

TEST_CASE("png gray 16 bit round trip quantizes to 1/65535 steps", "[grid_io]") {
    TempDir td("gio");
    ScalarGrid g = make_ramp(9, 5);
    std::string path = td.str("ramp16.png");
    write_png_gray(g, path, 16);
    ScalarGrid back = read_png_gray(path);
    for (std::size_t i = 0; i < g.size(); ++i) {
        REQUIRE(std::abs(back.samples()[i] - g.samples()[i]) <= 0.5 / 65535.0 + 1e-12);
    }
}

TEST_CASE("pgm round trip and 16 bit big endian decoding", "[grid_io]") {
    TempDir td("gio");
    ScalarGrid g = make_ramp(6, 4);
    std::string path = td.str("ramp.pgm");
    write_pgm(g, path);
    ScalarGrid back = read_pgm(path);
    for (std::size_t i = 0; i < g.size(); ++i) {
        REQUIRE(std::abs(back.samples()[i] - g.samples()[i]) <= 0.5 / 255.0 + 1e-12);
    }

    // hand-built 2x1 maxval 65535: values 0x0100=256 and 0xffff
    std::vector<std::uint8_t> raw;
    std::string hdr = "P5\n# comment\n2 1\n65535\n";
    raw.insert(raw.end(), hdr.begin(), hdr.end());
    raw.insert(raw.end(), {0x01, 0x00, 0xff, 0xff});
    spit(td.str("wide.pgm"), raw);
    ScalarGrid wide = read_pgm(td.str("wide.pgm"));
    REQUIRE(wide.at(0, 0) == Catch::Approx(256.0 / 65535.0).epsilon(1e-12));
    REQUIRE(wide.at(1, 0) == 1.0);
}

TEST_CASE("masks binarize at half scale on read", "[grid_io]") {
    TempDir td("gio");
    ScalarGrid g(4, 1);
    g.at(0, 0) = 0.0;
    g.at(1, 0) = 0.4;
    g.at(2, 0) = 0.6;
    g.at(3, 0) = 1.0;
    std::string path = td.str("mask.png");
    write_png_gray(g, path, 8);
    BinaryMask m = read_mask(path);
    REQUIRE_FALSE(m.get(0, 0));
    REQUIRE_FALSE(m.get(1, 0));
    REQUIRE(m.get(2, 0));
    REQUIRE(m.get(3, 0));
}

TEST_CASE("peek_dims reads headers of all formats", "[grid_io]") {
    TempDir td("gio");
    ScalarGrid g = make_ramp(17, 11);
    write_grid(g, td.str("a.etgr"));
    write_png_gray(g, td.str("a.png"));
    write_pgm(g, td.str("a.pgm"));
    for (const char* name : {"a.etgr", "a.png", "a.pgm"}) {
        auto [w, h] = peek_dims(td.str(name));
        REQUIRE(w == 17);
        REQUIRE(h == 11);
    }
    spit(td.str("junk.bin"), {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    REQUIRE_THROWS_AS(peek_dims(td.str("junk.bin")), FormatError);
}

TEST_CASE("read_image_gray dispatches on content not extension", "[grid_io]") {
    TempDir td("gio");
    ScalarGrid g = make_ramp(5, 3);
    write_png_gray(g, td.str("actually_png.pgm"));
    ScalarGrid back = read_image_gray(td.str("actually_png.pgm"));
    REQUIRE(back.width() == 5);
    REQUIRE(back.height() == 3);
}
