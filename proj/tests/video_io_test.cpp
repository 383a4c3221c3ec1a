#include <random>
#include <string>

#include "doctest.h"
#include "sparkprop/video/mp4.hpp"
#include "sparkprop/video/pnm.hpp"
#include "sparkprop/video/y4m.hpp"
#include "support/mp4_builder.hpp"

using namespace sparkprop;
using namespace sparkprop::video;
namespace mp4 = sparkprop::testing::mp4;

namespace {

Video random_8bit_video(std::size_t t, std::size_t h, std::size_t w, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> code(0, 255);
    Video v(t, h, w);
    for (auto& x : v.values) x = static_cast<float>(code(rng)) / 255.0f;
    return v;
}

}  // namespace

TEST_CASE("y4m header and one 4x2 C444 frame") {
    std::string s = "YUV4MPEG2 W4 H2 F24:1 Ip A1:1 C444\nFRAME\n";
    s += std::string(8, char(235)) + std::string(8, char(128)) + std::string(8, char(128));
    auto clip = read_y4m(to_bytes(s));
    CHECK(clip.video.frames == 1);
    CHECK(clip.video.height == 2);
    CHECK(clip.video.width == 4);
    CHECK(clip.fps.num == 24);
    CHECK(clip.video.at(0, 1, 3, 1) == doctest::Approx(235.0 / 255.0));
}

TEST_CASE("writing black emits Y=0 and neutral chroma") {
    Video black(1, 2, 4);
    auto bytes = write_y4m(black, FrameRate{24, 1});
    const std::string text = to_string(bytes);
    const auto header_end = text.find('\n');
    CHECK(text.substr(0, header_end).find("F24:1") != std::string::npos);
    CHECK(text.substr(0, header_end).find("C444") != std::string::npos);
    const auto payload = text.find("FRAME\n") + 6;
    REQUIRE(bytes.size() - payload == 24);
    for (std::size_t i = 0; i < 8; ++i) CHECK(bytes[payload + i] == 0);
    for (std::size_t i = 8; i < 24; ++i) CHECK(bytes[payload + i] == 128);
}

TEST_CASE("y4m round trips") {
    auto v = random_8bit_video(3, 6, 5, 1);
    auto first = read_y4m(write_y4m(v)).video;
    auto second = read_y4m(write_y4m(first)).video;
    REQUIRE(second.values.size() == first.values.size());
    for (std::size_t i = 0; i < first.values.size(); ++i) {
        CHECK(std::abs(second.values[i] - first.values[i]) <= 1.0f / 255.0f + 1e-7f);
    }
}

TEST_CASE("y4m 4:2:0 chroma is shared by 2x2 blocks") {
    std::string s = "YUV4MPEG2 W2 H2 F25:1 C420jpeg\nFRAME\n";
    s += std::string("\x10\x20\x30\x40", 4) + std::string(1, char(100)) + std::string(1, char(160));
    auto clip = read_y4m(to_bytes(s));
    float expect[3];
    ycbcr_to_rgb(0x40, 100, 160, expect);
    for (int c = 0; c < 3; ++c) CHECK(clip.video.at(0, 1, 1, c) == doctest::Approx(expect[c]));
}

TEST_CASE("y4m errors") {
    CHECK_THROWS_WITH_AS(read_y4m(to_bytes("YUV4MPEG2 W4 H2 C444\n")), doctest::Contains("empty stream"), ParseError);
    CHECK_THROWS_AS(read_y4m(to_bytes("RIFF")), ParseError);
    CHECK_THROWS_WITH_AS(read_y4m(to_bytes("YUV4MPEG2 W2 H2 C422\nFRAME\n")), doctest::Contains("colorspace"),
                         ParseError);
    try {
        read_y4m(to_bytes("YUV4MPEG2 W2 H1 C444\nFRAME\n123456FRAMX\n"));
        FAIL("expected missing FRAME marker");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 33);
    }
    try {
        read_y4m(to_bytes("YUV4MPEG2 W2 H1 C444\nFRAME\n1234"));
        FAIL("expected truncation");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("truncated") != std::string::npos);
        CHECK(e.offset() == 27);
    }
}

TEST_CASE("pgm and ppm") {
    Image black(2, 2, 1);
    auto bytes = write_pgm(black);
    CHECK(to_string(bytes) == std::string("P5\n2 2\n255\n") + std::string(4, '\0'));

    Image rgb(3, 4, 3);
    std::mt19937 rng(2);
    for (auto& x : rgb.values) x = static_cast<float>(rng() % 256) / 255.0f;
    auto back = read_ppm(write_ppm(rgb));
    CHECK(back.values == rgb.values);
    CHECK(read_pgm(write_pgm(black)).values == black.values);

    CHECK_THROWS_WITH_AS(read_ppm(to_bytes("P6\n1 1\n65535\n\0\0\0\0\0\0")), doctest::Contains("unsupported maxval"),
                         ParseError);
    CHECK_THROWS_AS(read_ppm(to_bytes("P3\n1 1\n255\n0 0 0")), ParseError);
    CHECK_THROWS_AS(read_ppm(to_bytes("P6\n2 2\n255\n\1\2\3")), ParseError);
    CHECK(read_pnm(to_bytes("P5\n# comment\n1 1\n255\n\xff")).values[0] == 1.0f);
}

TEST_CASE("mp4 sync samples") {
    SUBCASE("stss 1-based entries become 0-based") {
        auto f = mp4::file({mp4::track("vide", mp4::cat({mp4::stsz(193), mp4::stss({1, 49, 97, 145})}))});
        CHECK(parse_mp4_sync_samples(f) == SyncSampleTable{0, 48, 96, 144});
    }
    SUBCASE("no stss means every sample is a sync sample") {
        auto f = mp4::file({mp4::track("vide", mp4::stsz(10))});
        CHECK(parse_mp4_sync_samples(f) == SyncSampleTable{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    }
    SUBCASE("audio tracks are skipped") {
        auto f = mp4::file({mp4::track("soun", mp4::stss({1, 2, 3})),
                            mp4::track("vide", mp4::cat({mp4::stsz(40), mp4::stss({1, 17})}))});
        CHECK(parse_mp4_sync_samples(f) == SyncSampleTable{0, 16});
    }
    SUBCASE("count mismatch names the stss box") {
        auto f = mp4::file({mp4::track("vide", mp4::stss({1, 49, 97}, 4))});
        try {
            parse_mp4_sync_samples(f);
            FAIL("expected an error");
        } catch (const Mp4Error& e) {
            CHECK(e.box_path() == "moov/trak/mdia/minf/stbl/stss");
        }
    }
    SUBCASE("bad box length") {
        auto f = mp4::file({mp4::track("vide", mp4::stsz(3))});
        f[mp4::ftyp().size() + 3] = 4;  // moov size < header
        f[mp4::ftyp().size() + 2] = 0;
        f[mp4::ftyp().size() + 1] = 0;
        f[mp4::ftyp().size() + 0] = 0;
        CHECK_THROWS_AS(parse_mp4_sync_samples(f), Mp4Error);
    }
    SUBCASE("child overflowing its parent") {
        auto stbl_kids = mp4::stss({1, 5});
        stbl_kids[3] = 200;  // stss claims more bytes than stbl holds
        auto f = mp4::file({mp4::track("vide", stbl_kids)});
        try {
            parse_mp4_sync_samples(f);
            FAIL("expected an error");
        } catch (const Mp4Error& e) {
            CHECK(e.box_path() == "moov/trak/mdia/minf/stbl/stss");
        }
    }
    SUBCASE("missing moov, no video track") {
        CHECK_THROWS_AS(parse_mp4_sync_samples(mp4::ftyp()), Mp4Error);
        CHECK_THROWS_AS(parse_mp4_sync_samples(mp4::file({mp4::track("soun", mp4::stsz(3))})), Mp4Error);
        CHECK_THROWS_AS(parse_mp4_sync_samples(mp4::Bytes{0, 0, 0}), Mp4Error);
    }
}
