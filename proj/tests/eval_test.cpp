#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "sparkprop/bytes.hpp"
#include "sparkprop/degrade/synth.hpp"
#include "sparkprop/eval/metrics.hpp"
#include "sparkprop/video/pnm.hpp"

using namespace sparkprop;
using namespace sparkprop::eval;

namespace {

video::Video random_clip(std::size_t t, std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    video::Video v(t, h, w);
    for (auto& x : v.values) x = u(rng);
    return v;
}

// Two-pass textbook SSIM over one 8x8 tile of one channel.
double tile_ssim(const video::Video& a, const video::Video& b, std::size_t t, std::size_t c, std::size_t y0, std::size_t x0) {
    const double c1 = 1e-4, c2 = 9e-4;
    std::vector<double> pa, pb;
    for (std::size_t y = y0; y < y0 + 8; ++y)
        for (std::size_t x = x0; x < x0 + 8; ++x) {
            pa.push_back(a.at(t, y, x, c));
            pb.push_back(b.at(t, y, x, c));
        }
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        ma += pa[i];
        mb += pb[i];
    }
    ma /= 64;
    mb /= 64;
    double va = 0, vb = 0, cov = 0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        va += (pa[i] - ma) * (pa[i] - ma);
        vb += (pb[i] - mb) * (pb[i] - mb);
        cov += (pa[i] - ma) * (pb[i] - mb);
    }
    va /= 64;
    vb /= 64;
    cov /= 64;
    return (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

double brute_ssim(const video::Video& a, const video::Video& b) {
    double total = 0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < a.frames; ++t)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y + 8 <= a.height; y += 8)
                for (std::size_t x = 0; x + 8 <= a.width; x += 8) {
                    total += tile_ssim(a, b, t, c, y, x);
                    ++count;
                }
    return total / static_cast<double>(count);
}

// Horizontal shift between consecutive slice rows, by minimum circular SSD
// with a parabolic refinement.
double mean_row_shift(const video::Image& xt) {
    double total = 0.0;
    for (std::size_t t = 0; t + 1 < xt.height; ++t) {
        auto ssd = [&](int s) {
            double acc = 0.0;
            for (std::size_t x = 0; x < xt.width; ++x) {
                const auto xs = static_cast<std::size_t>((static_cast<long>(x) - s + 8 * static_cast<long>(xt.width)) %
                                                         static_cast<long>(xt.width));
                const double d = xt.at(t + 1, x, 0) - xt.at(t, xs, 0);
                acc += d * d;
            }
            return acc;
        };
        int best = -4;
        for (int s = -4; s <= 4; ++s)
            if (ssd(s) < ssd(best)) best = s;
        const double l = ssd(best - 1), m = ssd(best), r = ssd(best + 1);
        const double denom = l - 2 * m + r;
        total += best + (denom > 0 ? 0.5 * (l - r) / denom : 0.0);
    }
    return total / static_cast<double>(xt.height - 1);
}

}  // namespace

TEST_CASE("psnr") {
    const auto a = random_clip(2, 8, 8, 1);
    CHECK(psnr(a, a) == 99.0);
    video::Video zero(2, 4, 4, 0.25f), half(2, 4, 4, 0.75f);
    CHECK(psnr(zero, half) == doctest::Approx(6.0206).epsilon(1e-5));
    const auto b = random_clip(2, 8, 8, 2);
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK_THROWS_AS(psnr(a, random_clip(3, 8, 8, 3)), ShapeError);
}

TEST_CASE("ssim") {
    const auto a = random_clip(2, 16, 16, 4);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    video::Video black(1, 8, 8, 0.0f), white(1, 8, 8, 1.0f);
    const double c1 = 1e-4;
    CHECK(ssim(black, white) == doctest::Approx(c1 / (1 + c1)).epsilon(1e-9));
    for (std::uint64_t seed = 5; seed < 10; ++seed) {
        const auto x = random_clip(2, 16, 16, seed), y = random_clip(2, 16, 16, seed + 100);
        CHECK(std::abs(ssim(x, y) - brute_ssim(x, y)) < 1e-6);
        auto near = x;
        for (auto& v : near.values) v = std::min(1.0f, v + 0.02f);
        CHECK(std::abs(ssim(x, near) - brute_ssim(x, near)) < 1e-6);
        CHECK(ssim(x, near) > ssim(x, y));
    }
    const auto odd = random_clip(1, 20, 12, 11), odd2 = random_clip(1, 20, 12, 12);
    CHECK(std::abs(ssim(odd, odd2) - brute_ssim(odd, odd2)) < 1e-6);
    CHECK_THROWS_AS(ssim(random_clip(1, 4, 4, 1), random_clip(1, 4, 4, 2)), InvalidArgument);
}

TEST_CASE("flicker index") {
    const auto gt = random_clip(4, 4, 4, 13);
    CHECK(flicker_index(gt, gt) == 0.0);
    video::Video s1(3, 4, 4, 0.2f), s2(3, 4, 4, 0.7f);
    CHECK(flicker_index(s1, s2) == 0.0);
    video::Video still(4, 4, 4, 0.5f), jitter(4, 4, 4, 0.5f);
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t i = 0; i < jitter.frame_size(); ++i) jitter.values[t * jitter.frame_size() + i] += t % 2 ? -0.1f : 0.1f;
    CHECK(flicker_index(jitter, still) == doctest::Approx(0.2).epsilon(1e-6));
    CHECK_THROWS_AS(flicker_index(random_clip(1, 4, 4, 1), random_clip(1, 4, 4, 2)), InvalidArgument);
}

TEST_CASE("x-t slices") {
    video::Video still(5, 8, 12);
    const auto frame = random_clip(1, 8, 12, 14);
    for (std::size_t t = 0; t < 5; ++t) std::copy(frame.values.begin(), frame.values.end(), still.values.begin() + t * still.frame_size());
    const auto xt = xt_slice(still, 3);
    CHECK(xt.height == 5);
    CHECK(xt.width == 12);
    CHECK(xt.channels == 1);
    for (std::size_t t = 1; t < 5; ++t)
        for (std::size_t x = 0; x < 12; ++x) CHECK(xt.at(t, x, 0) == xt.at(0, x, 0));
    CHECK_THROWS_AS(xt_slice(still, 8), InvalidArgument);

    degrade::SynthOptions opt;
    opt.velocity = std::make_pair(1.0, 0.0);
    std::mt19937_64 rng(15);
    const auto moving = degrade::synth_clip(degrade::ClipKind::moving_checker, 17, 32, 32, rng, opt);
    CHECK(std::abs(mean_row_shift(xt_slice(moving, 10)) - 1.0) <= 0.1);
    opt.velocity = std::make_pair(-2.0, 0.0);
    const auto faster = degrade::synth_clip(degrade::ClipKind::moving_checker, 17, 32, 32, rng, opt);
    CHECK(std::abs(mean_row_shift(xt_slice(faster, 10)) + 2.0) <= 0.1);
}

TEST_CASE("evaluation report") {
    const auto a = random_clip(3, 16, 16, 16), b = random_clip(3, 16, 16, 17);
    const auto dir = std::filesystem::temp_directory_path() / "sparkprop_eval_test";
    std::filesystem::remove_all(dir);
    ReportOptions opt;
    opt.xt_row = 4;
    opt.slice_dir = dir;
    const auto r = eval_report({{"same", &a, &a}, {"diff", &a, &b}}, opt);
    REQUIRE(r.clips.size() == 2);
    CHECK(r.clips[0].psnr_db == 99.0);
    CHECK(r.clips[0].ssim == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.clips[0].flicker == 0.0);
    CHECK(r.clips[1].psnr_db == psnr(a, b));
    CHECK(r.clips[1].ssim == ssim(a, b));
    CHECK(r.clips[1].flicker == flicker_index(a, b));
    CHECK(r.mean.psnr_db == doctest::Approx((99.0 + psnr(a, b)) / 2));
    const auto csv = r.to_csv();
    CHECK(csv.find("clip,psnr_db,ssim,flicker\n") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK(csv.find("\nmean,") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "diff_xt.pgm"));
    const auto slice = video::read_pgm(read_file(dir / "same_gt_xt.pgm"));
    CHECK(slice.height == 3);
    CHECK(slice.width == 16);
    CHECK_THROWS_AS(eval_report({{"bad", &a, nullptr}}), InvalidArgument);
    CHECK_THROWS_AS(eval_report({}), InvalidArgument);
    std::filesystem::remove_all(dir);
}
