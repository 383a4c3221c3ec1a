#include <cmath>
#include <random>

#include "doctest.h"
#include "sparkprop/degrade/synth.hpp"
#include "sparkprop/tensor/ops.hpp"
#include "sparkprop/vae/codec.hpp"
#include "sparkprop/vae/layout.hpp"

using namespace sparkprop;
using namespace sparkprop::vae;
namespace ops = sparkprop::tensor::ops;

namespace {

Tensor<float> random_video(std::size_t t, std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Tensor<float> x(tensor::Shape{t, 3, h, w});
    for (auto& v : x.data()) v = u(rng);
    return x;
}

bool same(std::span<const float> a, std::span<const float> b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<double>(std::abs(a[i] - b[i])));
    return m;
}

}  // namespace

TEST_CASE("latent index arithmetic") {
    CHECK(latent_index_of(0) == 0);
    CHECK(latent_index_of(1) == 1);
    CHECK(latent_index_of(4) == 1);
    CHECK(latent_index_of(5) == 2);
    CHECK(latent_index_of(32) == 8);
    CHECK(latent_index_of(48) == 12);
    CHECK(latent_length(33) == 9);
    CHECK(latent_length(1) == 1);
    CHECK(frame_length(9) == 33);
    CHECK_THROWS_AS(latent_length(32), InvalidArgument);
    CHECK_THROWS_AS(latent_length(0), InvalidArgument);
}

TEST_CASE("analytic codec is an exact rearrangement") {
    const auto codec = Codec::analytic(4);
    CHECK(codec.latent_channels() == 192);
    const auto x = random_video(33, 16, 24, 1);
    const auto z = codec.encode(x);
    CHECK(z.shape() == tensor::Shape{9, 192, 4, 6});
    const auto y = codec.decode(z);
    CHECK(y.shape() == x.shape());
    CHECK(same(y.data(), x.data()));

    const auto single = random_video(1, 8, 8, 2);
    const auto single_back = codec.decode(codec.encode(single));
    CHECK(same(single_back.data(), single.data()));
    CHECK_THROWS_AS(codec.encode(random_video(33, 10, 16, 3)), InvalidArgument);
    CHECK_THROWS_AS(codec.encode(random_video(8, 16, 16, 3)), InvalidArgument);
}

TEST_CASE("latent frame of a pixel follows the grouping") {
    // A bump in frame t must land in latent index latent_index_of(t) only.
    const auto codec = Codec::analytic(2);
    for (std::size_t t : {0u, 1u, 4u, 5u, 8u}) {
        Tensor<float> x(tensor::Shape{9, 3, 4, 4});
        x.data()[((t * 3 + 1) * 4 + 2) * 4 + 3] = 1.0f;
        const auto z = codec.encode(x);
        const std::size_t per = z.numel() / z.dim(0);
        for (std::size_t l = 0; l < z.dim(0); ++l) {
            float total = 0.0f;
            for (std::size_t i = 0; i < per; ++i) total += std::abs(z.data()[l * per + i]);
            CAPTURE(t);
            CAPTURE(l);
            if (l == latent_index_of(t)) CHECK(total > 0.0f);
            else CHECK(total == 0.0f);
        }
    }
}

TEST_CASE("codec causality: later frames never change earlier latents") {
    for (int learned = 0; learned < 2; ++learned) {
        const auto codec = learned ? Codec::learned(4, 16, 5) : Codec::analytic(4);
        auto x = random_video(17, 16, 16, 4);
        const auto z = codec.encode(x);
        auto perturbed = x.clone();
        for (std::size_t i = 9 * 3 * 16 * 16; i < perturbed.numel(); ++i) perturbed.data()[i] = 1.0f - perturbed.data()[i];
        const auto zp = codec.encode(perturbed);
        const std::size_t per = z.numel() / z.dim(0);
        // Frames 0..8 feed latents 0..2 only.
        const auto head = std::span<const float>(z.data().data(), 3 * per);
        const auto head_p = std::span<const float>(zp.data().data(), 3 * per);
        if (learned) CHECK(max_abs_diff(head, head_p) <= 1e-5);
        else CHECK(same(head, head_p));
        CHECK(max_abs_diff(z.data(), zp.data()) > 0.0);

        // Encoding a prefix matches the prefix of the full encoding.
        const auto prefix = codec.encode(ops::slice(x, 0, 0, 9));
        CHECK(max_abs_diff(prefix.data(), head) <= (learned ? 1e-5 : 0.0));
    }
}

TEST_CASE("single-frame encoding equals latent 0 of a clip") {
    const auto codec = Codec::learned(4, 16, 7);
    const auto x = random_video(9, 16, 16, 8);
    const auto z = codec.encode(x);
    const auto frame0 = ops::slice(x, 0, 0, 1);
    const auto zs = codec.encode_single_frame(ops::reshape(frame0, tensor::Shape{3, 16, 16}));
    CHECK(zs.shape() == tensor::Shape{1, 16, 4, 4});
    const auto z0 = ops::slice(z, 0, 0, 1);
    CHECK(max_abs_diff(zs.data(), z0.data()) <= 1e-6);
}

TEST_CASE("learned codec shapes and untrained reconstruction") {
    const auto codec = Codec::learned(4, 16, 9);
    const auto x = random_video(5, 16, 16, 10);
    const auto z = codec.encode(x);
    CHECK(z.shape() == tensor::Shape{2, 16, 4, 4});
    CHECK(codec.decode(z).shape() == x.shape());
    CHECK_THROWS_AS(codec.decode(random_video(2, 4, 4, 1)), ShapeError);
    CHECK_THROWS_AS(Codec::learned(4, 500, 1), InvalidArgument);
}

TEST_CASE("codec checkpoint round trip") {
    const auto codec = Codec::learned(4, 8, 11, 16);
    tensor::Checkpoint ckpt;
    codec.save(ckpt);
    const auto back = Codec::load(tensor::Checkpoint::deserialize(ckpt.serialize()));
    CHECK(back.mode() == CodecMode::learned);
    CHECK(back.latent_channels() == 8);
    const auto x = random_video(5, 8, 8, 12);
    const auto za = codec.encode(x), zb = back.encode(x);
    CHECK(same(za.data(), zb.data()));

    tensor::Checkpoint a;
    Codec::analytic(2).save(a);
    CHECK(Codec::load(a).mode() == CodecMode::analytic);
    CHECK_THROWS_AS(Codec::load(tensor::Checkpoint{}), NotFound);
}

TEST_CASE("short pretraining lowers reconstruction error") {
    std::mt19937_64 rng(13);
    std::vector<video::Video> clips;
    for (int i = 0; i < 3; ++i) clips.push_back(degrade::synth_clip(degrade::ClipKind::textured_blobs, 5, 16, 16, rng));
    PretrainConfig cfg;
    cfg.iterations = 60;
    cfg.batch = 1;
    cfg.hidden = 16;
    const auto result = pretrain_codec(clips, cfg);
    REQUIRE(result.losses.size() == 60);
    CHECK_FALSE(result.diverged);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 10; ++i) {
        first += result.losses[i];
        last += result.losses[50 + i];
    }
    CHECK(last < 0.5 * first);
}

TEST_CASE("layout conversion round trip") {
    std::mt19937_64 rng(14);
    const auto v = degrade::synth_clip(degrade::ClipKind::drifting_text, 5, 8, 12, rng);
    const auto t = to_tensor(v);
    CHECK(t.shape() == tensor::Shape{5, 3, 8, 12});
    CHECK(t.data()[(2 * 3 + 1) * 96 + 3 * 12 + 7] == v.at(2, 3, 7, 1));
    CHECK(to_video(t).values == v.values);
}
