#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "sparkprop/bytes.hpp"
#include "sparkprop/tensor/ops.hpp"
#include "sparkprop/train/train.hpp"

using namespace sparkprop;
using namespace sparkprop::train;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.model.width = 8;
    cfg.model.blocks = 1;
    cfg.model.groups = 2;
    cfg.model.latent_channels = 8;
    cfg.iterations = 6;
    cfg.seed = 3;
    return cfg;
}

std::vector<Example> tiny_data(const vae::Codec& codec, std::size_t clips = 3) {
    degrade::DatasetSpec spec;
    spec.clips = clips;
    spec.frames = 9;
    spec.height = 16;
    spec.width = 16;
    return prepare_examples(degrade::make_dataset(spec), codec);
}

bool same_params(const tensor::Checkpoint& a, const tensor::Checkpoint& b) {
    for (const auto& name : a.names()) {
        if (!b.contains(name)) return false;
        if (a.get_f32(name).to_vector() != b.get_f32(name).to_vector()) return false;
    }
    return a.names() == b.names();
}

}  // namespace

TEST_CASE("config text round trip and validation") {
    auto cfg = tiny_config();
    cfg.lr = 2e-4;
    cfg.augment.blur_sigma = {0.25, 0.75};
    cfg.log_path = "run.csv";
    const auto back = TrainConfig::parse(cfg.to_text());
    CHECK(back.to_text() == cfg.to_text());
    CHECK(back.hash() == cfg.hash());

    auto longer = cfg;
    longer.iterations = 1000;
    longer.checkpoint_every = 10;
    CHECK(longer.hash() == cfg.hash());
    auto other = cfg;
    other.seed = 4;
    CHECK(other.hash() != cfg.hash());

    CHECK(TrainConfig::parse("# comment\nstage = 2\nlr=1e-3\n").stage == 2);
    CHECK_THROWS_AS(TrainConfig::parse("learning_rate=1"), InvalidArgument);
    CHECK_THROWS_AS(TrainConfig::parse("lr=fast"), InvalidArgument);
    CHECK_THROWS_AS(TrainConfig::parse("phi=1.5"), InvalidArgument);
    CHECK_THROWS_AS(TrainConfig::parse("p_drop=-0.1"), InvalidArgument);
    CHECK_THROWS_AS(TrainConfig::parse("lambda1=-1"), InvalidArgument);
    CHECK_THROWS_AS(TrainConfig::parse("stage=3"), InvalidArgument);
    CHECK_THROWS_AS(TrainConfig::parse("augment.noise_sigma=0.1"), InvalidArgument);
}

TEST_CASE("perfect prediction gives zero stage-1 loss") {
    const auto codec = vae::Codec::analytic(4);
    degrade::DatasetSpec spec;
    spec.clips = 1;
    spec.frames = 5;
    spec.height = 8;
    spec.width = 8;
    auto pairs = degrade::make_dataset(spec);
    pairs[0].lr = pairs[0].hr;  // LR equal to HR: the untrained residual model is exact
    const auto data = prepare_examples(pairs, codec);
    auto cfg = tiny_config();
    cfg.model.latent_channels = 192;
    auto learner = make_learner(cfg);
    auto rng = iteration_rng(1, 1, 0);
    CHECK(stage1_step(data, learner, codec, cfg, rng).loss == 0.0);
}

TEST_CASE("full reference dropout leaves reference weights without gradient") {
    const auto codec = vae::Codec::learned(4, 8, 1, 8);
    const auto data = tiny_data(codec);
    auto cfg = tiny_config();
    cfg.p_drop = 1.0;
    auto learner = make_learner(cfg);
    for (std::size_t it = 0; it < 3; ++it) {
        auto rng = iteration_rng(cfg.seed, 1, it);
        stage1_step(data, learner, codec, cfg, rng);
        const auto w = learner.model.params().get("in.w");
        const auto g = std::as_const(w).grad();
        const std::size_t co = w.dim(0), ci = w.dim(1), k = 9;
        double ref_part = 0.0, lr_part = 0.0;
        for (std::size_t o = 0; o < co; ++o)
            for (std::size_t i = 0; i < ci; ++i)
                for (std::size_t j = 0; j < k; ++j) (i < ci / 2 ? lr_part : ref_part) += std::abs(g[(o * ci + i) * k + j]);
        CHECK(ref_part == 0.0);
        if (it > 0) CHECK(lr_part > 0.0);  // the output layer starts at zero, so step 0 has no upstream gradient
    }
}

TEST_CASE("stage-2 mixing honours phi") {
    const auto codec = vae::Codec::learned(4, 8, 2, 8);
    const auto data = tiny_data(codec, 2);
    const FilterBank bank;
    auto cfg = tiny_config();
    cfg.stage = 2;
    cfg.lr = 2e-4;
    for (double phi : {0.0, 1.0}) {
        cfg.phi = phi;
        auto learner = make_learner(cfg);
        for (std::size_t it = 0; it < 100; ++it) {
            auto rng = iteration_rng(cfg.seed, 2, it);
            const auto r = stage2_step(data, learner, codec, cfg, bank, rng);
            CHECK(r.video_step == (phi == 1.0));
            if (!r.video_step) {
                CHECK(r.zero_reference);
                CHECK(r.frame == 0.0);
            }
            CHECK_FALSE(r.skipped);
        }
    }
    cfg.phi = 0.5;
    auto learner = make_learner(cfg);
    std::size_t video = 0;
    for (std::size_t it = 0; it < 40; ++it) {
        auto rng = iteration_rng(cfg.seed, 2, it);
        video += stage2_step(data, learner, codec, cfg, bank, rng).video_step;
    }
    CHECK(video > 5);
    CHECK(video < 35);
}

TEST_CASE("stage-1 training lowers the latent error") {
    const auto codec = vae::Codec::learned(4, 8, 3, 8);
    const auto data = tiny_data(codec, 2);
    auto cfg = tiny_config();
    cfg.iterations = 120;
    cfg.lr = 3e-3;
    std::vector<double> losses;
    train_run(cfg, data, codec, std::nullopt, {[&](std::size_t, const StepResult& r) { losses.push_back(r.loss); }});
    REQUIRE(losses.size() == 120);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 20; ++i) {
        first += losses[i];
        last += losses[100 + i];
    }
    CHECK(last < first);
}

TEST_CASE("resumed runs are bit-identical to uninterrupted ones") {
    const auto codec = vae::Codec::learned(4, 8, 4, 8);
    const auto data = tiny_data(codec);
    auto cfg = tiny_config();
    const auto full = train_run(cfg, data, codec, std::nullopt);
    CHECK(full.meta("train.iteration") == "6");

    auto half = cfg;
    half.iterations = 3;
    const auto mid = tensor::Checkpoint::deserialize(train_run(half, data, codec, std::nullopt).serialize());
    const auto resumed = train_run(cfg, data, codec, mid);
    CHECK(same_params(full, resumed));

    auto s2 = cfg;
    s2.stage = 2;
    s2.lr = 2e-4;
    s2.iterations = 4;
    const auto s2_full = train_run(s2, data, codec, full);
    auto s2_half = s2;
    s2_half.iterations = 2;
    const auto s2_mid = train_run(s2_half, data, codec, full);
    CHECK(same_params(s2_full, train_run(s2, data, codec, s2_mid)));
    CHECK(s2_full.meta("train.stage") == "2");
}

TEST_CASE("run edge cases") {
    const auto codec = vae::Codec::learned(4, 8, 5, 8);
    const auto data = tiny_data(codec, 1);
    auto cfg = tiny_config();
    cfg.iterations = 2;
    const auto ckpt = train_run(cfg, data, codec, std::nullopt);

    auto zero = cfg;
    zero.iterations = 0;
    CHECK(train_run(zero, data, codec, ckpt).serialize() == ckpt.serialize());

    auto s2 = cfg;
    s2.stage = 2;
    CHECK_THROWS_AS(train_run(s2, data, codec, std::nullopt), InvalidArgument);

    auto changed = cfg;
    changed.iterations = 4;
    changed.p_drop = 0.5;
    CHECK_THROWS_AS(train_run(changed, data, codec, ckpt), Conflict);

    auto s2done = train_run(s2, data, codec, ckpt);
    CHECK_THROWS_AS(train_run(cfg, data, codec, s2done), InvalidArgument);
}

TEST_CASE("checkpoints and log are written") {
    const auto dir = std::filesystem::temp_directory_path() / "sparkprop_train_test";
    std::filesystem::remove_all(dir);
    const auto codec = vae::Codec::learned(4, 8, 6, 8);
    const auto data = tiny_data(codec, 1);
    auto cfg = tiny_config();
    cfg.iterations = 4;
    cfg.checkpoint_every = 2;
    cfg.checkpoint_dir = dir;
    cfg.log_path = dir / "log.csv";
    std::filesystem::create_directories(dir);
    const auto final_ckpt = train_run(cfg, data, codec, std::nullopt);
    CHECK(std::filesystem::exists(dir / "stage1-2.ckpt"));
    const auto last = tensor::Checkpoint::load(dir / "stage1-4.ckpt");
    CHECK(same_params(last, final_ckpt));
    CHECK(last.meta("train.config_hash") == cfg.hash());
    const auto log = to_string(read_file(cfg.log_path));
    CHECK(log.rfind("iteration,stage,loss,mse,dists,frame,kind,skipped\n", 0) == 0);
    CHECK(std::count(log.begin(), log.end(), '\n') == 5);
    std::filesystem::remove_all(dir);
}
