#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "sparkprop/tensor/adamw.hpp"
#include "sparkprop/tensor/checkpoint.hpp"
#include "sparkprop/tensor/gradcheck.hpp"
#include "support/op_cases.hpp"

using namespace sparkprop;
using namespace sparkprop::tensor;

TEST_CASE("backward of sum of squares") {
    Tensor<double> x(Shape{2}, {1.0, 2.0}, true);
    Graph<double> g;
    {
        GraphScope<double> scope(g);
        backward(g, ops::sum(ops::mul(x, x)));
    }
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("mean gradient is 1/n") {
    Tensor<float> x = Tensor<float>::full(Shape{7}, 3.0f);
    x.set_requires_grad(true);
    Graph<float> g;
    {
        GraphScope<float> scope(g);
        backward(g, ops::mean(x));
    }
    for (float v : x.grad()) CHECK(v == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("backward rejects non-scalar loss") {
    Tensor<float> x(Shape{3}, {1, 2, 3}, true);
    Graph<float> g;
    GraphScope<float> scope(g);
    auto y = ops::mul(x, x);
    CHECK_THROWS_AS(backward(g, y), ShapeError);
}

TEST_CASE("grad_check examples") {
    auto quadratic = [](const auto& in) { return ops::sum(ops::mul(in[0], in[0])); };
    CHECK(grad_check<double>(quadratic, {Tensor<double>(Shape{3}, {1, 2, 3})}, 1e-4) < 1e-8);
    auto silu = [](const auto& in) { return ops::sum(ops::silu(in[0])); };
    CHECK(grad_check<double>(silu, {Tensor<double>(Shape{1}, std::vector<double>{0.0})}, 1e-4) < 1e-6);
}

TEST_CASE("composite conv silu sum matches finite differences") {
    std::mt19937_64 rng(11);
    auto x = testing::uniform({1, 3, 8, 8}, rng);
    auto w = testing::uniform({4, 3, 3, 3}, rng, -0.3f, 0.3f);
    auto fn = [](const auto& in) {
        using T = typename std::decay_t<decltype(in[0])>::value_type;
        return ops::sum(ops::silu(ops::conv2d(in[0], in[1], Tensor<T>(), 1, 1)));
    };
    CHECK(grad_check<float>(fn, {x, w}, 1e-4) < 1e-3);
}

TEST_CASE("every primitive agrees with finite differences") {
    std::mt19937_64 rng(5);
    for (int seed = 0; seed < 3; ++seed) {
        testing::for_each_primitive_case(rng, [](const std::string& name, const auto& point, const auto& fn) {
            CAPTURE(name);
            CHECK(grad_check<float>(fn, point, 1e-4) < 1e-3);
            std::vector<Tensor<double>> p64;
            for (const auto& p : point) p64.push_back(cast<double>(p));
            CHECK(grad_check<double>(fn, p64, 1e-5) < 1e-6);
        });
    }
}

TEST_CASE("shape rules") {
    Tensor<float> a(Shape{2, 16, 4, 4}), b(Shape{2, 16, 4, 4});
    CHECK(ops::concat_channels(a, b).shape() == Shape{2, 32, 4, 4});
    Tensor<float> x(Shape{5, 2, 3, 3});
    Tensor<float> w(Shape{4, 2, 4, 1, 1});
    CHECK(ops::conv3d_causal(x, w, Tensor<float>(), 4).shape() == Shape{2, 4, 3, 3});
    CHECK_THROWS_AS(ops::add(Tensor<float>(Shape{2, 3}), Tensor<float>(Shape{4})), ShapeError);
    try {
        ops::matmul(Tensor<float>(Shape{2, 3}), Tensor<float>(Shape{2, 3}));
        FAIL("expected a shape error");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
    }
}

TEST_CASE("conv3d_causal matches a hand-unrolled convolution") {
    // T=5, one channel, 1x1 spatial, kt=4, stride 4: outputs read frames
    // {-3..0} and {1..4}; missing past frames are zero.
    Tensor<float> x(Shape{5, 1, 1, 1}, {1, 2, 3, 4, 5});
    Tensor<float> w(Shape{1, 1, 4, 1, 1}, {0.1f, 0.2f, 0.3f, 0.4f});
    auto y = ops::conv3d_causal(x, w, Tensor<float>(), 4);
    REQUIRE(y.shape() == Shape{2, 1, 1, 1});
    CHECK(y.data()[0] == doctest::Approx(0.4 * 1));
    CHECK(y.data()[1] == doctest::Approx(0.1 * 2 + 0.2 * 3 + 0.3 * 4 + 0.4 * 5));
}

TEST_CASE("conv2d with identity kernel is the identity") {
    std::mt19937_64 rng(3);
    auto x = testing::uniform({2, 3, 4, 4}, rng);
    Tensor<float> w(Shape{3, 3, 1, 1});
    for (std::size_t c = 0; c < 3; ++c) w.data()[c * 3 + c] = 1.0f;
    auto y = ops::conv2d(x, w, Tensor<float>());
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv3d_causal ignores future frames") {
    std::mt19937_64 rng(9);
    auto x = testing::uniform({9, 2, 4, 4}, rng);
    auto w = testing::uniform({3, 2, 4, 3, 3}, rng);
    auto before = ops::conv3d_causal(x, w, Tensor<float>(), 4);
    auto x2 = x.clone();
    for (std::size_t i = 6 * 32; i < x2.numel(); ++i) x2.data()[i] += 1.0f;  // frames 6..8
    auto after = ops::conv3d_causal(x2, w, Tensor<float>(), 4);
    // latent frame 1 covers input frames 1..4
    for (std::size_t i = 0; i < 2 * 3 * 16; ++i) CHECK(before.data()[i] == after.data()[i]);
}

TEST_CASE("concat then slice recovers the parts") {
    std::mt19937_64 rng(4);
    auto a = testing::uniform({2, 3, 2, 2}, rng);
    auto b = testing::uniform({2, 5, 2, 2}, rng);
    auto c = ops::concat_channels(a, b);
    auto a2 = ops::slice(c, 1, 0, 3);
    auto b2 = ops::slice(c, 1, 3, 8);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a2.data()[i] == a.data()[i]);
    for (std::size_t i = 0; i < b.numel(); ++i) CHECK(b2.data()[i] == b.data()[i]);
}

TEST_CASE("apply dispatches by name") {
    Tensor<float> a(Shape{2}, {1, 2}), b(Shape{2}, {3, 5});
    const Tensor<float> in[] = {a, b};
    auto y = ops::apply<float>("mul", in);
    CHECK(y.data()[1] == 10.0f);
    CHECK_THROWS_AS(ops::apply<float>("fft", in), InvalidArgument);
}

TEST_CASE("adamw examples") {
    SUBCASE("first step with unit gradient") {
        std::vector<Tensor<float>> p{Tensor<float>(Shape{1}, {1.0f}, true)};
        p[0].grad()[0] = 1.0f;
        auto st = make_adamw_state(p, AdamWConfig{0.1, 0.9, 0.95, 1e-8, 0.0});
        auto r = adamw_step(p, st);
        CHECK(r.applied);
        CHECK(p[0].data()[0] == doctest::Approx(0.9).epsilon(1e-6));
        CHECK(st.step == 1);
    }
    SUBCASE("decoupled decay") {
        std::vector<Tensor<float>> p{Tensor<float>(Shape{1}, {1.0f}, true)};
        p[0].grad()[0] = 0.0f;
        auto st = make_adamw_state(p, AdamWConfig{0.1, 0.9, 0.95, 1e-8, 0.1});
        adamw_step(p, st);
        CHECK(p[0].data()[0] == doctest::Approx(0.99).epsilon(1e-6));
    }
    SUBCASE("zero gradient without decay is the identity") {
        std::mt19937_64 rng(1);
        std::vector<Tensor<float>> p{testing::uniform({4, 3}, rng)};
        auto before = p[0].clone();
        auto st = make_adamw_state(p, AdamWConfig{});
        p[0].grad();
        adamw_step(p, st);
        for (std::size_t i = 0; i < 12; ++i) CHECK(p[0].data()[i] == before.data()[i]);
    }
    SUBCASE("non-finite gradient skips the step") {
        std::vector<Tensor<float>> p{Tensor<float>(Shape{2}, {1.0f, 2.0f}, true)};
        p[0].grad()[1] = std::nanf("");
        auto st = make_adamw_state(p, AdamWConfig{});
        auto r = adamw_step(p, st);
        CHECK_FALSE(r.applied);
        CHECK(r.non_finite_gradient);
        CHECK(st.step == 0);
        CHECK(p[0].data()[0] == 1.0f);
    }
}

TEST_CASE("checkpoint round trip and corruption") {
    Checkpoint ck;
    ck.put("w", Tensor<float>(Shape{2, 2}, {1, 2, 3, 4}));
    ck.put("d", Tensor<double>::scalar(0.125));
    ck.metadata()["iteration"] = "12";
    auto bytes = ck.serialize();
    REQUIRE(bytes.size() > 16);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SPKV");
    auto back = Checkpoint::deserialize(bytes);
    CHECK(back.get_f32("w").to_vector()[3] == 4.0f);
    CHECK(back.get_f64("d").item() == 0.125);
    CHECK(back.meta("iteration") == "12");
    CHECK_THROWS_AS(back.get_f32("missing"), NotFound);
    CHECK_THROWS_AS(back.get_f32("d"), InvalidArgument);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(Checkpoint::deserialize(bad), ParseError);
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(Checkpoint::deserialize(bytes), ParseError);

    auto path = std::filesystem::temp_directory_path() / "sparkprop_ckpt_test.spkv";
    ck.save(path);
    CHECK(Checkpoint::load(path).get_f32("w").to_vector()[0] == 1.0f);
    std::filesystem::remove(path);
}
