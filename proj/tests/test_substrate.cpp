#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <vector>

#include "sigforge/errors.hpp"
#include "sigforge/net.hpp"
#include "sigforge/rng.hpp"

using namespace sigforge;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Hand-stepped dense oracle: walks the flat parameter vector with its own
// indexing and applies the activation explicitly.
std::vector<double> dense_oracle_forward(const Network& net, std::vector<double> x) {
    std::size_t offset = 0;
    for (const auto& layer : net.layers) {
        const std::size_t in = layer.in_size(), out = layer.out_size();
        std::vector<double> y(out, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            double z = net.params[offset + in * out + o];  // bias
            for (std::size_t i = 0; i < in; ++i) z += net.params[offset + o * in + i] * x[i];
            switch (layer.activation) {
                case Activation::kRelu: y[o] = std::max(0.0, z); break;
                case Activation::kSigmoid: y[o] = 1.0 / (1.0 + std::exp(-z)); break;
                case Activation::kTanh: y[o] = std::tanh(z); break;
                case Activation::kNone: y[o] = z; break;
            }
        }
        offset += layer.param_count();
        x = std::move(y);
    }
    return x;
}

}  // namespace

TEST_CASE("dense identity layer passes input through") {
    Network net;
    net.layers = {dense_layer(2, 2, Activation::kNone)};
    net.params = {1.0, 0.0, 0.0, 1.0, 0.0, 0.0};  // identity weights, zero bias
    net.velocity.assign(6, 0.0);
    const auto outs = forward(net, {1.0, 2.0});
    CHECK(outs.back() == std::vector<double>{1.0, 2.0});
}

TEST_CASE("dense sigmoid at zero input gives one half") {
    Network net;
    net.layers = {dense_layer(2, 1, Activation::kSigmoid)};
    net.params = {1.0, 1.0, 0.0};
    net.velocity.assign(3, 0.0);
    const auto outs = forward(net, {0.0, 0.0});
    CHECK(outs.back()[0] == doctest::Approx(0.5));
}

TEST_CASE("three-layer forward matches the hand-stepped oracle") {
    const Network net = make_network(
        {dense_layer(5, 7, Activation::kTanh), dense_layer(7, 4, Activation::kRelu),
         dense_layer(4, 3, Activation::kSigmoid)},
        7);
    const std::vector<double> input = random_vec(5, 7, -1.0, 1.0);
    const auto outs = forward(net, input);
    const auto expected = dense_oracle_forward(net, input);
    REQUIRE(outs.back().size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK(outs.back()[i] == doctest::Approx(expected[i]).epsilon(1e-6));
}

TEST_CASE("forward reports every intermediate activation and is pure") {
    const Network net = make_network(
        {dense_layer(3, 4, Activation::kRelu), dense_layer(4, 2, Activation::kSigmoid)}, 11);
    const std::vector<double> input = {0.1, -0.4, 0.9};
    const auto a = forward(net, input);
    const auto b = forward(net, input);
    CHECK(a.size() == 2);
    CHECK(a[0].size() == 4);
    CHECK(a[1].size() == 2);
    CHECK(a == b);  // byte-identical on repeated calls
}

TEST_CASE("forward rejects shape mismatch naming both shapes") {
    const Network net = make_network({dense_layer(3, 2)}, 1);
    CHECK_THROWS_WITH_AS(forward(net, {1.0, 2.0}), doctest::Contains("2"), ValidationError);
    CHECK_THROWS_WITH_AS(forward(net, {1.0, 2.0}), doctest::Contains("3"), ValidationError);
}

TEST_CASE("mse at the target is zero with zero gradient") {
    Network net;
    net.layers = {dense_layer(1, 1, Activation::kSigmoid)};
    net.params = {0.0, 0.0};  // sigmoid(0) = 0.5
    net.velocity.assign(2, 0.0);
    const auto [loss, grad] = loss_and_grad(net, {1.0}, {0.5}, LossKind::kMse);
    CHECK(loss.total == 0.0);
    for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("bce of a half against one is ln 2") {
    const LossValue loss = loss_only({0.5}, {1.0}, LossKind::kBce);
    CHECK(loss.total == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(loss.components.size() == 1);
    CHECK(loss.components[0].first == "bce");
}

TEST_CASE("loss components always sum to the total") {
    LossValue ok;
    ok.total = 1.5;
    ok.components = {{"a", 1.0}, {"b", 0.5}};
    CHECK_NOTHROW(ok.validate());

    LossValue bad;
    bad.total = 1.0;
    bad.components = {{"a", 0.4}, {"b", 0.4}};
    CHECK_THROWS_AS(bad.validate(), ValidationError);

    LossValue inf;
    inf.total = std::numeric_limits<double>::infinity();
    inf.components = {{"kl", std::numeric_limits<double>::infinity()}};
    CHECK_THROWS_WITH_AS(inf.validate(), doctest::Contains("kl"), NumericError);
}

TEST_CASE("gradients match central finite differences on dense nets") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Network net = make_network(
            {dense_layer(6, 5, Activation::kTanh), dense_layer(5, 4, Activation::kSigmoid),
             dense_layer(4, 3, Activation::kSigmoid)},
            seed);
        const std::vector<double> input = random_vec(6, seed + 100, -1.0, 1.0);
        const std::vector<double> target = random_vec(3, seed + 200, 0.05, 0.95);
        REQUIRE(grad_check(net, input, target, LossKind::kMse, 1e-4) < 1e-4);
        REQUIRE(grad_check(net, input, target, LossKind::kBce, 1e-4) < 1e-4);
    }
}

TEST_CASE("gradients match central finite differences through conv layers") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Network net = make_network(
            {conv2d_layer(1, 6, 6, 2, 3, Activation::kTanh),
             conv2d_layer(2, 4, 4, 1, 3, Activation::kRelu),
             dense_layer(4, 2, Activation::kSigmoid)},
            seed * 13 + 1);
        const std::vector<double> input = random_vec(36, seed + 300, 0.0, 1.0);
        const std::vector<double> target = random_vec(2, seed + 400, 0.05, 0.95);
        REQUIRE(grad_check(net, input, target, LossKind::kMse, 1e-4) < 1e-4);
        REQUIRE(grad_check(net, input, target, LossKind::kBce, 1e-4) < 1e-4);
    }
}

TEST_CASE("grad_check handles a zero-gradient point") {
    Network net;
    net.layers = {dense_layer(1, 1, Activation::kNone)};
    net.params = {0.0, 0.5};  // output 0.5 regardless of weight gradient flow through x=0
    net.velocity.assign(2, 0.0);
    // At the loss minimum the analytic gradient is zero; the 1e-8 floor keeps
    // the relative error defined.
    const double err = grad_check(net, {0.0}, {0.5}, LossKind::kMse, 1e-4);
    CHECK(err < 1e-5);
}

TEST_CASE("sgd momentum step follows the velocity recursion") {
    const Network base = make_network({dense_layer(2, 2, Activation::kNone)}, 3);
    const std::vector<double> grad = random_vec(base.params.size(), 5, -1.0, 1.0);

    SUBCASE("lr 0 keeps parameters of a fresh net") {
        // Fresh network: velocity starts all-zero, so nothing moves.
        const Network stepped = sgd_momentum_step(base, grad, 0.0, 0.9);
        CHECK(stepped.params == base.params);
        for (double v : stepped.velocity) CHECK(v == 0.0);
    }
    SUBCASE("lr 0 scales a live velocity by momentum and coasts") {
        Network net = base;
        net.velocity = random_vec(net.params.size(), 6, -1.0, 1.0);
        const std::vector<double> v0 = net.velocity;
        const Network stepped = sgd_momentum_step(net, grad, 0.0, 0.9);
        for (std::size_t i = 0; i < v0.size(); ++i) {
            CHECK(stepped.velocity[i] == doctest::Approx(0.9 * v0[i]));
            CHECK(stepped.params[i] == doctest::Approx(base.params[i] + 0.9 * v0[i]));
        }
    }
    SUBCASE("momentum 0 lr 1 is plain descent") {
        const Network stepped = sgd_momentum_step(base, grad, 1.0, 0.0);
        for (std::size_t i = 0; i < grad.size(); ++i)
            CHECK(stepped.params[i] == doctest::Approx(base.params[i] - grad[i]));
    }
    SUBCASE("lr 0 momentum 0 is the identity on params and zeroes velocity") {
        Network net = base;
        net.velocity = random_vec(net.params.size(), 8, -1.0, 1.0);
        const Network stepped = sgd_momentum_step(net, grad, 0.0, 0.0);
        CHECK(stepped.params == base.params);
        for (double v : stepped.velocity) CHECK(v == 0.0);
    }
    SUBCASE("two steps on a fixed gradient match the hand recursion") {
        const double lr = 0.1, m = 0.9;
        Network net = sgd_momentum_step(base, grad, lr, m);
        net = sgd_momentum_step(net, grad, lr, m);
        // v1 = -lr g, p1 = p - lr g; v2 = m v1 - lr g = -(1+m) lr g,
        // p2 = p - (2+m) lr g.
        for (std::size_t i = 0; i < grad.size(); ++i) {
            CHECK(net.velocity[i] == doctest::Approx(-(1.0 + m) * lr * grad[i]));
            CHECK(net.params[i] == doctest::Approx(base.params[i] - (2.0 + m) * lr * grad[i]));
        }
    }
    SUBCASE("length mismatch is rejected") {
        CHECK_THROWS_AS(sgd_momentum_step(base, {1.0}, 0.1, 0.9), ValidationError);
    }
}

TEST_CASE("network invariants") {
    const Network net = make_network({dense_layer(3, 4), dense_layer(4, 2)}, 9);
    CHECK(net.param_count() == 3 * 4 + 4 + 4 * 2 + 2);
    CHECK(net.params.size() == net.param_count());
    for (double v : net.velocity) CHECK(v == 0.0);

    Network broken = net;
    broken.layers[1] = dense_layer(5, 2);
    CHECK_THROWS_AS(broken.validate(), ValidationError);
}

TEST_CASE("model serialization round trips bit-exactly") {
    const Network net = make_network(
        {conv2d_layer(1, 8, 8, 2, 3, Activation::kRelu), dense_layer(72, 10, Activation::kTanh),
         dense_layer(10, 2, Activation::kSigmoid)},
        1234);
    const auto path = std::filesystem::temp_directory_path() / "sigforge_model_roundtrip.bin";
    nlohmann::json extra;
    extra["user_id"] = 42;
    save_model(net, 1234, extra, path);
    const LoadedModel loaded = load_model(path);
    CHECK(loaded.seed == 1234);
    CHECK(loaded.extra.at("user_id").get<int>() == 42);
    REQUIRE(loaded.net.params.size() == net.params.size());
    for (std::size_t i = 0; i < net.params.size(); ++i) {
        // Bit-exact, not approximately equal.
        REQUIRE(std::memcmp(&loaded.net.params[i], &net.params[i], sizeof(double)) == 0);
    }
    CHECK(loaded.net.layers.size() == net.layers.size());

    const auto outs_a = forward(net, random_vec(64, 5));
    const auto outs_b = forward(loaded.net, random_vec(64, 5));
    CHECK(outs_a.back() == outs_b.back());
}
