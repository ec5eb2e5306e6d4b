#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "tspsro/nn.hpp"

using namespace tspsro;

namespace {

// 2 -> 3 (relu) -> 1 (identity) network with fixed weights.
DenseNet tiny_net(Rng& rng) {
    return make_net({2, 3, 1}, {Activation::relu, Activation::identity}, rng);
}

}  // namespace

TEST_CASE("forward computes a hand-checked affine relu chain") {
    DenseNet net;
    DenseLayer l1;
    l1.in_dim = 1;
    l1.out_dim = 2;
    l1.act = Activation::relu;
    l1.W = {2.0, -3.0};  // row-major out x in
    l1.b = {1.0, 0.5};
    DenseLayer l2;
    l2.in_dim = 2;
    l2.out_dim = 1;
    l2.act = Activation::identity;
    l2.W = {1.0, 1.0};
    l2.b = {-0.25};
    net.layers = {l1, l2};

    // x = 3: pre1 = (7, -8.5) -> relu (7, 0) -> out 7 - 0.25.
    const std::vector<double> out = forward(net, {3.0});
    REQUIRE(out.size() == 1);
    CHECK(out[0] == Catch::Approx(6.75));
}

TEST_CASE("forward validates input size") {
    Rng rng(2);
    const DenseNet net = tiny_net(rng);
    CHECK_THROWS_AS(forward(net, {1.0, 2.0, 3.0}), ShapeError);
}

TEST_CASE("network construction validates shapes") {
    Rng rng(2);
    DenseNet net = tiny_net(rng);
    net.layers[0].W.pop_back();
    CHECK_THROWS_AS(validate_net(net), ShapeError);
    CHECK_THROWS_AS(make_net({2, 3}, {Activation::relu, Activation::relu}, rng), ShapeError);
}

TEST_CASE("initial weights scale with fan-in and biases start at zero") {
    Rng rng(11);
    const DenseNet net = make_net({64, 32}, {Activation::identity}, rng);
    for (double b : net.layers[0].b) CHECK(b == 0.0);
    double sq = 0.0;
    for (double w : net.layers[0].W) sq += w * w;
    const double observed_sd = std::sqrt(sq / static_cast<double>(net.layers[0].W.size()));
    CHECK(observed_sd == Catch::Approx(1.0 / std::sqrt(64.0)).margin(0.02));
}

TEST_CASE("backward matches finite differences on every parameter") {
    Rng rng(37);
    DenseNet net = make_net({2, 4, 3}, {Activation::sigmoid, Activation::identity}, rng);
    const std::vector<double> input = {0.3, -0.8};
    const std::vector<double> out_grad = {1.0, -2.0, 0.5};  // d(scalar loss)/d(outputs)

    // Scalar objective: dot(out_grad, forward(input)).
    std::vector<double> params = flatten_params(net);
    auto objective = [&]() {
        set_params(net, params);
        const std::vector<double> out = forward(net, input);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out_grad[i] * out[i];
        return s;
    };

    set_params(net, params);
    ForwardCache cache;
    forward(net, input, &cache);
    NetGrads grads = zero_grads(net);
    const std::vector<double> input_grad = backward(net, cache, out_grad, grads);
    const std::vector<double> analytic = flatten_grads(grads);

    const double worst = testutil::max_grad_rel_err(objective, params, analytic, 1e-6);
    CHECK(worst < 1e-5);

    // Input gradient too.
    std::vector<double> in = input;
    auto input_objective = [&]() {
        const std::vector<double> out = forward(net, in);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out_grad[i] * out[i];
        return s;
    };
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double fd = testutil::central_diff(input_objective, in, i, 1e-6);
        CHECK(testutil::rel_err(input_grad[i], fd) < 1e-5);
    }
}

TEST_CASE("backward works through relu away from the kink") {
    Rng rng(53);
    DenseNet net = make_net({3, 5, 1}, {Activation::relu, Activation::identity}, rng);
    const std::vector<double> input = {0.9, -0.4, 0.2};
    std::vector<double> params = flatten_params(net);
    auto objective = [&]() {
        set_params(net, params);
        return forward(net, input)[0];
    };
    set_params(net, params);
    ForwardCache cache;
    forward(net, input, &cache);
    NetGrads grads = zero_grads(net);
    backward(net, cache, {1.0}, grads);
    CHECK(testutil::max_grad_rel_err(objective, params, flatten_grads(grads), 1e-7) < 1e-4);
}

TEST_CASE("backward accumulates into the gradient buffer") {
    Rng rng(5);
    DenseNet net = tiny_net(rng);
    ForwardCache cache;
    forward(net, {0.5, 0.5}, &cache);
    NetGrads once = zero_grads(net);
    backward(net, cache, {1.0}, once);
    NetGrads twice = zero_grads(net);
    backward(net, cache, {1.0}, twice);
    backward(net, cache, {1.0}, twice);
    for (std::size_t li = 0; li < once.dW.size(); ++li) {
        for (std::size_t i = 0; i < once.dW[li].size(); ++i) {
            CHECK(twice.dW[li][i] == Catch::Approx(2.0 * once.dW[li][i]));
        }
    }
}

TEST_CASE("gradient buffers scale and accumulate with weights") {
    Rng rng(6);
    DenseNet net = tiny_net(rng);
    NetGrads a = zero_grads(net);
    ForwardCache cache;
    forward(net, {1.0, -1.0}, &cache);
    backward(net, cache, {2.0}, a);
    NetGrads b = zero_grads(net);
    accumulate_grads(b, a, 0.5);
    scale_grads(a, 0.5);
    for (std::size_t li = 0; li < a.dW.size(); ++li) {
        CHECK(a.dW[li] == b.dW[li]);
        CHECK(a.db[li] == b.db[li]);
    }
}

TEST_CASE("flatten and set round-trip parameters") {
    Rng rng(8);
    DenseNet net = tiny_net(rng);
    const std::vector<double> flat = flatten_params(net);
    DenseNet other = tiny_net(rng);  // different random values
    set_params(other, flat);
    CHECK(flatten_params(other) == flat);
    std::vector<double> wrong(flat.size() + 1, 0.0);
    CHECK_THROWS_AS(set_params(other, wrong), ShapeError);
}

TEST_CASE("first adam step moves by roughly the learning rate") {
    AdamState adam = make_adam(1, 0.1);
    std::vector<double> p = {1.0};
    adam_step(adam, p, {0.5});
    // Bias-corrected first step: lr * g / (|g| + eps) ~ lr * sign(g).
    CHECK(p[0] == Catch::Approx(1.0 - 0.1).epsilon(1e-4));
    std::vector<double> q = {1.0};
    AdamState adam2 = make_adam(1, 0.1);
    adam_step(adam2, q, {-0.5});
    CHECK(q[0] == Catch::Approx(1.0 + 0.1).epsilon(1e-4));
}

TEST_CASE("adam converges on a quadratic") {
    AdamState adam = make_adam(2, 0.05);
    std::vector<double> p = {3.0, -2.0};
    for (int i = 0; i < 2000; ++i) {
        adam_step(adam, p, {2.0 * (p[0] - 1.0), 2.0 * (p[1] + 4.0)});
    }
    CHECK(p[0] == Catch::Approx(1.0).margin(1e-3));
    CHECK(p[1] == Catch::Approx(-4.0).margin(1e-3));
}

TEST_CASE("weight decay is decoupled from the gradient step") {
    AdamState adam = make_adam(1, 0.1, 1.0, 0.5);
    std::vector<double> p = {2.0};
    adam_step(adam, p, {0.0});
    // Zero gradient: only the decay term lr * wd * p acts.
    CHECK(p[0] == Catch::Approx(2.0 - 0.1 * 0.5 * 2.0));
}

TEST_CASE("epoch end applies the learning-rate decay") {
    AdamState adam = make_adam(1, 0.2, 0.5);
    CHECK(adam.lr == 0.2);
    adam_epoch_end(adam);
    CHECK(adam.lr == 0.1);
    adam_epoch_end(adam);
    CHECK(adam.lr == 0.05);
}

TEST_CASE("adam rejects mismatched gradient sizes") {
    AdamState adam = make_adam(2, 0.1);
    std::vector<double> p = {1.0, 2.0};
    CHECK_THROWS_AS(adam_step(adam, p, {1.0}), ShapeError);
}

TEST_CASE("softmax is shift-stable and normalized") {
    const std::vector<double> probs = softmax({1000.0, 1001.0, 999.0});
    double sum = 0.0;
    for (double v : probs) sum += v;
    CHECK(sum == Catch::Approx(1.0));
    CHECK(probs[1] > probs[0]);
    CHECK(probs[0] > probs[2]);
    const std::vector<double> small = softmax({0.0, 1.0, -1.0});
    for (std::size_t i = 0; i < 3; ++i) CHECK(probs[i] == Catch::Approx(small[i]));
    CHECK(std::isfinite(probs[0]));
}
