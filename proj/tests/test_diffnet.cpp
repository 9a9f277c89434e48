#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "asmr/diffnet.hpp"
#include "asmr/errors.hpp"
#include "asmr/gradcheck.hpp"
#include "asmr/rng.hpp"
#include "oracles.hpp"

using namespace asmr;

namespace {

// scripted re-evaluation of the affine/ReLU/normalize chain, element by element
Vec reevaluate_chain(const EncoderNet& net, const Vec& x) {
    Vec a = x;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const DenseLayer& layer = net.layers[l];
        Vec z(layer.bias);
        for (std::size_t i = 0; i < layer.weight.rows; ++i)
            for (std::size_t j = 0; j < layer.weight.cols; ++j) z[i] += layer.weight(i, j) * a[j];
        if (l + 1 < net.layers.size())
            for (double& v : z) v = std::max(v, 0.0);
        a = std::move(z);
    }
    if (net.normalize_output) {
        double sq = 0.0;
        for (double v : a) sq += v * v;
        const double n = std::sqrt(sq);
        for (double& v : a) v /= n;
    }
    return a;
}

// resample until no pre-activation sits near a ReLU kink
EncoderNet clean_random_net(const std::vector<std::size_t>& dims, const Vec& x,
                            std::uint64_t seed) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(derive_seed(seed, 0xBEEF, attempt));
        EncoderNet net = make_encoder(dims, true, rng);
        Matrix X(1, x.size());
        X.data = x;
        ForwardCache cache;
        try {
            forward_batch(net, X, cache);
        } catch (const NumericError&) {
            continue;  // dead ReLU path; draw again
        }
        bool clean = true;
        for (std::size_t l = 0; l + 1 < cache.pre.size(); ++l)
            for (double z : cache.pre[l].data) clean = clean && std::abs(z) > 1e-4;
        for (double n : cache.prenorm_norms) clean = clean && n > 1e-2;
        if (clean) return net;
    }
}

}  // namespace

TEST_CASE("forward with all-zero weights returns the normalized last bias") {
    Rng rng(1);
    EncoderNet net = make_encoder({4, 3, 3}, true, rng);
    for (auto& layer : net.layers) layer.weight.fill(0.0);
    net.layers[0].bias = {0.3, -0.2, 0.9};
    net.layers[1].bias = {3.0, 0.0, 4.0};
    const Vec out = forward(net, Vec{7.0, -1.0, 2.5, 0.0});
    CHECK(out[0] == doctest::Approx(0.6));
    CHECK(out[1] == doctest::Approx(0.0));
    CHECK(out[2] == doctest::Approx(0.8));
    // input-independent path
    CHECK(forward(net, Vec{0.0, 0.0, 0.0, 0.0}) == out);
}

TEST_CASE("single identity layer reduces to pure normalization") {
    EncoderNet net;
    DenseLayer layer;
    layer.weight = Matrix(2, 2);
    layer.weight(0, 0) = 1.0;
    layer.weight(1, 1) = 1.0;
    layer.bias = {0.0, 0.0};
    net.layers.push_back(layer);
    net.normalize_output = true;
    const Vec out = forward(net, Vec{3.0, 4.0});
    CHECK(out[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("seeded 3-layer forward matches an independent re-evaluation of the chain") {
    Rng rng(21);
    EncoderNet net = make_encoder({5, 7, 6, 4}, true, rng);
    for (int trial = 0; trial < 10; ++trial) {
        Vec x(5);
        for (double& v : x) v = rng.normal();
        const Vec got = forward(net, x);
        const Vec expected = reevaluate_chain(net, x);
        REQUIRE(got.size() == expected.size());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-14));
    }
}

TEST_CASE("forward output is unit norm and bit-deterministic") {
    Rng rng(33);
    EncoderNet net = make_encoder({6, 8, 8, 5}, true, rng);
    Vec x(6);
    for (double& v : x) v = rng.normal();
    const Vec a = forward(net, x);
    const Vec b = forward(net, x);
    CHECK(a == b);
    double sq = 0.0;
    for (double v : a) sq += v * v;
    CHECK(std::abs(std::sqrt(sq) - 1.0) < 1e-6);
}

TEST_CASE("forward rejects dimension mismatch and zero pre-normalization output") {
    Rng rng(2);
    EncoderNet net = make_encoder({3, 4, 2}, true, rng);
    CHECK_THROWS_AS(forward(net, Vec{1.0, 2.0}), NumericError);

    for (auto& layer : net.layers) {
        layer.weight.fill(0.0);
        layer.bias.assign(layer.bias.size(), 0.0);
    }
    CHECK_THROWS_AS(forward(net, Vec{1.0, 2.0, 3.0}), NumericError);
}

TEST_CASE("zero upstream yields an all-zero tape") {
    Rng rng(4);
    EncoderNet net = make_encoder({4, 5, 3}, true, rng);
    Vec x{0.5, -1.0, 2.0, 0.25};
    const NetGrads g = backward(net, x, Vec{0.0, 0.0, 0.0});
    for (const auto& lg : g.layers) {
        for (double v : lg.d_weight.data) CHECK(v == 0.0);
        for (double v : lg.d_bias) CHECK(v == 0.0);
    }
}

TEST_CASE("single linear layer with normalization: gradient matches finite differences to 1e-6") {
    Rng rng(9);
    EncoderNet net = make_encoder({3, 2}, true, rng);
    const Vec x{0.7, -0.4, 1.3};
    const Vec upstream{0.9, -1.2};

    auto value = [&]() {
        const Vec out = forward(net, x);
        return upstream[0] * out[0] + upstream[1] * out[1];
    };
    const NetGrads g = backward(net, x, upstream);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        for (std::size_t i = 0; i < net.layers[l].weight.data.size(); ++i) {
            const double numeric =
                oracles::central_diff(value, &net.layers[l].weight.data[i], 1e-5);
            CHECK(oracles::rel_err(g.layers[l].d_weight.data[i], numeric, 1e-8) < 1e-6);
        }
        for (std::size_t i = 0; i < net.layers[l].bias.size(); ++i) {
            const double numeric = oracles::central_diff(value, &net.layers[l].bias[i], 1e-5);
            CHECK(oracles::rel_err(g.layers[l].d_bias[i], numeric, 1e-8) < 1e-6);
        }
    }
}

TEST_CASE("full 3-layer gradients match finite differences over 20 seeds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng data_rng(derive_seed(seed, 0xDA7A));
        Vec x(4);
        for (double& v : x) v = data_rng.normal();
        EncoderNet net = clean_random_net({4, 6, 5, 3}, x, seed);
        Vec upstream(3);
        for (double& v : upstream) v = data_rng.normal();

        auto value = [&]() {
            const Vec out = forward(net, x);
            double acc = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) acc += upstream[i] * out[i];
            return acc;
        };
        const NetGrads g = backward(net, x, upstream);
        double worst = 0.0;
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            for (std::size_t i = 0; i < net.layers[l].weight.data.size(); ++i) {
                const double numeric =
                    oracles::central_diff(value, &net.layers[l].weight.data[i], 1e-5);
                worst = std::max(worst,
                                 oracles::rel_err(g.layers[l].d_weight.data[i], numeric, 1e-6));
            }
            for (std::size_t i = 0; i < net.layers[l].bias.size(); ++i) {
                const double numeric = oracles::central_diff(value, &net.layers[l].bias[i], 1e-5);
                worst =
                    std::max(worst, oracles::rel_err(g.layers[l].d_bias[i], numeric, 1e-6));
            }
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("batched backward equals the sum of per-sample backward passes") {
    Rng rng(17);
    EncoderNet net = make_encoder({4, 6, 3}, true, rng);
    Matrix X(5, 4), up(5, 3);
    for (double& v : X.data) v = rng.normal();
    for (double& v : up.data) v = rng.normal();

    ForwardCache cache;
    forward_batch(net, X, cache);
    NetGrads batch_grads = NetGrads::like(net);
    backward_batch(net, cache, up, batch_grads);

    NetGrads sum = NetGrads::like(net);
    for (std::size_t i = 0; i < X.rows; ++i) {
        Vec x(X.row(i), X.row(i) + X.cols);
        Vec u(up.row(i), up.row(i) + up.cols);
        const NetGrads one = backward(net, x, u);
        for (std::size_t l = 0; l < sum.layers.size(); ++l) {
            for (std::size_t t = 0; t < sum.layers[l].d_weight.data.size(); ++t)
                sum.layers[l].d_weight.data[t] += one.layers[l].d_weight.data[t];
            for (std::size_t t = 0; t < sum.layers[l].d_bias.size(); ++t)
                sum.layers[l].d_bias[t] += one.layers[l].d_bias[t];
        }
    }
    for (std::size_t l = 0; l < sum.layers.size(); ++l)
        for (std::size_t t = 0; t < sum.layers[l].d_weight.data.size(); ++t)
            CHECK(batch_grads.layers[l].d_weight.data[t] ==
                  doctest::Approx(sum.layers[l].d_weight.data[t]).epsilon(1e-12));
}

TEST_CASE("grad_check validates an exact quadratic and flags a corrupted gradient") {
    AttributeSchema schema({{"g0", {"a", "b"}}, {"g1", {"c", "d"}}});
    EncoderDims dims{3, 3, 3};
    ModelState state = init_model(schema, 3, dims, 5);

    // f = sum of squares / 2 over every parameter: gradient is the parameter itself
    auto f = [](const ModelState& s) {
        ModelState& mut = const_cast<ModelState&>(s);
        double acc = 0.0;
        for (const auto& block : param_blocks(mut))
            for (std::size_t i = 0; i < block.size; ++i) acc += block.data[i] * block.data[i];
        return acc / 2.0;
    };
    GradientTape tape = GradientTape::like(state);
    {
        std::vector<ParamBlock> pb = param_blocks(state);
        std::vector<ParamBlock> tb = tape_blocks(tape);
        for (std::size_t b = 0; b < pb.size(); ++b)
            for (std::size_t i = 0; i < pb[b].size; ++i) tb[b].data[i] = pb[b].data[i];
    }
    const GradCheckReport ok = grad_check(f, state, tape, 1e-5, 1e-4);
    CHECK(ok.pass);
    CHECK(ok.worst < 1e-6);

    tape.image.layers[0].d_weight(0, 0) += 0.05;  // negative control
    const GradCheckReport bad = grad_check(f, state, tape, 1e-5, 1e-4);
    CHECK(!bad.pass);
}

TEST_CASE("toy objective instances pass the gradient check at 1e-4") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const GradCheckReport report = run_toy_gradcheck(seed, 1e-5, 1e-4);
        CHECK(report.pass);
    }
    const GradCheckReport bad = run_toy_gradcheck(1, 1e-5, 1e-4, /*inject_bug=*/true);
    CHECK(!bad.pass);
}
