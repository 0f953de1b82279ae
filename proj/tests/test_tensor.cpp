#include <doctest.h>

#include "fd_check.hpp"
#include "oracles.hpp"
#include "pansharp/ops.hpp"
#include "pansharp/trainer.hpp"

using namespace pansharp;
using testutil::max_fd_rel_err;
using testutil::random_tensor;

TEST_CASE("tensor invariants") {
    Tensor<double> t({2, 3});
    CHECK(t.numel() == 6);
    CHECK_THROWS_AS(Tensor<double>({2, 0}), DimensionError);
    CHECK_THROWS_AS(Tensor<double>({2}, {1.0, std::nan("")}), NumericError);
    CHECK_THROWS_AS(Tensor<double>({2}, {1.0, 2.0, 3.0}), DimensionError);
}

TEST_CASE("linear identity and bias") {
    Tensor<double> x({1, 1, 2}, {1, 2});
    Tensor<double> eye({2, 2}, {1, 0, 0, 1});
    Tensor<double> y = linear<double>(nullptr, x, eye);
    CHECK(y.at({0, 0, 0}) == 1.0);
    CHECK(y.at({0, 0, 1}) == 2.0);

    Tensor<double> ones({1, 1, 2}, {1, 1});
    Tensor<double> w({2, 1}, {1, 1});
    Tensor<double> b({1}, {0.5});
    CHECK(linear<double>(nullptr, ones, w, &b).item() == doctest::Approx(2.5).epsilon(1e-15));

    Tensor<double> bad({3, 2}, {1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(linear<double>(nullptr, x, bad), DimensionError);
}

TEST_CASE("linear gradient matches finite differences") {
    Rng rng(3);
    Tensor<double> x = random_tensor<double>({1, 3, 4}, rng);
    Tensor<double> W = random_tensor<double>({4, 2}, rng);
    Tensor<double> b = random_tensor<double>({2}, rng);
    Tensor<double> probe = random_tensor<double>({1, 3, 2}, rng);
    double err = max_fd_rel_err<double>(
        {x, W, b}, [&](Graph<double>* g) { return sum_all(g, mul(g, linear(g, x, W, &b), probe)); });
    CHECK(err < 1e-5);
}

TEST_CASE("conv1d_depthwise identity tap and constant shift") {
    Rng rng(5);
    const int64_t B = 1, P = 3, N = 7, k = 4;
    Tensor<double> x = random_tensor<double>({B, P, N}, rng);
    Tensor<double> w({P, k});
    for (int64_t p = 0; p < P; ++p) w.at({p, k - 1}) = 1.0;  // last tap only
    Tensor<double> b({P});
    Tensor<double> y = conv1d_depthwise<double>(nullptr, x, w, b);
    CHECK(testutil::max_abs_diff(y, x) == 0.0);

    Tensor<double> xc = Tensor<double>::full({B, P, N}, 0.25);
    Tensor<double> b1 = Tensor<double>::full({P}, 1.0);
    Tensor<double> y2 = conv1d_depthwise<double>(nullptr, xc, w, b1);
    for (int64_t i = 0; i < y2.numel(); ++i) CHECK(y2.data()[i] == doctest::Approx(1.25).epsilon(1e-15));

    Tensor<double> wbad({P + 1, k});
    CHECK_THROWS_AS(conv1d_depthwise<double>(nullptr, x, wbad, b), DimensionError);
}

TEST_CASE("conv1d_depthwise matches naive summation") {
    Rng rng(7);
    const int64_t B = 2, P = 4, N = 9, k = 4;
    Tensor<double> x = random_tensor<double>({B, P, N}, rng);
    Tensor<double> w = random_tensor<double>({P, k}, rng);
    Tensor<double> b = random_tensor<double>({P}, rng);
    auto ref = oracles::conv1d_ref(oracles::as_doubles(x), oracles::as_doubles(w), oracles::as_doubles(b), B, P,
                                   N, k);
    CHECK(testutil::max_abs_diff(conv1d_depthwise<double>(nullptr, x, w, b), ref) < 1e-12);
}

TEST_CASE("conv1d_depthwise causality") {
    Rng rng(11);
    const int64_t N = 12;
    Tensor<double> x = random_tensor<double>({1, 2, N}, rng);
    Tensor<double> w = random_tensor<double>({2, 4}, rng);
    Tensor<double> b = random_tensor<double>({2}, rng);
    Tensor<double> y0 = conv1d_depthwise<double>(nullptr, x, w, b);
    for (int64_t t = 1; t < N; ++t) {
        Tensor<double> xp = x.clone();
        xp.at({0, 1, t}) += 1.0;
        Tensor<double> y1 = conv1d_depthwise<double>(nullptr, xp, w, b);
        for (int64_t s = 0; s < t; ++s) {
            CHECK(y0.at({0, 0, s}) == y1.at({0, 0, s}));
            CHECK(y0.at({0, 1, s}) == y1.at({0, 1, s}));
        }
    }
}

TEST_CASE("conv2d Dirac kernel and constant fill") {
    Rng rng(13);
    const int64_t C = 2, H = 5, W = 4;
    Tensor<double> x = random_tensor<double>({1, C, H, W}, rng);
    Tensor<double> w({C, C, 3, 3});
    for (int64_t c = 0; c < C; ++c) w.at({c, c, 1, 1}) = 1.0;
    Tensor<double> b({C});
    CHECK(testutil::max_abs_diff(conv2d<double>(nullptr, x, w, b), x) == 0.0);

    // constant image, kernel summing to s: interior pixels equal c*s
    Tensor<double> xc = Tensor<double>::full({1, 1, 6, 6}, 0.5);
    Tensor<double> ws = random_tensor<double>({1, 1, 3, 3}, rng);
    double s = 0;
    for (int64_t i = 0; i < 9; ++i) s += ws.data()[i];
    Tensor<double> b1({1});
    Tensor<double> y = conv2d<double>(nullptr, xc, ws, b1);
    for (int64_t h = 1; h < 5; ++h)
        for (int64_t wx = 1; wx < 5; ++wx) CHECK(y.at({0, 0, h, wx}) == doctest::Approx(0.5 * s).epsilon(1e-12));

    Tensor<double> weven({1, 1, 2, 2});
    CHECK_THROWS_AS(conv2d<double>(nullptr, xc, weven, b1), ConfigError);
}

TEST_CASE("conv2d matches naive loop oracle") {
    Rng rng(17);
    Tensor<double> x = random_tensor<double>({1, 2, 4, 4}, rng);
    Tensor<double> w = random_tensor<double>({3, 2, 3, 3}, rng);
    Tensor<double> b = random_tensor<double>({3}, rng);
    auto ref = oracles::conv2d_ref(oracles::as_doubles(x), oracles::as_doubles(w), oracles::as_doubles(b), 1, 2,
                                   4, 4, 3, 3);
    CHECK(testutil::max_abs_diff(conv2d<double>(nullptr, x, w, b), ref) < 1e-12);
}

TEST_CASE("layer_norm collapses constants to beta") {
    Tensor<double> x = Tensor<double>::full({1, 3, 4}, 2.5);
    Tensor<double> gamma = Tensor<double>::full({4}, 1.0);
    Tensor<double> beta({4}, {0.1, 0.2, 0.3, 0.4});
    Tensor<double> y = layer_norm<double>(nullptr, x, gamma, beta);
    for (int64_t n = 0; n < 3; ++n)
        for (int64_t c = 0; c < 4; ++c) CHECK(y.at({0, n, c}) == doctest::Approx(beta.at({c})).epsilon(1e-12));
}

TEST_CASE("layer_norm keeps an already-normalized pair") {
    Tensor<double> x({1, 1, 2}, {-1.0, 1.0});
    Tensor<double> gamma = Tensor<double>::full({2}, 1.0);
    Tensor<double> beta({2});
    Tensor<double> y = layer_norm<double>(nullptr, x, gamma, beta);
    CHECK(y.at({0, 0, 0}) == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(y.at({0, 0, 1}) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("layer_norm normalizes per token") {
    Rng rng(19);
    const int64_t C = 8;
    Tensor<double> x = random_tensor<double>({2, 5, C}, rng);
    Tensor<double> gamma = Tensor<double>::full({C}, 1.0);
    Tensor<double> beta({C});
    Tensor<double> y = layer_norm<double>(nullptr, x, gamma, beta);
    for (int64_t bn = 0; bn < 10; ++bn) {
        double mean = 0, var = 0;
        for (int64_t c = 0; c < C; ++c) mean += y.data()[bn * C + c];
        mean /= C;
        for (int64_t c = 0; c < C; ++c) var += (y.data()[bn * C + c] - mean) * (y.data()[bn * C + c] - mean);
        var /= C;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps-induced bias only
    }
}

TEST_CASE("layer_norm gradient vs finite differences") {
    Rng rng(23);
    Tensor<double> x = random_tensor<double>({1, 2, 4}, rng);
    Tensor<double> gamma = random_tensor<double>({4}, rng, 0.5, 1.5);
    Tensor<double> beta = random_tensor<double>({4}, rng);
    Tensor<double> probe = random_tensor<double>({1, 2, 4}, rng);
    double err = max_fd_rel_err<double>(
        {x, gamma, beta},
        [&](Graph<double>* g) { return sum_all(g, mul(g, layer_norm(g, x, gamma, beta), probe)); });
    CHECK(err < 1e-4);
}

TEST_CASE("silu and softplus analytic points") {
    Tensor<double> x({1, 1, 3}, {0.0, 50.0, -50.0});
    Tensor<double> s = silu<double>(nullptr, x);
    CHECK(s.at({0, 0, 0}) == 0.0);
    Tensor<double> sp = softplus<double>(nullptr, x);
    CHECK(sp.at({0, 0, 0}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(sp.at({0, 0, 1}) == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(sp.at({0, 0, 2}) >= 0.0);  // overflow-safe on the negative tail too
    CHECK(std::isfinite(sp.at({0, 0, 2})));
}

TEST_CASE("backward: l1 sign gradient and unused parameters") {
    Tensor<double> pred({1, 1, 4}, {1.0, 2.0, 3.0, 4.0});
    Tensor<double> gt({1, 1, 4}, {0.5, 1.0, 2.0, 3.0});  // pred - gt > 0 everywhere
    pred.set_requires_grad(true);
    Tensor<double> unused = Tensor<double>::full({2}, 1.0);
    unused.set_requires_grad(true);
    Graph<double> g;
    Tensor<double> loss = l1_loss(&g, pred, gt);
    g.backward(loss);
    for (int64_t i = 0; i < 4; ++i) CHECK(pred.grad()[i] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK_FALSE(unused.has_grad());

    Tensor<double> vec({3}, {1.0, 2.0, 3.0});
    Graph<double> g2;
    CHECK_THROWS_AS(g2.backward(vec), UsageError);
}

TEST_CASE("every differentiable op passes FD checks over 10 seeds") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        Tensor<double> a = random_tensor<double>({1, 3, 4}, rng);
        Tensor<double> b = random_tensor<double>({1, 3, 4}, rng);
        Tensor<double> probe = random_tensor<double>({1, 3, 4}, rng);
        auto probe_loss = [&](Graph<double>* g, Tensor<double> out) { return sum_all(g, mul(g, out, probe)); };

        CHECK(max_fd_rel_err<double>({a, b}, [&](Graph<double>* g) { return probe_loss(g, add(g, a, b)); }) <
              1e-5);
        CHECK(max_fd_rel_err<double>({a, b}, [&](Graph<double>* g) { return probe_loss(g, mul(g, a, b)); }) <
              1e-5);
        CHECK(max_fd_rel_err<double>({a}, [&](Graph<double>* g) { return probe_loss(g, silu(g, a)); }) < 1e-5);
        CHECK(max_fd_rel_err<double>({a}, [&](Graph<double>* g) { return probe_loss(g, softplus(g, a)); }) <
              1e-5);
        CHECK(max_fd_rel_err<double>({a}, [&](Graph<double>* g) { return probe_loss(g, exp_op(g, a)); }) < 1e-5);
        CHECK(max_fd_rel_err<double>({a}, [&](Graph<double>* g) {
                  return probe_loss(g, scale(g, a, 1.7));
              }) < 1e-5);
        CHECK(max_fd_rel_err<double>({a, b}, [&](Graph<double>* g) { return sum_all(g, l1_loss(g, a, b)); }) <
              1e-4);  // kinked at ties; random inputs stay away from them

        Tensor<double> w1 = random_tensor<double>({4, 4}, rng);
        Tensor<double> probe2 = random_tensor<double>({1, 4, 3}, rng);
        CHECK(max_fd_rel_err<double>({a, w1}, [&](Graph<double>* g) {
                  return sum_all(g, mul(g, swap_last2(g, linear(g, a, w1)), probe2));
              }) < 1e-5);

        Tensor<double> img = random_tensor<double>({1, 2, 3, 4}, rng);
        Tensor<double> probe3 = random_tensor<double>({1, 12, 2}, rng);
        CHECK(max_fd_rel_err<double>({img}, [&](Graph<double>* g) {
                  return sum_all(g, mul(g, image_to_tokens(g, img), probe3));
              }) < 1e-5);
        Tensor<double> tok = random_tensor<double>({1, 12, 2}, rng);
        Tensor<double> probe4 = random_tensor<double>({1, 2, 3, 4}, rng);
        CHECK(max_fd_rel_err<double>({tok}, [&](Graph<double>* g) {
                  return sum_all(g, mul(g, tokens_to_image(g, tok, 3, 4), probe4));
              }) < 1e-5);

        Tensor<double> cw = random_tensor<double>({2, 4}, rng);
        Tensor<double> cb = random_tensor<double>({2}, rng);
        Tensor<double> xc = random_tensor<double>({1, 2, 6}, rng);
        Tensor<double> probe5 = random_tensor<double>({1, 2, 6}, rng);
        CHECK(max_fd_rel_err<double>({xc, cw, cb}, [&](Graph<double>* g) {
                  return sum_all(g, mul(g, conv1d_depthwise(g, xc, cw, cb), probe5));
              }) < 1e-5);

        Tensor<double> k2 = random_tensor<double>({2, 2, 3, 3}, rng);
        Tensor<double> b2 = random_tensor<double>({2}, rng);
        Tensor<double> probe6 = random_tensor<double>({1, 2, 3, 4}, rng);
        CHECK(max_fd_rel_err<double>({img, k2, b2}, [&](Graph<double>* g) {
                  return sum_all(g, mul(g, conv2d(g, img, k2, b2), probe6));
              }) < 1e-5);

        Tensor<double> dk = random_tensor<double>({2, 3, 3}, rng);
        CHECK(max_fd_rel_err<double>({img, dk, b2}, [&](Graph<double>* g) {
                  return sum_all(g, mul(g, conv2d_depthwise(g, img, dk, b2), probe6));
              }) < 1e-5);
    }
}

TEST_CASE("forward results are bit-identical across runs") {
    Rng rng(29);
    Tensor<float> x = random_tensor<float>({2, 16, 8}, rng);
    Tensor<float> w = random_tensor<float>({8, 8}, rng);
    Tensor<float> b = random_tensor<float>({8}, rng);
    Tensor<float> y1 = linear<float>(nullptr, x, w, &b);
    Tensor<float> y2 = linear<float>(nullptr, x, w, &b);
    CHECK(std::memcmp(y1.data(), y2.data(), sizeof(float) * y1.numel()) == 0);
}
