#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ctvit/rng.hpp"
#include "ctvit/tensor.hpp"
#include "gradcheck.hpp"

using namespace ctvit;
using ctvit::testing::check_gradients;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, bool requires_grad = true) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (double& v : t.mutable_data()) v = rng.normal();
    return t;
}

}  // namespace

TEST_CASE("matmul values") {
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    CHECK(matmul(eye, a).data() == a.data());

    Tensor row = Tensor::from_data({1, 2}, {1, 2});
    Tensor col = Tensor::from_data({2, 1}, {3, 4});
    CHECK(matmul(row, col).item() == doctest::Approx(11.0));

    CHECK_THROWS_AS(matmul(row, row), ShapeError);
}

TEST_CASE("batched matmul matches per-slice loop") {
    Rng rng(3, rng_stream::kTest);
    Tensor a = random_tensor(rng, {2, 3, 4});
    Tensor b = random_tensor(rng, {4, 5});
    Tensor out = matmul(a, b);
    REQUIRE(out.shape() == Shape{2, 3, 5});
    for (int64_t s = 0; s < 2; ++s) {
        Tensor as = Tensor::from_data(
            {3, 4}, std::vector<double>(a.data().begin() + s * 12,
                                        a.data().begin() + (s + 1) * 12));
        Tensor expect = matmul(as, b);
        for (int64_t i = 0; i < 15; ++i)
            CHECK(out.data()[s * 15 + i] == expect.data()[i]);
    }
}

TEST_CASE("matmul gradients vs finite differences") {
    Rng rng(11, rng_stream::kTest);
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4, 2});
    auto res = check_gradients({a, b}, [&] { return sum(matmul(a, b)); }, 1e-6);
    CHECK(res.ok);
    INFO(res.worst);
    CHECK(res.checked == 3 * 4 + 4 * 2);
}

TEST_CASE("softmax values") {
    Tensor t = Tensor::from_data({3}, {0, 0, 0});
    Tensor uniform = softmax(t, 0);
    for (double v : uniform.data()) CHECK(v == doctest::Approx(1.0 / 3));

    // max-subtraction keeps huge logits finite
    Tensor big = Tensor::from_data({2}, {1000, 0});
    auto y = softmax(big, 0).data();
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(0.0));
    CHECK(std::isfinite(y[0]));

    // independent evaluation of e^{x_i} / sum e^{x_j}
    Tensor v = Tensor::from_data({3}, {1, 2, 3});
    auto s = softmax(v, 0).data();
    const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (int i = 0; i < 3; ++i)
        CHECK(s[i] == doctest::Approx(std::exp(1.0 + i) / denom).epsilon(1e-12));
    CHECK(s[0] == doctest::Approx(0.09003057).epsilon(1e-6));
    CHECK(s[1] == doctest::Approx(0.24472847).epsilon(1e-6));
    CHECK(s[2] == doctest::Approx(0.66524096).epsilon(1e-6));
}

TEST_CASE("softmax properties: rows sum to one, shift invariant") {
    Rng rng(5, rng_stream::kTest);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = random_tensor(rng, {4, 6}, false);
        Tensor y = softmax(x, 1);
        for (int64_t r = 0; r < 4; ++r) {
            double s = 0.0;
            for (int64_t j = 0; j < 6; ++j) s += y.data()[r * 6 + j];
            CHECK(std::fabs(s - 1.0) <= 1e-12);
        }
        Tensor shifted = add(x, Tensor::scalar(17.5));
        Tensor y2 = softmax(shifted, 1);
        for (int64_t i = 0; i < 24; ++i)
            CHECK(y2.data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-12));
    }
}

TEST_CASE("elementwise values") {
    CHECK(tanh(Tensor::scalar(0.0)).item() == 0.0);

    Tensor x = Tensor::from_data({3}, {1, 2, 3});
    Tensor g = Tensor::full({3}, 1.0);
    Tensor b = Tensor::zeros({3});
    auto ln = layer_norm(x, g, b, 1e-12).data();
    CHECK(ln[0] == doctest::Approx(-1.224745).epsilon(1e-5));
    CHECK(ln[1] == doctest::Approx(0.0));
    CHECK(ln[2] == doctest::Approx(1.224745).epsilon(1e-5));

    CHECK_THROWS_AS(layer_norm(x, g, b, 0.0), ShapeError);
    CHECK_THROWS_AS(layer_norm(x, Tensor::zeros({2}), b, 1e-5), ShapeError);
}

TEST_CASE("layer_norm output is standardized before affine") {
    Rng rng(9, rng_stream::kTest);
    Tensor x = random_tensor(rng, {5, 16}, false);
    Tensor y = layer_norm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}), 1e-12);
    for (int64_t r = 0; r < 5; ++r) {
        double mu = 0.0, var = 0.0;
        for (int64_t j = 0; j < 16; ++j) mu += y.data()[r * 16 + j];
        mu /= 16;
        for (int64_t j = 0; j < 16; ++j) {
            const double c = y.data()[r * 16 + j] - mu;
            var += c * c;
        }
        var /= 16;
        CHECK(std::fabs(mu) <= 1e-10);
        CHECK(std::fabs(var - 1.0) <= 1e-10);
    }
}

TEST_CASE("concat and slice round trip") {
    Rng rng(13, rng_stream::kTest);
    Tensor a = random_tensor(rng, {2, 3}, false);
    Tensor b = random_tensor(rng, {2, 3}, false);
    Tensor cat = concat({a, b}, 1);
    REQUIRE(cat.shape() == Shape{2, 6});
    CHECK(slice(cat, 1, 0, 3).data() == a.data());
    CHECK(slice(cat, 1, 3, 6).data() == b.data());

    CHECK_THROWS_AS(concat({a, random_tensor(rng, {3, 3}, false)}, 1), ShapeError);
    CHECK_THROWS_AS(slice(a, 1, 2, 2), ShapeError);
}

TEST_CASE("backward basics") {
    // loss = sum(w * x) => grad_w == x
    Tensor w = Tensor::from_data({3}, {0.5, -1.0, 2.0}, true);
    Tensor x = Tensor::from_data({3}, {3, 4, 5});
    backward(sum(mul(w, x)));
    CHECK(w.grad() == x.data());

    SUBCASE("second backward accumulates additively") {
        backward(sum(mul(w, x)));
        for (int i = 0; i < 3; ++i) CHECK(w.grad()[i] == 2 * x.data()[i]);
    }

    SUBCASE("detached tensor receives no grad") {
        w.zero_grad();
        Tensor wd = w.detach();
        backward(sum(mul(wd, x)));
        CHECK_FALSE(w.has_grad());
        CHECK_FALSE(wd.has_grad());
    }

    SUBCASE("non-scalar loss rejected") {
        CHECK_THROWS_AS(backward(mul(w, x)), ContractError);
    }
}

TEST_CASE("gradient checks across ops and random shapes") {
    Rng rng(21, rng_stream::kTest);
    for (int trial = 0; trial < 3; ++trial) {
        const int64_t r = 2 + static_cast<int64_t>(rng.below(3));
        const int64_t c = 2 + static_cast<int64_t>(rng.below(4));

        SUBCASE("add with broadcast bias") {
            Tensor a = random_tensor(rng, {r, c});
            Tensor bias = random_tensor(rng, {c});
            auto res = check_gradients({a, bias},
                                       [&] { return sum(add(a, bias)); }, 1e-6);
            INFO(res.worst);
            CHECK(res.ok);
        }
        SUBCASE("mul and sub") {
            Tensor a = random_tensor(rng, {r, c});
            Tensor b = random_tensor(rng, {r, c});
            auto res = check_gradients(
                {a, b}, [&] { return mean(mul(sub(a, b), a)); }, 1e-6);
            INFO(res.worst);
            CHECK(res.ok);
        }
        SUBCASE("softmax") {
            Tensor a = random_tensor(rng, {r, c});
            Tensor probe = random_tensor(rng, {r, c}, false);
            auto res = check_gradients(
                {a}, [&] { return sum(mul(softmax(a, 1), probe)); }, 1e-4);
            INFO(res.worst);
            CHECK(res.ok);
        }
        SUBCASE("tanh gelu chain") {
            Tensor a = random_tensor(rng, {r, c});
            auto res = check_gradients({a}, [&] { return sum(gelu(tanh(a))); }, 1e-6);
            INFO(res.worst);
            CHECK(res.ok);
        }
        SUBCASE("layer_norm") {
            Tensor a = random_tensor(rng, {r, c});
            Tensor g = random_tensor(rng, {c});
            Tensor b = random_tensor(rng, {c});
            Tensor probe = random_tensor(rng, {r, c}, false);
            auto res = check_gradients(
                {a, g, b},
                [&] { return sum(mul(layer_norm(a, g, b, 1e-5), probe)); }, 1e-4);
            INFO(res.worst);
            CHECK(res.ok);
        }
        SUBCASE("structural: concat slice reshape transpose scale") {
            Tensor a = random_tensor(rng, {r, c});
            Tensor b = random_tensor(rng, {r, c});
            auto loss = [&] {
                Tensor cat = concat({a, b}, 0);
                Tensor sl = slice(cat, 0, 1, 2 * r - 1);
                Tensor tr = transpose(sl);
                return mean(scale(reshape(tr, {tr.numel()}), 1.5));
            };
            auto res = check_gradients({a, b}, loss, 1e-6);
            INFO(res.worst);
            CHECK(res.ok);
        }
        SUBCASE("batched matmul") {
            Tensor a = random_tensor(rng, {2, r, c});
            Tensor b = random_tensor(rng, {c, r});
            auto res = check_gradients({a, b}, [&] { return sum(matmul(a, b)); }, 1e-6);
            INFO(res.worst);
            CHECK(res.ok);
        }
    }
}

TEST_CASE("backward is deterministic across identical runs") {
    auto run = [](uint64_t seed) {
        Rng rng(seed, rng_stream::kTest);
        Tensor a = random_tensor(rng, {4, 4});
        Tensor b = random_tensor(rng, {4, 4});
        Tensor g = Tensor::full({4}, 1.0, true);
        Tensor bias = Tensor::zeros({4}, true);
        backward(mean(layer_norm(matmul(a, softmax(b, 1)), g, bias, 1e-5)));
        return a.grad();
    };
    CHECK(run(42) == run(42));
}
