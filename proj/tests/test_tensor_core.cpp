#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "stmre/grad_check.hpp"
#include "stmre/ops.hpp"
#include "test_util.hpp"

using namespace stmre;
using stmre::testing::max_abs_diff;
using stmre::testing::random_tensor;

namespace {

// Direct quadruple loop, accumulated in double.
TensorT<double> naive_conv2d(const TensorT<double>& x, const TensorT<double>& w, const TensorT<double>& b,
                             std::size_t stride, std::size_t pad) {
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t OH = (H + 2 * pad - kh) / stride + 1, OW = (W + 2 * pad - kw) / stride + 1;
    TensorT<double> out({N, K, OH, OW});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t oy = 0; oy < OH; ++oy)
                for (std::size_t ox = 0; ox < OW; ++ox) {
                    double acc = b[k];
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t i = 0; i < kh; ++i)
                            for (std::size_t j = 0; j < kw; ++j) {
                                const long y = long(oy * stride + i) - long(pad);
                                const long xx = long(ox * stride + j) - long(pad);
                                if (y < 0 || xx < 0 || y >= long(H) || xx >= long(W)) continue;
                                acc += x.at(n, c, y, xx) * w.at(k, c, i, j);
                            }
                    out.at(n, k, oy, ox) = acc;
                }
    return out;
}

Var<float> var(TensorT<float> t, bool grad = false) { return leaf(std::move(t), grad); }

}  // namespace

TEST_SUITE("conv2d") {
    TEST_CASE("all-ones 3x3 window sums to 9") {
        auto out = kernels::conv2d_forward(Tensor::full({1, 1, 3, 3}, 1.f), Tensor::full({1, 1, 3, 3}, 1.f),
                                           Tensor::zeros({1}), 1, 0);
        REQUIRE(out.shape() == Shape{1, 1, 1, 1});
        CHECK(out[0] == 9.0f);
    }

    TEST_CASE("identity 1x1 kernel reproduces the input") {
        Rng rng(3);
        auto x = random_tensor<float>({2, 1, 5, 7}, rng);
        auto out = kernels::conv2d_forward(x, Tensor::full({1, 1, 1, 1}, 1.f), Tensor::zeros({1}), 1, 0);
        CHECK(out == x);
    }

    TEST_CASE("strided padded conv matches the nested-loop oracle") {
        Rng rng(11);
        auto x = random_tensor<double>({2, 3, 8, 8}, rng);
        auto w = random_tensor<double>({4, 3, 3, 3}, rng);
        auto b = random_tensor<double>({4}, rng);
        auto expected = naive_conv2d(x, w, b, 2, 1);
        auto got = kernels::conv2d_forward(x.cast<float>(), w.cast<float>(), b.cast<float>(), 2, 1);
        REQUIRE(got.shape() == Shape{2, 4, 4, 4});
        CHECK(max_abs_diff(got.cast<double>(), expected) < 1e-5);
    }

    TEST_CASE("output shape follows the closed form over random geometries") {
        Rng rng(5);
        for (int trial = 0; trial < 60; ++trial) {
            const std::size_t N = 1 + rng.below(2), C = 1 + rng.below(3), K = 1 + rng.below(3);
            const std::size_t k = 1 + rng.below(4), stride = 1 + rng.below(3), pad = rng.below(3);
            const std::size_t H = k + rng.below(9), W = k + rng.below(9);
            auto x = random_tensor<double>({N, C, H, W}, rng);
            auto w = random_tensor<double>({K, C, k, k}, rng);
            auto b = random_tensor<double>({K}, rng);
            auto out = kernels::conv2d_forward(x, w, b, stride, pad);
            CHECK(out.shape() == Shape{N, K, (H + 2 * pad - k) / stride + 1, (W + 2 * pad - k) / stride + 1});
            CHECK(max_abs_diff(out, naive_conv2d(x, w, b, stride, pad)) < 1e-10);
        }
    }

    TEST_CASE("channel mismatch and non-finite input are rejected") {
        CHECK_THROWS_AS(kernels::conv2d_forward(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}),
                                                Tensor::zeros({1}), 1, 0),
                        DimensionError);
        auto x = Tensor::zeros({1, 1, 4, 4});
        x[5] = std::nanf("");
        CHECK_THROWS_AS(kernels::conv2d_forward(x, Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1}), 1, 0), NumericError);
        CHECK_THROWS_AS(kernels::conv2d_forward(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 3}),
                                                Tensor::zeros({1}), 1, 0),
                        DimensionError);
    }
}

TEST_SUITE("pool2d") {
    TEST_CASE("constant field pools to the constant") {
        auto x = Tensor::full({1, 2, 6, 6}, 0.75f);
        for (auto mode : {PoolMode::Max, PoolMode::Avg}) {
            for (std::size_t window : {1u, 2u, 3u}) {
                std::vector<std::uint32_t> saved;
                auto out = kernels::pool2d_forward(x, mode, window, 1 + window / 2, window / 2, saved);
                for (float v : out.values()) CHECK(v == doctest::Approx(0.75f));
            }
        }
    }

    TEST_CASE("2x2 enumeration") {
        Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
        std::vector<std::uint32_t> saved;
        CHECK(kernels::pool2d_forward(x, PoolMode::Max, 2, 2, 0, saved)[0] == 4.0f);
        CHECK(saved[0] == 3u);
        CHECK(kernels::pool2d_forward(x, PoolMode::Avg, 2, 2, 0, saved)[0] == 2.5f);
    }

    TEST_CASE("window 1 is the identity") {
        Rng rng(2);
        auto x = random_tensor<float>({2, 3, 4, 5}, rng);
        std::vector<std::uint32_t> saved;
        CHECK(kernels::pool2d_forward(x, PoolMode::Max, 1, 1, 0, saved) == x);
        CHECK(kernels::pool2d_forward(x, PoolMode::Avg, 1, 1, 0, saved) == x);
    }

    TEST_CASE("padded average excludes padding from the divisor") {
        // Corner cell of a same-padded 3x3 window covers 4 valid cells.
        Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
        std::vector<std::uint32_t> saved;
        auto out = kernels::pool2d_forward(x, PoolMode::Avg, 3, 1, 1, saved);
        for (float v : out.values()) CHECK(v == doctest::Approx(2.5f));
    }

    TEST_CASE("window larger than padded input") {
        std::vector<std::uint32_t> saved;
        CHECK_THROWS_AS(kernels::pool2d_forward(Tensor::zeros({1, 1, 2, 2}), PoolMode::Max, 5, 1, 1, saved),
                        DimensionError);
    }
}

TEST_SUITE("relu") {
    TEST_CASE("definition") {
        auto out = kernels::relu_forward(Tensor({3}, {-1, 0, 2}));
        CHECK(out == Tensor({3}, {0, 0, 2}));
        CHECK(kernels::relu_forward(Tensor::full({4}, -3.f)) == Tensor::zeros({4}));
    }

    TEST_CASE("relu(x) + relu(-x) == |x|") {
        Rng rng(9);
        auto x = random_tensor<float>({100}, rng);
        Tensor neg = x;
        for (auto& v : neg.values()) v = -v;
        auto a = kernels::relu_forward(x), b = kernels::relu_forward(neg);
        for (std::size_t i = 0; i < x.numel(); ++i) CHECK(a[i] + b[i] == std::abs(x[i]));
    }

    TEST_CASE("gradient at exactly zero is zero") {
        auto x = var(Tensor({3}, {-1, 0, 2}), true);
        backward(sum(relu(x)));
        CHECK(x->grad == Tensor({3}, {0, 0, 1}));
    }
}

TEST_SUITE("concat_channels") {
    TEST_CASE("single part is the identity") {
        Rng rng(1);
        auto a = random_tensor<float>({2, 3, 4, 4}, rng);
        CHECK(concat_channels<float>({var(a)})->value == a);
    }

    TEST_CASE("channel bookkeeping for (8, 4, 4)") {
        Rng rng(4);
        auto a = random_tensor<float>({1, 8, 3, 3}, rng);
        auto b = random_tensor<float>({1, 4, 3, 3}, rng);
        auto c = random_tensor<float>({1, 4, 3, 3}, rng);
        auto out = concat_channels<float>({var(a), var(b), var(c)})->value;
        REQUIRE(out.dim(1) == 16);
        CHECK(kernels::slice_channels(out, 9, 10) == kernels::slice_channels(b, 1, 2));
    }

    TEST_CASE("slicing back recovers the parts; backward is the slice adjoint") {
        Rng rng(6);
        auto a = var(random_tensor<float>({2, 3, 2, 2}, rng), true);
        auto b = var(random_tensor<float>({2, 5, 2, 2}, rng), true);
        auto cat = concat_channels<float>({a, b});
        CHECK(kernels::slice_channels(cat->value, 0, 3) == a->value);
        CHECK(kernels::slice_channels(cat->value, 3, 8) == b->value);

        auto weights = random_tensor<float>(cat->value.shape(), rng);
        backward(weighted_sum(cat, weights));
        CHECK(a->grad == kernels::slice_channels(weights, 0, 3));
        CHECK(b->grad == kernels::slice_channels(weights, 3, 8));
    }

    TEST_CASE("errors") {
        CHECK_THROWS_AS(concat_channels<float>({}), ArgumentError);
        CHECK_THROWS_AS(concat_channels<float>({var(Tensor::zeros({1, 1, 2, 2})), var(Tensor::zeros({1, 1, 3, 2}))}),
                        DimensionError);
        CHECK_THROWS_AS(concat_channels<float>({var(Tensor::zeros({1, 1, 2, 2})), var(Tensor::zeros({2, 1, 2, 2}))}),
                        DimensionError);
    }
}

TEST_SUITE("global_avg_pool") {
    TEST_CASE("constant and 1x1 inputs") {
        auto out = kernels::global_avg_pool_forward(Tensor::full({2, 3, 4, 4}, 1.5f));
        CHECK(out == Tensor::full({2, 3}, 1.5f));
        Rng rng(8);
        auto x = random_tensor<float>({2, 3, 1, 1}, rng);
        CHECK(kernels::global_avg_pool_forward(x) == x.reshaped({2, 3}));
    }

    TEST_CASE("equals avg-pool over the full window") {
        Rng rng(10);
        auto x = random_tensor<float>({2, 4, 5, 5}, rng);
        std::vector<std::uint32_t> saved;
        auto full = kernels::pool2d_forward(x, PoolMode::Avg, 5, 1, 0, saved).reshaped({2, 4});
        CHECK(max_abs_diff(kernels::global_avg_pool_forward(x), full) < 1e-7);
    }
}

TEST_SUITE("linear") {
    TEST_CASE("identity weight and zero weight") {
        Rng rng(12);
        auto x = random_tensor<float>({3, 4}, rng);
        Tensor eye({4, 4});
        for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.f;
        CHECK(kernels::linear_forward(x, eye, Tensor::zeros({4})) == x);
        Tensor b({2}, {0.5f, -2.f});
        auto out = kernels::linear_forward(x, Tensor::zeros({2, 4}), b);
        for (std::size_t n = 0; n < 3; ++n) {
            CHECK(out.at(n, 0) == 0.5f);
            CHECK(out.at(n, 1) == -2.f);
        }
    }

    TEST_CASE("matches naive dot products") {
        Rng rng(13);
        auto x = random_tensor<double>({3, 5}, rng);
        auto w = random_tensor<double>({2, 5}, rng);
        auto b = random_tensor<double>({2}, rng);
        auto got = kernels::linear_forward(x.cast<float>(), w.cast<float>(), b.cast<float>());
        for (std::size_t n = 0; n < 3; ++n)
            for (std::size_t o = 0; o < 2; ++o) {
                double acc = b[o];
                for (std::size_t f = 0; f < 5; ++f) acc += x.at(n, f) * w.at(o, f);
                CHECK(std::abs(got.at(n, o) - acc) < 1e-5);
            }
        CHECK_THROWS_AS(kernels::linear_forward(Tensor::zeros({3, 4}), Tensor::zeros({2, 5}), Tensor::zeros({2})),
                        DimensionError);
    }
}

TEST_SUITE("dropout") {
    TEST_CASE("inference and zero rate are identities") {
        Rng rng(14), drop(1);
        auto x = var(random_tensor<float>({50}, rng));
        CHECK(dropout(x, 0.5, false, drop)->value == x->value);
        CHECK(dropout(x, 0.0, true, drop)->value == x->value);
        CHECK_THROWS_AS(dropout(x, 1.0, true, drop), ArgumentError);
    }

    TEST_CASE("inverted scaling keeps the mean") {
        Rng drop(15);
        auto out = dropout(var(Tensor::full({100000}, 1.f)), 0.5, true, drop)->value;
        double mean = 0.0;
        for (float v : out.values()) {
            CHECK((v == 0.f || v == 2.f));
            mean += v;
        }
        mean /= out.numel();
        CHECK(std::abs(mean - 1.0) < 0.02);
    }
}

TEST_SUITE("softmax_cross_entropy") {
    TEST_CASE("symmetric logits") {
        auto out = softmax_cross_entropy(var(Tensor::zeros({1, 2})), std::vector<int>{1});
        CHECK(out.probs[0] == doctest::Approx(0.5));
        CHECK(out.probs[1] == doctest::Approx(0.5));
        CHECK(out.loss->value[0] == doctest::Approx(std::numbers::ln2).epsilon(1e-6));
    }

    TEST_CASE("extreme logits stay finite") {
        auto out = softmax_cross_entropy(var(Tensor({1, 2}, {1000.f, 0.f})), std::vector<int>{0});
        CHECK(std::isfinite(out.loss->value[0]));
        CHECK(out.loss->value[0] == doctest::Approx(0.0));
        CHECK(out.probs[0] == 1.0f);
    }

    TEST_CASE("random batch matches an extended-precision reference") {
        Rng rng(16);
        for (int trial = 0; trial < 20; ++trial) {
            auto logits = random_tensor<float>({8, 2}, rng, -6, 6);
            std::vector<int> labels(8);
            for (auto& l : labels) l = static_cast<int>(rng.below(2));
            long double ref = 0;
            for (std::size_t n = 0; n < 8; ++n) {
                const long double a = logits.at(n, 0), b = logits.at(n, 1);
                const long double z = std::log(std::exp(a) + std::exp(b));
                ref += z - (labels[n] == 0 ? a : b);
            }
            ref /= 8;
            auto out = softmax_cross_entropy(var(logits), labels);
            CHECK(std::abs(kernels::cross_entropy(logits, labels) - static_cast<double>(ref)) < 1e-6);
            CHECK(out.loss->value[0] >= 0.f);
            for (std::size_t n = 0; n < 8; ++n) CHECK(std::abs(out.probs.at(n, 0) + out.probs.at(n, 1) - 1.0) < 1e-6);
        }
    }

    TEST_CASE("gradient is (probs - onehot) / N") {
        Tensor z({2, 2}, {0.3f, -0.2f, 1.0f, 2.0f});
        auto logits = var(z, true);
        std::vector<int> labels{0, 1};
        auto out = softmax_cross_entropy(logits, labels);
        backward(out.loss);
        CHECK(logits->grad[0] == doctest::Approx((out.probs[0] - 1) / 2));
        CHECK(logits->grad[1] == doctest::Approx(out.probs[1] / 2));
        CHECK(logits->grad[3] == doctest::Approx((out.probs[3] - 1) / 2));
    }
}

TEST_SUITE("backward") {
    TEST_CASE("sum gives all-ones gradient; unused parameter stays zero") {
        Rng rng(17);
        auto x = var(random_tensor<float>({3, 4}, rng), true);
        auto unused = var(random_tensor<float>({5}, rng), true);
        backward(sum(x));
        CHECK(x->grad == Tensor::full({3, 4}, 1.f));
        CHECK(unused->grad == Tensor::zeros({5}));
    }

    TEST_CASE("fan-out accumulates") {
        auto x = var(Tensor({2}, {1.f, -1.f}), true);
        backward(sum(add(x, add(x, x))));
        CHECK(x->grad == Tensor::full({2}, 3.f));
    }

    TEST_CASE("non-scalar loss is rejected") {
        auto x = var(Tensor::zeros({2}), true);
        CHECK_THROWS_AS(backward(relu(x)), ArgumentError);
    }

    TEST_CASE("no graph is recorded under NoGradGuard") {
        auto x = var(Tensor::zeros({2}), true);
        NoGradGuard guard;
        auto y = relu(x);
        CHECK_FALSE(y->requires_grad);
        CHECK(y->inputs.empty());
    }
}

TEST_SUITE("grad_check") {
    TEST_CASE("linear layer") {
        Rng rng(18);
        auto x = leaf(random_tensor<double>({3, 5}, rng), true);
        auto w = leaf(random_tensor<double>({2, 5}, rng), true);
        auto b = leaf(random_tensor<double>({2}, rng), true);
        auto weights = random_tensor<double>({3, 2}, rng);
        auto result = grad_check<double>([&] { return weighted_sum(linear(x, w, b), weights); },
                                         {{"x", x}, {"w", w}, {"b", b}});
        CHECK(result.checked == 27);
        CHECK(result.max_relative_error < 1e-4);
    }

    TEST_CASE("conv2d + relu chain with inputs nudged away from kinks") {
        Rng rng(19);
        auto w = leaf(random_tensor<double>({3, 2, 3, 3}, rng), true);
        auto b = leaf(random_tensor<double>({3}, rng), true);
        // Redraw the input until no pre-activation sits within 1e-2 of the ReLU kink.
        auto x = leaf(random_tensor<double>({2, 2, 5, 5}, rng), true);
        for (;;) {
            auto pre = kernels::conv2d_forward(x->value, w->value, b->value, 1, 1);
            double min_abs = 1e9;
            for (double v : pre.values()) min_abs = std::min(min_abs, std::abs(v));
            if (min_abs > 1e-2) break;
            x->value = random_tensor<double>({2, 2, 5, 5}, rng);
        }
        auto weights = random_tensor<double>({2, 3, 5, 5}, rng);
        auto result = grad_check<double>([&] { return weighted_sum(relu(conv2d(x, w, b, 1, 1)), weights); },
                                         {{"x", x}, {"w", w}, {"b", b}});
        CHECK(result.max_relative_error < 1e-3);
    }

    TEST_CASE("pooling, concat, resize, global pooling and softmax-CE") {
        Rng rng(20);
        auto x = leaf(random_tensor<double>({2, 2, 6, 6}, rng), true);
        auto weights = random_tensor<double>({2, 2, 6, 6}, rng);
        auto max_pool = grad_check<double>(
            [&] { return weighted_sum(pool2d(x, PoolMode::Max, 3, 1, 1), weights); }, {{"x", x}});
        auto avg_pool = grad_check<double>(
            [&] { return weighted_sum(pool2d(x, PoolMode::Avg, 3, 1, 1), weights); }, {{"x", x}});
        CHECK(max_pool.max_relative_error < 1e-3);
        CHECK(avg_pool.max_relative_error < 1e-3);

        auto small = random_tensor<double>({2, 2, 3, 3}, rng);
        auto resize = grad_check<double>([&] { return weighted_sum(resize_nearest(x, 3, 3), small); }, {{"x", x}});
        CHECK(resize.max_relative_error < 1e-3);

        auto y = leaf(random_tensor<double>({2, 3, 6, 6}, rng), true);
        auto cat_weights = random_tensor<double>({2, 5, 6, 6}, rng);
        auto cat = grad_check<double>([&] { return weighted_sum(concat_channels<double>({x, y}), cat_weights); },
                                      {{"x", x}, {"y", y}});
        CHECK(cat.max_relative_error < 1e-3);

        auto logits = leaf(random_tensor<double>({4, 2}, rng), true);
        std::vector<int> labels{0, 1, 1, 0};
        auto ce = grad_check<double>([&] { return softmax_cross_entropy(logits, labels).loss; }, {{"z", logits}});
        CHECK(ce.max_relative_error < 1e-3);

        auto gap_w = random_tensor<double>({2, 2}, rng);
        auto gap = grad_check<double>([&] { return weighted_sum(global_avg_pool(x), gap_w); }, {{"x", x}});
        CHECK(gap.max_relative_error < 1e-3);
    }

    TEST_CASE("inference dropout passes the underlying check through unchanged") {
        Rng rng(21);
        auto x = leaf(random_tensor<double>({3, 5}, rng), true);
        auto w = leaf(random_tensor<double>({2, 5}, rng), true);
        auto b = leaf(random_tensor<double>({2}, rng), true);
        auto weights = random_tensor<double>({3, 2}, rng);
        std::vector<NamedParam<double>> params{{"x", x}, {"w", w}, {"b", b}};
        auto plain = grad_check<double>([&] { return weighted_sum(linear(x, w, b), weights); }, params);
        auto with_dropout = grad_check<double>(
            [&] {
                Rng drop(0);
                return weighted_sum(dropout(linear(x, w, b), 0.5, false, drop), weights);
            },
            params);
        CHECK(with_dropout.max_relative_error == plain.max_relative_error);

        auto training = grad_check<double>(
            [&] {
                Rng drop(42);
                return weighted_sum(dropout(linear(x, w, b), 0.5, true, drop), weights);
            },
            params);
        CHECK(training.max_relative_error < 1e-4);
    }
}

TEST_CASE("kernels are deterministic") {
    Rng a(77), b(77);
    auto x1 = random_tensor<float>({2, 3, 9, 9}, a);
    auto w1 = random_tensor<float>({4, 3, 3, 3}, a);
    auto x2 = random_tensor<float>({2, 3, 9, 9}, b);
    auto w2 = random_tensor<float>({4, 3, 3, 3}, b);
    CHECK(kernels::conv2d_forward(x1, w1, Tensor::zeros({4}), 1, 1) ==
          kernels::conv2d_forward(x2, w2, Tensor::zeros({4}), 1, 1));
}
