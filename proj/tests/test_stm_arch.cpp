#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>

#include "stmre/grad_check.hpp"
#include "stmre/serialize.hpp"
#include "stmre/stm_arch.hpp"
#include "test_util.hpp"

using namespace stmre;
using stmre::testing::random_tensor;

namespace {

std::size_t enumerate_params(const std::vector<NamedParam<float>>& params) {
    std::size_t n = 0;
    for (const auto& p : params) {
        std::size_t prod = 1;
        for (auto d : p.var->value.shape()) prod *= d;
        n += prod;
    }
    return n;
}

}  // namespace

TEST_SUITE("stm_re_block") {
    TEST_CASE("triples branch channels and keeps spatial dims") {
        auto block = build_stm_re_block<float>({8, 8, 3, 3}, 1);
        Rng rng(1);
        auto out = block.forward(leaf(random_tensor<float>({1, 8, 16, 16}, rng)));
        CHECK(out->value.shape() == Shape{1, 24, 16, 16});
    }

    TEST_CASE("shape law over random specs") {
        Rng rng(2);
        for (int trial = 0; trial < 25; ++trial) {
            STMREBlockSpec spec{1 + rng.below(6), 1 + rng.below(6), 1 + 2 * rng.below(3), 1 + 2 * rng.below(3)};
            const std::size_t H = spec.pool_window + rng.below(8), W = spec.conv_kernel + rng.below(8);
            const std::size_t N = 1 + rng.below(2);
            auto block = build_stm_re_block<float>(spec, trial);
            auto out = block.forward(leaf(random_tensor<float>({N, spec.in_channels, H, W}, rng)));
            CHECK(out->value.shape() == Shape{N, 3 * spec.branch_channels, H, W});
        }
    }

    TEST_CASE("zero input with zero bias gives zero output") {
        auto block = build_stm_re_block<float>({4, 5, 3, 3}, 3);
        auto out = block.forward(leaf(Tensor::zeros({2, 4, 8, 8})));
        for (float v : out->value.values()) CHECK(v == 0.0f);
    }

    TEST_CASE("pure function of its input") {
        auto block = build_stm_re_block<float>({3, 4, 3, 3}, 4);
        Rng rng(4);
        auto x = random_tensor<float>({2, 3, 8, 8}, rng);
        CHECK(block.forward(leaf(x))->value == block.forward(leaf(x))->value);
    }

    TEST_CASE("branch roles: edge max-pools, region averages, transform is bare conv-relu") {
        // Single-channel identity branches expose what each branch does to its input.
        auto block = STMREBlock<float>({1, 1, 1, 3}, "b");
        std::vector<NamedParam<float>> params;
        block.collect(params);
        for (auto& p : params) p.var->value.fill(p.var->value.rank() == 4 ? 1.f : 0.f);
        Tensor x({1, 1, 3, 3}, {0, 0, 0, 0, 9, 0, 0, 0, 0});
        auto out = block.forward(leaf(x))->value;
        CHECK(out.at(0, 0, 0, 0) == 9.f);                        // max over the corner window
        CHECK(out.at(0, 1, 0, 0) == doctest::Approx(9.f / 4.f));  // corner window has 4 valid cells
        CHECK(out.at(0, 2, 0, 0) == 0.f);
        CHECK(out.at(0, 2, 1, 1) == 9.f);
    }

    TEST_CASE("invalid specs are configuration errors") {
        CHECK_THROWS_AS(STMREBlock<float>({0, 4, 3, 3}, "b"), ConfigError);
        CHECK_THROWS_AS(STMREBlock<float>({4, 4, 2, 3}, "b"), ConfigError);
        CHECK_THROWS_AS(STMREBlock<float>({4, 4, 3, 4}, "b"), ConfigError);
    }

    TEST_CASE("gradients match central differences in 64-bit") {
        auto block = build_stm_re_block<double>({3, 4, 3, 3}, 5);
        std::vector<NamedParam<double>> params;
        block.collect(params);
        Rng rng(5);
        for (auto& p : params) {
            if (p.var->value.rank() == 1) p.var->value = random_tensor<double>(p.var->value.shape(), rng, -0.1, 0.1);
        }
        auto x = leaf(random_tensor<double>({2, 3, 6, 6}, rng));
        auto weights = random_tensor<double>({2, 12, 6, 6}, rng);
        auto result = grad_check<double>([&] { return weighted_sum(block.forward(x), weights); }, params);
        MESSAGE("block grad check: max rel " << result.max_relative_error << " checked " << result.checked
                                             << " skipped " << result.skipped);
        CHECK(result.max_relative_error < 1e-3);
        CHECK(result.skipped * 50 < result.checked);
    }
}

TEST_SUITE("stm_renet") {
    TEST_CASE("desk spec trunk is 3*128 channels at 4x4; logits are Nx2") {
        NetSpec spec;
        auto net = build_stm_renet<float>(spec, 7);
        Rng rng(7);
        auto x = leaf(random_tensor<float>({4, 3, 64, 64}, rng, 0, 1));
        auto trunk = net.trunk(x);
        CHECK(trunk->value.shape() == Shape{4, 384, 4, 4});
        ForwardContext ctx;
        CHECK(net.forward(x, ctx)->value.shape() == Shape{4, 2});
    }

    TEST_CASE("parameter count: closed form equals enumeration") {
        for (const auto& widths : {std::vector<std::size_t>{16, 32, 64, 128}, std::vector<std::size_t>{4},
                                   std::vector<std::size_t>{5, 7, 3}}) {
            NetSpec spec;
            spec.stage_widths = widths;
            spec.blocks_per_stage = widths.size() == 1 ? 3 : 2;
            spec.classifier_hidden = 10;
            STMRENet<float> net(spec);
            CHECK(spec.parameter_count() == enumerate_params(net.parameters()));
            CHECK(net.parameter_count() == spec.parameter_count());
        }
    }

    TEST_CASE("blocks in a stage share topology but not parameters") {
        NetSpec spec;
        spec.stage_widths = {4, 4};
        spec.input_shape = {3, 16, 16};
        auto net = build_stm_renet<float>(spec, 8);
        const auto& stage = net.stages()[1];
        REQUIRE(stage.size() == 2);
        std::vector<NamedParam<float>> a, b;
        stage[0].collect(a);
        stage[1].collect(b);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].var != b[i].var);
            CHECK(a[i].var->value.shape() == b[i].var->value.shape());
        }
        CHECK(a[0].var->value != b[0].var->value);
    }

    TEST_CASE("indivisible input is a configuration error") {
        NetSpec spec;
        spec.input_shape = {3, 60, 64};
        CHECK_THROWS_AS(STMRENet<float>{spec}, ConfigError);
    }

    TEST_CASE("inference is deterministic") {
        NetSpec spec;
        spec.stage_widths = {4, 8};
        spec.input_shape = {3, 16, 16};
        auto net = build_stm_renet<float>(spec, 9);
        Rng rng(9);
        auto x = random_tensor<float>({3, 3, 16, 16}, rng);
        ForwardContext ctx;
        CHECK(net.forward(leaf(x), ctx)->value == net.forward(leaf(x), ctx)->value);
    }

    TEST_CASE("tiny net end-to-end gradient check") {
        NetSpec spec;
        spec.stage_widths = {4};
        spec.classifier_hidden = 6;
        spec.input_shape = {3, 8, 8};
        auto net = build_stm_renet<double>(spec, 10);
        Rng rng(10);
        for (auto& p : net.parameters()) {
            if (p.var->value.rank() == 1) p.var->value = random_tensor<double>(p.var->value.shape(), rng, -0.1, 0.1);
        }
        auto x = leaf(random_tensor<double>({2, 3, 8, 8}, rng, 0, 1));
        std::vector<int> labels{0, 1};
        auto result = grad_check<double>(
            [&] {
                Rng drop(3);
                ForwardContext ctx{true, &drop};
                return softmax_cross_entropy(net.forward(x, ctx), labels).loss;
            },
            net.parameters());
        MESSAGE("tiny net grad check: max rel " << result.max_relative_error << " checked " << result.checked
                                                << " skipped " << result.skipped << " worst " << result.worst);
        CHECK(result.max_relative_error < 1e-3);
    }
}

TEST_SUITE("init_params") {
    TEST_CASE("deterministic, zero biases, He-scaled weights") {
        NetSpec spec;
        auto a = build_stm_renet<float>(spec, 42);
        auto b = build_stm_renet<float>(spec, 42);
        auto pa = a.parameters(), pb = b.parameters();
        for (std::size_t i = 0; i < pa.size(); ++i) {
            CHECK(pa[i].var->value == pb[i].var->value);
            const auto& v = pa[i].var->value;
            if (v.rank() == 1) {
                for (float x : v.values()) CHECK(x == 0.0f);
                continue;
            }
            if (v.numel() < 10000) continue;
            const double fan_in = static_cast<double>(v.numel() / v.dim(0));
            double mean = 0, sq = 0;
            for (float x : v.values()) mean += x;
            mean /= v.numel();
            for (float x : v.values()) sq += (x - mean) * (x - mean);
            const double sd = std::sqrt(sq / (v.numel() - 1));
            CHECK(std::abs(sd / std::sqrt(2.0 / fan_in) - 1.0) < 0.05);
        }
        auto c = build_stm_renet<float>(spec, 43);
        CHECK(c.parameters()[0].var->value != pa[0].var->value);
    }
}

TEST_SUITE("serialization") {
    TEST_CASE("round trip preserves manifest, descriptor and values") {
        auto dir = stmre::testing::scratch_dir("serialize");
        NetSpec spec;
        spec.stage_widths = {4, 8};
        spec.input_shape = {3, 16, 16};
        auto net = build_stm_renet<float>(spec, 11);
        write_param_file(dir / "net.bin", spec.to_descriptor(), net.parameters());

        auto file = read_param_file(dir / "net.bin");
        auto restored_spec = NetSpec::from_descriptor(file.descriptor);
        CHECK(restored_spec.stage_widths == spec.stage_widths);
        CHECK(restored_spec.input_shape == spec.input_shape);
        STMRENet<float> restored(restored_spec);
        load_params(file, restored.parameters());
        auto pa = net.parameters(), pb = restored.parameters();
        for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].var->value == pb[i].var->value);

        // Header bytes: magic then little-endian version 1.
        std::ifstream in(dir / "net.bin", std::ios::binary);
        char head[12];
        in.read(head, 12);
        CHECK(std::string(head, 8) == "STMRPARM");
        CHECK(head[8] == 1);
        CHECK(head[9] == 0);
    }

    TEST_CASE("mismatches and corrupt files are data errors") {
        auto dir = stmre::testing::scratch_dir("serialize_err");
        NetSpec small;
        small.stage_widths = {4};
        small.input_shape = {3, 8, 8};
        NetSpec other = small;
        other.stage_widths = {5};
        auto net = build_stm_renet<float>(small, 1);
        write_param_file(dir / "a.bin", small.to_descriptor(), net.parameters());
        STMRENet<float> wrong(other);
        CHECK_THROWS_AS(load_params(read_param_file(dir / "a.bin"), wrong.parameters()), DataError);

        std::ofstream(dir / "junk.bin") << "not a checkpoint";
        CHECK_THROWS_AS(read_param_file(dir / "junk.bin"), DataError);
        CHECK_THROWS_AS(read_param_file(dir / "missing.bin"), DataError);
    }
}
