#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <set>

#include "stmre/channel_boost.hpp"
#include "stmre/grad_check.hpp"
#include "stmre/log.hpp"
#include "test_util.hpp"

using namespace stmre;
using stmre::testing::max_abs_diff;
using stmre::testing::random_tensor;
using stmre::testing::synthetic_dataset;

namespace {

NetSpec tiny_backbone(std::size_t size = 16) {
    NetSpec spec;
    spec.stage_widths = {4, 8};
    spec.blocks_per_stage = 1;
    spec.classifier_hidden = 8;
    spec.input_shape = {3, size, size};
    return spec;
}

AuxLearnerSpec tiny_aux(AuxTopology topology, std::size_t size = 16) {
    AuxLearnerSpec spec;
    spec.topology = topology;
    spec.widths = {4, 6};
    spec.input_shape = {3, size, size};
    return spec;
}

template <typename T>
BoostedModel<T> tiny_boosted(std::uint64_t seed, BoostSpec boost = {}) {
    std::vector<AuxLearner<T>> aux;
    aux.push_back(build_aux_learner<T>(tiny_aux(AuxTopology::PlainStack), seed + 1));
    aux.push_back(build_aux_learner<T>(tiny_aux(AuxTopology::ResidualStack), seed + 2));
    return build_boosted_model<T>(build_stm_renet<T>(tiny_backbone(), seed), std::move(aux), boost, seed + 3);
}

bool bit_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].shape() != b[i].shape()) return false;
        if (!std::equal(a[i].data(), a[i].data() + a[i].numel(), b[i].data())) return false;
    }
    return true;
}

template <typename T>
std::vector<NamedParam<T>> with_prefix(const std::vector<NamedParam<T>>& params, const std::string& prefix) {
    std::vector<NamedParam<T>> out;
    for (const auto& p : params)
        if (p.name.rfind(prefix, 0) == 0) out.push_back(p);
    return out;
}

}  // namespace

TEST_SUITE("boost_channels") {
    TEST_CASE("channel arithmetic 96 + 32 + 32 = 160 in fixed order") {
        Rng rng(1);
        auto orig = leaf(random_tensor<float>({2, 96, 4, 4}, rng));
        auto r = leaf(random_tensor<float>({2, 32, 4, 4}, rng));
        auto v = leaf(random_tensor<float>({2, 32, 4, 4}, rng));
        auto b = boost_channels(orig, {r, v});
        CHECK(b->value.shape() == Shape{2, 160, 4, 4});
        CHECK(max_abs_diff(slice_channels(b, 0, 96)->value, orig->value) == 0.0);
        CHECK(max_abs_diff(slice_channels(b, 96, 128)->value, r->value) == 0.0);
        CHECK(max_abs_diff(slice_channels(b, 128, 160)->value, v->value) == 0.0);
    }

    TEST_CASE("empty aux list is the identity") {
        Rng rng(2);
        auto orig = leaf(random_tensor<float>({1, 5, 3, 3}, rng));
        auto b = boost_channels<float>(orig, {});
        CHECK(b->value.shape() == orig->value.shape());
        CHECK(max_abs_diff(b->value, orig->value) == 0.0);
    }

    TEST_CASE("mismatched batch or spatial dims are dimension errors") {
        Rng rng(3);
        auto orig = leaf(random_tensor<float>({2, 4, 4, 4}, rng));
        auto wrong_hw = leaf(random_tensor<float>({2, 3, 8, 8}, rng));
        auto wrong_n = leaf(random_tensor<float>({1, 3, 4, 4}, rng));
        CHECK_THROWS_AS(boost_channels(orig, {wrong_hw}), DimensionError);
        CHECK_THROWS_AS(boost_channels(orig, {wrong_n}), DimensionError);
    }
}

TEST_SUITE("aux_adapter") {
    TEST_CASE("tap at 8x8 onto a 4x4 backbone map resizes") {
        AuxAdapter<float> adapter("adapter1", {6, 8, 8}, 4, 4);
        CHECK(adapter.resizes());
        CHECK(adapter.out_channels() == 6);
        Rng rng(4);
        auto tap = leaf(random_tensor<float>({2, 6, 8, 8}, rng));
        auto out = adapter.forward(tap);
        CHECK(out->value.shape() == Shape{2, 6, 4, 4});
        // Identity 1x1 conv plus nearest resize picks every other pixel.
        for (std::size_t c = 0; c < 6; ++c)
            for (std::size_t y = 0; y < 4; ++y)
                for (std::size_t x = 0; x < 4; ++x) CHECK(out->value.at(1, c, y, x) == tap->value.at(1, c, 2 * y, 2 * x));
    }

    TEST_CASE("matching tap is an identity adapter") {
        AuxAdapter<float> adapter("adapter1", {5, 4, 4}, 4, 4);
        CHECK_FALSE(adapter.resizes());
        Rng rng(5);
        auto tap = leaf(random_tensor<float>({3, 5, 4, 4}, rng));
        CHECK(max_abs_diff(adapter.forward(tap)->value, tap->value) == 0.0);
    }

    TEST_CASE("explicit out width sets the channel count") {
        AuxAdapter<float> adapter("adapter1", {5, 8, 8}, 4, 4, 7);
        CHECK(adapter.out_channels() == 7);
        Rng rng(6);
        CHECK(adapter.forward(leaf(random_tensor<float>({1, 5, 8, 8}, rng)))->value.shape() == Shape{1, 7, 4, 4});
    }

    TEST_CASE("zero-sized shapes are dimension errors") {
        CHECK_THROWS_AS(AuxAdapter<float>("a", {0, 4, 4}, 4, 4), DimensionError);
        CHECK_THROWS_AS(AuxAdapter<float>("a", {3, 4, 4}, 0, 4), DimensionError);
    }

    TEST_CASE("extracted channels match the tap width on the backbone grid") {
        auto learner = build_aux_learner<float>(tiny_aux(AuxTopology::PlainStack), 7);
        const auto tap = learner.spec().tap_shape();
        CHECK(tap == ImageShape{6, 8, 8});
        AuxAdapter<float> adapter("adapter1", tap, 4, 4);
        Rng rng(7);
        auto out = extract_aux_channels(learner, adapter, leaf(random_tensor<float>({2, 3, 16, 16}, rng, 0, 1)));
        CHECK(out->value.shape() == Shape{2, 6, 4, 4});
        CHECK_THROWS_AS(extract_aux_channels(learner, adapter, leaf(random_tensor<float>({2, 3, 8, 8}, rng))),
                        DimensionError);
    }
}

TEST_SUITE("aux_learner") {
    TEST_CASE("plain and residual manifests differ") {
        auto plain = build_aux_learner<float>(tiny_aux(AuxTopology::PlainStack), 1);
        auto residual = build_aux_learner<float>(tiny_aux(AuxTopology::ResidualStack), 1);
        std::set<std::string> a, b;
        for (const auto& p : plain.parameters()) a.insert(p.name);
        for (const auto& p : residual.parameters()) b.insert(p.name);
        CHECK(a != b);
        CHECK(plain.depth() == 5);
        CHECK(residual.depth() == 7);
    }

    TEST_CASE("descriptor round trip and bad taps") {
        auto spec = tiny_aux(AuxTopology::ResidualStack);
        spec.tap_layer = "stage0.out";
        auto back = AuxLearnerSpec::from_descriptor(spec.to_descriptor());
        CHECK(back.topology == spec.topology);
        CHECK(back.widths == spec.widths);
        CHECK(back.tap_layer == "stage0.out");
        CHECK(back.tap_shape() == ImageShape{4, 16, 16});
        spec.tap_layer = "stage2.out";
        CHECK_THROWS_AS(spec.validate(), ConfigError);
        spec.tap_layer = "head.fc";
        CHECK_THROWS_AS(spec.validate(), ConfigError);
    }

    TEST_CASE("pretraining lowers epoch-mean loss and is deterministic") {
        AuxLearnerSpec spec;
        spec.widths = {8, 16};
        spec.input_shape = {3, 32, 32};
        auto data = synthetic_dataset(150, 32, 4, SynthTask::Stripes);
        TrainConfig cfg;
        cfg.lr0 = 1e-3;
        cfg.epochs = 5;
        cfg.lr_drop_every = 100;
        cfg.seed = 4;
        for (auto topology : {AuxTopology::PlainStack, AuxTopology::ResidualStack}) {
            spec.topology = topology;
            auto result = pretrain_auxiliary(spec, data, cfg);
            CHECK(result.learner.source_trained);
            const auto& e = result.history.epochs;
            REQUIRE(e.size() == 5);
            for (std::size_t i = 1; i < e.size(); ++i) {
                MESSAGE(std::string(aux_topology_name(topology)) << " epoch " << i << " loss " << e[i].train_loss);
                CHECK(e[i].train_loss < e[i - 1].train_loss);
            }
            auto again = pretrain_auxiliary(spec, data, cfg);
            CHECK(bit_equal(snapshot(result.learner.parameters()), snapshot(again.learner.parameters())));
        }
    }

    TEST_CASE("pretraining on an empty dataset is a data error") {
        CHECK_THROWS_AS(pretrain_auxiliary(tiny_aux(AuxTopology::PlainStack), Dataset{}, TrainConfig{}), DataError);
    }
}

TEST_SUITE("fine_tune") {
    const auto target = synthetic_dataset(8, 16, 21);
    TrainConfig cfg = [] {
        TrainConfig c;
        c.lr0 = 1e-2;
        c.epochs = 2;
        c.seed = 21;
        return c;
    }();

    TEST_CASE("depth zero warns and leaves parameters bit-identical") {
        auto learner = build_aux_learner<float>(tiny_aux(AuxTopology::PlainStack), 21);
        const auto before = snapshot(learner.parameters());
        set_log_level(LogLevel::Quiet);
        auto h = fine_tune(learner, target, nullptr, 0, cfg);
        set_log_level(LogLevel::Warning);
        CHECK(h.epochs.empty());
        CHECK(bit_equal(before, snapshot(learner.parameters())));
    }

    TEST_CASE("depth beyond the learner is an argument error") {
        auto learner = build_aux_learner<float>(tiny_aux(AuxTopology::PlainStack), 21);
        CHECK_THROWS_AS(fine_tune(learner, target, nullptr, learner.depth() + 1, cfg), ArgumentError);
    }

    TEST_CASE("frozen layers are bit-stable and tuned layers move") {
        for (auto topology : {AuxTopology::PlainStack, AuxTopology::ResidualStack}) {
            auto learner = build_aux_learner<float>(tiny_aux(topology), 22);
            const std::size_t depth = 2;
            const std::size_t cut = learner.depth() - depth;
            const auto all = learner.parameters();
            const auto tuned = learner.layer_parameters(cut);
            const std::vector<NamedParam<float>> frozen(all.begin(), all.end() - static_cast<long>(tuned.size()));
            const auto frozen_before = snapshot(frozen);
            const auto tuned_before = snapshot(tuned);
            fine_tune(learner, target, nullptr, depth, cfg);
            CHECK(bit_equal(frozen_before, snapshot(frozen)));
            CHECK_FALSE(bit_equal(tuned_before, snapshot(tuned)));
            for (const auto& p : all) CHECK(p.var->requires_grad);
        }
    }

    TEST_CASE("full depth equals ordinary training") {
        auto a = build_aux_learner<float>(tiny_aux(AuxTopology::ResidualStack), 23);
        auto b = build_aux_learner<float>(tiny_aux(AuxTopology::ResidualStack), 23);
        auto ha = fine_tune(a, target, nullptr, a.depth(), cfg);
        auto hb = train(b, target, nullptr, AugmentSpec::none(), cfg);
        CHECK(bit_equal(snapshot(a.parameters()), snapshot(b.parameters())));
        REQUIRE(ha.epochs.size() == hb.epochs.size());
        for (std::size_t i = 0; i < ha.epochs.size(); ++i) CHECK(ha.epochs[i].train_loss == hb.epochs[i].train_loss);
    }
}

TEST_SUITE("boosted_model") {
    TEST_CASE("boosted width is backbone plus tap widths and logits are Nx2") {
        auto model = tiny_boosted<float>(1);
        CHECK(model.backbone_channels() == 24);
        CHECK(model.boosted_channels() == 24 + 6 + 6);
        Rng rng(1);
        auto x = leaf(random_tensor<float>({3, 3, 16, 16}, rng, 0, 1));
        CHECK(model.boosted_input(x)->value.shape() == Shape{3, 36, 4, 4});
        ForwardContext ctx;
        CHECK(model.forward(x, ctx)->value.shape() == Shape{3, 2});
    }

    TEST_CASE("desk-scale widths give Ci = 384 and Cb = 384 + 32 + 32") {
        std::vector<AuxLearner<float>> aux;
        AuxLearnerSpec plain, residual;
        residual.topology = AuxTopology::ResidualStack;
        aux.emplace_back(plain);
        aux.emplace_back(residual);
        BoostedModel<float> model(STMRENet<float>(NetSpec{}), std::move(aux), BoostSpec{});
        CHECK(model.backbone_channels() == 384);
        CHECK(model.boosted_channels() == 448);
        CHECK(model.adapters()[0].resizes());
    }

    TEST_CASE("aux learners must have distinct topologies and matching inputs") {
        std::vector<AuxLearner<float>> same;
        same.emplace_back(tiny_aux(AuxTopology::PlainStack));
        same.emplace_back(tiny_aux(AuxTopology::PlainStack));
        CHECK_THROWS_AS(BoostedModel<float>(STMRENet<float>(tiny_backbone()), std::move(same), BoostSpec{}), ConfigError);
        std::vector<AuxLearner<float>> wrong;
        wrong.emplace_back(tiny_aux(AuxTopology::PlainStack, 32));
        CHECK_THROWS_AS(BoostedModel<float>(STMRENet<float>(tiny_backbone()), std::move(wrong), BoostSpec{}), ConfigError);
    }

    TEST_CASE("inference is deterministic") {
        auto model = tiny_boosted<float>(2);
        Rng rng(2);
        auto x = leaf(random_tensor<float>({4, 3, 16, 16}, rng, 0, 1));
        ForwardContext ctx;
        auto a = model.forward(x, ctx)->value;
        auto b = model.forward(x, ctx)->value;
        CHECK(max_abs_diff(a, b) == 0.0);
    }

    TEST_CASE("zeroed adapters reduce to the backbone plus block E") {
        auto model = tiny_boosted<float>(3);
        for (const auto& p : with_prefix(model.own_parameters(), "adapter")) p.var->value.fill(0.0f);
        Rng rng(3);
        auto x = leaf(random_tensor<float>({4, 3, 16, 16}, rng, 0, 1));
        ForwardContext ctx;
        auto boosted = model.forward(x, ctx)->value;
        auto ablated = model.forward_without_aux(x, ctx)->value;
        MESSAGE("ablation diff " << max_abs_diff(boosted, ablated));
        CHECK(max_abs_diff(boosted, ablated) <= 1e-6);

        // Aux learner weights are then irrelevant.
        for (auto& learner : model.aux())
            for (const auto& p : learner.parameters()) p.var->value.fill(0.25f);
        CHECK(max_abs_diff(model.forward(x, ctx)->value, boosted) <= 1e-6);
    }

    TEST_CASE("warm start reproduces the backbone and still trains the aux path") {
        auto model = tiny_boosted<float>(7, BoostSpec{8, 0.5, false, 0, true});
        Rng rng(7);
        auto x = leaf(random_tensor<float>({4, 3, 16, 16}, rng, 0, 1));
        ForwardContext ctx;
        CHECK(max_abs_diff(model.forward(x, ctx)->value, model.backbone().forward(x, ctx)->value) == 0.0);

        std::vector<int> labels{0, 1, 1, 0};
        backward(softmax_cross_entropy(model.forward(x, ctx), labels).loss);
        const auto& w = with_prefix(model.own_parameters(), "blockE.conv1.weight").front().var;
        double aux_grad = 0;
        for (std::size_t k = 0; k < w->value.dim(0); ++k)
            for (std::size_t c = model.backbone_channels(); c < w->value.dim(1); ++c)
                for (std::size_t i = 0; i < 9; ++i) aux_grad += std::abs(w->grad[(k * w->value.dim(1) + c) * 9 + i]);
        CHECK(aux_grad > 0);

        CHECK_THROWS_AS(tiny_boosted<float>(7, BoostSpec{5, 0.5, false, 0, true}), ConfigError);
    }

    TEST_CASE("boosted training leaves frozen aux learners bit-stable") {
        auto model = tiny_boosted<float>(4, BoostSpec{8, 0.5, false, 0});
        std::vector<NamedParam<float>> aux_params;
        for (auto& learner : model.aux())
            for (const auto& p : learner.parameters()) aux_params.push_back(p);
        const auto aux_before = snapshot(aux_params);
        const auto own_before = snapshot(model.own_parameters());
        const auto trunk_before = snapshot(model.backbone().trunk_parameters());
        TrainConfig cfg;
        cfg.lr0 = 1e-2;
        cfg.epochs = 2;
        cfg.seed = 4;
        train(model, synthetic_dataset(8, 16, 4), nullptr, AugmentSpec{}, cfg);
        CHECK(bit_equal(aux_before, snapshot(aux_params)));
        CHECK_FALSE(bit_equal(own_before, snapshot(model.own_parameters())));
        CHECK_FALSE(bit_equal(trunk_before, snapshot(model.backbone().trunk_parameters())));
        for (const auto& p : model.trainable_parameters()) CHECK(p.name.rfind("aux", 0) != 0);
    }

    TEST_CASE("freeze flag holds the backbone trunk") {
        auto model = tiny_boosted<float>(5, BoostSpec{8, 0.0, true, 0});
        const auto trunk_before = snapshot(model.backbone().trunk_parameters());
        TrainConfig cfg;
        cfg.lr0 = 1e-2;
        cfg.epochs = 1;
        cfg.seed = 5;
        train(model, synthetic_dataset(8, 16, 5), nullptr, AugmentSpec::none(), cfg);
        CHECK(bit_equal(trunk_before, snapshot(model.backbone().trunk_parameters())));
    }

    TEST_CASE("end-to-end gradient check in double") {
        NetSpec net = tiny_backbone();
        net.stage_widths = {2, 3};
        std::vector<AuxLearner<double>> aux;
        auto plain = tiny_aux(AuxTopology::PlainStack);
        plain.widths = {2, 2};
        auto residual = tiny_aux(AuxTopology::ResidualStack);
        residual.widths = {2};
        aux.push_back(build_aux_learner<double>(plain, 31));
        aux.push_back(build_aux_learner<double>(residual, 32));
        auto model = build_boosted_model<double>(build_stm_renet<double>(net, 30), std::move(aux),
                                                 BoostSpec{4, 0.0, false, 2}, 33);
        Rng rng(30);
        auto x = leaf(random_tensor<double>({2, 3, 16, 16}, rng, 0, 1));
        auto weights = random_tensor<double>({2, 2}, rng);
        ForwardContext ctx;
        auto result = grad_check<double>([&] { return weighted_sum(model.forward(x, ctx), weights); },
                                         model.trainable_parameters());
        MESSAGE("boosted grad check: max rel " << result.max_relative_error << " checked " << result.checked
                                               << " skipped " << result.skipped << " worst " << result.worst);
        CHECK(result.max_relative_error < 1e-3);
        CHECK(result.skipped * 50 < result.checked);
    }

    TEST_CASE("save and load round trip") {
        auto model = tiny_boosted<float>(6, BoostSpec{8, 0.25, true, 5});
        auto dir = stmre::testing::scratch_dir("boosted");
        save_boosted_model(model, dir);
        CHECK(std::filesystem::exists(dir / "backbone.bin"));
        CHECK(std::filesystem::exists(dir / "aux1.bin"));
        CHECK(std::filesystem::exists(dir / "aux2.bin"));
        std::ifstream manifest(dir / "boost_manifest.txt");
        std::string text((std::istreambuf_iterator<char>(manifest)), std::istreambuf_iterator<char>());
        CHECK(text.find("aux1.tap=stage1.out") != std::string::npos);
        CHECK(text.find("aux2.topology=residual_stack") != std::string::npos);

        auto loaded = load_boosted_model(dir);
        CHECK(loaded.spec().freeze_backbone);
        CHECK(loaded.spec().adapter_channels == 5);
        CHECK(loaded.boosted_channels() == model.boosted_channels());
        Rng rng(6);
        auto x = leaf(random_tensor<float>({2, 3, 16, 16}, rng, 0, 1));
        ForwardContext ctx;
        CHECK(max_abs_diff(model.forward(x, ctx)->value, loaded.forward(x, ctx)->value) == 0.0);
        CHECK_THROWS_AS(load_boosted_model(dir / "missing"), DataError);
    }
}
