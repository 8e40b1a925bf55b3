#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ctvit/counting.hpp"
#include "ctvit/model.hpp"
#include "ctvit/rng.hpp"

using namespace ctvit;

namespace {

Tensor random_image(uint64_t seed, int64_t side) {
    Rng rng(seed, rng_stream::kTest);
    Tensor img = Tensor::zeros({3, side, side});
    for (double& v : img.mutable_data()) v = rng.normal();
    return img;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void zero_output_projections(ParamStore& store) {
    for (const Parameter& p : store.all()) {
        for (const char* suffix : {".attn.wo.w", ".attn.wo.b", ".mlp.fc2.w",
                                   ".mlp.fc2.b", ".attn.out.w", ".attn.out.b"}) {
            if (ends_with(p.name, suffix)) {
                Tensor t = p.tensor;
                for (double& v : t.mutable_data()) v = 0.0;
            }
        }
    }
}

void perturb(Tensor t, double delta) {
    for (double& v : t.mutable_data()) v += delta;
}

}  // namespace

TEST_CASE("config validation") {
    ModelConfig c = preset_tiny();
    CHECK_NOTHROW(c.validate());

    SUBCASE("dims divisible by heads") {
        c.heads_small = 3;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
    SUBCASE("fusion needs cross-divisibility") {
        c.heads_large = 16;  // divides dim_large 32 but not dim_small 16? 16%16==0
        c.dim_small = 24;    // 24 % 16 != 0
        c.heads_small = 2;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
    SUBCASE("image side divisible by patch") {
        c.image_side = 30;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
    SUBCASE("class counts") {
        c.num_mask_classes = 1;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
    SUBCASE("iteration counts") {
        c.fusion_iters_phase1 = 0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
}

TEST_CASE("default config token geometry") {
    ModelConfig c = preset_proposed();
    CHECK(c.tokens_large() == 197);  // 224/16 -> 14^2 + CLS
    CHECK(c.tokens_small() == 325);  // 216/12 -> 18^2 + CLS
}

TEST_CASE("count_parameters equals the instantiated scalar total, all presets") {
    for (const char* name : {"gradcheck", "tiny", "vit-b16", "crossvit-b", "proposed"}) {
        ModelConfig c = config_from_preset(name);
        const int64_t predicted = count_model(c).total_params();
        CrossTaskModel model(c);
        INFO("preset " << name);
        CHECK(predicted == model.params().total_scalars());
    }

    SUBCASE("ablation variants too") {
        ModelConfig c = preset_proposed();
        c.phase2_enabled = false;
        CHECK(count_model(c).total_params() == CrossTaskModel(c).params().total_scalars());
        ModelConfig d = preset_tiny();
        d.fusion_variant_last = FusionVariant::DotProduct;
        CHECK(count_model(d).total_params() == CrossTaskModel(d).params().total_scalars());
    }
}

TEST_CASE("complexity accounting reproduces the reference figures") {
    auto rel = [](double got, double target) { return std::fabs(got - target) / target; };

    ModelCost vit = count_model(preset_vit_b16());
    CHECK(rel(static_cast<double>(vit.total_params()), 86.7e6) <= 0.02);
    CHECK(rel(static_cast<double>(vit.total_flops()), 17.6e9) <= 0.03);

    ModelCost cv = count_model(preset_crossvit_b());
    CHECK(rel(static_cast<double>(cv.total_params()), 104.7e6) <= 0.02);
    CHECK(rel(static_cast<double>(cv.total_flops()), 21.2e9) <= 0.05);

    ModelCost prop = count_model(preset_proposed());
    CHECK(rel(static_cast<double>(prop.total_params()), 125.8e6) <= 0.05);
    CHECK(rel(static_cast<double>(prop.total_flops()), 24.6e9) <= 0.10);

    // first-phase-only ablation lands on the CrossViT-B budget
    ModelConfig p1 = preset_proposed();
    p1.phase2_enabled = false;
    CHECK(rel(static_cast<double>(count_model(p1).total_params()), 104.7e6) <= 0.02);

    // additive vs dot-product last fusion: closed-form delta 2 (d^2 + 2 d)
    ModelConfig dot = preset_proposed();
    dot.fusion_variant_last = FusionVariant::DotProduct;
    const int64_t d = dot.dim_small;
    CHECK(count_model(dot).total_params() - prop.total_params() == 2 * (d * d + 2 * d));
}

TEST_CASE("degenerate config with zero blocks counts embeddings, fusion, heads only") {
    ModelConfig c = preset_gradcheck();
    c.depth_large = 0;
    c.depth_small = 0;
    c.depth_expr = 0;
    c.depth_mask = 0;
    // by hand: towers + one dot fusion pair + one additive fusion pair + heads
    const int64_t tower_l = (16 * 16 * 3) * 8 + 8 + 8 + 5 * 8;
    const int64_t tower_s = (8 * 8 * 3) * 8 + 8 + 8 + 17 * 8;
    const int64_t fuse1 = 2 * (2 * 8 + 4 * (8 * 8 + 8));          // equal dims, dot
    const int64_t fuse2 = 2 * (2 * 8 + (2 * 8 * 8 + 8) + (8 * 8 + 8));  // additive
    const int64_t heads = 3 * (8 * 8 + 8) + (16 * 7 + 7) + (16 * 2 + 2) + (16 * 7 + 7);
    const int64_t expected = tower_l + tower_s + fuse1 + fuse2 + heads;
    CHECK(count_model(c).total_params() == expected);
    CHECK(CrossTaskModel(c).params().total_scalars() == expected);
}

TEST_CASE("phase1_forward invariants on the tiny config") {
    ModelConfig c = preset_tiny();
    CrossTaskModel model(c);
    Tensor img = random_image(1, c.image_side);

    SUBCASE("shapes") {
        Phase1Output p1 = model.phase1_forward(img);
        CHECK(p1.cls_l.shape() == Shape{c.dim_large});
        CHECK(p1.cls_s.shape() == Shape{c.dim_small});
        CHECK(p1.patches_l.shape() == Shape{4, c.dim_large});
        CHECK(p1.patches_s.shape() == Shape{16, c.dim_small});
    }

    SUBCASE("zeroed output projections reduce cls_l to CLS + positional slot") {
        Rng rng(3, rng_stream::kTest);
        Tensor cls = model.tower_l().cls;
        Tensor pos = model.tower_l().pos;
        for (double& v : cls.mutable_data()) v = rng.normal();
        for (double& v : pos.mutable_data()) v = rng.normal();
        round_to_f32(cls.mutable_data());
        round_to_f32(pos.mutable_data());
        zero_output_projections(model.params());
        Phase1Output p1 = model.phase1_forward(img);
        for (int64_t j = 0; j < c.dim_large; ++j)
            CHECK(p1.cls_l.data()[j] ==
                  model.tower_l().cls.data()[j] + model.tower_l().pos.data()[j]);
    }

    SUBCASE("straight-line composition oracle, bit-exact") {
        Phase1Output got = model.phase1_forward(img);

        Tensor img_s = Tensor::from_data(
            {3, c.sbranch_input_side, c.sbranch_input_side},
            bilinear_resize_chw(img.data(), 3, c.image_side, c.image_side,
                                c.sbranch_input_side, c.sbranch_input_side));
        TokenSequence sl = tokenize(img, model.tower_l().embed, model.tower_l().pos,
                                    model.tower_l().cls);
        TokenSequence ss = tokenize(img_s, model.tower_s().embed, model.tower_s().pos,
                                    model.tower_s().cls);
        for (int64_t i = 0; i < c.fusion_iters_phase1; ++i) {
            sl = branch_forward(model.phase1_blocks_l()[i], sl);
            ss = branch_forward(model.phase1_blocks_s()[i], ss);
            auto fused = cross_attention_fuse(model.phase1_fusions()[i], sl.tokens,
                                              ss.tokens);
            sl.tokens = fused.first;
            ss.tokens = fused.second;
        }
        for (int64_t j = 0; j < c.dim_large; ++j)
            CHECK(got.cls_l.data()[j] == sl.tokens.data()[j]);
        CHECK(got.patches_s.data() ==
              slice(ss.tokens, 0, 1, ss.length()).data());
    }

    SUBCASE("wrong image shape rejected") {
        CHECK_THROWS_AS(model.phase1_forward(random_image(1, 16)), ShapeError);
    }
}

TEST_CASE("phase2_forward invariants") {
    SUBCASE("L2=1 means the only fusion is additive") {
        ModelConfig c = preset_tiny();
        c.fusion_iters_phase2 = 1;
        CrossTaskModel model(c);
        CHECK(model.params().contains("phase2.it0.fuse.e.attn.wa"));
        CHECK_FALSE(model.params().contains("phase2.it0.fuse.e.attn.wq.w"));
    }

    SUBCASE("zeroed update projections copy cls_s into both branches") {
        ModelConfig c = preset_tiny();
        CrossTaskModel model(c);
        zero_output_projections(model.params());
        Tensor img = random_image(2, c.image_side);
        Phase1Output p1 = model.phase1_forward(img);
        auto [cls_e, cls_m] = model.phase2_forward(p1);
        CHECK(cls_e.data() == p1.cls_s.data());
        CHECK(cls_m.data() == p1.cls_s.data());
    }

    SUBCASE("composition oracle: duplicate, blocks, fuse") {
        ModelConfig c = preset_tiny();
        CrossTaskModel model(c);
        Tensor img = random_image(4, c.image_side);
        Phase1Output p1 = model.phase1_forward(img);
        auto [cls_e, cls_m] = model.phase2_forward(p1);

        Tensor start = concat({reshape(p1.cls_s, {1, c.dim_small}), p1.patches_s}, 0);
        TokenSequence se{start, p1.grid_s, p1.grid_s};
        TokenSequence sm{start, p1.grid_s, p1.grid_s};
        for (int64_t i = 0; i < c.fusion_iters_phase2; ++i) {
            se = branch_forward(model.phase2_blocks_e()[i], se);
            sm = branch_forward(model.phase2_blocks_m()[i], sm);
            auto fused = cross_attention_fuse(model.phase2_fusions()[i], se.tokens,
                                              sm.tokens);
            se.tokens = fused.first;
            sm.tokens = fused.second;
        }
        for (int64_t j = 0; j < c.dim_small; ++j) {
            CHECK(cls_e.data()[j] == se.tokens.data()[j]);
            CHECK(cls_m.data()[j] == sm.tokens.data()[j]);
        }
    }
}

TEST_CASE("predict") {
    ModelConfig c = preset_tiny();
    CrossTaskModel model(c);
    Tensor img = random_image(5, c.image_side);

    SUBCASE("logit shapes under the task config") {
        Predictions pred = model.predict(img);
        CHECK(pred.expr_logits.shape() == Shape{7});
        CHECK(pred.mask_logits.shape() == Shape{2});
        CHECK(pred.shared_logits.shape() == Shape{7});
        for (double v : pred.expr_logits.data()) CHECK(std::isfinite(v));
    }

    SUBCASE("zero heads give zero logits and argmax tie-breaks to class 0") {
        for (const Parameter& p : model.params().all()) {
            if (p.name.rfind("heads.", 0) == 0) {
                Tensor t = p.tensor;
                for (double& v : t.mutable_data()) v = 0.0;
            }
        }
        Predictions pred = model.predict(img);
        for (double v : pred.expr_logits.data()) CHECK(v == 0.0);
        CHECK(argmax(pred.expr_logits) == 0);
        CHECK(argmax(pred.mask_logits) == 0);
    }

    SUBCASE("scaling head weights scales logits, argmax unchanged") {
        Predictions before = model.predict(img);
        const double factor = 3.0;
        for (const Parameter& p : model.params().all()) {
            if (p.name.rfind("heads.expr.linear.", 0) == 0) {
                Tensor t = p.tensor;
                for (double& v : t.mutable_data()) v *= factor;
            }
        }
        Predictions after = model.predict(img);
        for (int64_t i = 0; i < 7; ++i)
            CHECK(after.expr_logits.data()[i] ==
                  doctest::Approx(factor * before.expr_logits.data()[i]).epsilon(1e-9));
        CHECK(argmax(after.expr_logits) == argmax(before.expr_logits));
    }

    SUBCASE("forward_shared agrees with predict's shared logits bit-exactly") {
        Predictions pred = model.predict(img);
        Tensor shared = model.forward_shared(img);
        CHECK(shared.data() == pred.shared_logits.data());
    }

    SUBCASE("deterministic across fresh instances with the same seed") {
        CrossTaskModel twin(c);
        Predictions a = model.predict(img);
        Predictions b = twin.predict(img);
        CHECK(a.expr_logits.data() == b.expr_logits.data());
        CHECK(a.mask_logits.data() == b.mask_logits.data());
        CHECK(a.shared_logits.data() == b.shared_logits.data());
    }

    SUBCASE("different seed changes the model") {
        ModelConfig c2 = c;
        c2.seed = 1;
        CrossTaskModel other(c2);
        CHECK(model.predict(img).expr_logits.data() !=
              other.predict(img).expr_logits.data());
    }
}

TEST_CASE("gradients reach every parameter; phase 2 cannot touch shared_logits") {
    ModelConfig c = preset_tiny();
    CrossTaskModel model(c);
    Tensor img = random_image(6, c.image_side);

    Predictions pred = model.predict(img);
    Tensor combined =
        add(add(sum(pred.expr_logits), sum(pred.mask_logits)), sum(pred.shared_logits));
    backward(combined);

    for (const Parameter& p : model.params().all()) {
        INFO("parameter " << p.name);
        REQUIRE(p.tensor.has_grad());
        bool any = false;
        for (double g : p.tensor.grad())
            if (g != 0.0) any = true;
        CHECK(any);
    }

    SUBCASE("phase-1 outputs are independent of phase-2 parameters") {
        Predictions base = model.predict(img);
        for (const Parameter& p : model.phase2_parameters()) perturb(p.tensor, 0.1);
        Predictions shifted = model.predict(img);
        CHECK(shifted.shared_logits.data() == base.shared_logits.data());
        CHECK(shifted.expr_logits.data() != base.expr_logits.data());
    }
}

TEST_CASE("phase1/phase2 trainable splits cover the store exactly once") {
    CrossTaskModel model(preset_tiny());
    auto p1 = model.phase1_parameters();
    auto p2 = model.phase2_parameters();
    CHECK(p1.size() + p2.size() == model.params().all().size());
    for (const Parameter& a : p1)
        for (const Parameter& b : p2) CHECK(a.name != b.name);
}

TEST_CASE("reference archs are counting/instantiation only") {
    CrossTaskModel vit(preset_vit_b16());
    CHECK_THROWS_AS(vit.phase1_forward(random_image(1, 224)), ConfigError);
}
