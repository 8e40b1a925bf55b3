#include "ctvit/model.hpp"

#include <cmath>

namespace ctvit {

Arch arch_from_string(const std::string& s) {
    if (s == "vit") return Arch::Vit;
    if (s == "crossvit") return Arch::CrossVit;
    if (s == "crosstask") return Arch::CrossTask;
    throw ConfigError("unknown arch: " + s);
}

std::string to_string(Arch arch) {
    switch (arch) {
        case Arch::Vit: return "vit";
        case Arch::CrossVit: return "crossvit";
        case Arch::CrossTask: return "crosstask";
    }
    return "?";
}

FusionVariant fusion_variant_from_string(const std::string& s) {
    if (s == "dot_product") return FusionVariant::DotProduct;
    if (s == "additive") return FusionVariant::Additive;
    throw ConfigError("unknown fusion variant: " + s);
}

std::string to_string(FusionVariant v) {
    return v == FusionVariant::DotProduct ? "dot_product" : "additive";
}

void ModelConfig::validate() const {
    auto positive = [](int64_t v, const char* what) {
        if (v < 1) throw ConfigError(std::string(what) + " must be >= 1");
    };
    positive(image_side, "image_side");
    positive(patch_large, "patch_large");
    positive(mlp_ratio, "mlp_ratio");
    positive(fusion_iters_phase1, "fusion_iters_phase1");
    if (image_side % patch_large != 0)
        throw ConfigError("image_side " + std::to_string(image_side) +
                          " not divisible by patch_large " + std::to_string(patch_large));
    if (heads_large < 1 || dim_large % heads_large != 0)
        throw ConfigError("dim_large not divisible by heads_large");
    if (depth_large < 0) throw ConfigError("depth_large must be >= 0");

    if (arch == Arch::Vit) {
        if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
        return;
    }

    positive(patch_small, "patch_small");
    positive(sbranch_input_side, "sbranch_input_side");
    if (sbranch_input_side % patch_small != 0)
        throw ConfigError("sbranch_input_side " + std::to_string(sbranch_input_side) +
                          " not divisible by patch_small " + std::to_string(patch_small));
    if (heads_small < 1 || dim_small % heads_small != 0)
        throw ConfigError("dim_small not divisible by heads_small");
    if (depth_small < 0) throw ConfigError("depth_small must be >= 0");
    // Fusion attention runs in the other branch's width with the owning
    // branch's head count.
    if (dim_small % heads_large != 0)
        throw ConfigError("dim_small not divisible by heads_large (fusion)");
    if (dim_large % heads_small != 0)
        throw ConfigError("dim_large not divisible by heads_small (fusion)");

    if (arch == Arch::CrossVit) {
        if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
        return;
    }

    positive(fusion_iters_phase2, "fusion_iters_phase2");
    if (depth_expr < 0 || depth_mask < 0)
        throw ConfigError("phase-2 depths must be >= 0");
    if (num_expr_classes < 2 || num_mask_classes < 2)
        throw ConfigError("class counts must be >= 2");
}

int64_t ModelConfig::tokens_large() const {
    const int64_t g = image_side / patch_large;
    return 1 + g * g;
}

int64_t ModelConfig::tokens_small() const {
    const int64_t g = sbranch_input_side / patch_small;
    return 1 + g * g;
}

ModelConfig preset_vit_b16() {
    ModelConfig c;
    c.arch = Arch::Vit;
    c.image_side = 224;
    c.patch_large = 16;
    c.dim_large = 768;
    c.depth_large = 12;
    c.heads_large = 12;
    c.fusion_iters_phase1 = 1;
    c.mlp_ratio = 4;
    c.num_classes = 1000;
    return c;
}

ModelConfig preset_crossvit_b() {
    // Published CrossViT-B geometry: the small-patch branch runs at 240.
    ModelConfig c;
    c.arch = Arch::CrossVit;
    c.image_side = 224;
    c.patch_large = 16;
    c.patch_small = 12;
    c.sbranch_input_side = 240;
    c.dim_large = 768;
    c.dim_small = 384;
    c.depth_large = 4;
    c.depth_small = 1;
    c.heads_large = 12;
    c.heads_small = 12;
    c.fusion_iters_phase1 = 3;
    c.mlp_ratio = 4;
    c.num_classes = 1000;
    return c;
}

ModelConfig preset_proposed() {
    ModelConfig c;  // defaults are the proposed model
    return c;
}

ModelConfig preset_tiny() {
    ModelConfig c;
    c.arch = Arch::CrossTask;
    c.image_side = 32;
    c.patch_large = 16;
    c.patch_small = 8;
    c.sbranch_input_side = 32;
    c.dim_large = 32;
    c.dim_small = 16;
    c.depth_large = 1;
    c.depth_small = 1;
    c.heads_large = 4;
    c.heads_small = 2;
    c.fusion_iters_phase1 = 2;
    c.depth_expr = 1;
    c.depth_mask = 1;
    c.fusion_iters_phase2 = 2;
    c.mlp_ratio = 2;
    return c;
}

ModelConfig preset_gradcheck() {
    ModelConfig c;
    c.arch = Arch::CrossTask;
    c.image_side = 32;
    c.patch_large = 16;
    c.patch_small = 8;
    c.sbranch_input_side = 32;
    c.dim_large = 8;
    c.dim_small = 8;
    c.depth_large = 1;
    c.depth_small = 1;
    c.heads_large = 1;
    c.heads_small = 1;
    c.fusion_iters_phase1 = 1;
    c.depth_expr = 1;
    c.depth_mask = 1;
    c.fusion_iters_phase2 = 1;
    c.mlp_ratio = 2;
    return c;
}

ModelConfig config_from_preset(const std::string& name) {
    if (name == "vit-b16") return preset_vit_b16();
    if (name == "crossvit-b") return preset_crossvit_b();
    if (name == "proposed") return preset_proposed();
    if (name == "tiny") return preset_tiny();
    if (name == "gradcheck") return preset_gradcheck();
    throw ConfigError("unknown preset: " + name);
}

// --- construction -------------------------------------------------------------

CrossTaskModel::BranchTower CrossTaskModel::build_tower(const std::string& prefix,
                                                        int64_t patch, int64_t dim,
                                                        int64_t side) {
    BranchTower tower;
    tower.embed = make_patch_embed(*params_, prefix + ".embed", patch, dim);
    tower.cls = params_->create(prefix + ".cls", {1, dim}, Init::Zero);
    const int64_t grid = side / patch;
    tower.pos = params_->create(prefix + ".pos", {1 + grid * grid, dim}, Init::Zero);
    return tower;
}

CrossTaskModel::CrossTaskModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    params_ = std::make_unique<ParamStore>(config_.seed);
    const ModelConfig& c = config_;

    tower_l_ = build_tower("phase1.lbranch", c.patch_large, c.dim_large, c.image_side);
    if (c.arch != Arch::Vit)
        tower_s_ = build_tower("phase1.sbranch", c.patch_small, c.dim_small,
                               c.sbranch_input_side);

    for (int64_t i = 0; i < c.fusion_iters_phase1; ++i) {
        const std::string it = "phase1.it" + std::to_string(i);
        std::vector<EncoderBlock> lb, sb;
        for (int64_t j = 0; j < c.depth_large; ++j)
            lb.push_back(make_encoder_block(*params_,
                                            it + ".lbranch.block" + std::to_string(j),
                                            c.dim_large, c.heads_large, c.mlp_ratio));
        blocks_l_.push_back(std::move(lb));
        if (c.arch != Arch::Vit) {
            for (int64_t j = 0; j < c.depth_small; ++j)
                sb.push_back(make_encoder_block(
                    *params_, it + ".sbranch.block" + std::to_string(j), c.dim_small,
                    c.heads_small, c.mlp_ratio));
            blocks_s_.push_back(std::move(sb));
            fusion1_.push_back(make_cross_fusion(*params_, it + ".fuse", "l", "s",
                                                 c.dim_large, c.dim_small,
                                                 c.heads_large, c.heads_small,
                                                 FusionVariant::DotProduct));
        }
    }

    if (c.arch == Arch::Vit) {
        head_vit_ = make_linear(*params_, "heads.classifier", c.dim_large, c.num_classes);
        return;
    }
    if (c.arch == Arch::CrossVit) {
        head_crossvit_l_ =
            make_linear(*params_, "heads.lbranch", c.dim_large, c.num_classes);
        head_crossvit_s_ =
            make_linear(*params_, "heads.sbranch", c.dim_small, c.num_classes);
        return;
    }

    if (c.phase2_enabled) {
        for (int64_t i = 0; i < c.fusion_iters_phase2; ++i) {
            const std::string it = "phase2.it" + std::to_string(i);
            std::vector<EncoderBlock> eb, mb;
            for (int64_t j = 0; j < c.depth_expr; ++j)
                eb.push_back(make_encoder_block(
                    *params_, it + ".ebranch.block" + std::to_string(j), c.dim_small,
                    c.heads_small, c.mlp_ratio));
            for (int64_t j = 0; j < c.depth_mask; ++j)
                mb.push_back(make_encoder_block(
                    *params_, it + ".mbranch.block" + std::to_string(j), c.dim_small,
                    c.heads_small, c.mlp_ratio));
            blocks_e_.push_back(std::move(eb));
            blocks_m_.push_back(std::move(mb));
            const bool last = i == c.fusion_iters_phase2 - 1;
            fusion2_.push_back(make_cross_fusion(
                *params_, it + ".fuse", "e", "m", c.dim_small, c.dim_small,
                c.heads_small, c.heads_small,
                last ? c.fusion_variant_last : FusionVariant::DotProduct));
        }
    }

    auto make_head = [&](const std::string& name, int64_t classes) {
        TaskHead head;
        head.proj = make_linear(*params_, "heads." + name + ".proj", c.dim_small,
                                c.dim_large);
        head.linear = make_linear(*params_, "heads." + name + ".linear",
                                  2 * c.dim_large, classes);
        return head;
    };
    head_expr_ = make_head("expr", c.num_expr_classes);
    head_mask_ = make_head("mask", c.num_mask_classes);
    head_shared_ = make_head("shared", c.num_expr_classes);
}

// --- forward -------------------------------------------------------------------

TokenSequence CrossTaskModel::run_tower(const BranchTower& tower, const Tensor& image,
                                        int64_t side) const {
    if (image.dim(1) == side) return tokenize(image, tower.embed, tower.pos, tower.cls);
    Tensor resized = Tensor::from_data(
        {3, side, side},
        bilinear_resize_chw(image.data(), 3, image.dim(1), image.dim(2), side, side));
    return tokenize(resized, tower.embed, tower.pos, tower.cls);
}

Phase1Output CrossTaskModel::phase1_forward(const Tensor& image) const {
    if (config_.arch != Arch::CrossTask)
        throw ConfigError("forward pass requires arch = crosstask");
    if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != config_.image_side ||
        image.dim(2) != config_.image_side)
        throw ShapeError("phase1_forward expects a (3, " +
                         std::to_string(config_.image_side) + ", " +
                         std::to_string(config_.image_side) + ") image, got " +
                         shape_str(image.shape()));

    TokenSequence seq_l = run_tower(tower_l_, image, config_.image_side);
    TokenSequence seq_s = run_tower(tower_s_, image, config_.sbranch_input_side);

    for (int64_t i = 0; i < config_.fusion_iters_phase1; ++i) {
        seq_l = branch_forward(blocks_l_[i], seq_l);
        seq_s = branch_forward(blocks_s_[i], seq_s);
        auto fused = cross_attention_fuse(fusion1_[i], seq_l.tokens, seq_s.tokens);
        seq_l.tokens = fused.first;
        seq_s.tokens = fused.second;
    }

    Phase1Output out;
    out.cls_l = reshape(slice(seq_l.tokens, 0, 0, 1), {config_.dim_large});
    out.cls_s = reshape(slice(seq_s.tokens, 0, 0, 1), {config_.dim_small});
    out.patches_l = slice(seq_l.tokens, 0, 1, seq_l.length());
    out.patches_s = slice(seq_s.tokens, 0, 1, seq_s.length());
    out.grid_s = seq_s.grid_rows;
    return out;
}

std::pair<Tensor, Tensor> CrossTaskModel::phase2_forward(const Phase1Output& p1) const {
    if (!config_.phase2_enabled)
        throw ConfigError("phase 2 is disabled in this configuration");
    if (p1.cls_s.numel() != config_.dim_small ||
        p1.patches_s.dim(1) != config_.dim_small)
        throw ShapeError("phase-1 output width does not match phase-2 config");

    // S-branch output duplicated into both task branches.
    Tensor start = concat({reshape(p1.cls_s, {1, config_.dim_small}), p1.patches_s}, 0);
    TokenSequence seq_e{start, p1.grid_s, p1.grid_s};
    TokenSequence seq_m{start, p1.grid_s, p1.grid_s};

    for (int64_t i = 0; i < config_.fusion_iters_phase2; ++i) {
        seq_e = branch_forward(blocks_e_[i], seq_e);
        seq_m = branch_forward(blocks_m_[i], seq_m);
        auto fused = cross_attention_fuse(fusion2_[i], seq_e.tokens, seq_m.tokens);
        seq_e.tokens = fused.first;
        seq_m.tokens = fused.second;
    }
    return {reshape(slice(seq_e.tokens, 0, 0, 1), {config_.dim_small}),
            reshape(slice(seq_m.tokens, 0, 0, 1), {config_.dim_small})};
}

namespace {

Tensor head_logits(const TaskHead& head, const Tensor& cls_task, const Tensor& cls_l) {
    Tensor projected = head.proj.forward(reshape(cls_task, {1, cls_task.numel()}));
    Tensor fused = concat({projected, reshape(cls_l, {1, cls_l.numel()})}, 1);
    Tensor logits = head.linear.forward(fused);
    return reshape(logits, {logits.dim(1)});
}

}  // namespace

Tensor CrossTaskModel::forward_shared(const Tensor& image) const {
    Phase1Output p1 = phase1_forward(image);
    return head_logits(head_shared_, p1.cls_s, p1.cls_l);
}

Predictions CrossTaskModel::predict(const Tensor& image) const {
    Phase1Output p1 = phase1_forward(image);
    Tensor cls_e = p1.cls_s;
    Tensor cls_m = p1.cls_s;
    if (config_.phase2_enabled) {
        auto p2 = phase2_forward(p1);
        cls_e = p2.first;
        cls_m = p2.second;
    }
    Predictions pred;
    pred.expr_logits = head_logits(head_expr_, cls_e, p1.cls_l);
    pred.mask_logits = head_logits(head_mask_, cls_m, p1.cls_l);
    pred.shared_logits = head_logits(head_shared_, p1.cls_s, p1.cls_l);
    return pred;
}

namespace {

bool has_prefix(const std::string& name, const std::string& prefix) {
    return name.rfind(prefix, 0) == 0;
}

}  // namespace

std::vector<Parameter> CrossTaskModel::phase1_parameters() const {
    std::vector<Parameter> out;
    for (const Parameter& p : params_->all())
        if (has_prefix(p.name, "phase1.") || has_prefix(p.name, "heads.shared."))
            out.push_back(p);
    return out;
}

std::vector<Parameter> CrossTaskModel::phase2_parameters() const {
    std::vector<Parameter> out;
    for (const Parameter& p : params_->all())
        if (has_prefix(p.name, "phase2.") || has_prefix(p.name, "heads.expr.") ||
            has_prefix(p.name, "heads.mask."))
            out.push_back(p);
    return out;
}

}  // namespace ctvit
