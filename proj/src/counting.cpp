#include "ctvit/counting.hpp"

namespace ctvit {

int64_t ModelCost::total_params() const {
    int64_t n = 0;
    for (const CountRow& r : rows) n += r.params;
    return n;
}

int64_t ModelCost::total_flops() const {
    int64_t n = 0;
    for (const CountRow& r : rows) n += r.flops;
    return n;
}

namespace {

struct Cost {
    int64_t params = 0;
    int64_t flops = 0;
    Cost& operator+=(const Cost& o) {
        params += o.params;
        flops += o.flops;
        return *this;
    }
};

Cost linear(int64_t in, int64_t out, int64_t tokens) {
    return {in * out + out, tokens * in * out};
}

Cost layer_norm_cost(int64_t d) { return {2 * d, 0}; }

// Self-attention inside an encoder block: n queries over n keys.
Cost self_attention(int64_t d, int64_t n) {
    Cost c;
    c += linear(d, d, n);  // wq
    c += linear(d, d, n);  // wk
    c += linear(d, d, n);  // wv
    c += linear(d, d, n);  // wo
    c.flops += 2 * n * n * d;  // QK^T and alpha V, summed over heads
    return c;
}

Cost encoder_block(int64_t d, int64_t ratio, int64_t n) {
    Cost c;
    c += layer_norm_cost(d);
    c += self_attention(d, n);
    c += layer_norm_cost(d);
    c += linear(d, ratio * d, n);
    c += linear(ratio * d, d, n);
    return c;
}

// One fusion direction: single CLS query over [cls || other-branch patches].
Cost fusion_direction(int64_t dim_own, int64_t dim_other, int64_t n_other_patches,
                      FusionVariant variant) {
    const int64_t n = 1 + n_other_patches;
    Cost c;
    if (dim_own != dim_other) {
        c += linear(dim_own, dim_other, 1);  // fwd projection of the CLS
        c += linear(dim_other, dim_own, 1);  // back projection of the update
    }
    c += layer_norm_cost(dim_other);
    if (variant == FusionVariant::DotProduct) {
        c += linear(dim_other, dim_other, 1);  // wq (single query)
        c += linear(dim_other, dim_other, n);  // wk
        c += linear(dim_other, dim_other, n);  // wv
        c.flops += 2 * n * dim_other;          // QK^T and alpha V
        c += linear(dim_other, dim_other, 1);  // wo
    } else {
        c.params += 2 * dim_other * dim_other + dim_other;  // W_a, v_a
        c.flops += n * 2 * dim_other * dim_other;           // W_a per pair
        c.flops += n * dim_other;                           // v_a scores
        c.flops += n * dim_other;                           // weighted value sum
        c += linear(dim_other, dim_other, 1);               // output projection
    }
    return c;
}

Cost tower(int64_t patch, int64_t dim, int64_t n_patches) {
    Cost c = linear(patch * patch * 3, dim, n_patches);  // patch embedding
    c.params += dim;                    // CLS
    c.params += (1 + n_patches) * dim;  // positional table
    return c;
}

Cost task_head(int64_t dim_small, int64_t dim_large, int64_t classes) {
    Cost c = linear(dim_small, dim_large, 1);
    c += linear(2 * dim_large, classes, 1);
    return c;
}

}  // namespace

ModelCost count_model(const ModelConfig& config) {
    config.validate();
    const ModelConfig& c = config;
    const int64_t nl = c.tokens_large() - 1;  // patch counts
    const int64_t ns = c.tokens_small() - 1;
    const int64_t tl = c.tokens_large();  // token counts incl. CLS
    const int64_t ts = c.tokens_small();

    ModelCost out;
    auto push = [&](const std::string& name, Cost cost) {
        out.rows.push_back({name, cost.params, cost.flops});
    };

    if (c.arch == Arch::Vit) {
        push("embeddings", tower(c.patch_large, c.dim_large, nl));
        Cost blocks;
        for (int64_t i = 0; i < c.fusion_iters_phase1 * c.depth_large; ++i)
            blocks += encoder_block(c.dim_large, c.mlp_ratio, tl);
        push("encoder", blocks);
        push("heads", linear(c.dim_large, c.num_classes, 1));
        return out;
    }

    Cost embeds = tower(c.patch_large, c.dim_large, nl);
    embeds += tower(c.patch_small, c.dim_small, ns);
    push("embeddings", embeds);

    Cost lblocks, sblocks, fusion1;
    for (int64_t i = 0; i < c.fusion_iters_phase1; ++i) {
        for (int64_t j = 0; j < c.depth_large; ++j)
            lblocks += encoder_block(c.dim_large, c.mlp_ratio, tl);
        for (int64_t j = 0; j < c.depth_small; ++j)
            sblocks += encoder_block(c.dim_small, c.mlp_ratio, ts);
        fusion1 += fusion_direction(c.dim_large, c.dim_small, ns,
                                    FusionVariant::DotProduct);
        fusion1 += fusion_direction(c.dim_small, c.dim_large, nl,
                                    FusionVariant::DotProduct);
    }
    push("phase1.lbranch", lblocks);
    push("phase1.sbranch", sblocks);
    push("phase1.fusion", fusion1);

    if (c.arch == Arch::CrossVit) {
        Cost heads = linear(c.dim_large, c.num_classes, 1);
        heads += linear(c.dim_small, c.num_classes, 1);
        push("heads", heads);
        return out;
    }

    if (c.phase2_enabled) {
        Cost p2blocks, fusion2;
        for (int64_t i = 0; i < c.fusion_iters_phase2; ++i) {
            for (int64_t j = 0; j < c.depth_expr; ++j)
                p2blocks += encoder_block(c.dim_small, c.mlp_ratio, ts);
            for (int64_t j = 0; j < c.depth_mask; ++j)
                p2blocks += encoder_block(c.dim_small, c.mlp_ratio, ts);
            const FusionVariant variant = i == c.fusion_iters_phase2 - 1
                                              ? c.fusion_variant_last
                                              : FusionVariant::DotProduct;
            fusion2 += fusion_direction(c.dim_small, c.dim_small, ns, variant);
            fusion2 += fusion_direction(c.dim_small, c.dim_small, ns, variant);
        }
        push("phase2.branches", p2blocks);
        push("phase2.fusion", fusion2);
    }

    Cost heads = task_head(c.dim_small, c.dim_large, c.num_expr_classes);
    heads += task_head(c.dim_small, c.dim_large, c.num_mask_classes);
    heads += task_head(c.dim_small, c.dim_large, c.num_expr_classes);
    push("heads", heads);
    return out;
}

}  // namespace ctvit
