#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ctvit/backbone.hpp"

namespace ctvit {

// vit:       single-branch classifier (reference for complexity accounting)
// crossvit:  dual-branch multi-scale phase 1 with per-branch classifiers
// crosstask: phase 1 plus the cross-task phase 2 and the three fused heads
enum class Arch { Vit, CrossVit, CrossTask };

Arch arch_from_string(const std::string& s);
std::string to_string(Arch arch);

FusionVariant fusion_variant_from_string(const std::string& s);
std::string to_string(FusionVariant v);

struct ModelConfig {
    Arch arch = Arch::CrossTask;
    int64_t image_side = 224;
    int64_t patch_large = 16;       // P_l
    int64_t patch_small = 12;       // P_s
    int64_t sbranch_input_side = 216;  // S-branch input after bilinear resize
    int64_t dim_large = 768;
    int64_t dim_small = 384;
    int64_t depth_large = 4;        // encoder blocks per fusion iteration, L-branch
    int64_t depth_small = 1;
    int64_t heads_large = 12;
    int64_t heads_small = 12;
    int64_t fusion_iters_phase1 = 3;  // L_1
    int64_t depth_expr = 2;           // blocks per iteration, E-branch
    int64_t depth_mask = 2;
    int64_t fusion_iters_phase2 = 2;  // L_2
    int64_t mlp_ratio = 4;
    int64_t num_expr_classes = 7;
    int64_t num_mask_classes = 2;
    int64_t num_classes = 1000;  // vit / crossvit reference heads
    FusionVariant fusion_variant_last = FusionVariant::Additive;
    bool phase2_enabled = true;
    uint64_t seed = 0;

    void validate() const;  // throws ConfigError

    int64_t tokens_large() const;  // 1 + grid^2, L branch
    int64_t tokens_small() const;
};

ModelConfig preset_vit_b16();
ModelConfig preset_crossvit_b();
ModelConfig preset_proposed();
ModelConfig preset_tiny();       // desk-scale trainable config (side 32)
ModelConfig preset_gradcheck();  // <= 50k parameters, for end-to-end checks
ModelConfig config_from_preset(const std::string& name);

struct Phase1Output {
    Tensor cls_l;      // {dim_large}
    Tensor cls_s;      // {dim_small}
    Tensor patches_l;  // (N_l, dim_large)
    Tensor patches_s;  // (N_s, dim_small)
    int64_t grid_s = 0;
};

struct Predictions {
    Tensor expr_logits;    // {num_expr_classes}
    Tensor mask_logits;    // {num_mask_classes}
    Tensor shared_logits;  // {num_expr_classes}
};

struct TaskHead {
    LinearLayer proj;    // dim_small -> dim_large
    LinearLayer linear;  // 2*dim_large -> classes
};

class CrossTaskModel {
public:
    explicit CrossTaskModel(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return *params_; }
    const ParamStore& params() const { return *params_; }

    // (3, image_side, image_side) normalized image.
    Phase1Output phase1_forward(const Tensor& image) const;
    std::pair<Tensor, Tensor> phase2_forward(const Phase1Output& p1) const;
    Predictions predict(const Tensor& image) const;

    // Shared-classifier logits only; stage-1 training never runs phase 2.
    Tensor forward_shared(const Tensor& image) const;

    // Trainable sets for the two-stage schedule.
    std::vector<Parameter> phase1_parameters() const;  // phase 1 + shared head
    std::vector<Parameter> phase2_parameters() const;  // phase 2 + task heads

    struct BranchTower {
        PatchEmbed embed;
        Tensor cls;
        Tensor pos;
    };

    // Read-only views of the pieces, for inspection and composition oracles.
    const std::vector<std::vector<EncoderBlock>>& phase1_blocks_l() const { return blocks_l_; }
    const std::vector<std::vector<EncoderBlock>>& phase1_blocks_s() const { return blocks_s_; }
    const std::vector<CrossAttentionFusion>& phase1_fusions() const { return fusion1_; }
    const std::vector<std::vector<EncoderBlock>>& phase2_blocks_e() const { return blocks_e_; }
    const std::vector<std::vector<EncoderBlock>>& phase2_blocks_m() const { return blocks_m_; }
    const std::vector<CrossAttentionFusion>& phase2_fusions() const { return fusion2_; }
    const BranchTower& tower_l() const { return tower_l_; }
    const BranchTower& tower_s() const { return tower_s_; }

private:

    BranchTower build_tower(const std::string& prefix, int64_t patch, int64_t dim,
                            int64_t side);
    TokenSequence run_tower(const BranchTower& tower, const Tensor& image,
                            int64_t side) const;

    ModelConfig config_;
    std::unique_ptr<ParamStore> params_;

    BranchTower tower_l_, tower_s_;
    std::vector<std::vector<EncoderBlock>> blocks_l_, blocks_s_;  // [L1][depth]
    std::vector<CrossAttentionFusion> fusion1_;                   // [L1]
    std::vector<std::vector<EncoderBlock>> blocks_e_, blocks_m_;  // [L2][depth]
    std::vector<CrossAttentionFusion> fusion2_;                   // [L2]
    TaskHead head_expr_, head_mask_, head_shared_;
    LinearLayer head_vit_, head_crossvit_l_, head_crossvit_s_;
};

}  // namespace ctvit
