#pragma once

#include <string>
#include <utility>

#include "ctvit/params.hpp"
#include "ctvit/tensor.hpp"

namespace ctvit {

// y = x W + b with W of shape (in, out).
struct LinearLayer {
    Tensor w;
    Tensor b;
    Tensor forward(const Tensor& x) const { return add(matmul(x, w), b); }
    int64_t in_dim() const { return w.dim(0); }
    int64_t out_dim() const { return w.dim(1); }
};

LinearLayer make_linear(ParamStore& store, const std::string& prefix,
                        int64_t in, int64_t out);

struct LayerNormLayer {
    Tensor gamma;
    Tensor beta;
    double eps = 1e-6;
    Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
};

LayerNormLayer make_layer_norm(ParamStore& store, const std::string& prefix,
                               int64_t dim);

// softmax(Q K^T / sqrt(d_k)) V
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

struct MultiHeadAttention {
    int64_t dim = 0;
    int64_t num_heads = 1;
    LinearLayer wq, wk, wv, wo;

    // Shapes: q_in (n_q, dim), k_in/v_in (n_k, dim) -> (n_q, dim).
    Tensor forward(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in) const;
};

MultiHeadAttention make_multi_head_attention(ParamStore& store,
                                             const std::string& prefix,
                                             int64_t dim, int64_t num_heads);

// Bahdanau-style attention: score_j = v_a . tanh(W_a [query; key_j]).
struct AdditiveAttention {
    Tensor w_a;  // (2 * query_dim, hidden)
    Tensor v_a;  // (hidden)
};

AdditiveAttention make_additive_attention(ParamStore& store,
                                          const std::string& prefix,
                                          int64_t dim, int64_t hidden);

// query {d} or (1, d); keys (n, d); values (n, d_v) -> {d_v}, a convex
// combination of the value rows.
Tensor additive_attention(const AdditiveAttention& att, const Tensor& query,
                          const Tensor& keys, const Tensor& values);

enum class FusionVariant { DotProduct, Additive };

// One half of a fusion block: updates the CLS of the owning branch (dim_own)
// by letting it attend over the other branch's patch tokens (dim_other).
struct FusionDirection {
    int64_t dim_own = 0;
    int64_t dim_other = 0;
    FusionVariant variant = FusionVariant::DotProduct;
    bool has_proj = false;  // present iff dim_own != dim_other
    LinearLayer fwd_proj;   // dim_own -> dim_other
    LinearLayer back_proj;  // dim_other -> dim_own
    LayerNormLayer pre_norm;
    MultiHeadAttention attn;      // dot-product variant
    AdditiveAttention add_attn;   // additive variant
    LinearLayer add_out;          // additive variant's output projection

    // seq_own/other are full token sequences with CLS at row 0. Returns the
    // new sequence for the owning branch; its patch rows are bit-identical
    // copies of the input's.
    Tensor apply(const Tensor& seq_own, const Tensor& seq_other) const;
};

FusionDirection make_fusion_direction(ParamStore& store, const std::string& prefix,
                                      int64_t dim_own, int64_t dim_other,
                                      int64_t heads, FusionVariant variant);

// Symmetric pair of directions between branch a and branch b.
struct CrossAttentionFusion {
    FusionDirection dir_a;
    FusionDirection dir_b;
};

CrossAttentionFusion make_cross_fusion(ParamStore& store, const std::string& prefix,
                                       const std::string& name_a,
                                       const std::string& name_b, int64_t dim_a,
                                       int64_t dim_b, int64_t heads_a,
                                       int64_t heads_b, FusionVariant variant);

std::pair<Tensor, Tensor> cross_attention_fuse(const CrossAttentionFusion& fusion,
                                               const Tensor& seq_a,
                                               const Tensor& seq_b);

}  // namespace ctvit
