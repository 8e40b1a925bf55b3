#include "ctvit/attention.hpp"

#include <cmath>

namespace ctvit {

LinearLayer make_linear(ParamStore& store, const std::string& prefix,
                        int64_t in, int64_t out) {
    LinearLayer l;
    l.w = store.create(prefix + ".w", {in, out}, Init::TruncNormal);
    l.b = store.create(prefix + ".b", {out}, Init::Zero);
    return l;
}

LayerNormLayer make_layer_norm(ParamStore& store, const std::string& prefix,
                               int64_t dim) {
    LayerNormLayer ln;
    ln.gamma = store.create(prefix + ".gamma", {dim}, Init::One);
    ln.beta = store.create(prefix + ".beta", {dim}, Init::Zero);
    return ln;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
        throw ShapeError("scaled_dot_attention expects rank-2 inputs");
    if (q.dim(1) != k.dim(1))
        throw ShapeError("scaled_dot_attention: query/key width mismatch: " +
                         shape_str(q.shape()) + " vs " + shape_str(k.shape()));
    if (k.dim(0) != v.dim(0))
        throw ShapeError("scaled_dot_attention: key/value count mismatch: " +
                         shape_str(k.shape()) + " vs " + shape_str(v.shape()));
    const double dk = static_cast<double>(q.dim(1));
    Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(dk));
    return matmul(softmax(scores, 1), v);
}

MultiHeadAttention make_multi_head_attention(ParamStore& store,
                                             const std::string& prefix,
                                             int64_t dim, int64_t num_heads) {
    if (num_heads < 1 || dim % num_heads != 0)
        throw ConfigError("attention dim " + std::to_string(dim) +
                          " not divisible by num_heads " + std::to_string(num_heads));
    MultiHeadAttention mha;
    mha.dim = dim;
    mha.num_heads = num_heads;
    mha.wq = make_linear(store, prefix + ".wq", dim, dim);
    mha.wk = make_linear(store, prefix + ".wk", dim, dim);
    mha.wv = make_linear(store, prefix + ".wv", dim, dim);
    mha.wo = make_linear(store, prefix + ".wo", dim, dim);
    return mha;
}

Tensor MultiHeadAttention::forward(const Tensor& q_in, const Tensor& k_in,
                                   const Tensor& v_in) const {
    if (q_in.dim(-1) != dim || k_in.dim(-1) != dim || v_in.dim(-1) != dim)
        throw ShapeError("multi_head_attention: input width must be " +
                         std::to_string(dim));
    Tensor q = wq.forward(q_in);
    Tensor k = wk.forward(k_in);
    Tensor v = wv.forward(v_in);
    const int64_t hd = dim / num_heads;
    std::vector<Tensor> heads;
    heads.reserve(num_heads);
    for (int64_t h = 0; h < num_heads; ++h) {
        Tensor qh = slice(q, 1, h * hd, (h + 1) * hd);
        Tensor kh = slice(k, 1, h * hd, (h + 1) * hd);
        Tensor vh = slice(v, 1, h * hd, (h + 1) * hd);
        heads.push_back(scaled_dot_attention(qh, kh, vh));
    }
    Tensor cat = num_heads == 1 ? heads[0] : concat(heads, 1);
    return wo.forward(cat);
}

AdditiveAttention make_additive_attention(ParamStore& store,
                                          const std::string& prefix,
                                          int64_t dim, int64_t hidden) {
    AdditiveAttention att;
    att.w_a = store.create(prefix + ".wa", {2 * dim, hidden}, Init::TruncNormal);
    att.v_a = store.create(prefix + ".va", {hidden}, Init::TruncNormal);
    return att;
}

Tensor additive_attention(const AdditiveAttention& att, const Tensor& query,
                          const Tensor& keys, const Tensor& values) {
    const int64_t d = keys.dim(1);
    const int64_t hidden = att.v_a.dim(0);
    if (query.numel() != d)
        throw ShapeError("additive_attention: query " + shape_str(query.shape()) +
                         " does not match key width " + std::to_string(d));
    if (keys.dim(0) != values.dim(0))
        throw ShapeError("additive_attention: keys " + shape_str(keys.shape()) +
                         " and values " + shape_str(values.shape()) +
                         " disagree on n");
    // W_a [h; s_j] splits into a query block and a key block.
    Tensor w_q = slice(att.w_a, 0, 0, d);
    Tensor w_k = slice(att.w_a, 0, d, 2 * d);
    Tensor q_row = reshape(query, {1, d});
    Tensor q_part = reshape(matmul(q_row, w_q), {hidden});
    Tensor pre = tanh(add(matmul(keys, w_k), q_part));
    Tensor scores = matmul(pre, reshape(att.v_a, {hidden, 1}));  // (n, 1)
    Tensor weights = softmax(scores, 0);
    return reshape(matmul(transpose(weights), values), {values.dim(1)});
}

FusionDirection make_fusion_direction(ParamStore& store, const std::string& prefix,
                                      int64_t dim_own, int64_t dim_other,
                                      int64_t heads, FusionVariant variant) {
    FusionDirection dir;
    dir.dim_own = dim_own;
    dir.dim_other = dim_other;
    dir.variant = variant;
    dir.has_proj = dim_own != dim_other;
    if (dir.has_proj) {
        dir.fwd_proj = make_linear(store, prefix + ".fwd", dim_own, dim_other);
        dir.back_proj = make_linear(store, prefix + ".back", dim_other, dim_own);
    }
    dir.pre_norm = make_layer_norm(store, prefix + ".norm", dim_other);
    if (variant == FusionVariant::DotProduct) {
        dir.attn = make_multi_head_attention(store, prefix + ".attn", dim_other, heads);
    } else {
        dir.add_attn = make_additive_attention(store, prefix + ".attn", dim_other,
                                               dim_other);
        dir.add_out = make_linear(store, prefix + ".attn.out", dim_other, dim_other);
    }
    return dir;
}

Tensor FusionDirection::apply(const Tensor& seq_own, const Tensor& seq_other) const {
    if (seq_own.dim(0) < 2 || seq_other.dim(0) < 2)
        throw ContractError("cross_attention_fuse: sequences must hold a CLS plus "
                            "at least one patch token");
    Tensor cls = slice(seq_own, 0, 0, 1);
    Tensor own_patches = slice(seq_own, 0, 1, seq_own.dim(0));
    Tensor other_patches = slice(seq_other, 0, 1, seq_other.dim(0));

    Tensor proj_cls = has_proj ? fwd_proj.forward(cls) : cls;
    Tensor fused = concat({proj_cls, other_patches}, 0);
    Tensor normed = pre_norm.forward(fused);

    Tensor attended;
    if (variant == FusionVariant::DotProduct) {
        attended = attn.forward(slice(normed, 0, 0, 1), normed, normed);
    } else {
        Tensor pooled = additive_attention(add_attn, slice(normed, 0, 0, 1),
                                           normed, normed);
        attended = add_out.forward(reshape(pooled, {1, dim_other}));
    }
    Tensor update = has_proj ? back_proj.forward(attended) : attended;
    return concat({add(cls, update), own_patches}, 0);
}

CrossAttentionFusion make_cross_fusion(ParamStore& store, const std::string& prefix,
                                       const std::string& name_a,
                                       const std::string& name_b, int64_t dim_a,
                                       int64_t dim_b, int64_t heads_a,
                                       int64_t heads_b, FusionVariant variant) {
    CrossAttentionFusion fusion;
    fusion.dir_a = make_fusion_direction(store, prefix + "." + name_a, dim_a, dim_b,
                                         heads_a, variant);
    fusion.dir_b = make_fusion_direction(store, prefix + "." + name_b, dim_b, dim_a,
                                         heads_b, variant);
    return fusion;
}

std::pair<Tensor, Tensor> cross_attention_fuse(const CrossAttentionFusion& fusion,
                                               const Tensor& seq_a,
                                               const Tensor& seq_b) {
    Tensor out_a = fusion.dir_a.apply(seq_a, seq_b);
    Tensor out_b = fusion.dir_b.apply(seq_b, seq_a);
    return {out_a, out_b};
}

}  // namespace ctvit
