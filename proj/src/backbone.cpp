#include "ctvit/backbone.hpp"

#include <algorithm>
#include <cmath>

namespace ctvit {

PatchEmbed make_patch_embed(ParamStore& store, const std::string& prefix,
                            int64_t patch_size, int64_t dim) {
    PatchEmbed pe;
    pe.patch_size = patch_size;
    pe.dim = dim;
    pe.proj = make_linear(store, prefix, patch_size * patch_size * 3, dim);
    return pe;
}

TokenSequence tokenize(const Tensor& image, const PatchEmbed& embed,
                       const Tensor& pos, const Tensor& cls) {
    if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != image.dim(2))
        throw ShapeError("tokenize expects a (3, S, S) image, got " +
                         shape_str(image.shape()));
    const int64_t side = image.dim(1);
    const int64_t p = embed.patch_size;
    if (side % p != 0)
        throw ConfigError("image side " + std::to_string(side) +
                          " not divisible by patch size " + std::to_string(p));
    const int64_t grid = side / p;
    const int64_t n = grid * grid;
    if (pos.dim(0) != n + 1 || pos.dim(1) != embed.dim)
        throw ShapeError("positional table " + shape_str(pos.shape()) +
                         " does not match " + std::to_string(n + 1) + " tokens");

    // Raster-order patches, channel-major flattening inside each patch.
    std::vector<double> patches(n * p * p * 3);
    const double* img = image.data().data();
    int64_t row = 0;
    for (int64_t gi = 0; gi < grid; ++gi) {
        for (int64_t gj = 0; gj < grid; ++gj, ++row) {
            double* dst = patches.data() + row * p * p * 3;
            int64_t idx = 0;
            for (int64_t c = 0; c < 3; ++c)
                for (int64_t y = 0; y < p; ++y)
                    for (int64_t x = 0; x < p; ++x)
                        dst[idx++] = img[(c * side + gi * p + y) * side + gj * p + x];
        }
    }
    Tensor patch_matrix = Tensor::from_data({n, p * p * 3}, std::move(patches));
    Tensor embedded = embed.proj.forward(patch_matrix);
    TokenSequence seq;
    seq.tokens = add(concat({cls, embedded}, 0), pos);
    seq.grid_rows = grid;
    seq.grid_cols = grid;
    return seq;
}

EncoderBlock make_encoder_block(ParamStore& store, const std::string& prefix,
                                int64_t dim, int64_t num_heads, int64_t mlp_ratio) {
    EncoderBlock block;
    block.ln1 = make_layer_norm(store, prefix + ".ln1", dim);
    block.attn = make_multi_head_attention(store, prefix + ".attn", dim, num_heads);
    block.ln2 = make_layer_norm(store, prefix + ".ln2", dim);
    block.mlp.fc1 = make_linear(store, prefix + ".mlp.fc1", dim, dim * mlp_ratio);
    block.mlp.fc2 = make_linear(store, prefix + ".mlp.fc2", dim * mlp_ratio, dim);
    return block;
}

TokenSequence EncoderBlock::forward(const TokenSequence& seq) const {
    if (seq.width() != attn.dim)
        throw ShapeError("encoder block width " + std::to_string(attn.dim) +
                         " does not match sequence width " +
                         std::to_string(seq.width()));
    Tensor normed = ln1.forward(seq.tokens);
    Tensor x = add(seq.tokens, attn.forward(normed, normed, normed));
    Tensor y = add(x, mlp.fc2.forward(gelu(mlp.fc1.forward(ln2.forward(x)))));
    return {y, seq.grid_rows, seq.grid_cols};
}

TokenSequence branch_forward(const std::vector<EncoderBlock>& blocks,
                             const TokenSequence& seq) {
    TokenSequence cur = seq;
    for (const EncoderBlock& block : blocks) cur = block.forward(cur);
    return cur;
}

std::vector<double> bilinear_resize_chw(const std::vector<double>& src,
                                        int64_t channels, int64_t h, int64_t w,
                                        int64_t out_h, int64_t out_w) {
    if (h == out_h && w == out_w) return src;
    std::vector<double> dst(channels * out_h * out_w);
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (int64_t c = 0; c < channels; ++c) {
        const double* plane = src.data() + c * h * w;
        double* out = dst.data() + c * out_h * out_w;
        for (int64_t y = 0; y < out_h; ++y) {
            const double fy = (y + 0.5) * sy - 0.5;
            const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(fy)), 0, h - 1);
            const int64_t y1 = std::min<int64_t>(y0 + 1, h - 1);
            const double wy = std::clamp(fy - static_cast<double>(y0), 0.0, 1.0);
            for (int64_t x = 0; x < out_w; ++x) {
                const double fx = (x + 0.5) * sx - 0.5;
                const int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(fx)), 0, w - 1);
                const int64_t x1 = std::min<int64_t>(x0 + 1, w - 1);
                const double wx = std::clamp(fx - static_cast<double>(x0), 0.0, 1.0);
                const double top = plane[y0 * w + x0] * (1.0 - wx) + plane[y0 * w + x1] * wx;
                const double bot = plane[y1 * w + x0] * (1.0 - wx) + plane[y1 * w + x1] * wx;
                out[y * out_w + x] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return dst;
}

}  // namespace ctvit
