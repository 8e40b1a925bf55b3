#pragma once

#include <string>
#include <vector>

#include "ctvit/attention.hpp"

namespace ctvit {

// [CLS || patch tokens], CLS always at row 0.
struct TokenSequence {
    Tensor tokens;  // (1 + rows*cols, dim)
    int64_t grid_rows = 0;
    int64_t grid_cols = 0;

    int64_t length() const { return tokens.dim(0); }
    int64_t width() const { return tokens.dim(1); }
};

// Linear projection of flattened (channel-major) patches into the model width.
struct PatchEmbed {
    int64_t patch_size = 0;
    int64_t dim = 0;
    LinearLayer proj;  // (patch^2 * 3, dim)
};

PatchEmbed make_patch_embed(ParamStore& store, const std::string& prefix,
                            int64_t patch_size, int64_t dim);

// Cuts a (3, side, side) image into non-overlapping raster-order patches,
// embeds them, prepends the CLS token and adds the positional table
// (which includes the CLS slot).
TokenSequence tokenize(const Tensor& image, const PatchEmbed& embed,
                       const Tensor& pos, const Tensor& cls);

struct FeedForward {
    LinearLayer fc1;
    LinearLayer fc2;
};

// Pre-norm transformer encoder block:
//   x <- x + MHSA(LN(x));  x <- x + MLP(LN(x))
struct EncoderBlock {
    LayerNormLayer ln1;
    MultiHeadAttention attn;
    LayerNormLayer ln2;
    FeedForward mlp;

    TokenSequence forward(const TokenSequence& seq) const;
};

EncoderBlock make_encoder_block(ParamStore& store, const std::string& prefix,
                                int64_t dim, int64_t num_heads, int64_t mlp_ratio);

// Sequential application; an empty block list is the identity.
TokenSequence branch_forward(const std::vector<EncoderBlock>& blocks,
                             const TokenSequence& seq);

// Bilinear resample of a (3, h, w) raster to (3, out_side, out_side);
// the identity when sizes already match.
std::vector<double> bilinear_resize_chw(const std::vector<double>& src,
                                        int64_t channels, int64_t h, int64_t w,
                                        int64_t out_h, int64_t out_w);

}  // namespace ctvit
