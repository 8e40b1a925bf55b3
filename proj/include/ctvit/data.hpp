#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctvit/train.hpp"

namespace ctvit {

// --- toy two-task dataset ----------------------------------------------------
//
// Deterministic desk-scale stand-in for the real face corpora: seven glyph
// patterns drawn in the upper part of the frame encode the expression label,
// a high-contrast horizontal band across the lower part encodes mask wearing
// and occludes the glyph's lower rows. Labels are balanced round-robin over
// the 7 x 2 grid; gaussian pixel noise (sigma 0.1) on every channel.

// Raw [0,1] pixels (3, side, side) for sample `index`.
std::vector<double> toy_raw_pixels(int64_t index, int64_t side, uint64_t seed);

int64_t toy_expr_label(int64_t index);
int64_t toy_mask_label(int64_t index);

// In-memory normalized dataset; throws DataError when n < 7 (cannot balance).
std::vector<LabeledSample> generate_toy_dataset(int64_t n, int64_t side,
                                                uint64_t seed,
                                                const std::array<double, 3>& mean,
                                                const std::array<double, 3>& std);

// Writes toy_%05d.ppm files plus manifest.tsv under out_dir; returns the
// manifest path. Byte-deterministic for a fixed (n, side, seed).
std::string write_toy_dataset(int64_t n, int64_t side, uint64_t seed,
                              const std::string& out_dir);

// --- image and tensor files ----------------------------------------------------

// Binary 8-bit P6. Pixels are (3, h, w) planar in [0,1]; quantized on write,
// scaled back to [0,1] on read.
void write_ppm(const std::string& path, int64_t w, int64_t h,
               const std::vector<double>& chw);
std::vector<double> read_ppm(const std::string& path, int64_t& w, int64_t& h);

// Raw-tensor file: magic "CTVT", u8 version, u8 dtype (0 = f32),
// u32-LE rank, u32-LE dims, little-endian row-major payload.
void write_raw_tensor(const std::string& path, const Shape& shape,
                      const std::vector<double>& values);
std::vector<double> read_raw_tensor(const std::string& path, Shape& shape);

// --- manifest loading ----------------------------------------------------------
//
// One sample per line: <relative-image-path>\t<expr_label>\t<mask_label>.
// Images may be P6 PPM or raw tensors of shape (3,H,W), (1,H,W) or (H,W);
// grayscale sources are replicated to 3 channels. Pixels are scaled to [0,1],
// bilinearly resized to `side`, then normalized channelwise.
std::vector<LabeledSample> load_dataset(const std::string& manifest_path,
                                        int64_t side,
                                        const std::array<double, 3>& mean,
                                        const std::array<double, 3>& std,
                                        int64_t num_expr_classes,
                                        int64_t num_mask_classes);

}  // namespace ctvit
