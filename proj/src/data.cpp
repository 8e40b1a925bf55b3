#include "ctvit/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctvit/backbone.hpp"
#include "ctvit/rng.hpp"

namespace fs = std::filesystem;

namespace ctvit {

namespace {

constexpr double kBackground = 0.1;
constexpr double kGlyph = 0.9;
constexpr double kBand = 0.95;
constexpr double kNoiseSigma = 0.1;

Tensor normalize_image(const std::vector<double>& chw, int64_t side,
                       const std::array<double, 3>& mean,
                       const std::array<double, 3>& std) {
    Tensor img = Tensor::zeros({3, side, side});
    auto& out = img.mutable_data();
    const int64_t plane = side * side;
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < plane; ++i)
            out[c * plane + i] = (chw[c * plane + i] - mean[c]) / std[c];
    return img;
}

}  // namespace

int64_t toy_expr_label(int64_t index) { return index % 7; }
int64_t toy_mask_label(int64_t index) { return (index / 7) % 2; }

std::vector<double> toy_raw_pixels(int64_t index, int64_t side, uint64_t seed) {
    if (side < 16) throw DataError("toy images need side >= 16");
    const int64_t s = side;
    const int64_t expr = toy_expr_label(index);
    const int64_t mask = toy_mask_label(index);

    // glyph box [s/8, 11s/16); band rows [9s/16, 13s/16) overlap its bottom
    const int64_t g0 = s / 8, g1 = 11 * s / 16;
    const int64_t b0 = 9 * s / 16, b1 = 13 * s / 16;
    const int64_t c0 = s / 8, c1 = 7 * s / 8;

    std::vector<double> gray(s * s, kBackground);
    auto put = [&](int64_t y, int64_t x) {
        if (y >= 0 && y < s && x >= 0 && x < s) gray[y * s + x] = kGlyph;
    };
    const int64_t gh = g1 - g0, gw = c1 - c0;
    const int64_t midy = g0 + gh / 2, midx = c0 + gw / 2;
    const int64_t thick = std::max<int64_t>(1, s / 16);
    switch (expr) {
        case 0:  // horizontal bar
            for (int64_t y = midy - thick; y < midy + thick; ++y)
                for (int64_t x = c0; x < c1; ++x) put(y, x);
            break;
        case 1:  // vertical bar
            for (int64_t y = g0; y < g1; ++y)
                for (int64_t x = midx - thick; x < midx + thick; ++x) put(y, x);
            break;
        case 2:  // main diagonal
            for (int64_t i = 0; i < gh; ++i)
                for (int64_t t = -thick; t <= thick; ++t)
                    put(g0 + i, c0 + i * gw / gh + t);
            break;
        case 3:  // anti-diagonal
            for (int64_t i = 0; i < gh; ++i)
                for (int64_t t = -thick; t <= thick; ++t)
                    put(g0 + i, c1 - 1 - i * gw / gh + t);
            break;
        case 4:  // cross
            for (int64_t y = midy - thick; y < midy + thick; ++y)
                for (int64_t x = c0; x < c1; ++x) put(y, x);
            for (int64_t y = g0; y < g1; ++y)
                for (int64_t x = midx - thick; x < midx + thick; ++x) put(y, x);
            break;
        case 5:  // box outline
            for (int64_t y = g0; y < g1; ++y)
                for (int64_t x = c0; x < c1; ++x)
                    if (y < g0 + thick || y >= g1 - thick || x < c0 + thick ||
                        x >= c1 - thick)
                        put(y, x);
            break;
        default:  // X
            for (int64_t i = 0; i < gh; ++i)
                for (int64_t t = -thick; t <= thick; ++t) {
                    put(g0 + i, c0 + i * gw / gh + t);
                    put(g0 + i, c1 - 1 - i * gw / gh + t);
                }
            break;
    }
    if (mask == 1) {
        for (int64_t y = b0; y < b1; ++y)
            for (int64_t x = 0; x < s; ++x) gray[y * s + x] = kBand;
    }

    Rng rng(seed, (rng_stream::kToyData << 32) | static_cast<uint64_t>(index));
    std::vector<double> chw(3 * s * s);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < s * s; ++i)
            chw[c * s * s + i] =
                std::clamp(gray[i] + kNoiseSigma * rng.normal(), 0.0, 1.0);
    return chw;
}

std::vector<LabeledSample> generate_toy_dataset(int64_t n, int64_t side,
                                                uint64_t seed,
                                                const std::array<double, 3>& mean,
                                                const std::array<double, 3>& std) {
    if (n < 7)
        throw DataError("toy dataset needs n >= 7 to balance the classes, got " +
                        std::to_string(n));
    std::vector<LabeledSample> out;
    out.reserve(n);
    for (int64_t i = 0; i < n; ++i) {
        out.push_back({normalize_image(toy_raw_pixels(i, side, seed), side, mean, std),
                       toy_expr_label(i), toy_mask_label(i)});
    }
    return out;
}

std::string write_toy_dataset(int64_t n, int64_t side, uint64_t seed,
                              const std::string& out_dir) {
    if (n < 7) throw DataError("toy dataset needs n >= 7 to balance the classes");
    fs::create_directories(out_dir);
    std::ostringstream manifest;
    for (int64_t i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "toy_%05lld.ppm",
                      static_cast<long long>(i));
        write_ppm((fs::path(out_dir) / name).string(), side, side,
                  toy_raw_pixels(i, side, seed));
        manifest << name << '\t' << toy_expr_label(i) << '\t' << toy_mask_label(i)
                 << '\n';
    }
    const std::string manifest_path = (fs::path(out_dir) / "manifest.tsv").string();
    std::ofstream mf(manifest_path, std::ios::binary);
    if (!mf) throw DataError("cannot write manifest: " + manifest_path);
    mf << manifest.str();
    return manifest_path;
}

// --- PPM ------------------------------------------------------------------------

void write_ppm(const std::string& path, int64_t w, int64_t h,
               const std::vector<double>& chw) {
    if (static_cast<int64_t>(chw.size()) != 3 * w * h)
        throw DataError("write_ppm: pixel buffer does not match " +
                        std::to_string(w) + "x" + std::to_string(h));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write ppm: " + path);
    out << "P6\n" << w << ' ' << h << "\n255\n";
    std::vector<unsigned char> row(3 * w);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c)
                row[x * 3 + c] = static_cast<unsigned char>(
                    std::lround(std::clamp(chw[(c * h + y) * w + x], 0.0, 1.0) * 255.0));
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
}

std::vector<double> read_ppm(const std::string& path, int64_t& w, int64_t& h) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw DataError(path + ": not a binary P6 ppm");
    auto next_int = [&](const char* what) {
        // skip whitespace and '#' comments
        for (;;) {
            int ch = in.peek();
            if (ch == '#') {
                std::string comment;
                std::getline(in, comment);
            } else if (std::isspace(ch)) {
                in.get();
            } else {
                break;
            }
        }
        int64_t v = -1;
        in >> v;
        if (!in || v < 0) throw DataError(path + ": bad ppm " + what);
        return v;
    };
    w = next_int("width");
    h = next_int("height");
    const int64_t maxval = next_int("maxval");
    if (maxval != 255) throw DataError(path + ": only 8-bit ppm supported");
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(3 * w * h);
    in.read(reinterpret_cast<char*>(raw.data()), raw.size());
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw DataError(path + ": truncated ppm payload");
    std::vector<double> chw(3 * w * h);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c)
                chw[(c * h + y) * w + x] = raw[(y * w + x) * 3 + c] / 255.0;
    return chw;
}

// --- raw tensor file --------------------------------------------------------------

namespace {

void put_u32le(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t get_u32le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void put_f32le(std::string& out, float f) {
    uint32_t bits;
    static_assert(sizeof(bits) == sizeof(f));
    std::memcpy(&bits, &f, sizeof(bits));
    put_u32le(out, bits);
}

float get_f32le(const unsigned char* p) {
    const uint32_t bits = get_u32le(p);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
}

}  // namespace

void write_raw_tensor(const std::string& path, const Shape& shape,
                      const std::vector<double>& values) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size()))
        throw DataError("write_raw_tensor: shape/payload mismatch");
    std::string buf = "CTVT";
    buf.push_back(1);  // version
    buf.push_back(0);  // dtype f32
    put_u32le(buf, static_cast<uint32_t>(shape.size()));
    for (int64_t d : shape) put_u32le(buf, static_cast<uint32_t>(d));
    for (double v : values) put_f32le(buf, static_cast<float>(v));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write raw tensor: " + path);
    out.write(buf.data(), buf.size());
}

std::vector<double> read_raw_tensor(const std::string& path, Shape& shape) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open raw tensor: " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 10 || std::memcmp(buf.data(), "CTVT", 4) != 0)
        throw DataError(path + ": not a raw tensor file");
    if (buf[4] != 1) throw DataError(path + ": unsupported raw tensor version");
    if (buf[5] != 0) throw DataError(path + ": unsupported dtype code");
    const uint32_t rank = get_u32le(buf.data() + 6);
    if (rank > 8) throw DataError(path + ": implausible tensor rank");
    size_t off = 10;
    shape.clear();
    int64_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
        if (off + 4 > buf.size()) throw DataError(path + ": truncated header");
        const uint32_t d = get_u32le(buf.data() + off);
        off += 4;
        shape.push_back(d);
        numel *= d;
    }
    if (off + 4 * static_cast<size_t>(numel) != buf.size())
        throw DataError(path + ": payload size does not match dims");
    std::vector<double> values(numel);
    for (int64_t i = 0; i < numel; ++i)
        values[i] = static_cast<double>(get_f32le(buf.data() + off + 4 * i));
    return values;
}

// --- manifest -----------------------------------------------------------------------

namespace {

// Returns (3, h, w) pixels scaled to [0,1].
std::vector<double> load_image_file(const std::string& path, int64_t& h, int64_t& w) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw DataError("cannot open image: " + path);
    char magic[4] = {0, 0, 0, 0};
    probe.read(magic, 4);
    probe.close();
    if (magic[0] == 'P' && magic[1] == '6') {
        return read_ppm(path, w, h);
    }
    if (std::memcmp(magic, "CTVT", 4) == 0) {
        Shape shape;
        std::vector<double> values = read_raw_tensor(path, shape);
        if (shape.size() == 2) {  // grayscale, replicate to 3 channels
            h = shape[0];
            w = shape[1];
            std::vector<double> chw(3 * h * w);
            for (int64_t c = 0; c < 3; ++c)
                std::copy(values.begin(), values.end(), chw.begin() + c * h * w);
            return chw;
        }
        if (shape.size() == 3 && shape[0] == 1) {
            h = shape[1];
            w = shape[2];
            std::vector<double> chw(3 * h * w);
            for (int64_t c = 0; c < 3; ++c)
                std::copy(values.begin(), values.end(), chw.begin() + c * h * w);
            return chw;
        }
        if (shape.size() == 3 && shape[0] == 3) {
            h = shape[1];
            w = shape[2];
            return values;
        }
        throw DataError(path + ": raw tensor must be (3,H,W), (1,H,W) or (H,W), got " +
                        shape_str(shape));
    }
    throw DataError(path + ": unrecognized image format (want P6 ppm or CTVT raw)");
}

}  // namespace

std::vector<LabeledSample> load_dataset(const std::string& manifest_path,
                                        int64_t side,
                                        const std::array<double, 3>& mean,
                                        const std::array<double, 3>& std,
                                        int64_t num_expr_classes,
                                        int64_t num_mask_classes) {
    std::ifstream in(manifest_path);
    if (!in) throw DataError("cannot open manifest: " + manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();

    std::vector<LabeledSample> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const size_t t1 = line.find('\t');
        const size_t t2 = t1 == std::string::npos ? std::string::npos
                                                  : line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw DataError(manifest_path + ":" + std::to_string(lineno) +
                            ": expected <path>\\t<expr>\\t<mask>");
        const std::string rel = line.substr(0, t1);
        int64_t expr = 0, mask = 0;
        try {
            expr = std::stoll(line.substr(t1 + 1, t2 - t1 - 1));
            mask = std::stoll(line.substr(t2 + 1));
        } catch (const std::exception&) {
            throw DataError(manifest_path + ":" + std::to_string(lineno) +
                            ": labels must be integers");
        }
        if (expr < 0 || expr >= num_expr_classes)
            throw DataError(manifest_path + ":" + std::to_string(lineno) +
                            ": expr label " + std::to_string(expr) + " out of range");
        if (mask < 0 || mask >= num_mask_classes)
            throw DataError(manifest_path + ":" + std::to_string(lineno) +
                            ": mask label " + std::to_string(mask) + " out of range");

        int64_t h = 0, w = 0;
        std::vector<double> chw = load_image_file((base / rel).string(), h, w);
        if (h != side || w != side) chw = bilinear_resize_chw(chw, 3, h, w, side, side);
        out.push_back({normalize_image(chw, side, mean, std), expr, mask});
    }
    return out;
}

}  // namespace ctvit
