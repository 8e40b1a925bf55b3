#include "ctvit/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace ctvit {

uint32_t crc32(const uint8_t* data, size_t n) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t crc = 0xffffffffu;
    for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

namespace {

struct Sha256 {
    uint32_t h[8] = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                     0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
    uint8_t block[64];
    size_t block_len = 0;
    uint64_t total = 0;

    static uint32_t rotr(uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

    void process() {
        static const uint32_t k[64] = {
            0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1,
            0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3,
            0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
            0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
            0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
            0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
            0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
            0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
            0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
            0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
            0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};
        uint32_t w[64];
        for (int i = 0; i < 16; ++i)
            w[i] = (uint32_t(block[i * 4]) << 24) | (uint32_t(block[i * 4 + 1]) << 16) |
                   (uint32_t(block[i * 4 + 2]) << 8) | uint32_t(block[i * 4 + 3]);
        for (int i = 16; i < 64; ++i) {
            const uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            const uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        uint32_t a = h[0], b = h[1], c = h[2], d = h[3];
        uint32_t e = h[4], f = h[5], g = h[6], hh = h[7];
        for (int i = 0; i < 64; ++i) {
            const uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            const uint32_t ch = (e & f) ^ (~e & g);
            const uint32_t t1 = hh + s1 + ch + k[i] + w[i];
            const uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            const uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            const uint32_t t2 = s0 + maj;
            hh = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        h[0] += a;
        h[1] += b;
        h[2] += c;
        h[3] += d;
        h[4] += e;
        h[5] += f;
        h[6] += g;
        h[7] += hh;
    }

    void update(const uint8_t* data, size_t n) {
        total += n;
        while (n > 0) {
            const size_t take = std::min(n, sizeof(block) - block_len);
            std::memcpy(block + block_len, data, take);
            block_len += take;
            data += take;
            n -= take;
            if (block_len == 64) {
                process();
                block_len = 0;
            }
        }
    }

    std::string hex_digest() {
        const uint64_t bits = total * 8;
        uint8_t pad = 0x80;
        update(&pad, 1);
        const uint8_t zero = 0;
        while (block_len != 56) update(&zero, 1);
        uint8_t len[8];
        for (int i = 0; i < 8; ++i) len[i] = uint8_t(bits >> (56 - 8 * i));
        update(len, 8);
        static const char* digits = "0123456789abcdef";
        std::string out;
        out.reserve(64);
        for (uint32_t word : h)
            for (int i = 3; i >= 0; --i) {
                const uint8_t byte = uint8_t(word >> (8 * i));
                out.push_back(digits[byte >> 4]);
                out.push_back(digits[byte & 0xf]);
            }
        return out;
    }
};

void put_u16le(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

void put_u32le(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint16_t get_u16le(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t get_u32le(const uint8_t* p) {
    return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
           (uint32_t(p[3]) << 24);
}

constexpr uint16_t kVersion = 1;
constexpr char kMagic[] = "CTVTCKPT";

}  // namespace

std::string sha256_hex(const uint8_t* data, size_t n) {
    Sha256 s;
    s.update(data, n);
    return s.hex_digest();
}

std::string sha256_hex(const std::string& bytes) {
    return sha256_hex(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size());
}

std::string serialize_checkpoint(const std::vector<Parameter>& params) {
    std::string buf(kMagic, 8);
    put_u16le(buf, kVersion);
    put_u32le(buf, static_cast<uint32_t>(params.size()));
    for (const Parameter& p : params) {
        put_u16le(buf, static_cast<uint16_t>(p.name.size()));
        buf += p.name;
        buf.push_back(0);  // dtype f32
        put_u32le(buf, static_cast<uint32_t>(p.tensor.rank()));
        for (int64_t d : p.tensor.shape()) put_u32le(buf, static_cast<uint32_t>(d));
        for (double v : p.tensor.data()) {
            const float f = static_cast<float>(v);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32le(buf, bits);
        }
    }
    put_u32le(buf, crc32(reinterpret_cast<const uint8_t*>(buf.data()), buf.size()));
    return buf;
}

void save_checkpoint(const std::string& path, const ParamStore& store) {
    const std::string buf = serialize_checkpoint(store.all());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(buf.data(), buf.size());
    if (!out) throw DataError("short write on checkpoint: " + path);
}

void load_checkpoint(const std::string& path, ParamStore& store) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
    if (buf.size() < 18 || std::memcmp(buf.data(), kMagic, 8) != 0)
        throw ConfigError(path + ": not a checkpoint file");
    if (get_u16le(buf.data() + 8) != kVersion)
        throw ConfigError(path + ": unsupported checkpoint version");
    const uint32_t stored_crc = get_u32le(buf.data() + buf.size() - 4);
    if (crc32(buf.data(), buf.size() - 4) != stored_crc)
        throw ConfigError(path + ": checkpoint CRC mismatch (corrupted file)");

    const uint32_t count = get_u32le(buf.data() + 10);
    if (count != store.all().size())
        throw ConfigError(path + ": checkpoint has " + std::to_string(count) +
                          " parameters, model expects " +
                          std::to_string(store.all().size()));
    size_t off = 14;
    auto need = [&](size_t n) {
        if (off + n > buf.size() - 4)
            throw ConfigError(path + ": truncated checkpoint");
    };
    for (uint32_t i = 0; i < count; ++i) {
        need(2);
        const uint16_t name_len = get_u16le(buf.data() + off);
        off += 2;
        need(name_len);
        const std::string name(reinterpret_cast<const char*>(buf.data() + off), name_len);
        off += name_len;
        need(1);
        const uint8_t dtype = buf[off++];
        if (dtype != 0)
            throw ConfigError(path + ": unsupported dtype for parameter " + name);
        need(4);
        const uint32_t rank = get_u32le(buf.data() + off);
        off += 4;
        Shape shape;
        int64_t numel = 1;
        for (uint32_t r = 0; r < rank; ++r) {
            need(4);
            shape.push_back(get_u32le(buf.data() + off));
            off += 4;
            numel *= shape.back();
        }
        if (!store.contains(name))
            throw ConfigError(path + ": checkpoint/config mismatch at parameter " + name);
        Tensor target = store.at(name).tensor;
        if (target.shape() != shape)
            throw ConfigError(path + ": shape mismatch at parameter " + name + ": " +
                              shape_str(shape) + " vs model " +
                              shape_str(target.shape()));
        need(4 * static_cast<size_t>(numel));
        auto& values = target.mutable_data();
        for (int64_t j = 0; j < numel; ++j) {
            const uint32_t bits = get_u32le(buf.data() + off);
            off += 4;
            float f;
            std::memcpy(&f, &bits, 4);
            values[j] = static_cast<double>(f);
        }
    }
    if (off != buf.size() - 4)
        throw ConfigError(path + ": trailing bytes in checkpoint");
}

std::string params_sha256(const std::vector<Parameter>& params) {
    return sha256_hex(serialize_checkpoint(params));
}

std::string file_sha256(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open for hashing: " + path);
    Sha256 s;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        s.update(reinterpret_cast<const uint8_t*>(buf), static_cast<size_t>(in.gcount()));
        if (!in) break;
    }
    return s.hex_digest();
}

}  // namespace ctvit
