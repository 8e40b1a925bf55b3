#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctvit/params.hpp"

namespace ctvit {

// IEEE-polynomial CRC32 (the zlib one).
uint32_t crc32(const uint8_t* data, size_t n);

std::string sha256_hex(const uint8_t* data, size_t n);
std::string sha256_hex(const std::string& bytes);

// Binary checkpoint:
//   "CTVTCKPT" | u16-LE version | u32-LE param count |
//   per parameter: u16-LE name length, name, u8 dtype (0 = f32),
//                  u32-LE rank, u32-LE dims, f32-LE payload
//   | u32-LE CRC32 of all preceding bytes.
std::string serialize_checkpoint(const std::vector<Parameter>& params);
void save_checkpoint(const std::string& path, const ParamStore& store);

// Loads into an existing store; every name and shape must match. Bad magic,
// version, CRC or a parameter mismatch raise ConfigError naming the problem.
void load_checkpoint(const std::string& path, ParamStore& store);

// Content hash of a parameter subset in its serialized form; used for
// freeze/no-touch checks and run manifests.
std::string params_sha256(const std::vector<Parameter>& params);

std::string file_sha256(const std::string& path);

}  // namespace ctvit
