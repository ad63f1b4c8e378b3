#pragma once
#include <filesystem>
#include <string>
#include <string_view>

#include "mtfl/downstream.hpp"
#include "mtfl/network.hpp"

namespace mtfl {

// Writes to a sibling temporary file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

// Little-endian: u32 d, r, m, T; then f64 W row-major, b, heads row-major.
std::string encode_netparams(const NetParams& p);
NetParams decode_netparams(std::string_view bytes);
void write_netparams(const std::filesystem::path& path, const NetParams& p);
NetParams read_netparams(const std::filesystem::path& path);

// <stem>.bin: u32 m_bar, d, m_hat; f64 layer1_W, layer1_b, layer2_W, layer2_b (row-major).
// <stem>.json: variant, scales, shared-randomness id.
void write_stack(const std::filesystem::path& stem, const EmbeddingStack& stack);
EmbeddingStack read_stack(const std::filesystem::path& stem);

std::string sha256_hex(std::string_view bytes);

}  // namespace mtfl
