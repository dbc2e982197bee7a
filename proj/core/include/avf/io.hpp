#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avf/tensor.hpp"

namespace avf {

/// On-disk array container: magic "AVF1", dtype tag, dims, then payload as
/// little-endian float32. In-memory values are double; converted on the way
/// through.
void save_array_f32(const std::filesystem::path& path, const Shape& shape,
                    const std::vector<double>& data);
void load_array_f32(const std::filesystem::path& path, Shape& shape,
                    std::vector<double>& data);

std::uint64_t fnv1a64(const void* data, std::size_t n,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t file_checksum(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace avf
