#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

// LST1 tensor container: magic "LST1", u8 dtype (0 = f32, 1 = u8), u8 ndim,
// u16 reserved = 0, ndim x u32 little-endian extents, row-major
// little-endian payload.

namespace lsenet::io {

enum class Dtype : uint8_t { F32 = 0, U8 = 1 };

struct Lst1 {
  Dtype dtype;
  std::vector<int> shape;
  std::vector<float> f32;
  std::vector<uint8_t> u8;
};

void write_lst1(const std::filesystem::path& path, const std::vector<int>& shape,
                std::span<const float> data);
void write_lst1(const std::filesystem::path& path, const std::vector<int>& shape,
                std::span<const uint8_t> data);

/// Throws std::runtime_error naming the file on bad magic, truncation, or
/// shape/payload mismatch.
Lst1 read_lst1(const std::filesystem::path& path);

/// Writes via a temp file and rename so readers never observe partial files.
void atomic_write_text(const std::filesystem::path& path, const std::string& text);

std::string read_text(const std::filesystem::path& path);

}  // namespace lsenet::io
