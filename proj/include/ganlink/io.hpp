#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ganlink/errors.hpp"

namespace ganlink {

// 8-bit interleaved RGB image, row-major.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels; // 3 * width * height bytes, RGB RGB ...
};

// Binary tensor file ("MMTE"):
//   magic "MMTE" | version u32 = 1 | dtype u8 (0 = f32) | ndim u32 |
//   dims u64 each | elements, little-endian f32, row-major.
struct MmteTensor {
    std::vector<std::size_t> shape;
    std::vector<float> values;
};

void write_mmte(const std::string& path, const std::vector<std::size_t>& shape,
                std::span<const float> values);
MmteTensor read_mmte(const std::string& path);

// Stream variants, for formats that embed MMTE payloads.
void write_mmte_stream(std::ostream& out, const std::vector<std::size_t>& shape,
                       std::span<const float> values);
MmteTensor read_mmte_stream(std::istream& in, const std::string& context);

// PPM (P6, maxval 255) image IO.
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

// Planar float image in [-1,1] (channel-major, 3*S*S) <-> 8-bit interleaved.
// Quantization: v -> round((v+1)*127.5) clamped to [0,255].
Image planar_to_image(std::span<const float> planar, std::size_t width, std::size_t height);
std::vector<float> image_to_planar(const Image& img);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

} // namespace ganlink
