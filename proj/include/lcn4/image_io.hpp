#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace lcn4::image {

// Planar RGB in [0, 1]: pixels[c * height * width + y * width + x].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;
};

// Decodes PNG, JPEG, binary PPM (P6) or PGM (P5) by content, not extension.
// Greyscale sources are replicated across the three channels.
Image load(const std::filesystem::path& path);

// Half-pixel-centred bilinear resampling of every channel.
Image resize_bilinear(const Image& src, std::size_t width, std::size_t height);

// Binary greyscale PGM (P5) from row-major bytes.
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& pixels);
// Min-max scales `values` to 0..255 (constant input maps to 0) and writes P5.
void write_pgm_scaled(const std::filesystem::path& path, std::size_t width, std::size_t height,
                      const double* values);
// Binary colour PPM (P6) from planar RGB in [0, 1].
void write_ppm(const std::filesystem::path& path, const Image& image);

}  // namespace lcn4::image
