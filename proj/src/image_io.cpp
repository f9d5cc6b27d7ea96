#include "lcn4/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "lcn4/errors.hpp"

namespace lcn4::image {

namespace {

using File = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;

File open_file(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode), &std::fclose);
  if (!f) throw IngestionError("cannot open image " + path.string());
  return f;
}

Image from_interleaved(std::size_t width, std::size_t height, std::size_t channels,
                       const std::uint8_t* data, double max_value) {
  Image img;
  img.width = width;
  img.height = height;
  img.pixels.resize(3 * width * height);
  const std::size_t plane = width * height;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = channels == 1 ? 0 : c;
      img.pixels[c * plane + i] = data[i * channels + src] / max_value;
    }
  }
  return img;
}

Image load_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw IngestionError("unreadable PNG " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw IngestionError("unreadable PNG " + path.string() + ": " + msg);
  }
  return from_interleaved(png.width, png.height, 3, buffer.data(), 255.0);
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

Image load_jpeg(const std::filesystem::path& path) {
  File f = open_file(path, "rb");
  jpeg_decompress_struct info{};
  JpegError err{};
  info.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = [](j_common_ptr cinfo) {
    std::longjmp(reinterpret_cast<JpegError*>(cinfo->err)->jump, 1);
  };
  // No objects with destructors are created between setjmp and the reads.
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&info);
    throw IngestionError("unreadable JPEG " + path.string());
  }
  jpeg_create_decompress(&info);
  jpeg_stdio_src(&info, f.get());
  jpeg_read_header(&info, TRUE);
  info.out_color_space = JCS_RGB;
  jpeg_start_decompress(&info);
  const std::size_t w = info.output_width, h = info.output_height;
  std::vector<std::uint8_t> buffer(w * h * 3);
  while (info.output_scanline < info.output_height) {
    JSAMPROW row = buffer.data() + static_cast<std::size_t>(info.output_scanline) * w * 3;
    jpeg_read_scanlines(&info, &row, 1);
  }
  jpeg_finish_decompress(&info);
  jpeg_destroy_decompress(&info);
  return from_interleaved(w, h, 3, buffer.data(), 255.0);
}

Image load_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  in >> magic;
  auto next_int = [&]() {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      in >> std::ws;
    }
    long v = -1;
    in >> v;
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (!in || w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw IngestionError("unsupported or malformed PNM " + path.string());
  }
  in.get();
  const std::size_t channels = magic == "P6" ? 3 : 1;
  std::vector<std::uint8_t> buffer(static_cast<std::size_t>(w * h) * channels);
  in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
  if (!in) throw IngestionError("truncated PNM " + path.string());
  return from_interleaved(static_cast<std::size_t>(w), static_cast<std::size_t>(h), channels,
                          buffer.data(), static_cast<double>(maxval));
}

}  // namespace

Image load(const std::filesystem::path& path) {
  unsigned char head[8] = {};
  {
    File f = open_file(path, "rb");
    if (std::fread(head, 1, sizeof head, f.get()) < 2) {
      throw IngestionError("unreadable image " + path.string());
    }
  }
  if (png_sig_cmp(head, 0, 8) == 0) return load_png(path);
  if (head[0] == 0xFF && head[1] == 0xD8) return load_jpeg(path);
  if (head[0] == 'P' && (head[1] == '5' || head[1] == '6')) return load_pnm(path);
  throw IngestionError("unrecognised image format " + path.string());
}

Image resize_bilinear(const Image& src, std::size_t width, std::size_t height) {
  if (src.width == width && src.height == height) return src;
  Image dst;
  dst.width = width;
  dst.height = height;
  dst.pixels.resize(3 * width * height);
  const double sx = static_cast<double>(src.width) / static_cast<double>(width);
  const double sy = static_cast<double>(src.height) / static_cast<double>(height);
  auto coord = [](double pos, std::size_t limit, std::size_t& lo, std::size_t& hi, double& t) {
    pos = std::clamp(pos, 0.0, static_cast<double>(limit - 1));
    lo = static_cast<std::size_t>(pos);
    hi = std::min(lo + 1, limit - 1);
    t = pos - static_cast<double>(lo);
  };
  const std::size_t src_plane = src.width * src.height, dst_plane = width * height;
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    double ty;
    coord((static_cast<double>(y) + 0.5) * sy - 0.5, src.height, y0, y1, ty);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      double tx;
      coord((static_cast<double>(x) + 0.5) * sx - 0.5, src.width, x0, x1, tx);
      for (std::size_t c = 0; c < 3; ++c) {
        const double* p = src.pixels.data() + c * src_plane;
        const double top = p[y0 * src.width + x0] * (1 - tx) + p[y0 * src.width + x1] * tx;
        const double bottom = p[y1 * src.width + x0] * (1 - tx) + p[y1 * src.width + x1] * tx;
        dst.pixels[c * dst_plane + y * width + x] = top * (1 - ty) + bottom * ty;
      }
    }
  }
  return dst;
}

void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& pixels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(width * height));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_pgm_scaled(const std::filesystem::path& path, std::size_t width, std::size_t height,
                      const double* values) {
  const std::size_t n = width * height;
  const auto [lo, hi] = std::minmax_element(values, values + n);
  const double range = *hi - *lo;
  std::vector<std::uint8_t> bytes(n, 0);
  if (range > 0) {
    for (std::size_t i = 0; i < n; ++i) {
      bytes[i] = static_cast<std::uint8_t>(std::lround(255.0 * (values[i] - *lo) / range));
    }
  }
  write_pgm(path, width, height, bytes);
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  const std::size_t plane = image.width * image.height;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(image.pixels[c * plane + i], 0.0, 1.0);
      out.put(static_cast<char>(std::lround(v * 255.0)));
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace lcn4::image
