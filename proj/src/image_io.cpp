#include "damqa/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

// jpeglib.h expects size_t and FILE to be declared already.
#include <jpeglib.h>

#include "damqa/error.hpp"

namespace damqa {
namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InvalidImageError("cannot open image: " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_png(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

// RAII wrapper around libpng's simplified API.
class PngImage {
 public:
  PngImage() {
    image_.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image_); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;

  png_image* get() { return &image_; }
  std::string message() const { return image_.message; }

 private:
  png_image image_{};
};

std::vector<std::uint8_t> decode_png(std::span<const std::uint8_t> bytes, std::uint32_t format,
                                     int& width, int& height) {
  PngImage png;
  if (!png_image_begin_read_from_memory(png.get(), bytes.data(), bytes.size())) {
    throw InvalidImageError("PNG decode failed: " + png.message());
  }
  png.get()->format = format;
  width = static_cast<int>(png.get()->width);
  height = static_cast<int>(png.get()->height);
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(*png.get()));
  if (!png_image_finish_read(png.get(), nullptr, pixels.data(), 0, nullptr)) {
    throw InvalidImageError("PNG decode failed: " + png.message());
  }
  return pixels;
}

std::vector<std::uint8_t> encode(const std::uint8_t* pixels, int width, int height,
                                 std::uint32_t format) {
  PngImage png;
  png.get()->width = static_cast<png_uint_32>(width);
  png.get()->height = static_cast<png_uint_32>(height);
  png.get()->format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(png.get(), nullptr, &size, 0, pixels, 0, nullptr)) {
    throw InvalidImageError("PNG encode failed: " + png.message());
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(png.get(), out.data(), &size, 0, pixels, 0, nullptr)) {
    throw InvalidImageError("PNG encode failed: " + png.message());
  }
  out.resize(size);
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

ImageBuffer decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;

  // Declared before setjmp so a longjmp never skips a destructor.
  std::vector<std::uint8_t> pixels;
  int width = 0;
  int height = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw InvalidImageError(std::string("JPEG decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = static_cast<int>(cinfo.output_width);
  height = static_cast<int>(cinfo.output_height);
  pixels.resize(static_cast<std::size_t>(width) * height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return ImageBuffer(width, height, std::move(pixels));
}

}  // namespace

ImageBuffer decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) {
    int w = 0;
    int h = 0;
    auto pixels = decode_png(bytes, PNG_FORMAT_RGB, w, h);
    return ImageBuffer(w, h, std::move(pixels));
  }
  if (is_jpeg(bytes)) {
    return decode_jpeg(bytes);
  }
  throw InvalidImageError("unsupported image format (expected PNG or JPEG)");
}

ImageBuffer load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_image(bytes);
  } catch (const InvalidImageError& e) {
    throw InvalidImageError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  if (!img.valid()) {
    throw InvalidImageError("cannot encode an invalid image");
  }
  return encode(img.data.data(), img.width, img.height, PNG_FORMAT_RGB);
}

std::vector<std::uint8_t> encode_png(const MaskBuffer& mask) {
  if (mask.width < 1 || mask.height < 1 ||
      mask.data.size() != static_cast<std::size_t>(mask.width) * mask.height) {
    throw InvalidImageError("cannot encode an invalid mask");
  }
  return encode(mask.data.data(), mask.width, mask.height, PNG_FORMAT_GRAY);
}

MaskBuffer decode_mask_png(std::span<const std::uint8_t> bytes) {
  if (!is_png(bytes)) {
    throw InvalidImageError("mask is not a PNG");
  }
  MaskBuffer mask;
  mask.data = decode_png(bytes, PNG_FORMAT_GRAY, mask.width, mask.height);
  return mask;
}

void save_png(const std::filesystem::path& path, const ImageBuffer& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InvalidImageError("cannot write image: " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace damqa
