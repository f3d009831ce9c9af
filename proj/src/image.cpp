#include "defurnish/image.hpp"

#include "defurnish/error.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <csetjmp>
#include <fstream>
#include <memory>

// jpeglib.h needs <cstdio> first.
#include <jpeglib.h>

namespace defurnish {

TextureImage::TextureImage(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

bool TextureImage::valid() const {
  return width > 0 && height > 0 && (channels == 1 || channels == 3 || channels == 4) &&
         pixels.size() == static_cast<std::size_t>(width) * height * channels;
}

std::array<std::uint8_t, 3> TextureImage::rgb(int x, int y) const {
  const std::uint8_t* p = texel(x, y);
  if (channels < 3) return {p[0], p[0], p[0]};
  return {p[0], p[1], p[2]};
}

void TextureImage::set_rgb(int x, int y, const std::array<std::uint8_t, 3>& c) {
  std::uint8_t* p = texel(x, y);
  if (channels < 3) {
    p[0] = static_cast<std::uint8_t>((c[0] + c[1] + c[2] + 1) / 3);
    return;
  }
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

std::array<double, 3> sample(const TextureImage& image, const Vec2& uv, Sampling mode) {
  // Texel (x, row) covers u in [x, x+1)/w and v in [h-row-1, h-row)/h.
  const double fx = uv.x() * image.width;
  const double fy = (1.0 - uv.y()) * image.height;
  if (mode == Sampling::Nearest) {
    const int x = std::clamp(static_cast<int>(std::floor(fx)), 0, image.width - 1);
    const int y = std::clamp(static_cast<int>(std::floor(fy)), 0, image.height - 1);
    const auto c = image.rgb(x, y);
    return {double(c[0]), double(c[1]), double(c[2])};
  }
  const double sx = fx - 0.5;
  const double sy = fy - 0.5;
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const double tx = sx - x0;
  const double ty = sy - y0;
  const int xa = std::clamp(x0, 0, image.width - 1);
  const int xb = std::clamp(x0 + 1, 0, image.width - 1);
  const int ya = std::clamp(y0, 0, image.height - 1);
  const int yb = std::clamp(y0 + 1, 0, image.height - 1);
  const auto c00 = image.rgb(xa, ya);
  const auto c10 = image.rgb(xb, ya);
  const auto c01 = image.rgb(xa, yb);
  const auto c11 = image.rgb(xb, yb);
  // Lerp form: equal neighbours reproduce their value exactly.
  std::array<double, 3> out{};
  for (int k = 0; k < 3; ++k) {
    const double top = c00[k] + tx * (double(c10[k]) - c00[k]);
    const double bottom = c01[k] + tx * (double(c11[k]) - c01[k]);
    out[k] = top + ty * (bottom - top);
  }
  return out;
}

namespace {

TextureImage read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw Error(ErrorKind::Parse, path.string() + ": " + img.message);
  }
  int channels = 3;
  if (img.format & PNG_FORMAT_FLAG_ALPHA) {
    img.format = PNG_FORMAT_RGBA;
    channels = 4;
  } else if (!(img.format & PNG_FORMAT_FLAG_COLOR)) {
    img.format = PNG_FORMAT_GRAY;
    channels = 1;
  } else {
    img.format = PNG_FORMAT_RGB;
  }
  TextureImage out(static_cast<int>(img.width), static_cast<int>(img.height), channels);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorKind::Parse, path.string() + ": " + img.message);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr info) {
  auto* err = reinterpret_cast<JpegErrorManager*>(info->err);
  (*info->err->format_message)(info, err->message);
  std::longjmp(err->jump, 1);
}

TextureImage read_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw Error(ErrorKind::FileNotFound, path.string());
  jpeg_decompress_struct info{};
  JpegErrorManager err{};
  info.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  TextureImage out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&info);
    throw Error(ErrorKind::Parse, path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&info);
  jpeg_stdio_src(&info, file.get());
  jpeg_read_header(&info, TRUE);
  info.out_color_space = JCS_RGB;
  jpeg_start_decompress(&info);
  out = TextureImage(static_cast<int>(info.output_width), static_cast<int>(info.output_height), 3);
  while (info.output_scanline < info.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(info.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&info, &row, 1);
  }
  jpeg_finish_decompress(&info);
  jpeg_destroy_decompress(&info);
  return out;
}

}  // namespace

TextureImage read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::FileNotFound, path.string());
  unsigned char magic[8] = {};
  in.read(reinterpret_cast<char*>(magic), 8);
  in.close();
  if (png_sig_cmp(magic, 0, 8) == 0) return read_png(path);
  if (magic[0] == 0xFF && magic[1] == 0xD8) return read_jpeg(path);
  throw Error(ErrorKind::Parse, path.string() + ": not a PNG or JPEG image");
}

void write_png(const TextureImage& image, const std::filesystem::path& path) {
  if (!image.valid()) throw Error(ErrorKind::InvalidArgument, "cannot write invalid image " + path.string());
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::Io, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::Io, "failed writing " + path.string());
  }
  png_init_io(png, file.get());
  // Level 3 keeps large atlases fast to write; output stays lossless.
  png_set_compression_level(png, 3);
  const int color_type = image.channels == 1   ? PNG_COLOR_TYPE_GRAY
                         : image.channels == 4 ? PNG_COLOR_TYPE_RGBA
                                               : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, image.texel(0, y));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace defurnish
