#include "ctgen/core/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace ctgen {

namespace {

uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<uint8_t>(c * 255.0f + 0.5f);
}

void write_gray_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& pix, int64_t h, int64_t w) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw std::runtime_error("write_png: cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw std::runtime_error("write_png: libpng failure for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t r = 0; r < h; ++r)
    png_write_row(png, const_cast<png_bytep>(pix.data() + r * w));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace

void write_png_gray(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 2) throw std::invalid_argument("write_png_gray: expected [H,W] tensor");
  const int64_t h = image.dim(0), w = image.dim(1);
  std::vector<uint8_t> pix(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < h * w; ++i) pix[static_cast<size_t>(i)] = to_byte(image[i]);
  write_gray_bytes(path, pix, h, w);
}

void write_png_grid(const std::filesystem::path& path, const std::vector<Tensor>& images, int64_t cols) {
  if (images.empty()) throw std::invalid_argument("write_png_grid: no images");
  const int64_t th = images[0].dim(0), tw = images[0].dim(1);
  for (const Tensor& t : images)
    if (t.rank() != 2 || t.dim(0) != th || t.dim(1) != tw)
      throw std::invalid_argument("write_png_grid: images must share [H,W]");
  cols = std::max<int64_t>(1, std::min<int64_t>(cols, static_cast<int64_t>(images.size())));
  const int64_t rows = (static_cast<int64_t>(images.size()) + cols - 1) / cols;
  const int64_t sep = 2;
  const int64_t H = rows * th + (rows - 1) * sep;
  const int64_t W = cols * tw + (cols - 1) * sep;
  std::vector<uint8_t> pix(static_cast<size_t>(H * W), 255);
  for (size_t idx = 0; idx < images.size(); ++idx) {
    const int64_t r0 = (static_cast<int64_t>(idx) / cols) * (th + sep);
    const int64_t c0 = (static_cast<int64_t>(idx) % cols) * (tw + sep);
    for (int64_t r = 0; r < th; ++r)
      for (int64_t c = 0; c < tw; ++c)
        pix[static_cast<size_t>((r0 + r) * W + c0 + c)] = to_byte(images[idx][r * tw + c]);
  }
  write_gray_bytes(path, pix, H, W);
}

}  // namespace ctgen
