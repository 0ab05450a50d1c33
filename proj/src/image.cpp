#include "qglut/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "qglut/error.hpp"

namespace qglut {

std::string_view to_string(ColorSpace cs) noexcept {
  switch (cs) {
    case ColorSpace::Srgb: return "SRGB";
    case ColorSpace::LabNormalized: return "LAB_NORMALIZED";
  }
  return "UNKNOWN";
}

ImageBuffer::ImageBuffer(int width, int height, ColorSpace cs)
    : width_(width), height_(height), colorspace_(cs) {
  if (width <= 0 || height <= 0) {
    fail(ErrorCode::InvalidImage, "image dimensions must be positive");
  }
  data_.assign(pixel_count() * 3, 0.0f);
}

ImageBuffer::ImageBuffer(int width, int height, std::vector<float> data,
                         ColorSpace cs)
    : width_(width), height_(height), colorspace_(cs), data_(std::move(data)) {
  validate();
}

ImageBuffer ImageBuffer::filled(int width, int height, float r, float g,
                                float b) {
  ImageBuffer img(width, height);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    img.data_[i * 3 + 0] = r;
    img.data_[i * 3 + 1] = g;
    img.data_[i * 3 + 2] = b;
  }
  img.validate();
  return img;
}

void ImageBuffer::validate() const {
  if (width_ <= 0 || height_ <= 0) {
    fail(ErrorCode::InvalidImage, "image dimensions must be positive");
  }
  if (data_.size() != pixel_count() * 3) {
    fail(ErrorCode::InvalidImage, "image data length does not match W*H*3");
  }
  for (float v : data_) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      fail(ErrorCode::InvalidImage, "image sample outside [0,1] or non-finite");
    }
  }
}

Mask Mask::full(int width, int height) {
  Mask m;
  m.width = width;
  m.height = height;
  m.bits.assign(static_cast<std::size_t>(width) * height, 1);
  return m;
}

std::size_t Mask::count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int width, int height) {
  if (img.empty()) fail(ErrorCode::InvalidImage, "cannot resize an empty image");
  if (width <= 0 || height <= 0) {
    fail(ErrorCode::InvalidSize, "resize target must be positive");
  }
  ImageBuffer out(width, height, img.colorspace());
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0,
                           static_cast<double>(img.height() - 1));
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, img.height() - 1);
    double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0,
                             static_cast<double>(img.width() - 1));
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, img.width() - 1);
      double wx = fx - x0;
      const float* p00 = img.pixel(x0, y0);
      const float* p01 = img.pixel(x1, y0);
      const float* p10 = img.pixel(x0, y1);
      const float* p11 = img.pixel(x1, y1);
      float* dst = out.pixel(x, y);
      for (int c = 0; c < 3; ++c) {
        double top = p00[c] + (p01[c] - p00[c]) * wx;
        double bot = p10[c] + (p11[c] - p10[c]) * wx;
        dst[c] = static_cast<float>(top + (bot - top) * wy);
      }
    }
  }
  return out;
}

double mean_abs_difference(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    fail(ErrorCode::DimensionMismatch, "image sizes differ");
  }
  double sum = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) sum += std::abs(da[i] - db[i]);
  return da.empty() ? 0.0 : sum / static_cast<double>(da.size());
}

double max_abs_difference(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    fail(ErrorCode::DimensionMismatch, "image sizes differ");
  }
  double m = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    m = std::max(m, static_cast<double>(std::abs(da[i] - db[i])));
  }
  return m;
}

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(
      std::clamp(std::lround(static_cast<double>(v) * 255.0), 0L, 255L));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct PngImage {
  png_image image{};
  PngImage() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

std::vector<std::uint8_t> decode_raw(std::span<const std::uint8_t> bytes,
                                     std::uint32_t format, int& width,
                                     int& height) {
  PngImage png;
  if (!png_image_begin_read_from_memory(&png.image, bytes.data(),
                                        bytes.size())) {
    fail(ErrorCode::InvalidImage,
         std::string("not a readable PNG: ") + png.image.message);
  }
  png.image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, buffer.data(), 0, nullptr)) {
    fail(ErrorCode::InvalidImage,
         std::string("PNG decode failed: ") + png.image.message);
  }
  width = static_cast<int>(png.image.width);
  height = static_cast<int>(png.image.height);
  return buffer;
}

}  // namespace

ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
  int w = 0;
  int h = 0;
  auto raw = decode_raw(bytes, PNG_FORMAT_RGB, w, h);
  std::vector<float> data(raw.size());
  std::transform(raw.begin(), raw.end(), data.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v / 255.0); });
  return ImageBuffer(w, h, std::move(data));
}

ImageBuffer read_png(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return decode_png(bytes);
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  if (img.empty()) fail(ErrorCode::InvalidImage, "cannot encode an empty image");
  std::vector<std::uint8_t> raw(img.data().size());
  std::transform(img.data().begin(), img.data().end(), raw.begin(), to_byte);
  PngImage png;
  png.image.width = static_cast<png_uint_32>(img.width());
  png.image.height = static_cast<png_uint_32>(img.height());
  png.image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png.image, nullptr, &size, 0, raw.data(), 0,
                                 nullptr)) {
    fail(ErrorCode::IoError, std::string("PNG encode failed: ") + png.image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png.image, out.data(), &size, 0, raw.data(),
                                 0, nullptr)) {
    fail(ErrorCode::IoError, std::string("PNG encode failed: ") + png.image.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const ImageBuffer& img) {
  auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

Mask decode_mask_png(std::span<const std::uint8_t> bytes) {
  Mask m;
  auto raw = decode_raw(bytes, PNG_FORMAT_RGB, m.width, m.height);
  m.bits.resize(raw.size() / 3);
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    m.bits[i] = (raw[i * 3] | raw[i * 3 + 1] | raw[i * 3 + 2]) != 0 ? 1 : 0;
  }
  return m;
}

Mask read_mask_png(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return decode_mask_png(bytes);
}

ImageBuffer quantize_8bit(const ImageBuffer& img) {
  ImageBuffer out = img;
  for (float& v : out.data()) v = static_cast<float>(to_byte(v) / 255.0);
  return out;
}

}  // namespace qglut
