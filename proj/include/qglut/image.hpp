#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace qglut {

enum class ColorSpace { Srgb, LabNormalized };

std::string_view to_string(ColorSpace cs) noexcept;

/// Row-major H x W x 3 float raster. Values are finite and lie in [0,1] for
/// both tags (LabNormalized stores each Lab axis affinely mapped to [0,1]).
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, ColorSpace cs = ColorSpace::Srgb);
  ImageBuffer(int width, int height, std::vector<float> data,
              ColorSpace cs = ColorSpace::Srgb);

  static ImageBuffer filled(int width, int height, float r, float g, float b);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  ColorSpace colorspace() const noexcept { return colorspace_; }
  bool empty() const noexcept { return width_ == 0 || height_ == 0; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  float* pixel(int x, int y) noexcept {
    return data_.data() + (static_cast<std::size_t>(y) * width_ + x) * 3;
  }
  const float* pixel(int x, int y) const noexcept {
    return data_.data() + (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  /// Throws InvalidImage when the dimensions are degenerate or any sample is
  /// non-finite or outside [0,1].
  void validate() const;

  bool operator==(const ImageBuffer&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  ColorSpace colorspace_ = ColorSpace::Srgb;
  std::vector<float> data_;
};

/// Binary H x W mask (1 = selected).
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  static Mask full(int width, int height);
  bool at(int x, int y) const noexcept {
    return bits[static_cast<std::size_t>(y) * width + x] != 0;
  }
  std::size_t count() const noexcept;
};

/// Half-pixel-centred bilinear resampling (edges replicated).
ImageBuffer resize_bilinear(const ImageBuffer& img, int width, int height);

double mean_abs_difference(const ImageBuffer& a, const ImageBuffer& b);
double max_abs_difference(const ImageBuffer& a, const ImageBuffer& b);

// 8-bit RGB PNG at the I/O boundary: v/255 on decode, round(v*255) on encode.
ImageBuffer read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageBuffer& img);
ImageBuffer decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const ImageBuffer& img);

/// A pixel is selected when any channel is non-zero (gray or RGB masks).
Mask read_mask_png(const std::filesystem::path& path);
Mask decode_mask_png(std::span<const std::uint8_t> bytes);

/// Round-trips an image through the 8-bit quantizer used by encode_png.
ImageBuffer quantize_8bit(const ImageBuffer& img);

}  // namespace qglut
