#pragma once

#include <array>

#include "qglut/image.hpp"

namespace qglut {

using Triple = std::array<double, 3>;
using Jacobian3 = std::array<std::array<double, 3>, 3>;  // [out][in]

/// Nonlinear sRGB triple. Channels are clamped into [0,1] on construction;
/// NaN collapses to 0.
struct RgbPixel {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  RgbPixel() = default;
  RgbPixel(double r_, double g_, double b_);

  Triple as_triple() const noexcept { return {r, g, b}; }
};

/// CIELAB (D65, 2 degree observer). L is clamped into [0,100], a and b into
/// [-128,128].
struct LabPixel {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;

  LabPixel() = default;
  LabPixel(double l_, double a_, double b_);
};

double srgb_decode(double v) noexcept;  // sRGB EOTF
double srgb_encode(double v) noexcept;  // inverse EOTF

LabPixel srgb_to_lab(const RgbPixel& p) noexcept;
/// Out-of-gamut results are clamped in linear RGB before re-encoding.
RgbPixel lab_to_srgb(const LabPixel& p) noexcept;

/// L/100, (a+128)/256, (b+128)/256.
Triple lab_normalize(const LabPixel& p) noexcept;
LabPixel lab_denormalize(const Triple& unit) noexcept;

/// Normalized-Lab triple to sRGB with the Jacobian of the whole chain
/// (normalized clamp, Lab->XYZ->linear RGB, linear clamp, encode). Entries
/// for clamped components are zero. `jac` may be null.
Triple normalized_lab_to_srgb(const Triple& unit, Jacobian3* jac) noexcept;

/// sRGB triple (unclamped input is clamped) to normalized Lab.
Triple srgb_to_normalized_lab(const Triple& rgb) noexcept;

/// Per-pixel conversion between the two tags; throws UnsupportedConversion
/// when the tags are equal and InvalidImage for an empty buffer.
ImageBuffer convert_image(const ImageBuffer& img, ColorSpace target);

}  // namespace qglut
